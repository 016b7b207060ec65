//! Support utilities shared by unit, integration, and acceptance tests.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;

use crate::model::{PerturbationDirection, Player, QpNepGame};

pub fn fixture_path(name: &str) -> PathBuf {
    let mut p = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    p.push("fixtures");
    p.push(name);
    p
}

pub fn fixture_game(name: &str) -> QpNepGame {
    crate::model::load_game(fixture_path(&format!("{name}.json"))).expect("fixture loads")
}

pub fn fixture_direction(name: &str, game: &QpNepGame) -> PerturbationDirection {
    crate::model::load_direction(fixture_path(&format!("{name}.dir.json")), game)
        .expect("fixture direction loads")
}

/// Random game with up to `max_players` players, per-player dimension up to
/// `max_dim`, per-player constraint count up to `max_constraints`, entries in
/// [-2, 2]. Constraints are inequalities; pass the result through
/// [`with_random_equalities`] when equality rows are wanted.
pub fn random_game(
    rng: &mut impl Rng,
    max_players: usize,
    max_dim: usize,
    max_constraints: usize,
) -> QpNepGame {
    let n_players = rng.gen_range(1..=max_players);
    let dims: Vec<usize> = (0..n_players).map(|_| rng.gen_range(1..=max_dim)).collect();
    let n: usize = dims.iter().sum();
    let players = dims
        .iter()
        .map(|&dim| {
            let m_k = rng.gen_range(0..=max_constraints);
            let quad = {
                let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-2.0..2.0));
                0.5 * (&a + a.transpose())
            };
            Player::new(
                dim,
                quad,
                DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0)),
                DMatrix::from_fn(m_k, dim, |_, _| rng.gen_range(-2.0..2.0)),
                DVector::from_fn(m_k, |_, _| rng.gen_range(-2.0..2.0)),
                0,
            )
        })
        .collect();
    QpNepGame::from_players(players).expect("at least one player")
}

/// Promote the first constraint row of each player to an equality with
/// probability 1/2.
pub fn with_random_equalities(mut game: QpNepGame, rng: &mut impl Rng) -> QpNepGame {
    for p in &mut game.players {
        if p.num_constraints() > 0 && rng.gen_bool(0.5) {
            p.num_eq = 1;
        }
    }
    game
}

/// Two scalar players with a singular game Jacobian and both constraints
/// weakly active at the origin. The second player's coupled row is a
/// multiple of the first player's, so the stationarity kernel is a line;
/// whether the stability checks fail depends on how that line meets the
/// constraint signs, which makes this family rich in genuine FAILS
/// witnesses.
pub fn random_degenerate_game(rng: &mut impl Rng) -> QpNepGame {
    let a = rng.gen_range(0.5..2.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let b = rng.gen_range(0.5..2.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let d = rng.gen_range(-2.0..2.0);
    let e = rng.gen_range(-2.0..2.0);
    let c = rng.gen_range(0.5..2.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let s1: f64 = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let s2: f64 = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let p1 = DMatrix::from_row_slice(2, 2, &[a, b, b, d]);
    let p2 = DMatrix::from_row_slice(2, 2, &[e, c * a, c * a, c * b]);
    let players = vec![
        Player::new(
            1,
            p1,
            DVector::zeros(2),
            DMatrix::from_row_slice(1, 1, &[s1]),
            DVector::zeros(1),
            0,
        ),
        Player::new(
            1,
            p2,
            DVector::zeros(2),
            DMatrix::from_row_slice(1, 1, &[s2]),
            DVector::zeros(1),
            0,
        ),
    ];
    QpNepGame::from_players(players).expect("two players")
}
