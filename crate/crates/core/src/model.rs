//! Domain types for Nash games with quadratic players, file ingestion,
//! validation, and tilt perturbations.
//!
//! Player `k` minimizes `½ xᵀ P_k x − ⟨c_k, x⟩ − ⟨v_k, x^k⟩` over its own
//! block `x^k`, subject to `a_iᵀ x^k = b_i + u_i` for the first `s_k` rows of
//! `A_k` and `a_iᵀ x^k ≤ b_i + u_i` for the remaining rows. All types are
//! immutable after construction; operations are pure.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tol;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error in {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
    #[error("player {player}: field {field}: {message}")]
    BadField {
        player: usize,
        field: &'static str,
        message: String,
    },
    #[error("no players")]
    NoPlayers,
    #[error("invalid game: {0:?}")]
    Validation(Vec<Violation>),
    #[error("direction dimensions ({du_len}, {dv_len}) do not match game ({m}, {n})")]
    DirectionDims {
        du_len: usize,
        dv_len: usize,
        m: usize,
        n: usize,
    },
    #[error("direction is identically zero")]
    ZeroDirection,
}

/// A data problem found by [`validate_game`]; violations are data, not faults.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct Violation {
    /// Index of the offending player, when attributable.
    pub player: Option<usize>,
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(player: Option<usize>, field: &str, message: impl Into<String>) -> Self {
        Self {
            player,
            field: field.to_string(),
            message: message.into(),
        }
    }
}

/// Warning attached while loading a game file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LoadWarning {
    pub player: usize,
    pub message: String,
}

/// One player's data.
///
/// `quad` is stored symmetrized: the loader replaces any input `P` by
/// `½(P + Pᵀ)`, which leaves the quadratic form unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct Player {
    /// Strategy dimension of this player.
    pub dim: usize,
    /// Quadratic coupling, `n × n` over the full strategy space.
    pub quad: DMatrix<f64>,
    /// Linear objective term, length `n`.
    pub lin: DVector<f64>,
    /// Constraint rows, `m_k × dim`.
    pub constraints: DMatrix<f64>,
    /// Constraint right-hand sides, length `m_k`.
    pub rhs: DVector<f64>,
    /// Rows `0..num_eq` are equalities, the rest inequalities (`≤`).
    pub num_eq: usize,
}

impl Player {
    pub fn new(
        dim: usize,
        quad: DMatrix<f64>,
        lin: DVector<f64>,
        constraints: DMatrix<f64>,
        rhs: DVector<f64>,
        num_eq: usize,
    ) -> Self {
        Self {
            dim,
            quad: symmetrize(&quad),
            lin,
            constraints,
            rhs,
            num_eq,
        }
    }

    /// Number of constraint rows.
    pub fn num_constraints(&self) -> usize {
        self.constraints.nrows()
    }

    /// Row `i` of the constraint matrix as an owned vector (length `dim`).
    pub fn constraint_row(&self, i: usize) -> DVector<f64> {
        self.constraints.row(i).transpose()
    }
}

fn symmetrize(p: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (p + p.transpose())
}

fn max_asymmetry(p: &DMatrix<f64>) -> f64 {
    (p - p.transpose()).amax()
}

/// A complete game: ordered players plus precomputed block offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct QpNepGame {
    pub players: Vec<Player>,
    /// Total strategy dimension `n = Σ n_k`.
    pub total_dim: usize,
    /// Total constraint count `m = Σ m_k`.
    pub total_constraints: usize,
    strategy_offsets: Vec<usize>,
    constraint_offsets: Vec<usize>,
    /// Warnings recorded at load time (empty for programmatic construction
    /// unless symmetrization changed a matrix).
    pub warnings: Vec<LoadWarning>,
}

impl QpNepGame {
    pub fn from_players(players: Vec<Player>) -> Result<Self, ModelError> {
        if players.is_empty() {
            return Err(ModelError::NoPlayers);
        }
        let mut strategy_offsets = Vec::with_capacity(players.len());
        let mut constraint_offsets = Vec::with_capacity(players.len());
        let mut n = 0;
        let mut m = 0;
        for p in &players {
            strategy_offsets.push(n);
            constraint_offsets.push(m);
            n += p.dim;
            m += p.num_constraints();
        }
        Ok(Self {
            players,
            total_dim: n,
            total_constraints: m,
            strategy_offsets,
            constraint_offsets,
            warnings: Vec::new(),
        })
    }

    pub fn num_players(&self) -> usize {
        self.players.len()
    }

    /// First coordinate of player `k`'s strategy block.
    pub fn strategy_offset(&self, k: usize) -> usize {
        self.strategy_offsets[k]
    }

    /// First global row index of player `k`'s constraints.
    pub fn constraint_offset(&self, k: usize) -> usize {
        self.constraint_offsets[k]
    }

    /// Player `k`'s strategy block of a length-`n` vector.
    pub fn block_of(&self, k: usize, x: &DVector<f64>) -> DVector<f64> {
        let off = self.strategy_offsets[k];
        x.rows(off, self.players[k].dim).into_owned()
    }

    /// Block `(row_player, col_player)` of `owner`'s quadratic matrix,
    /// i.e. `P^owner_{n_row n_col}`.
    pub fn quad_block(&self, owner: usize, row_player: usize, col_player: usize) -> DMatrix<f64> {
        let ro = self.strategy_offsets[row_player];
        let co = self.strategy_offsets[col_player];
        self.players[owner]
            .quad
            .view(
                (ro, co),
                (self.players[row_player].dim, self.players[col_player].dim),
            )
            .into_owned()
    }

    /// Constraint row `a^k_i` embedded into the full strategy space: zeros
    /// outside player `k`'s block.
    pub fn constraint_row_embedded(&self, k: usize, i: usize) -> DVector<f64> {
        let mut row = DVector::zeros(self.total_dim);
        let off = self.strategy_offsets[k];
        let local = self.players[k].constraint_row(i);
        row.rows_mut(off, self.players[k].dim).copy_from(&local);
        row
    }

    /// Objective of player `k` at the profile `x` under tilt `v`.
    pub fn objective(&self, k: usize, x: &DVector<f64>, v: &DVector<f64>) -> f64 {
        let p = &self.players[k];
        let quad = 0.5 * (x.transpose() * &p.quad * x)[(0, 0)];
        let lin = p.lin.dot(x);
        let off = self.strategy_offsets[k];
        let tilt = v.rows(off, p.dim).dot(&x.rows(off, p.dim));
        quad - lin - tilt
    }

    /// Gradient of player `k`'s objective with respect to its own block:
    /// `(P_k x)^k − (c_k)^k − v^k`.
    pub fn player_gradient(&self, k: usize, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let p = &self.players[k];
        let off = self.strategy_offsets[k];
        let px = &p.quad * x;
        px.rows(off, p.dim).into_owned()
            - p.lin.rows(off, p.dim).into_owned()
            - v.rows(off, p.dim).into_owned()
    }
}

/// Right-hand-side shifts `u` (length `m`) and tilt shifts `v` (length `n`).
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub u: DVector<f64>,
    pub v: DVector<f64>,
}

impl Perturbation {
    pub fn zero(game: &QpNepGame) -> Self {
        Self {
            u: DVector::zeros(game.total_constraints),
            v: DVector::zeros(game.total_dim),
        }
    }
}

/// A perturbation path direction: `u = t·du`, `v = t·dv`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationDirection {
    pub du: DVector<f64>,
    pub dv: DVector<f64>,
}

impl PerturbationDirection {
    pub fn new(game: &QpNepGame, du: DVector<f64>, dv: DVector<f64>) -> Result<Self, ModelError> {
        if du.len() != game.total_constraints || dv.len() != game.total_dim {
            return Err(ModelError::DirectionDims {
                du_len: du.len(),
                dv_len: dv.len(),
                m: game.total_constraints,
                n: game.total_dim,
            });
        }
        if du.amax() == 0.0 && dv.amax() == 0.0 {
            return Err(ModelError::ZeroDirection);
        }
        Ok(Self { du, dv })
    }
}

/// `(u, v) = (t·du, t·dv)`; affine in `t`.
pub fn apply_tilt(game: &QpNepGame, dir: &PerturbationDirection, t: f64) -> Perturbation {
    debug_assert_eq!(dir.du.len(), game.total_constraints);
    debug_assert_eq!(dir.dv.len(), game.total_dim);
    Perturbation {
        u: t * &dir.du,
        v: t * &dir.dv,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PlayerFile {
    n: usize,
    #[serde(rename = "P")]
    quad: Vec<Vec<f64>>,
    c: Vec<f64>,
    #[serde(rename = "A")]
    constraints: Vec<Vec<f64>>,
    b: Vec<f64>,
    num_eq: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct GameFile {
    players: Vec<PlayerFile>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DirectionFile {
    du: Vec<f64>,
    dv: Vec<f64>,
}

fn matrix_from_rows(
    player: usize,
    field: &'static str,
    rows: &[Vec<f64>],
    ncols: usize,
) -> Result<DMatrix<f64>, ModelError> {
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(ModelError::BadField {
                player,
                field,
                message: format!("row {i} has length {}, expected {ncols}", row.len()),
            });
        }
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Load and validate a game file, symmetrizing each quadratic matrix.
pub fn load_game(path: impl AsRef<Path>) -> Result<QpNepGame, ModelError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let file: GameFile = serde_json::from_str(&text).map_err(|source| ModelError::Parse {
        path: path.display().to_string(),
        source,
    })?;
    game_from_file(file)
}

fn game_from_file(file: GameFile) -> Result<QpNepGame, ModelError> {
    if file.players.is_empty() {
        return Err(ModelError::NoPlayers);
    }
    let total_dim: usize = file.players.iter().map(|p| p.n).sum();
    let mut players = Vec::with_capacity(file.players.len());
    let mut warnings = Vec::new();
    for (k, pf) in file.players.iter().enumerate() {
        let quad = matrix_from_rows(k, "P", &pf.quad, total_dim)?;
        if quad.nrows() != total_dim {
            return Err(ModelError::BadField {
                player: k,
                field: "P",
                message: format!("has {} rows, expected {total_dim}", quad.nrows()),
            });
        }
        let asym = max_asymmetry(&quad);
        if asym > tol::ASYMMETRY_WARN {
            warnings.push(LoadWarning {
                player: k,
                message: format!("P symmetrized; asymmetry {asym:.3e} in max-norm"),
            });
        }
        let constraints = matrix_from_rows(k, "A", &pf.constraints, pf.n)?;
        players.push(Player::new(
            pf.n,
            quad,
            DVector::from_column_slice(&pf.c),
            constraints,
            DVector::from_column_slice(&pf.b),
            pf.num_eq,
        ));
    }
    let mut game = QpNepGame::from_players(players)?;
    game.warnings = warnings;
    let violations = validate_game(&game);
    if !violations.is_empty() {
        return Err(ModelError::Validation(violations));
    }
    Ok(game)
}

/// Load a perturbation direction file and check it against the game.
pub fn load_direction(
    path: impl AsRef<Path>,
    game: &QpNepGame,
) -> Result<PerturbationDirection, ModelError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let file: DirectionFile = serde_json::from_str(&text).map_err(|source| ModelError::Parse {
        path: path.display().to_string(),
        source,
    })?;
    PerturbationDirection::new(
        game,
        DVector::from_column_slice(&file.du),
        DVector::from_column_slice(&file.dv),
    )
}

/// Check all type invariants; the returned list is empty when the game is
/// valid.
pub fn validate_game(game: &QpNepGame) -> Vec<Violation> {
    let mut out = Vec::new();
    if game.players.is_empty() {
        out.push(Violation::new(None, "players", "no players"));
        return out;
    }
    let n = game.total_dim;
    for (k, p) in game.players.iter().enumerate() {
        let m_k = p.num_constraints();
        if p.quad.nrows() != n || p.quad.ncols() != n {
            out.push(Violation::new(
                Some(k),
                "P",
                format!("is {}x{}, expected {n}x{n}", p.quad.nrows(), p.quad.ncols()),
            ));
        } else if max_asymmetry(&p.quad) > tol::SYMMETRY {
            out.push(Violation::new(Some(k), "P", "is not symmetric"));
        }
        if p.lin.len() != n {
            out.push(Violation::new(
                Some(k),
                "c",
                format!("has length {}, expected {n}", p.lin.len()),
            ));
        }
        if p.constraints.ncols() != p.dim {
            out.push(Violation::new(
                Some(k),
                "A",
                format!("has {} columns, expected {}", p.constraints.ncols(), p.dim),
            ));
        }
        if p.rhs.len() != m_k {
            out.push(Violation::new(
                Some(k),
                "b",
                format!("has length {}, expected {m_k}", p.rhs.len()),
            ));
        }
        if p.num_eq > m_k {
            out.push(Violation::new(
                Some(k),
                "num_eq",
                format!(
                    "equality count exceeds constraint count ({} > {m_k})",
                    p.num_eq
                ),
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_util::{fixture_game, fixture_path};
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ex62_fixture_loads() {
        let game = fixture_game("ex62");
        assert_eq!(game.num_players(), 2);
        assert_eq!(game.total_dim, 2);
        assert_eq!(game.total_constraints, 2);
        let p1 = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]);
        let p2 = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 2.0, 1.0]);
        assert_eq!(game.players[0].quad, p1);
        assert_eq!(game.players[1].quad, p2);
        assert!(game.warnings.is_empty());
    }

    #[test]
    fn empty_player_list_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.json");
        std::fs::write(&path, r#"{"players": []}"#).unwrap();
        match load_game(&path) {
            Err(ModelError::NoPlayers) => {}
            other => panic!("expected NoPlayers, got {other:?}"),
        }
    }

    #[test]
    fn asymmetric_quad_is_symmetrized_with_warning() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("asym.json");
        std::fs::write(
            &path,
            r#"{"players": [
                {"n": 1, "P": [[1, 2], [0, 0]], "c": [0, 0], "A": [], "b": [], "num_eq": 0},
                {"n": 1, "P": [[0, 0], [0, 1]], "c": [0, 0], "A": [], "b": [], "num_eq": 0}
            ]}"#,
        )
        .unwrap();
        let game = load_game(&path).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]);
        assert_eq!(game.players[0].quad, expected);
        assert_eq!(game.warnings.len(), 1);
        assert_eq!(game.warnings[0].player, 0);

        // The quadratic form is unchanged: at x = (1, 1) both read 1.5.
        let x = DVector::from_column_slice(&[1.0, 1.0]);
        let v = DVector::zeros(2);
        assert_abs_diff_eq!(game.objective(0, &x, &v), 1.5, epsilon = 1e-15);
    }

    #[test]
    fn symmetrization_is_idempotent() {
        let game = fixture_game("ex61");
        for p in &game.players {
            assert_eq!(symmetrize(&p.quad), p.quad);
        }
    }

    #[test]
    fn ex61_fixture_validates_clean() {
        let game = fixture_game("ex61");
        assert!(validate_game(&game).is_empty());
    }

    #[test]
    fn wrong_linear_term_length_is_reported() {
        let mut game = fixture_game("ex62");
        game.players[1].lin = DVector::zeros(5);
        let violations = validate_game(&game);
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].player, Some(1));
        assert_eq!(violations[0].field, "c");
        assert!(violations[0].message.contains("expected 2"));
    }

    #[test]
    fn excess_equality_count_is_reported() {
        let mut game = fixture_game("ex62");
        game.players[0].num_eq = 2; // m_0 = 1
        let violations = validate_game(&game);
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].field, "num_eq");
        assert!(violations[0].message.contains("exceeds constraint count"));
    }

    #[test]
    fn apply_tilt_at_zero_is_zero() {
        let game = fixture_game("ex62");
        let dir = crate::test_util::fixture_direction("ex62", &game);
        let p = apply_tilt(&game, &dir, 0.0);
        assert_eq!(p.u.amax(), 0.0);
        assert_eq!(p.v.amax(), 0.0);
    }

    #[test]
    fn apply_tilt_matches_ex62_encoding() {
        let game = fixture_game("ex62");
        let dir = crate::test_util::fixture_direction("ex62", &game);
        let p = apply_tilt(&game, &dir, 0.01);
        assert_abs_diff_eq!(p.u[0], 0.02, epsilon = 1e-15);
        assert_abs_diff_eq!(p.u[1], 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(p.v[0], -0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(p.v[1], -0.02, epsilon = 1e-15);
    }

    #[test]
    fn apply_tilt_is_additive_in_t() {
        let game = fixture_game("ex62");
        let dir = crate::test_util::fixture_direction("ex62", &game);
        let (t1, t2) = (0.37, -1.91);
        let a = apply_tilt(&game, &dir, t1);
        let b = apply_tilt(&game, &dir, t2);
        let c = apply_tilt(&game, &dir, t1 + t2);
        assert_abs_diff_eq!((&a.u + &b.u - &c.u).amax(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!((&a.v + &b.v - &c.v).amax(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_direction_is_rejected() {
        let game = fixture_game("ex62");
        let du = DVector::zeros(game.total_constraints);
        let dv = DVector::zeros(game.total_dim);
        assert!(matches!(
            PerturbationDirection::new(&game, du, dv),
            Err(ModelError::ZeroDirection)
        ));
    }

    #[test]
    fn malformed_json_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, "{not json").unwrap();
        assert!(matches!(load_game(&path), Err(ModelError::Parse { .. })));
    }

    #[test]
    fn fixtures_all_load() {
        for name in ["ex31", "ex32", "ex61", "ex62"] {
            let game = fixture_game(name);
            assert!(validate_game(&game).is_empty(), "{name} should validate");
            assert!(fixture_path(&format!("{name}.dir.json")).exists());
        }
    }

    /// Analytic player gradients agree with central finite differences of the
    /// objective on random games.
    #[test]
    fn player_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let game = crate::test_util::random_game(&mut rng, 3, 2, 2);
            let n = game.total_dim;
            let x = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let v = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let h = 1e-5;
            for k in 0..game.num_players() {
                let grad = game.player_gradient(k, &x, &v);
                let off = game.strategy_offset(k);
                for j in 0..game.players[k].dim {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[off + j] += h;
                    xm[off + j] -= h;
                    let fd = (game.objective(k, &xp, &v) - game.objective(k, &xm, &v)) / (2.0 * h);
                    let scale = grad[j].abs().max(1.0);
                    assert!(
                        (grad[j] - fd).abs() / scale <= 1e-6,
                        "player {k} coord {j}: analytic {} vs fd {fd}",
                        grad[j]
                    );
                }
            }
        }
    }
}
