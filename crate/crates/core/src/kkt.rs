//! Enumeration of all KKT points of a game at a given perturbation,
//! classification of active constraints, and equilibrium verification.
//!
//! For quadratic players the stationarity conditions are linear, so the
//! full KKT solution set is found by enumerating complementarity patterns:
//! every subset of inequality rows is treated as active, the resulting
//! square linear system is solved, and sign/feasibility filters keep the
//! genuine solutions. This finds all KKT points, which the stability
//! harness requires; the exponential cost is capped.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Perturbation, QpNepGame};
use crate::numerics::{
    quad_family_positive_on_cone, sym_eig_min, ConeSpec, NumericsError, PositivityOptions, Verdict,
};
use crate::tol::{self, Tolerances};

#[derive(Debug, Error)]
pub enum KktError {
    #[error("{count} inequality rows exceed the enumeration cap {max} (2^count subsystems)")]
    TooManyInequalities { count: usize, max: usize },
    #[error("point is not complementary: player {player} row {row} has multiplier {lambda} with slack {slack}")]
    NonComplementary {
        player: usize,
        row: usize,
        lambda: f64,
        slack: f64,
    },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// A primal-dual pair with bookkeeping from the enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct KktPoint {
    pub x: DVector<f64>,
    /// Multipliers, length `m`, in per-player blocks.
    pub lambda: DVector<f64>,
    /// Global inequality row ids treated as active while solving.
    pub active_set: Vec<usize>,
    /// Max-norm of stationarity, feasibility, and complementarity defects.
    pub residual: f64,
    /// Set when the active subsystem was singular but consistent: the point
    /// is one representative of a solution family.
    pub non_isolated: bool,
}

impl KktPoint {
    /// Concatenated (x, λ) as a flat vector.
    pub fn as_flat(&self) -> DVector<f64> {
        let mut z = DVector::zeros(self.x.len() + self.lambda.len());
        z.rows_mut(0, self.x.len()).copy_from(&self.x);
        z.rows_mut(self.x.len(), self.lambda.len())
            .copy_from(&self.lambda);
        z
    }
}

/// Per-player classification of constraint rows at a KKT triple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlayerIndexSets {
    /// Equalities plus strongly active inequalities (local row ids).
    pub i1: Vec<usize>,
    /// Weakly active: tight with zero multiplier.
    pub i2: Vec<usize>,
    /// Inactive.
    pub i3: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexSets {
    pub per_player: Vec<PlayerIndexSets>,
    pub tol_active: f64,
}

impl IndexSets {
    /// Total number of weakly active rows across players.
    pub fn weakly_active_count(&self) -> usize {
        self.per_player.iter().map(|p| p.i2.len()).sum()
    }

    /// Weakly active rows as (player, local row) pairs, player-major order.
    pub fn weakly_active(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (k, p) in self.per_player.iter().enumerate() {
            for &i in &p.i2 {
                out.push((k, i));
            }
        }
        out
    }
}

/// Max-norm KKT residual of `(x, λ)` at perturbation `p`.
///
/// The maximum runs over per-player stationarity defects, equality defects,
/// inequality violations, dual violations, and complementarity products.
pub fn kkt_residual(
    game: &QpNepGame,
    p: &Perturbation,
    x: &DVector<f64>,
    lambda: &DVector<f64>,
) -> f64 {
    let mut r: f64 = 0.0;
    for k in 0..game.num_players() {
        let player = &game.players[k];
        let m_k = player.num_constraints();
        let coff = game.constraint_offset(k);
        let lam_k = lambda.rows(coff, m_k);
        // Stationarity: (P_k x)^k - (c_k)^k - v^k + A_kᵀ λ^k.
        let mut stat = game.player_gradient(k, x, &p.v);
        if m_k > 0 {
            stat += player.constraints.transpose() * lam_k;
        }
        r = r.max(stat.amax());
        let xk = game.block_of(k, x);
        for i in 0..m_k {
            let defect = player.constraint_row(i).dot(&xk) - player.rhs[i] - p.u[coff + i];
            if i < player.num_eq {
                r = r.max(defect.abs());
            } else {
                r = r.max(defect.max(0.0));
                r = r.max((-lam_k[i]).max(0.0));
                r = r.max((lam_k[i] * defect).abs());
            }
        }
    }
    r
}

/// All KKT points at perturbation `p`, found by active-set enumeration.
///
/// Points are deduplicated (max-norm radius [`tol::DEDUP`]) and returned
/// sorted lexicographically by `(x, λ)`. A singular-but-consistent active
/// subsystem contributes one representative flagged `non_isolated`.
pub fn enumerate_kkt(
    game: &QpNepGame,
    p: &Perturbation,
    max_ineq: usize,
) -> Result<Vec<KktPoint>, KktError> {
    enumerate_kkt_with(game, p, max_ineq, &Tolerances::default())
}

pub fn enumerate_kkt_with(
    game: &QpNepGame,
    p: &Perturbation,
    max_ineq: usize,
    tols: &Tolerances,
) -> Result<Vec<KktPoint>, KktError> {
    let n = game.total_dim;
    let m = game.total_constraints;

    // (player, local row, global row) for every constraint row.
    let mut ineqs: Vec<(usize, usize, usize)> = Vec::new();
    let mut eqs: Vec<(usize, usize, usize)> = Vec::new();
    for (k, player) in game.players.iter().enumerate() {
        let coff = game.constraint_offset(k);
        for i in 0..player.num_constraints() {
            if i < player.num_eq {
                eqs.push((k, i, coff + i));
            } else {
                ineqs.push((k, i, coff + i));
            }
        }
    }
    if ineqs.len() > max_ineq {
        return Err(KktError::TooManyInequalities {
            count: ineqs.len(),
            max: max_ineq,
        });
    }

    let mut points: Vec<KktPoint> = Vec::new();
    for mask in 0usize..(1 << ineqs.len()) {
        // Active rows in deterministic order: global row order.
        let mut active: Vec<(usize, usize, usize)> = eqs.clone();
        for (bit, &row) in ineqs.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                active.push(row);
            }
        }
        active.sort_by_key(|&(_, _, g)| g);
        let na = active.len();
        let dim = n + na;

        let mut a = DMatrix::zeros(dim, dim);
        let mut rhs = DVector::zeros(dim);
        // Stationarity rows.
        for k in 0..game.num_players() {
            let off = game.strategy_offset(k);
            let dk = game.players[k].dim;
            let block = game.players[k].quad.rows(off, dk);
            a.view_mut((off, 0), (dk, n)).copy_from(&block);
            for (j, &(ak, ai, _)) in active.iter().enumerate() {
                if ak == k {
                    let col = game.players[k].constraint_row(ai);
                    a.view_mut((off, n + j), (dk, 1)).copy_from(&col);
                }
            }
            let r = game.players[k].lin.rows(off, dk).into_owned() + p.v.rows(off, dk).into_owned();
            rhs.rows_mut(off, dk).copy_from(&r);
        }
        // Active-constraint rows.
        for (j, &(ak, ai, g)) in active.iter().enumerate() {
            let off = game.strategy_offset(ak);
            let dk = game.players[ak].dim;
            let row = game.players[ak].constraint_row(ai);
            a.view_mut((n + j, off), (1, dk))
                .copy_from(&row.transpose());
            rhs[n + j] = game.players[ak].rhs[ai] + p.u[g];
        }

        let Some((z, non_isolated)) = solve_square_or_minnorm(&a, &rhs) else {
            continue; // inconsistent subsystem
        };

        let x = z.rows(0, n).into_owned();
        let mut lambda = DVector::zeros(m);
        let mut lambda_ok = true;
        for (j, &(ak, ai, g)) in active.iter().enumerate() {
            lambda[g] = z[n + j];
            let is_eq = ai < game.players[ak].num_eq;
            if !is_eq && z[n + j] < -tols.kkt {
                lambda_ok = false;
                break;
            }
        }
        if !lambda_ok {
            continue;
        }
        let residual = kkt_residual(game, p, &x, &lambda);
        if residual > tols.kkt {
            continue;
        }

        let candidate = KktPoint {
            x,
            lambda,
            active_set: active
                .iter()
                .filter(|&&(ak, ai, _)| ai >= game.players[ak].num_eq)
                .map(|&(_, _, g)| g)
                .collect(),
            residual,
            non_isolated,
        };

        match points
            .iter_mut()
            .find(|q| flat_dist(q, &candidate) <= tols.dedup)
        {
            Some(existing) => existing.non_isolated |= candidate.non_isolated,
            None => points.push(candidate),
        }
    }

    points.sort_by(|a, b| lex_cmp(&a.as_flat(), &b.as_flat()));
    Ok(points)
}

fn flat_dist(a: &KktPoint, b: &KktPoint) -> f64 {
    (a.as_flat() - b.as_flat()).amax()
}

/// Lexicographic order on coordinates quantized to a 1e-9 grid, so solve
/// noise cannot flip the ordering of genuinely distinct points (the
/// deduplication radius is two orders coarser).
pub(crate) fn lex_cmp(a: &DVector<f64>, b: &DVector<f64>) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        let qx = (x * 1e9).round();
        let qy = (y * 1e9).round();
        match qx.partial_cmp(&qy) {
            Some(std::cmp::Ordering::Equal) | None => continue,
            Some(ord) => return ord,
        }
    }
    std::cmp::Ordering::Equal
}

/// Solve a square system, falling back to the minimum-norm least-squares
/// solution when singular. Returns `None` for inconsistent systems, and a
/// flag marking singular-but-consistent ones.
fn solve_square_or_minnorm(a: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<(DVector<f64>, bool)> {
    let dim = a.nrows();
    if dim == 0 {
        return Some((DVector::zeros(0), false));
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = tol::RANK_REL * smax.max(1.0);
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let z = svd.solve(rhs, eps).ok()?;
    let resid = (a * &z - rhs).amax();
    let scale = smax.max(rhs.amax()).max(1.0);
    if resid > 1e-9 * scale {
        return None;
    }
    Some((z, rank < dim))
}

/// Classify every constraint row at a KKT point.
///
/// Equalities always land in I1. An inequality is strongly active (I1) when
/// its multiplier exceeds `tol_active` and it is tight, weakly active (I2)
/// when tight with a small multiplier, inactive (I3) otherwise. A large
/// multiplier on a slack constraint is a non-KKT point and is an error.
pub fn classify_index_sets(
    game: &QpNepGame,
    p: &Perturbation,
    point: &KktPoint,
    tol_active: f64,
) -> Result<IndexSets, KktError> {
    let mut per_player = Vec::with_capacity(game.num_players());
    for (k, player) in game.players.iter().enumerate() {
        let coff = game.constraint_offset(k);
        let xk = game.block_of(k, &point.x);
        let mut sets = PlayerIndexSets {
            i1: Vec::new(),
            i2: Vec::new(),
            i3: Vec::new(),
        };
        for i in 0..player.num_constraints() {
            if i < player.num_eq {
                sets.i1.push(i);
                continue;
            }
            let defect = player.constraint_row(i).dot(&xk) - player.rhs[i] - p.u[coff + i];
            let tight = defect.abs() <= tol_active;
            let lam = point.lambda[coff + i];
            if lam > tol_active && tight {
                sets.i1.push(i);
            } else if lam <= tol_active && tight {
                sets.i2.push(i);
            } else if lam <= tol_active {
                sets.i3.push(i);
            } else {
                return Err(KktError::NonComplementary {
                    player: k,
                    row: i,
                    lambda: lam,
                    slack: defect,
                });
            }
        }
        per_player.push(sets);
    }
    Ok(IndexSets {
        per_player,
        tol_active,
    })
}

/// Per-player outcome of the local-Nash verification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PlayerNashStatus {
    /// Own-block quadratic is positive semidefinite; a KKT point is a
    /// global best response.
    Convex,
    /// Second-order sufficiency holds on the player's critical cone.
    SoscHolds {
        margin: Option<f64>,
    },
    /// Second-order sufficiency fails with a critical-cone witness.
    SoscFails {
        witness: Vec<f64>,
    },
    Undecided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalNashReport {
    pub verdict: Verdict,
    pub per_player: Vec<PlayerNashStatus>,
    /// First player whose nonconvex block failed second-order sufficiency.
    pub failing_player: Option<usize>,
}

/// Is the point a local Nash equilibrium?
///
/// HOLDS when every player either has convex data or passes second-order
/// sufficiency on its critical cone; FAILS when a nonconvex player fails
/// that check; UNDECIDED otherwise.
pub fn check_local_nash(
    game: &QpNepGame,
    p: &Perturbation,
    point: &KktPoint,
    opts: &PositivityOptions,
) -> Result<LocalNashReport, KktError> {
    let index_sets = classify_index_sets(game, p, point, tol::ACTIVE)?;
    let mut per_player = Vec::with_capacity(game.num_players());
    let mut verdict = Verdict::Holds;
    let mut failing_player = None;
    for k in 0..game.num_players() {
        let own = game.quad_block(k, k, k);
        let psd_tol = tol::RANK_REL * own.amax().max(1.0);
        let convex = sym_eig_min(&own)? >= -psd_tol;
        if convex {
            per_player.push(PlayerNashStatus::Convex);
            continue;
        }
        let cone = player_critical_cone(game, k, &index_sets.per_player[k]);
        let res = quad_family_positive_on_cone(
            &[own],
            &cone,
            crate::numerics::PositivityMode::Max,
            opts.grid_res,
            opts.starts,
            opts.seed,
        )?;
        match res.verdict {
            Verdict::Holds => per_player.push(PlayerNashStatus::SoscHolds { margin: res.margin }),
            Verdict::Fails => {
                per_player.push(PlayerNashStatus::SoscFails {
                    witness: res.witness.clone().unwrap_or_default(),
                });
                verdict = Verdict::Fails;
                if failing_player.is_none() {
                    failing_player = Some(k);
                }
            }
            Verdict::Undecided => {
                per_player.push(PlayerNashStatus::Undecided);
                if verdict == Verdict::Holds {
                    verdict = Verdict::Undecided;
                }
            }
        }
    }
    Ok(LocalNashReport {
        verdict,
        per_player,
        failing_player,
    })
}

/// Player `k`'s critical cone in its local strategy space:
/// `{y : A_{I1} y = 0, A_{I2} y ≤ 0}`.
pub fn player_critical_cone(game: &QpNepGame, k: usize, sets: &PlayerIndexSets) -> ConeSpec {
    let player = &game.players[k];
    let dim = player.dim;
    let mut eq = DMatrix::zeros(sets.i1.len(), dim);
    for (r, &i) in sets.i1.iter().enumerate() {
        eq.row_mut(r).copy_from(&player.constraints.row(i));
    }
    let mut ineq = DMatrix::zeros(sets.i2.len(), dim);
    for (r, &i) in sets.i2.iter().enumerate() {
        ineq.row_mut(r).copy_from(&player.constraints.row(i));
    }
    ConeSpec::new(eq, ineq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::apply_tilt;
    use crate::test_util::{fixture_direction, fixture_game, random_game};
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn points_at(name: &str, t: f64) -> Vec<KktPoint> {
        let game = fixture_game(name);
        let dir = fixture_direction(name, &game);
        let p = apply_tilt(&game, &dir, t);
        enumerate_kkt(&game, &p, tol::MAX_INEQ).unwrap()
    }

    #[test]
    fn ex62_unperturbed_has_unique_origin() {
        let pts = points_at("ex62", 0.0);
        assert_eq!(pts.len(), 1);
        assert!(pts[0].as_flat().amax() <= 1e-12);
    }

    #[test]
    fn ex62_positive_tilt_has_three_branches() {
        let pts = points_at("ex62", 0.01);
        assert_eq!(pts.len(), 3);
        let expected = [
            [-0.02, 0.01, 0.0, 0.01],
            [-0.01, 0.0, 0.0, 0.0],
            [0.02, -0.06, 0.03, 0.0],
        ];
        for (pt, exp) in pts.iter().zip(expected.iter()) {
            let d = (pt.as_flat() - DVector::from_column_slice(exp)).amax();
            assert!(d <= 1e-8, "point {:?} vs {exp:?}", pt.as_flat().as_slice());
        }
    }

    #[test]
    fn ex31_perturbed_has_no_kkt_points() {
        assert!(points_at("ex31", 0.1).is_empty());
    }

    #[test]
    fn ex31_unperturbed_solution_family_is_flagged() {
        let pts = points_at("ex31", 0.0);
        assert_eq!(pts.len(), 1);
        assert!(
            pts[0].non_isolated,
            "zero-multiplier solution ray should flag non-isolation"
        );
    }

    #[test]
    fn ex61_reference_point_has_tiny_residual() {
        let game = fixture_game("ex61");
        let p = Perturbation::zero(&game);
        let x = DVector::from_column_slice(&[0.0, 0.0, -1.0]);
        let lam = DVector::from_column_slice(&[0.0, 1.0]);
        assert!(kkt_residual(&game, &p, &x, &lam) <= 1e-12);
    }

    #[test]
    fn shifted_point_is_detected() {
        let game = fixture_game("ex61");
        let p = Perturbation::zero(&game);
        let x = DVector::from_column_slice(&[1e-3, 0.0, -1.0]);
        let lam = DVector::from_column_slice(&[0.0, 1.0]);
        assert!(kkt_residual(&game, &p, &x, &lam) >= 1e-4);
    }

    #[test]
    fn zero_data_zero_point_has_zero_residual() {
        let game = QpNepGame::from_players(vec![crate::model::Player::new(
            1,
            DMatrix::zeros(1, 1),
            DVector::zeros(1),
            DMatrix::zeros(0, 1),
            DVector::zeros(0),
            0,
        )])
        .unwrap();
        let p = Perturbation::zero(&game);
        assert_eq!(
            kkt_residual(&game, &p, &DVector::zeros(1), &DVector::zeros(0)),
            0.0
        );
    }

    #[test]
    fn ex61_enumeration_contains_reference_point() {
        let pts = points_at("ex61", 0.0);
        assert_eq!(pts.len(), 2);
        // Sorted lexicographically by x: (0,-1,-1) precedes (0,0,-1).
        let second = pts[1].as_flat();
        let expected = DVector::from_column_slice(&[0.0, 0.0, -1.0, 0.0, 1.0]);
        assert!((second - expected).amax() <= 1e-10);
    }

    #[test]
    fn ex61_classification_at_reference() {
        let game = fixture_game("ex61");
        let p = Perturbation::zero(&game);
        let pts = enumerate_kkt(&game, &p, tol::MAX_INEQ).unwrap();
        let sets = classify_index_sets(&game, &p, &pts[1], tol::ACTIVE).unwrap();
        assert_eq!(sets.per_player[0].i1, vec![1]);
        assert_eq!(sets.per_player[0].i2, vec![0]);
        assert!(sets.per_player[0].i3.is_empty());
        assert!(sets.per_player[1].i1.is_empty());
        assert!(sets.per_player[1].i2.is_empty());
        assert!(sets.per_player[1].i3.is_empty());
    }

    #[test]
    fn ex62_origin_is_doubly_weakly_active() {
        let game = fixture_game("ex62");
        let p = Perturbation::zero(&game);
        let pts = enumerate_kkt(&game, &p, tol::MAX_INEQ).unwrap();
        let sets = classify_index_sets(&game, &p, &pts[0], tol::ACTIVE).unwrap();
        assert_eq!(sets.per_player[0].i2, vec![0]);
        assert_eq!(sets.per_player[1].i2, vec![0]);
        assert_eq!(sets.weakly_active_count(), 2);
    }

    #[test]
    fn interior_optimum_classifies_all_inactive() {
        let game = QpNepGame::from_players(vec![crate::model::Player::new(
            1,
            DMatrix::identity(1, 1),
            DVector::zeros(1),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DVector::from_column_slice(&[5.0]),
            0,
        )])
        .unwrap();
        let p = Perturbation::zero(&game);
        let pts = enumerate_kkt(&game, &p, tol::MAX_INEQ).unwrap();
        assert_eq!(pts.len(), 1);
        let sets = classify_index_sets(&game, &p, &pts[0], tol::ACTIVE).unwrap();
        assert_eq!(sets.per_player[0].i3, vec![0]);
    }

    #[test]
    fn classification_is_a_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let game = random_game(&mut rng, 3, 2, 2);
            let p = Perturbation::zero(&game);
            let Ok(pts) = enumerate_kkt(&game, &p, tol::MAX_INEQ) else {
                continue;
            };
            for pt in &pts {
                let sets = classify_index_sets(&game, &p, pt, tol::ACTIVE).unwrap();
                for (k, s) in sets.per_player.iter().enumerate() {
                    let mut all: Vec<usize> =
                        s.i1.iter().chain(&s.i2).chain(&s.i3).copied().collect();
                    all.sort_unstable();
                    let expect: Vec<usize> = (0..game.players[k].num_constraints()).collect();
                    assert_eq!(all, expect, "partition property violated");
                }
            }
        }
    }

    #[test]
    fn enumerated_points_satisfy_residual_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut seen = 0;
        for _ in 0..100 {
            let game = random_game(&mut rng, 2, 2, 4);
            let p = Perturbation::zero(&game);
            let Ok(pts) = enumerate_kkt(&game, &p, tol::MAX_INEQ) else {
                continue;
            };
            for pt in &pts {
                assert!(pt.residual <= tol::KKT);
                assert_abs_diff_eq!(
                    pt.residual,
                    kkt_residual(&game, &p, &pt.x, &pt.lambda),
                    epsilon = 1e-14
                );
                seen += 1;
            }
        }
        assert!(seen > 50, "sanity: enumeration should find points");
    }

    #[test]
    fn enumeration_is_invariant_under_row_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..20 {
            let game = random_game(&mut rng, 2, 2, 3);
            let p = Perturbation::zero(&game);
            let Ok(mut pts) = enumerate_kkt(&game, &p, tol::MAX_INEQ) else {
                continue;
            };
            // Reverse each player's constraint rows (no equalities here).
            let mut permuted = game.clone();
            for pl in &mut permuted.players {
                let m_k = pl.num_constraints();
                if m_k < 2 {
                    continue;
                }
                let rows: Vec<_> = (0..m_k)
                    .rev()
                    .map(|i| pl.constraints.row(i).into_owned())
                    .collect();
                for (r, row) in rows.iter().enumerate() {
                    pl.constraints.row_mut(r).copy_from(row);
                }
                let rhs: Vec<f64> = (0..m_k).rev().map(|i| pl.rhs[i]).collect();
                pl.rhs = DVector::from_column_slice(&rhs);
            }
            let mut pts2 = enumerate_kkt(&permuted, &p, tol::MAX_INEQ).unwrap();
            assert_eq!(pts.len(), pts2.len());
            // λ blocks are permuted along with the rows, so compare x only.
            pts.sort_by(|a, b| lex_cmp(&a.x, &b.x));
            pts2.sort_by(|a, b| lex_cmp(&a.x, &b.x));
            for (a, b) in pts.iter().zip(pts2.iter()) {
                assert!((&a.x - &b.x).amax() <= 1e-9);
            }
        }
    }

    #[test]
    fn guard_rejects_oversized_enumeration() {
        let game = QpNepGame::from_players(vec![crate::model::Player::new(
            1,
            DMatrix::identity(1, 1),
            DVector::zeros(1),
            DMatrix::from_fn(3, 1, |_, _| 1.0),
            DVector::from_fn(3, |_, _| 1.0),
            0,
        )])
        .unwrap();
        let p = Perturbation::zero(&game);
        assert!(matches!(
            enumerate_kkt(&game, &p, 2),
            Err(KktError::TooManyInequalities { count: 3, max: 2 })
        ));
    }

    #[test]
    fn local_nash_holds_for_convex_fixture() {
        let game = fixture_game("ex62");
        let p = Perturbation::zero(&game);
        let pts = enumerate_kkt(&game, &p, tol::MAX_INEQ).unwrap();
        let report = check_local_nash(&game, &p, &pts[0], &PositivityOptions::default()).unwrap();
        assert_eq!(report.verdict, Verdict::Holds);
        assert!(matches!(report.per_player[0], PlayerNashStatus::Convex));
        assert!(matches!(report.per_player[1], PlayerNashStatus::Convex));
    }

    #[test]
    fn local_nash_holds_for_nonconvex_player_with_binding_cone() {
        // Player 1 of the ex61 fixture has an indefinite own block but
        // passes second-order sufficiency on its critical cone.
        let game = fixture_game("ex61");
        let p = Perturbation::zero(&game);
        let pts = enumerate_kkt(&game, &p, tol::MAX_INEQ).unwrap();
        let report = check_local_nash(&game, &p, &pts[1], &PositivityOptions::default()).unwrap();
        assert_eq!(report.verdict, Verdict::Holds);
        assert!(matches!(
            report.per_player[0],
            PlayerNashStatus::SoscHolds { .. }
        ));
    }

    #[test]
    fn local_nash_fails_for_concave_unconstrained_player() {
        let game = QpNepGame::from_players(vec![crate::model::Player::new(
            1,
            -DMatrix::identity(1, 1),
            DVector::zeros(1),
            DMatrix::zeros(0, 1),
            DVector::zeros(0),
            0,
        )])
        .unwrap();
        let p = Perturbation::zero(&game);
        let pts = enumerate_kkt(&game, &p, tol::MAX_INEQ).unwrap();
        let report = check_local_nash(&game, &p, &pts[0], &PositivityOptions::default()).unwrap();
        assert_eq!(report.verdict, Verdict::Fails);
        assert_eq!(report.failing_player, Some(0));
        match &report.per_player[0] {
            PlayerNashStatus::SoscFails { witness } => {
                assert_abs_diff_eq!(witness[0].abs(), 1.0, epsilon = 1e-9);
            }
            other => panic!("expected SoscFails, got {other:?}"),
        }
    }
}
