//! Constraint qualifications and per-player second-order checks at a KKT
//! triple.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::kkt::{IndexSets, PlayerIndexSets};
use crate::model::QpNepGame;
use crate::numerics::{
    lp_feasible_strict, null_basis, rank, sym_eig_min, sym_eig_min_pair, NumericsError, Verdict,
};
use crate::tol;

/// Rows of player `k`'s constraint matrix selected by local indices.
pub(crate) fn rows_of(game: &QpNepGame, k: usize, idx: &[usize]) -> DMatrix<f64> {
    let player = &game.players[k];
    let mut m = DMatrix::zeros(idx.len(), player.dim);
    for (r, &i) in idx.iter().enumerate() {
        m.row_mut(r).copy_from(&player.constraints.row(i));
    }
    m
}

/// LICQ: the active rows `A_{I1 ∪ I2}` are linearly independent.
pub fn check_licq(game: &QpNepGame, k: usize, sets: &PlayerIndexSets) -> bool {
    let mut active: Vec<usize> = sets.i1.iter().chain(&sets.i2).copied().collect();
    active.sort_unstable();
    if active.is_empty() {
        return true;
    }
    let a = rows_of(game, k, &active);
    rank(&a, tol::RANK_REL) == active.len()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmfcqResult {
    pub holds: bool,
    /// Certificate direction with `A_{I1} y = 0` and `A_{I2} y ≤ -1`,
    /// present when the qualification holds.
    pub direction: Option<Vec<f64>>,
}

/// SMFCQ: `A_{I1}` has full row rank and some direction is strictly
/// feasible for the weakly active rows.
pub fn check_smfcq(
    game: &QpNepGame,
    k: usize,
    sets: &PlayerIndexSets,
) -> Result<SmfcqResult, NumericsError> {
    let a1 = rows_of(game, k, &sets.i1);
    if !sets.i1.is_empty() && rank(&a1, tol::RANK_REL) != sets.i1.len() {
        return Ok(SmfcqResult {
            holds: false,
            direction: None,
        });
    }
    let a2 = rows_of(game, k, &sets.i2);
    match lp_feasible_strict(&a1, &a2)? {
        Some(y) => Ok(SmfcqResult {
            holds: true,
            direction: Some(y.as_slice().to_vec()),
        }),
        None => Ok(SmfcqResult {
            holds: false,
            direction: None,
        }),
    }
}

/// SCSC: no weakly active rows.
pub fn check_scsc(sets: &PlayerIndexSets) -> bool {
    sets.i2.is_empty()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityResult {
    pub convex: bool,
    /// Smallest eigenvalue of the player's own quadratic block.
    pub eig_min: f64,
}

/// Per-player convexity: the own block `P^k_{kk}` is positive semidefinite.
/// Constraints are linear by construction, so nothing further is needed.
pub fn check_convexity(game: &QpNepGame) -> Result<Vec<ConvexityResult>, NumericsError> {
    let mut out = Vec::with_capacity(game.num_players());
    for k in 0..game.num_players() {
        let own = game.quad_block(k, k, k);
        let eig_min = sym_eig_min(&own)?;
        let psd_tol = tol::RANK_REL * own.amax().max(1.0);
        out.push(ConvexityResult {
            convex: eig_min >= -psd_tol,
            eig_min,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsoscResult {
    pub verdict: Verdict,
    /// Smallest eigenvalue of the own block projected onto the strongly
    /// active null subspace; absent for vacuous cases.
    pub margin: Option<f64>,
    pub witness: Option<Vec<f64>>,
    pub note: Option<String>,
}

/// SSOSC: positivity of `yᵀ P^k_{kk} y` on `{y : A_{I1} y = 0}`.
///
/// Vacuously HOLDS when that subspace is trivial; UNDECIDED when `A_{I1}`
/// is rank deficient (the projected test is then ill-posed).
pub fn check_ssosc(
    game: &QpNepGame,
    k: usize,
    sets: &PlayerIndexSets,
) -> Result<SsoscResult, NumericsError> {
    let a1 = rows_of(game, k, &sets.i1);
    if !sets.i1.is_empty() && rank(&a1, tol::RANK_REL) != sets.i1.len() {
        return Ok(SsoscResult {
            verdict: Verdict::Undecided,
            margin: None,
            witness: None,
            note: Some("strongly active rows are rank deficient".to_string()),
        });
    }
    let basis = null_basis(&a1, tol::RANK_REL).basis;
    if basis.ncols() == 0 {
        return Ok(SsoscResult {
            verdict: Verdict::Holds,
            margin: None,
            witness: None,
            note: Some("strongly active subspace is trivial".to_string()),
        });
    }
    let own = game.quad_block(k, k, k);
    let projected = basis.transpose() * &own * &basis;
    let (eig_min, vec) = sym_eig_min_pair(&projected)?;
    let threshold = tol::RANK_REL * projected.amax().max(1.0);
    if eig_min > threshold {
        Ok(SsoscResult {
            verdict: Verdict::Holds,
            margin: Some(eig_min),
            witness: None,
            note: None,
        })
    } else {
        let w: DVector<f64> = &basis * vec;
        Ok(SsoscResult {
            verdict: Verdict::Fails,
            margin: Some(eig_min),
            witness: Some(w.as_slice().to_vec()),
            note: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerCq {
    pub licq: bool,
    pub smfcq: SmfcqResult,
    pub scsc: bool,
    pub convex: ConvexityResult,
    pub ssosc: SsoscResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CqReport {
    pub per_player: Vec<PlayerCq>,
}

impl CqReport {
    pub fn licq_all(&self) -> bool {
        self.per_player.iter().all(|p| p.licq)
    }
    pub fn smfcq_all(&self) -> bool {
        self.per_player.iter().all(|p| p.smfcq.holds)
    }
    pub fn scsc_all(&self) -> bool {
        self.per_player.iter().all(|p| p.scsc)
    }
    pub fn convex_all(&self) -> bool {
        self.per_player.iter().all(|p| p.convex.convex)
    }
    pub fn ssosc_all(&self) -> bool {
        self.per_player
            .iter()
            .all(|p| p.ssosc.verdict == Verdict::Holds)
    }
}

/// Run every per-player check at the given index sets.
pub fn cq_report(game: &QpNepGame, sets: &IndexSets) -> Result<CqReport, NumericsError> {
    let convexity = check_convexity(game)?;
    let mut per_player = Vec::with_capacity(game.num_players());
    for k in 0..game.num_players() {
        let s = &sets.per_player[k];
        per_player.push(PlayerCq {
            licq: check_licq(game, k, s),
            smfcq: check_smfcq(game, k, s)?,
            scsc: check_scsc(s),
            convex: convexity[k].clone(),
            ssosc: check_ssosc(game, k, s)?,
        });
    }
    Ok(CqReport { per_player })
}
