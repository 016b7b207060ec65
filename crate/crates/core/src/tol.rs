//! Default tolerances shared across the toolkit.
//!
//! All tolerances are overridable through [`Tolerances`]; the constants here
//! are the documented defaults.

use serde::{Deserialize, Serialize};

/// Relative threshold below which singular values count as zero in rank and
/// null-space computations.
pub const RANK_REL: f64 = 1e-9;

/// Acceptance threshold on the KKT residual of a primal-dual point.
pub const KKT: f64 = 1e-8;

/// Activity threshold used when classifying constraints at a KKT point.
/// Kept one order looser than [`KKT`] so classification is robust to solve
/// noise.
pub const ACTIVE: f64 = 1e-7;

/// Two KKT points closer than this in max-norm are considered the same.
pub const DEDUP: f64 = 1e-7;

/// Symmetry slack tolerated by eigenvalue routines.
pub const SYMMETRY: f64 = 1e-10;

/// Asymmetry above this in max-norm triggers a load warning before the
/// quadratic matrix is symmetrized.
pub const ASYMMETRY_WARN: f64 = 1e-12;

/// Objective below this in a violation search certifies a strict-positivity
/// failure.
pub const VIOLATION: f64 = 1e-8;

/// Sum-of-squares value below this certifies a common zero of a quadratic
/// family.
pub const ZERO_SET: f64 = 1e-16;

/// Default sphere-grid resolution for cone-positivity certification.
pub const GRID_RES: f64 = 1e-2;

/// Default number of multistart descent runs in the violation search.
pub const STARTS: usize = 64;

/// Default RNG seed.
pub const SEED: u64 = 0;

/// Cap on the number of inequality rows accepted by the active-set
/// enumeration (2^count subsystems).
pub const MAX_INEQ: usize = 20;

/// Cap on the number of weakly active rows accepted by partition and branch
/// enumerations (3^count partitions, 2^count branches).
pub const MAX_WEAKLY_ACTIVE: usize = 12;

/// Runtime-adjustable tolerance bundle.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Tolerances {
    pub rank_rel: f64,
    pub kkt: f64,
    pub active: f64,
    pub dedup: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rank_rel: RANK_REL,
            kkt: KKT,
            active: ACTIVE,
            dedup: DEDUP,
        }
    }
}
