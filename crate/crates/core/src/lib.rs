//! Certification toolkit for the stability of KKT points in Nash games
//! whose players solve linearly constrained quadratic programs.
//!
//! Given a game file, the library enumerates all KKT points, classifies
//! active constraints, runs constraint-qualification and second-order
//! checks, and renders tri-state verdicts (HOLDS / FAILS with witness /
//! UNDECIDED) for strong regularity, continuously differentiable
//! localization, isolated calmness, and robust isolated calmness. An
//! empirical perturbation harness sweeps tilt directions and validates the
//! verdicts against the actual perturbed solution sets.

pub mod cli;
pub mod cq;

pub mod kkt;
pub mod model;
pub mod numerics;
pub mod perturb;
pub mod stability;

pub mod tol;

#[doc(hidden)]
pub mod test_util;

pub use model::{
    apply_tilt, load_direction, load_game, validate_game, Perturbation, PerturbationDirection,
    Player, QpNepGame,
};
pub use numerics::{ConeSpec, Verdict};
