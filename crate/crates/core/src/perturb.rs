//! Empirical validation harness: sweep tilt perturbations along a
//! direction, track solution branches, estimate calmness constants, and
//! detect robustness failure.
//!
//! Distances here are max-norms on the strategy profile `x`; the
//! perturbation size is the max-norm of the concatenated `(u, v)`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kkt::{check_local_nash, enumerate_kkt_with, kkt_residual, KktError, KktPoint};
use crate::model::{apply_tilt, Perturbation, PerturbationDirection, QpNepGame};
use crate::numerics::{PositivityOptions, Verdict};
use crate::tol::{self, Tolerances};

#[derive(Debug, Error)]
pub enum PerturbError {
    #[error("reference point has residual {0:.3e} above the acceptance threshold")]
    BadReference(f64),
    #[error("window must be positive, got {0}")]
    BadWindow(f64),
    #[error(transparent)]
    Kkt(#[from] KktError),
}

/// One KKT point found inside the window, with its equilibrium status.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub residual: f64,
    pub non_isolated: bool,
    pub nash: Verdict,
}

impl SweepPoint {
    fn flat(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.x.len() + self.lambda.len(),
            self.x.iter().chain(&self.lambda).copied(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepStep {
    pub t: f64,
    /// `‖(u, v)‖∞` at this grid value.
    pub perturbation_norm: f64,
    pub points: Vec<SweepPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub reference_x: Vec<f64>,
    pub reference_lambda: Vec<f64>,
    pub window: f64,
    pub steps: Vec<SweepStep>,
}

/// Half the minimum strategy-space distance from the reference to any
/// other KKT point at the base perturbation; 0.5 when the reference is the
/// only point.
pub fn default_window(
    game: &QpNepGame,
    reference: &KktPoint,
    tols: &Tolerances,
) -> Result<f64, PerturbError> {
    let p = Perturbation::zero(game);
    let pts = enumerate_kkt_with(game, &p, tol::MAX_INEQ, tols)?;
    let mut min_dist = f64::INFINITY;
    for pt in &pts {
        let d = (&pt.x - &reference.x).amax();
        if d > tols.dedup && d < min_dist {
            min_dist = d;
        }
    }
    Ok(if min_dist.is_finite() {
        0.5 * min_dist
    } else {
        0.5
    })
}

/// Enumerate KKT points at every grid value, keep those inside the window
/// around the reference, and record their equilibrium status.
pub fn sweep(
    game: &QpNepGame,
    dir: &PerturbationDirection,
    reference: &KktPoint,
    t_grid: &[f64],
    window: f64,
    opts: &PositivityOptions,
    tols: &Tolerances,
) -> Result<SweepResult, PerturbError> {
    let base = Perturbation::zero(game);
    let ref_residual = kkt_residual(game, &base, &reference.x, &reference.lambda);
    if ref_residual > tols.kkt {
        return Err(PerturbError::BadReference(ref_residual));
    }
    if window <= 0.0 {
        return Err(PerturbError::BadWindow(window));
    }
    let mut ts: Vec<f64> = t_grid.to_vec();
    ts.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));

    let dir_norm = dir.du.amax().max(dir.dv.amax());
    let mut steps = Vec::with_capacity(ts.len());
    for &t in &ts {
        let p = apply_tilt(game, dir, t);
        let pts = enumerate_kkt_with(game, &p, tol::MAX_INEQ, tols)?;
        let mut points = Vec::new();
        for pt in pts {
            if (&pt.x - &reference.x).amax() <= window {
                let nash = check_local_nash(game, &p, &pt, opts)?.verdict;
                points.push(SweepPoint {
                    x: pt.x.as_slice().to_vec(),
                    lambda: pt.lambda.as_slice().to_vec(),
                    residual: pt.residual,
                    non_isolated: pt.non_isolated,
                    nash,
                });
            }
        }
        steps.push(SweepStep {
            t,
            perturbation_norm: t.abs() * dir_norm,
            points,
        });
    }
    Ok(SweepResult {
        reference_x: reference.x.as_slice().to_vec(),
        reference_lambda: reference.lambda.as_slice().to_vec(),
        window,
        steps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalmnessEstimate {
    /// `max over t ≠ 0, points` of `‖x(t) − x̄‖∞ / ‖Δp(t)‖∞`; absent when
    /// no perturbed grid value produced a point in the window.
    pub kappa_hat: Option<f64>,
    /// Per grid value: was the window nonempty?
    pub existence_profile: Vec<(f64, bool)>,
    /// Some grid value had an empty window.
    pub robustness_violated: bool,
}

/// Empirical calmness constant over the sweep grid.
pub fn estimate_calmness_constant(sweep: &SweepResult) -> CalmnessEstimate {
    let reference = DVector::from_column_slice(&sweep.reference_x);
    let mut kappa: Option<f64> = None;
    let mut existence = Vec::with_capacity(sweep.steps.len());
    for step in &sweep.steps {
        existence.push((step.t, !step.points.is_empty()));
        if step.t == 0.0 || step.perturbation_norm == 0.0 {
            continue;
        }
        for pt in &step.points {
            let x = DVector::from_column_slice(&pt.x);
            let ratio = (x - &reference).amax() / step.perturbation_norm;
            kappa = Some(kappa.map_or(ratio, |k: f64| k.max(ratio)));
        }
    }
    let robustness_violated = existence.iter().any(|&(_, ok)| !ok);
    CalmnessEstimate {
        kappa_hat: kappa,
        existence_profile: existence,
        robustness_violated,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    /// Grid values contributing to this branch.
    pub ts: Vec<f64>,
    /// Least-squares slope of `(x, λ)(t) − reference` through the origin.
    pub slope: Vec<f64>,
    /// Max-norm residual of the linear fit.
    pub fit_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSummary {
    pub positive: Vec<Branch>,
    pub negative: Vec<Branch>,
    /// Set when the one-sided structure differs or single-branch slopes
    /// disagree beyond 1e-6 relative.
    pub kink_at_zero: bool,
    /// Relative one-sided slope gap when both sides have one branch.
    pub slope_gap: Option<f64>,
    /// A point matched two branches equally well.
    pub ambiguous_matches: bool,
}

/// Count and fit solution branches on each side of `t = 0`.
///
/// Matching runs in normalized-offset space `(z(t) − z̄)/t`, where linear
/// branches are fixed points, with acceptance threshold `window/4` scaled
/// back to offset units.
pub fn detect_branches(sweep: &SweepResult) -> BranchSummary {
    let reference = {
        let mut r = sweep.reference_x.clone();
        r.extend_from_slice(&sweep.reference_lambda);
        DVector::from_column_slice(&r)
    };
    let mut ambiguous = false;
    let mut side = |positive: bool| -> Vec<Branch> {
        // (t, normalized offset) for every in-window point on this side,
        // nearest t first.
        let mut samples: Vec<(f64, DVector<f64>)> = Vec::new();
        for step in &sweep.steps {
            if step.t == 0.0 || (step.t > 0.0) != positive {
                continue;
            }
            for pt in &step.points {
                let d = (pt.flat() - &reference) / step.t;
                samples.push((step.t, d));
            }
        }
        samples.sort_by(|a, b| {
            a.0.abs()
                .partial_cmp(&b.0.abs())
                .expect("finite t")
                .then_with(|| crate::kkt::lex_cmp(&a.1, &b.1))
        });

        struct Cluster {
            ts: Vec<f64>,
            ds: Vec<DVector<f64>>,
            centroid: DVector<f64>,
        }
        let mut clusters: Vec<Cluster> = Vec::new();
        for (t, d) in samples {
            // Solution paths are affine per side for quadratic data, so a
            // branch is a fixed point in offset space; a tight relative
            // radius separates parallel branches, and window/4 caps the
            // matching distance in point space. A mid-side active-set
            // change therefore starts a new branch.
            let point_cap = sweep.window / (4.0 * t.abs());
            let mut best: Option<(usize, f64)> = None;
            let mut second = f64::INFINITY;
            for (ci, c) in clusters.iter().enumerate() {
                let dist = (&d - &c.centroid).amax();
                match best {
                    None => best = Some((ci, dist)),
                    Some((_, bd)) => {
                        if dist < bd {
                            second = bd;
                            best = Some((ci, dist));
                        } else if dist < second {
                            second = dist;
                        }
                    }
                }
            }
            let offset_radius = |centroid: &DVector<f64>| 1e-4 * centroid.amax().max(1.0);
            match best {
                Some((ci, dist))
                    if dist <= point_cap.min(offset_radius(&clusters[ci].centroid)) =>
                {
                    if (second - dist).abs() <= 1e-9 {
                        ambiguous = true;
                    }
                    let c = &mut clusters[ci];
                    c.ts.push(t);
                    c.ds.push(d);
                    let k = c.ds.len() as f64;
                    c.centroid =
                        c.ds.iter()
                            .fold(DVector::zeros(c.centroid.len()), |acc, v| acc + v)
                            / k;
                }
                _ => clusters.push(Cluster {
                    ts: vec![t],
                    ds: vec![d.clone()],
                    centroid: d,
                }),
            }
        }

        clusters
            .into_iter()
            .map(|c| {
                // Through-origin least squares on Δz = s·t reduces to a
                // weighted mean of the normalized offsets.
                let wsum: f64 = c.ts.iter().map(|t| t * t).sum();
                let mut slope = DVector::zeros(c.centroid.len());
                for (t, d) in c.ts.iter().zip(&c.ds) {
                    slope += (t * t / wsum) * d;
                }
                let mut resid: f64 = 0.0;
                for (t, d) in c.ts.iter().zip(&c.ds) {
                    resid = resid.max(((d - &slope) * *t).amax());
                }
                Branch {
                    ts: c.ts,
                    slope: slope.as_slice().to_vec(),
                    fit_residual: resid,
                }
            })
            .collect()
    };

    let positive = side(true);
    let negative = side(false);

    let mut kink = false;
    let mut slope_gap = None;
    if positive.len() == 1 && negative.len() == 1 {
        let sp = DVector::from_column_slice(&positive[0].slope);
        let sn = DVector::from_column_slice(&negative[0].slope);
        let scale = sp.amax().max(sn.amax()).max(1e-12);
        let gap = (sp - sn).amax() / scale;
        slope_gap = Some(gap);
        if gap > 1e-6 {
            kink = true;
        }
    } else if !positive.is_empty() && !negative.is_empty() && positive.len() != negative.len() {
        kink = true;
    }

    BranchSummary {
        positive,
        negative,
        kink_at_zero: kink,
        slope_gap,
        ambiguous_matches: ambiguous,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kkt::enumerate_kkt;
    use crate::test_util::{fixture_direction, fixture_game};
    use approx::assert_abs_diff_eq;

    fn run_sweep(name: &str, point_index: usize, grid: &[f64]) -> SweepResult {
        let game = fixture_game(name);
        let dir = fixture_direction(name, &game);
        let p0 = Perturbation::zero(&game);
        let pts = enumerate_kkt(&game, &p0, tol::MAX_INEQ).unwrap();
        let reference = &pts[point_index];
        let tols = Tolerances::default();
        let window = default_window(&game, reference, &tols).unwrap();
        sweep(
            &game,
            &dir,
            reference,
            grid,
            window,
            &PositivityOptions::default(),
            &tols,
        )
        .unwrap()
    }

    #[test]
    fn ex61_branches_at_plus_minus_point_one() {
        let sw = run_sweep("ex61", 1, &[-0.1, 0.1]);
        assert_abs_diff_eq!(sw.window, 0.5, epsilon = 1e-9);
        let neg = &sw.steps[0];
        assert_eq!(neg.points.len(), 1);
        let expect_neg = [0.0, 0.0, -1.0, 0.1, 1.0];
        let got: Vec<f64> = neg.points[0]
            .x
            .iter()
            .chain(&neg.points[0].lambda)
            .copied()
            .collect();
        for (a, b) in got.iter().zip(expect_neg.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-8);
        }
        let pos = &sw.steps[1];
        assert_eq!(pos.points.len(), 1);
        let expect_pos = [-0.1, 0.0, -1.1, 0.0, 1.1];
        let got: Vec<f64> = pos.points[0]
            .x
            .iter()
            .chain(&pos.points[0].lambda)
            .copied()
            .collect();
        for (a, b) in got.iter().zip(expect_pos.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-8);
        }
    }

    #[test]
    fn ex31_window_is_empty_once_perturbed() {
        let sw = run_sweep("ex31", 0, &[0.01, 0.05, 0.1]);
        assert!(sw.steps.iter().all(|s| s.points.is_empty()));
        let est = estimate_calmness_constant(&sw);
        assert!(est.kappa_hat.is_none());
        assert!(est.robustness_violated);
        assert!(est.existence_profile.iter().all(|&(_, ok)| !ok));
    }

    #[test]
    fn ex32_single_smooth_branch() {
        let grid: Vec<f64> = (-5..=5)
            .filter(|&i| i != 0)
            .map(|i| i as f64 * 0.02)
            .collect();
        let sw = run_sweep("ex32", 0, &grid);
        for step in &sw.steps {
            assert_eq!(step.points.len(), 1);
            let x = &step.points[0].x;
            assert_abs_diff_eq!(x[0], -step.t, epsilon = 1e-10);
            assert_abs_diff_eq!(x[1], step.t, epsilon = 1e-10);
            assert_abs_diff_eq!(x[2], -step.t, epsilon = 1e-10);
        }
        let summary = detect_branches(&sw);
        assert_eq!(summary.positive.len(), 1);
        assert_eq!(summary.negative.len(), 1);
        assert!(!summary.kink_at_zero);
        let slope = &summary.positive[0].slope;
        assert_abs_diff_eq!(slope[0], -1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(slope[1], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(slope[2], -1.0, epsilon = 1e-9);

        let est = estimate_calmness_constant(&sw);
        assert_abs_diff_eq!(est.kappa_hat.unwrap(), 0.5, epsilon = 1e-9);
    }

    #[test]
    fn ex62_calmness_constant_is_three() {
        let sw = run_sweep("ex62", 0, &[-0.1, -0.01, 0.01, 0.1]);
        let est = estimate_calmness_constant(&sw);
        assert!(!est.robustness_violated);
        assert_abs_diff_eq!(est.kappa_hat.unwrap(), 3.0, epsilon = 1e-9);
    }

    #[test]
    fn ex62_branch_counts_per_side() {
        let grid: Vec<f64> = (-20..=20).map(|i| i as f64 * 0.005).collect();
        let sw = run_sweep("ex62", 0, &grid);
        let summary = detect_branches(&sw);
        assert_eq!(summary.positive.len(), 3);
        assert_eq!(summary.negative.len(), 1);
        assert!(summary.kink_at_zero);
        assert!(!summary.ambiguous_matches);
    }

    #[test]
    fn ex61_kink_is_flagged() {
        let grid: Vec<f64> = (-10..=10)
            .filter(|&i| i != 0)
            .map(|i| i as f64 * 0.01)
            .collect();
        let sw = run_sweep("ex61", 1, &grid);
        let summary = detect_branches(&sw);
        assert_eq!(summary.positive.len(), 1);
        assert_eq!(summary.negative.len(), 1);
        assert!(summary.kink_at_zero, "one-sided slopes differ");
        assert!(summary.slope_gap.unwrap() > 1e-6);
    }

    #[test]
    fn sweep_is_sign_convention_stable() {
        let a = run_sweep("ex62", 0, &[-0.1, -0.01, 0.01, 0.1]);
        let grid_negated: Vec<f64> = [-0.1, -0.01, 0.01, 0.1]
            .iter()
            .map(|t: &f64| -(-t))
            .collect();
        let b = run_sweep("ex62", 0, &grid_negated);
        assert_eq!(a, b);
    }

    #[test]
    fn zero_contribution_when_solution_sticks_to_reference() {
        // At t where the found point equals the reference, the ratio is 0.
        let sw = run_sweep("ex61", 1, &[-0.05]);
        // Negative branch x equals the reference x exactly for t < 0.
        let est = estimate_calmness_constant(&sw);
        assert_abs_diff_eq!(est.kappa_hat.unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn bad_reference_is_rejected() {
        let game = fixture_game("ex62");
        let dir = fixture_direction("ex62", &game);
        let reference = KktPoint {
            x: DVector::from_column_slice(&[1.0, 1.0]),
            lambda: DVector::zeros(2),
            active_set: vec![],
            residual: 0.0,
            non_isolated: false,
        };
        let err = sweep(
            &game,
            &dir,
            &reference,
            &[0.1],
            0.5,
            &PositivityOptions::default(),
            &Tolerances::default(),
        );
        assert!(matches!(err, Err(PerturbError::BadReference(_))));
    }
}
