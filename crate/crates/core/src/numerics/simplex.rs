//! Dense two-phase simplex for small linear feasibility problems.
//!
//! Every caller in this crate needs only feasibility of systems
//! `{ Ey = e, Fy ≤ f }` with free variables, so phase two is trivial (zero
//! objective). Bland's rule guards against cycling; problems here have at
//! most a few dozen variables.

use nalgebra::{DMatrix, DVector};

use super::NumericsError;

/// Entries smaller than this are treated as zero during pivoting.
const PIVOT_EPS: f64 = 1e-11;
/// Residual infeasibility tolerated in the phase-1 optimum.
const FEAS_EPS: f64 = 1e-9;

/// Find `y` (free sign) with `eq · y = eq_rhs` and `ineq · y ≤ ineq_rhs`,
/// or report that none exists.
pub fn feasible_point(
    eq: &DMatrix<f64>,
    eq_rhs: &DVector<f64>,
    ineq: &DMatrix<f64>,
    ineq_rhs: &DVector<f64>,
) -> Result<Option<DVector<f64>>, NumericsError> {
    let dim = if eq.nrows() > 0 {
        eq.ncols()
    } else {
        ineq.ncols()
    };
    assert!(eq.nrows() == 0 || eq.ncols() == dim);
    assert!(ineq.nrows() == 0 || ineq.ncols() == dim);
    assert_eq!(eq.nrows(), eq_rhs.len());
    assert_eq!(ineq.nrows(), ineq_rhs.len());

    let m = eq.nrows() + ineq.nrows();
    if m == 0 {
        return Ok(Some(DVector::zeros(dim)));
    }

    // Standard form: columns are y⁺ (dim), y⁻ (dim), slacks (one per
    // inequality row), artificials (one per row), then the rhs.
    let n_struct = 2 * dim + ineq.nrows();
    let n_total = n_struct + m;
    let mut t = DMatrix::zeros(m, n_total + 1);

    for r in 0..m {
        let (row, rhs, slack): (DVector<f64>, f64, Option<usize>) = if r < eq.nrows() {
            (eq.row(r).transpose(), eq_rhs[r], None)
        } else {
            let i = r - eq.nrows();
            (ineq.row(i).transpose(), ineq_rhs[i], Some(2 * dim + i))
        };
        // Scale the row to unit max-norm for robustness.
        let scale = row.amax().max(rhs.abs()).max(1e-12);
        let sign = if rhs / scale < 0.0 { -1.0 } else { 1.0 };
        for j in 0..dim {
            t[(r, j)] = sign * row[j] / scale;
            t[(r, dim + j)] = -sign * row[j] / scale;
        }
        if let Some(sj) = slack {
            // The slack is rescaled along with the row, so its coefficient
            // stays ±1.
            t[(r, sj)] = sign;
        }
        t[(r, n_struct + r)] = 1.0; // artificial
        t[(r, n_total)] = sign * rhs / scale;
    }

    let mut basis: Vec<usize> = (n_struct..n_total).collect();
    let max_pivots = 50 * (m + n_total) + 200;
    let mut pivots = 0;
    // Phase-1 reduced costs are recomputed from the current basis every
    // iteration rather than carried by elimination: long pivot sequences
    // can drift an eliminated objective row badly enough to misclassify
    // feasibility, and these problems are small enough that the extra
    // O(m·n) per pivot is irrelevant.
    let mut reduced = vec![0.0f64; n_total];

    loop {
        for (j, rj) in reduced.iter_mut().enumerate() {
            let cj = if j >= n_struct { 1.0 } else { 0.0 };
            let mut cb_col = 0.0;
            for (r, &b) in basis.iter().enumerate() {
                if b >= n_struct {
                    cb_col += t[(r, j)];
                }
            }
            *rj = cj - cb_col;
        }

        // Bland: entering column = smallest index with negative reduced
        // cost that admits a leaving row. The phase-1 objective is bounded
        // below by zero, so a column without a leaving row is a tolerance
        // artifact and is skipped.
        let mut pivot_pair: Option<(usize, usize)> = None;
        for (j, &rj) in reduced.iter().enumerate() {
            if rj >= -PIVOT_EPS {
                continue;
            }
            // Ratio test; ties broken by smallest basis variable (Bland).
            let mut leaving: Option<(usize, f64)> = None;
            for r in 0..m {
                if t[(r, j)] > PIVOT_EPS {
                    let ratio = t[(r, n_total)] / t[(r, j)];
                    match leaving {
                        None => leaving = Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - PIVOT_EPS
                                || (ratio < lratio + PIVOT_EPS && basis[r] < basis[lr])
                            {
                                leaving = Some((r, ratio));
                            }
                        }
                    }
                }
            }
            if let Some((row, _)) = leaving {
                pivot_pair = Some((row, j));
                break;
            }
        }
        let Some((row, col)) = pivot_pair else { break };

        let piv = t[(row, col)];
        for j in 0..=n_total {
            t[(row, j)] /= piv;
        }
        for r in 0..m {
            if r != row {
                let f = t[(r, col)];
                if f != 0.0 {
                    for j in 0..=n_total {
                        t[(r, j)] -= f * t[(row, j)];
                    }
                }
            }
        }
        basis[row] = col;

        pivots += 1;
        if pivots > max_pivots {
            return Err(NumericsError::CycleGuard(pivots));
        }
    }

    // Phase-1 optimum is the sum of artificial basic values; feasible
    // iff ~0.
    let resid: f64 = basis
        .iter()
        .enumerate()
        .filter(|&(_, &b)| b >= n_struct)
        .map(|(r, _)| t[(r, n_total)])
        .sum();
    if resid > FEAS_EPS {
        return Ok(None);
    }

    let mut y = DVector::zeros(dim);
    for (r, &b) in basis.iter().enumerate() {
        let val = t[(r, n_total)];
        if b < dim {
            y[b] += val;
        } else if b < 2 * dim {
            y[b - dim] -= val;
        }
    }

    // Hard guarantee for callers that treat feasible outputs as witnesses:
    // the point must satisfy the original system.
    let mut violation: f64 = 0.0;
    let mut scale: f64 = 1.0;
    if eq.nrows() > 0 {
        violation = (eq * &y - eq_rhs).amax();
        scale = scale.max(eq.amax()).max(eq_rhs.amax());
    }
    if ineq.nrows() > 0 {
        let r = ineq * &y - ineq_rhs;
        violation = violation.max(r.iter().fold(0.0f64, |a, &v| a.max(v)));
        scale = scale.max(ineq.amax()).max(ineq_rhs.amax());
    }
    if violation > 1e-7 * scale.max(y.amax()).max(1.0) {
        return Err(NumericsError::LpVerification(violation));
    }
    Ok(Some(y))
}

/// Decide whether some `y` satisfies `Ey = 0` and `Fy < 0` componentwise.
///
/// By homogeneity this is equivalent to `Ey = 0, Fy ≤ -1`; the normalized
/// form is what gets solved, and the returned direction satisfies it.
pub fn lp_feasible_strict(
    eq: &DMatrix<f64>,
    ineq: &DMatrix<f64>,
) -> Result<Option<DVector<f64>>, NumericsError> {
    let eq_rhs = DVector::zeros(eq.nrows());
    let ineq_rhs = DVector::from_element(ineq.nrows(), -1.0);
    feasible_point(eq, &eq_rhs, ineq, &ineq_rhs)
}

/// A nonzero point of the cone `{y : Ey = 0, Fy ≤ 0}`, or `None` when the
/// cone is trivial.
///
/// Exhaustive for polyhedral cones: a cone contains a nonzero vector iff
/// some coordinate can be scaled to ±1, so one feasibility problem per
/// coordinate and sign decides it.
pub fn cone_nonzero_ray(
    eq: &DMatrix<f64>,
    ineq: &DMatrix<f64>,
) -> Result<Option<DVector<f64>>, NumericsError> {
    let dim = eq.ncols().max(ineq.ncols());
    let coords: Vec<usize> = (0..dim).collect();
    cone_nonzero_ray_restricted(eq, ineq, &coords)
}

/// Like [`cone_nonzero_ray`], but only the listed coordinates are required
/// to be scalable to ±1. Returns the first feasible point in coordinate
/// order, positive sign tried first.
pub fn cone_nonzero_ray_restricted(
    eq: &DMatrix<f64>,
    ineq: &DMatrix<f64>,
    coords: &[usize],
) -> Result<Option<DVector<f64>>, NumericsError> {
    let dim = eq.ncols().max(ineq.ncols());
    let ineq_rhs = DVector::zeros(ineq.nrows());
    for &j in coords {
        for sign in [1.0, -1.0] {
            let mut eq_ext = DMatrix::zeros(eq.nrows() + 1, dim);
            if eq.nrows() > 0 {
                eq_ext.view_mut((0, 0), (eq.nrows(), dim)).copy_from(eq);
            }
            eq_ext[(eq.nrows(), j)] = sign;
            let mut eq_rhs = DVector::zeros(eq.nrows() + 1);
            eq_rhs[eq.nrows()] = 1.0;
            if let Some(y) = feasible_point(&eq_ext, &eq_rhs, ineq, &ineq_rhs)? {
                return Ok(Some(y));
            }
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mat(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, data)
    }

    #[test]
    fn strict_direction_for_single_upper_bound() {
        // F = (1): need y < 0; y = -1 works.
        let e = DMatrix::zeros(0, 1);
        let f = mat(1, 1, &[1.0]);
        let y = lp_feasible_strict(&e, &f).unwrap().expect("feasible");
        assert!(f.row(0).transpose().dot(&y) <= -1.0 + 1e-8);
    }

    #[test]
    fn equality_pins_variable_to_zero() {
        let e = mat(1, 1, &[1.0]);
        let f = mat(1, 1, &[-1.0]);
        assert!(lp_feasible_strict(&e, &f).unwrap().is_none());
    }

    #[test]
    fn strict_direction_for_lower_bound_row() {
        let e = DMatrix::zeros(0, 1);
        let f = mat(1, 1, &[-1.0]);
        let y = lp_feasible_strict(&e, &f).unwrap().expect("feasible");
        assert!(y[0] >= 1.0 - 1e-8);
    }

    #[test]
    fn ray_absent_when_equalities_pin_everything() {
        let e = DMatrix::identity(2, 2);
        let f = DMatrix::zeros(0, 2);
        assert!(cone_nonzero_ray(&e, &f).unwrap().is_none());
    }

    #[test]
    fn ray_found_on_rank_deficient_equalities() {
        // Null space of [[2,2],[3,3]] is span{(1,-1)}; F enforces y₁ ≥ 0.
        let e = mat(2, 2, &[2.0, 2.0, 3.0, 3.0]);
        let f = mat(1, 2, &[-1.0, 0.0]);
        let y = cone_nonzero_ray(&e, &f).unwrap().expect("nonzero ray");
        assert!(y[0] > 1e-9);
        assert!((y[0] + y[1]).abs() <= 1e-8 * y.amax());
    }

    #[test]
    fn full_space_has_unit_ray() {
        let e = DMatrix::zeros(0, 1);
        let f = DMatrix::zeros(0, 1);
        let y = cone_nonzero_ray(&e, &f).unwrap().expect("nonzero ray");
        assert!((y[0].abs() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn feasible_point_satisfies_reported_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut feasible_seen = 0;
        for _ in 0..200 {
            let dim = rng.gen_range(1..5usize);
            let ne = rng.gen_range(0..3usize);
            let ni = rng.gen_range(0..4usize);
            let e = DMatrix::from_fn(ne, dim, |_, _| rng.gen_range(-2.0..2.0));
            let f = DMatrix::from_fn(ni, dim, |_, _| rng.gen_range(-2.0..2.0));
            let erhs = DVector::from_fn(ne, |_, _| rng.gen_range(-1.0..1.0));
            let frhs = DVector::from_fn(ni, |_, _| rng.gen_range(-1.0..1.0));
            if let Some(y) = feasible_point(&e, &erhs, &f, &frhs).unwrap() {
                feasible_seen += 1;
                if ne > 0 {
                    assert!((&e * &y - &erhs).amax() <= 1e-7);
                }
                if ni > 0 {
                    let r = &f * &y - &frhs;
                    assert!(r.iter().all(|&v| v <= 1e-7));
                }
            }
        }
        assert!(
            feasible_seen > 20,
            "sanity: some systems should be feasible"
        );
    }

    /// Whenever a strict direction is reported, it satisfies the
    /// normalized system to tight tolerances.
    #[test]
    fn strict_directions_satisfy_reported_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut feasible_seen = 0;
        for _ in 0..300 {
            let dim = rng.gen_range(1..5usize);
            let ne = rng.gen_range(0..2usize);
            let nf = rng.gen_range(0..4usize);
            let e = DMatrix::from_fn(ne, dim, |_, _| rng.gen_range(-2.0..2.0));
            let f = DMatrix::from_fn(nf, dim, |_, _| rng.gen_range(-2.0..2.0));
            if let Some(y) = lp_feasible_strict(&e, &f).unwrap() {
                feasible_seen += 1;
                if ne > 0 {
                    assert!((&e * &y).amax() <= 1e-8);
                }
                if nf > 0 {
                    let fy = &f * &y;
                    assert!(fy.iter().all(|&v| v <= -1.0 + 1e-8));
                }
            }
        }
        assert!(
            feasible_seen > 50,
            "sanity: strict systems should often be feasible"
        );
    }

    proptest! {
        /// Systems built around a known point are always reported feasible,
        /// and the reported point satisfies the system.
        #[test]
        fn constructed_feasible_systems_are_found(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dim = rng.gen_range(1..5usize);
            let ne = rng.gen_range(0..3usize);
            let ni = rng.gen_range(0..4usize);
            let y0 = DVector::from_fn(dim, |_, _| rng.gen_range(-2.0..2.0));
            let e = DMatrix::from_fn(ne, dim, |_, _| rng.gen_range(-2.0..2.0));
            let f = DMatrix::from_fn(ni, dim, |_, _| rng.gen_range(-2.0..2.0));
            let erhs = &e * &y0;
            let frhs = &f * &y0 + DVector::from_fn(ni, |_, _| rng.gen_range(0.0..1.0));
            let y = feasible_point(&e, &erhs, &f, &frhs).unwrap();
            let y = y.expect("constructed system is feasible");
            if ne > 0 {
                prop_assert!((&e * &y - &erhs).amax() <= 1e-7);
            }
            if ni > 0 {
                let r = &f * &y - &frhs;
                prop_assert!(r.iter().all(|&v| v <= 1e-7));
            }
        }
    }
}
