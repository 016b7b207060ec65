//! Dense linear-algebra kernels, LP feasibility, and the cone-positivity
//! toolkit shared by all stability checks.

mod positivity;
mod simplex;

pub use positivity::{
    family_values, quad_family_positive_on_cone, quad_family_positive_with, CertificateMethod,
    ConePositivityResult, PositivityMode, PositivityOptions, TierSet, Verdict,
};
pub use simplex::{
    cone_nonzero_ray, cone_nonzero_ray_restricted, feasible_point, lp_feasible_strict,
};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::tol;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("matrix is not symmetric (max asymmetry {0:.3e})")]
    Asymmetric(f64),
    #[error("simplex cycling guard exceeded after {0} pivots")]
    CycleGuard(usize),
    #[error("simplex produced a point violating its constraints by {0:.3e}")]
    LpVerification(f64),
    #[error("projection enumeration guard: {0} inequality rows exceed {1}")]
    ProjectionGuard(usize, usize),
}

/// The polyhedral cone `{y : Ey = 0, Fy ≤ 0}`.
///
/// Either row block may be empty; an entirely empty spec is the full space.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeSpec {
    pub eq: DMatrix<f64>,
    pub ineq: DMatrix<f64>,
}

impl ConeSpec {
    pub fn new(eq: DMatrix<f64>, ineq: DMatrix<f64>) -> Self {
        assert_eq!(
            eq.ncols(),
            ineq.ncols(),
            "equality and inequality blocks must share the ambient dimension"
        );
        Self { eq, ineq }
    }

    /// Full space of the given dimension.
    pub fn full_space(dim: usize) -> Self {
        Self {
            eq: DMatrix::zeros(0, dim),
            ineq: DMatrix::zeros(0, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.eq.ncols()
    }

    /// Max-norm violation of cone membership: `max(‖Ey‖∞, max(Fy)⁺)`.
    pub fn membership_residual(&self, y: &DVector<f64>) -> f64 {
        let mut r: f64 = 0.0;
        if self.eq.nrows() > 0 {
            r = (&self.eq * y).amax();
        }
        if self.ineq.nrows() > 0 {
            let fy = &self.ineq * y;
            r = r.max(fy.iter().fold(0.0f64, |a, &v| a.max(v)));
        }
        r
    }

    /// A nonzero ray of the cone, if one exists.
    pub fn nonzero_ray(&self) -> Result<Option<DVector<f64>>, NumericsError> {
        cone_nonzero_ray(&self.eq, &self.ineq)
    }
}

/// Orthonormal basis of the null space of a row matrix; may have 0 columns.
#[derive(Debug, Clone, PartialEq)]
pub struct NullBasis {
    pub basis: DMatrix<f64>,
}

impl NullBasis {
    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn num_cols(&self) -> usize {
        self.basis.ncols()
    }
}

/// Numerical rank via singular values: values below `tol` times the largest
/// count as zero.
pub fn rank(mtx: &DMatrix<f64>, tol: f64) -> usize {
    assert!(tol > 0.0);
    if mtx.nrows() == 0 || mtx.ncols() == 0 {
        return 0;
    }
    let svd = mtx.clone().svd(false, false);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return 0;
    }
    svd.singular_values
        .iter()
        .filter(|&&s| s > tol * smax)
        .count()
}

/// Orthonormal basis of the null space of `mtx`.
///
/// Column count equals the ambient dimension minus the numerical rank.
pub fn null_basis(mtx: &DMatrix<f64>, tol: f64) -> NullBasis {
    assert!(tol > 0.0);
    let dim = mtx.ncols();
    if mtx.nrows() == 0 || mtx.amax() == 0.0 {
        return NullBasis {
            basis: DMatrix::identity(dim, dim),
        };
    }
    // Pad with zero rows so the SVD carries a full set of right singular
    // vectors even for wide input.
    let padded = if mtx.nrows() < dim {
        let mut p = DMatrix::zeros(dim, dim);
        p.view_mut((0, 0), (mtx.nrows(), dim)).copy_from(mtx);
        p
    } else {
        mtx.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("svd requested v_t");
    let smax = svd.singular_values.max();
    let mut cols: Vec<usize> = Vec::new();
    for i in 0..dim {
        let s = if i < svd.singular_values.len() {
            svd.singular_values[i]
        } else {
            0.0
        };
        if s <= tol * smax {
            cols.push(i);
        }
    }
    let mut basis = DMatrix::zeros(dim, cols.len());
    for (j, &i) in cols.iter().enumerate() {
        basis.column_mut(j).copy_from(&v_t.row(i).transpose());
    }
    NullBasis { basis }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn sym_eig_min(q: &DMatrix<f64>) -> Result<f64, NumericsError> {
    Ok(sym_eig_min_pair(q)?.0)
}

/// Smallest eigenvalue of a symmetric matrix together with a unit
/// eigenvector. The eigenvector sign is normalized so its first nonzero
/// component is positive.
pub fn sym_eig_min_pair(q: &DMatrix<f64>) -> Result<(f64, DVector<f64>), NumericsError> {
    assert!(
        q.nrows() == q.ncols() && q.nrows() > 0,
        "square nonempty input"
    );
    let asym = (q - q.transpose()).amax();
    if asym > tol::SYMMETRY * q.amax().max(1.0) {
        return Err(NumericsError::Asymmetric(asym));
    }
    let sym = 0.5 * (q + q.transpose());
    let eig = sym.symmetric_eigen();
    let mut min_i = 0;
    for i in 1..eig.eigenvalues.len() {
        if eig.eigenvalues[i] < eig.eigenvalues[min_i] {
            min_i = i;
        }
    }
    let mut vec = eig.eigenvectors.column(min_i).into_owned();
    if let Some(first) = vec.iter().find(|&&v| v.abs() > 1e-14) {
        if *first < 0.0 {
            vec = -vec;
        }
    }
    Ok((eig.eigenvalues[min_i], vec))
}

/// Spectral norm (largest singular value) of a symmetric matrix.
pub(crate) fn sym_spectral_norm(q: &DMatrix<f64>) -> f64 {
    if q.nrows() == 0 {
        return 0.0;
    }
    let eig = (0.5 * (q + q.transpose())).symmetric_eigen();
    eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()))
}
