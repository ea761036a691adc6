//! Dense complex linear-algebra helpers shared by the simulation modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Real matrix promoted to complex.
pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Circularly-symmetric complex Gaussian draw with `E|z|^2 = variance`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Matrix of i.i.d. `CN(0, variance)` entries, filled column by column.
pub fn complex_normal_matrix<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    variance: f64,
    rng: &mut R,
) -> CMatrix {
    let mut out = CMatrix::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            out[(i, j)] = complex_normal(rng, variance);
        }
    }
    out
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted descending.
pub fn hermitian_eigen_desc(m: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            context: "hermitian eigen-decomposition",
            expected: (m.nrows(), m.nrows()),
            found: m.shape(),
        });
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("hermitian eigen-decomposition input"));
    }
    // Symmetrize so round-off asymmetry does not leak into the solver.
    let sym = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::try_new(sym, 5.0 * f64::EPSILON, 0)
        .ok_or(Error::Decomposition("hermitian eigen-decomposition did not converge"))?;
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(m.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// Orthonormal basis for the column span of `m` (thin QR).
pub fn orthonormalize(m: &CMatrix) -> CMatrix {
    m.clone().qr().q()
}

/// Chordal distance `||P_A - P_B||_F / sqrt(2)` between the column spans of two
/// matrices. Both inputs are orthonormalized first.
pub fn chordal_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    let qa = orthonormalize(a);
    let qb = orthonormalize(b);
    let pa = &qa * qa.adjoint();
    let pb = &qb * qb.adjoint();
    (pa - pb).norm() / std::f64::consts::SQRT_2
}

/// Natural-log determinant `ln det(I + N^{-1} S)` for Hermitian `S >= 0` and `N > 0`.
///
/// Computed by whitening with the Cholesky factor of `N`. A singular `N` is
/// regularized with `1e-15 I`.
pub fn ln_det_identity_plus(noise: &CMatrix, signal: &CMatrix) -> Result<f64> {
    let n = noise.nrows();
    let chol = match noise.clone().cholesky() {
        Some(c) => c,
        None => {
            let reg = noise + CMatrix::identity(n, n) * Complex64::new(1e-15, 0.0);
            reg.cholesky()
                .ok_or(Error::Decomposition("interference-plus-noise covariance not positive definite"))?
        }
    };
    let l = chol.l();
    let half = l
        .solve_lower_triangular(signal)
        .ok_or(Error::Decomposition("whitening solve failed"))?;
    let whitened = l
        .solve_lower_triangular(&half.adjoint())
        .ok_or(Error::Decomposition("whitening solve failed"))?;
    let mut sys = CMatrix::identity(n, n) + whitened;
    sys = (&sys + sys.adjoint()) * Complex64::new(0.5, 0.0);
    let chol = sys
        .cholesky()
        .ok_or(Error::Decomposition("I + whitened signal not positive definite"))?;
    let value: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.re.ln()).sum();
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite("log-det rate"))
    }
}

pub(crate) fn is_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}
