//! Projection approximation subspace tracking with deflation (PASTd).
//!
//! Each tracked component `m` keeps a direction estimate `u_m` and an
//! exponentially-weighted energy `lambda_m`. Per input vector `r`:
//!
//! ```text
//! x_1 = r
//! for m in 1..=M:
//!     y_m      = u_m^H x_m
//!     lambda_m = beta * lambda_m + |y_m|^2
//!     u_m      = u_m + (x_m - u_m y_m) * conj(y_m) / lambda_m
//!     x_{m+1}  = x_m - u_m y_m
//! ```
//!
//! The division uses `max(lambda_m, eps_guard)` so a zero projection on a
//! fresh tracker cannot produce a NaN.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen_desc, CMatrix, CVector};

pub const DEFAULT_EPS_GUARD: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct PastdState {
    dim: usize,
    beta: f64,
    eps_guard: f64,
    vectors: Vec<CVector>,
    lambdas: Vec<f64>,
}

impl PastdState {
    /// Tracker for the `order` dominant directions of `dim`-dimensional inputs.
    /// Starts from the first `order` canonical basis vectors with
    /// `lambda_m = eps_guard`.
    pub fn new(order: usize, dim: usize, beta: f64, eps_guard: f64) -> Result<Self> {
        if order == 0 || order > dim {
            return Err(Error::InvalidArgument(format!(
                "subspace order {order} must be in 1..={dim}"
            )));
        }
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "forgetting factor {beta} must lie in (0, 1]"
            )));
        }
        if !(eps_guard > 0.0 && eps_guard.is_finite()) {
            return Err(Error::InvalidArgument("eps_guard must be positive".into()));
        }
        let vectors = (0..order)
            .map(|m| {
                let mut e = CVector::zeros(dim);
                e[m] = Complex64::new(1.0, 0.0);
                e
            })
            .collect();
        Ok(Self {
            dim,
            beta,
            eps_guard,
            vectors,
            lambdas: vec![eps_guard; order],
        })
    }

    /// Build a tracker from explicit state; used to resume or to test fixed points.
    pub fn from_parts(
        vectors: Vec<CVector>,
        lambdas: Vec<f64>,
        beta: f64,
        eps_guard: f64,
    ) -> Result<Self> {
        let dim = vectors.first().map(|v| v.len()).unwrap_or(0);
        let mut state = Self::new(vectors.len(), dim, beta, eps_guard)?;
        if lambdas.len() != vectors.len() || vectors.iter().any(|v| v.len() != dim) {
            return Err(Error::InvalidArgument("inconsistent PASTd state".into()));
        }
        if lambdas.iter().any(|l| !(*l >= 0.0)) {
            return Err(Error::InvalidArgument("lambda accumulators must be nonnegative".into()));
        }
        state.vectors = vectors;
        state.lambdas = lambdas;
        Ok(state)
    }

    pub fn order(&self) -> usize {
        self.vectors.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn vectors(&self) -> &[CVector] {
        &self.vectors
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// Fold one observation into the tracker. Returns the residual left after
    /// deflating all `M` components, `x_{M+1} = r - sum_m u_m y_m`.
    pub fn update(&mut self, r: &CVector) -> Result<CVector> {
        if r.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "PASTd update",
                expected: (self.dim, 1),
                found: (r.len(), 1),
            });
        }
        if r.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("PASTd input"));
        }
        let mut x = r.clone();
        for (u, lambda) in self.vectors.iter_mut().zip(self.lambdas.iter_mut()) {
            let y = u.dotc(&x);
            *lambda = self.beta * *lambda + y.norm_sqr();
            let gain = y.conj() / lambda.max(self.eps_guard);
            let err = &x - &*u * y;
            u.axpy(gain, &err, Complex64::new(1.0, 0.0));
            x.axpy(-y, u, Complex64::new(1.0, 0.0));
        }
        Ok(x)
    }

    /// Unit-norm columns `u_m / ||u_m||`; no re-orthogonalization.
    pub fn extract_basis(&self) -> Result<CMatrix> {
        let mut out = CMatrix::zeros(self.dim, self.order());
        for (m, u) in self.vectors.iter().enumerate() {
            let n = u.norm();
            if !(n > 0.0 && n.is_finite()) {
                return Err(Error::Degenerate(format!(
                    "PASTd component {m} has norm {n}"
                )));
            }
            out.set_column(m, &(u / Complex64::new(n, 0.0)));
        }
        Ok(out)
    }
}

/// Top eigenpairs of a sample covariance.
#[derive(Debug, Clone)]
pub struct BatchSubspace {
    /// Orthonormal `dim x M` basis, strongest direction first.
    pub basis: CMatrix,
    /// All covariance eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
}

/// Dominant `m`-dimensional subspace of `(1/P) sum r r^H`.
pub fn batch_dominant_subspace(samples: &[CVector], m: usize) -> Result<BatchSubspace> {
    if samples.len() < m || m == 0 {
        return Err(Error::InvalidArgument(format!(
            "need at least {m} samples, got {}",
            samples.len()
        )));
    }
    let dim = samples[0].len();
    if m > dim {
        return Err(Error::InvalidArgument(format!("order {m} exceeds dimension {dim}")));
    }
    let mut cov = CMatrix::zeros(dim, dim);
    for r in samples {
        if r.len() != dim {
            return Err(Error::DimensionMismatch {
                context: "batch subspace samples",
                expected: (dim, 1),
                found: (r.len(), 1),
            });
        }
        cov.gerc(Complex64::new(1.0, 0.0), r, r, Complex64::new(1.0, 0.0));
    }
    cov /= Complex64::new(samples.len() as f64, 0.0);
    let (eigenvalues, vectors) = hermitian_eigen_desc(&cov)?;
    Ok(BatchSubspace {
        basis: vectors.columns(0, m).into_owned(),
        eigenvalues,
    })
}
