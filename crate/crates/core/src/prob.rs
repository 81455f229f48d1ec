//! Gaussian kernels and log-domain probability helpers shared by every
//! emission law.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Eigenvalue floor below which a covariance gets the diagonal load.
pub const EIGEN_FLOOR: f64 = 1e-9;

/// Tolerance used for every probability-simplex check.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// A symmetric positive-definite noise covariance with its Cholesky factor
/// cached for repeated density evaluations.
#[derive(Clone, Debug)]
pub struct GaussianNoise {
    cov: DMatrix<f64>,
    chol: DMatrix<f64>,
    log_det: f64,
}

impl PartialEq for GaussianNoise {
    fn eq(&self, other: &Self) -> bool {
        self.cov == other.cov
    }
}

impl GaussianNoise {
    /// Builds a covariance, loading the diagonal with `1e-9 * trace / d` once
    /// if the factorization fails or the smallest eigenvalue is below 1e-9.
    pub fn new(cov: DMatrix<f64>) -> Result<Self> {
        let cov = validate_square_symmetric(cov)?;
        let min_eig = SymmetricEigen::new(cov.clone())
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min_eig >= EIGEN_FLOOR {
            if let Some(noise) = Self::factor(cov.clone()) {
                return Ok(noise);
            }
        }
        let d = cov.nrows();
        let mut load = EIGEN_FLOOR * cov.trace() / d as f64;
        if !(load > 0.0) {
            load = EIGEN_FLOOR;
        }
        let loaded = &cov + DMatrix::identity(d, d) * load;
        Self::factor(loaded).ok_or_else(|| {
            Error::IllConditioned(format!(
                "{d}x{d} covariance not positive definite after diagonal load {load:e}"
            ))
        })
    }

    /// Rebuilds a previously validated covariance without re-applying the
    /// eigenvalue floor, so stored models reload bit-exactly.
    pub fn restore(cov: DMatrix<f64>) -> Result<Self> {
        let cov = validate_square_symmetric(cov)?;
        let d = cov.nrows();
        Self::factor(cov)
            .ok_or_else(|| Error::IllConditioned(format!("stored {d}x{d} covariance is not positive definite")))
    }

    pub fn identity(dim: usize) -> Self {
        Self::isotropic(dim, 1.0)
    }

    /// `variance * I`. Panics on a non-positive variance.
    pub fn isotropic(dim: usize, variance: f64) -> Self {
        assert!(variance > 0.0, "isotropic variance must be positive");
        Self::factor(DMatrix::identity(dim, dim) * variance).expect("scaled identity is SPD")
    }

    fn factor(cov: DMatrix<f64>) -> Option<Self> {
        let chol = cov.clone().cholesky()?;
        let l = chol.l();
        let log_det = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return None;
        }
        Some(Self {
            cov,
            chol: l,
            log_det,
        })
    }

    pub fn dim(&self) -> usize {
        self.cov.nrows()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Lower Cholesky factor `L` with `L Lᵀ = Σ`.
    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Returns `Σ⁻¹ v`.
    pub fn solve(&self, v: &[f64]) -> Vec<f64> {
        let mut z = self.forward(v);
        let l = &self.chol;
        let d = z.len();
        for i in (0..d).rev() {
            let mut acc = z[i];
            for k in i + 1..d {
                acc -= l[(k, i)] * z[k];
            }
            z[i] = acc / l[(i, i)];
        }
        z
    }

    /// `L⁻¹ v` by forward substitution.
    fn forward(&self, v: &[f64]) -> Vec<f64> {
        let l = &self.chol;
        let d = v.len();
        let mut z = vec![0.0; d];
        for i in 0..d {
            let mut acc = v[i];
            for k in 0..i {
                acc -= l[(i, k)] * z[k];
            }
            z[i] = acc / l[(i, i)];
        }
        z
    }

    /// `vᵀ Σ⁻¹ v`. `v` must have length `dim()`.
    pub fn mahalanobis_sq(&self, v: &[f64]) -> f64 {
        self.forward(v).iter().map(|z| z * z).sum()
    }

    /// Log-density of `x` under `N(mean, Σ)`.
    pub fn log_density(&self, x: &[f64], mean: &[f64]) -> Result<f64> {
        check_dim("gaussian mean", self.dim(), mean.len())?;
        check_dim("gaussian sample", self.dim(), x.len())?;
        let diff: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
        Ok(self.log_density_of_residual(&diff))
    }

    /// Log-density of a residual `x - mean`, dimensions assumed checked.
    pub(crate) fn log_density_of_residual(&self, diff: &[f64]) -> f64 {
        -0.5 * (self.dim() as f64 * LN_2PI + self.log_det + self.mahalanobis_sq(diff))
    }

    /// Draws `L ε` with `ε ~ N(0, I)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.dim();
        let eps: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        (0..d)
            .map(|i| (0..=i).map(|k| self.chol[(i, k)] * eps[k]).sum())
            .collect()
    }
}

fn validate_square_symmetric(cov: DMatrix<f64>) -> Result<DMatrix<f64>> {
    if cov.nrows() != cov.ncols() {
        return Err(Error::DimensionMismatch {
            context: "covariance columns",
            expected: cov.nrows(),
            found: cov.ncols(),
        });
    }
    if cov.nrows() == 0 {
        return Err(Error::InvalidParameter("empty covariance".into()));
    }
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("covariance entry".into()));
    }
    let scale = cov.amax().max(1.0);
    let asym = (&cov - cov.transpose()).amax();
    if asym > SIMPLEX_TOL * scale {
        return Err(Error::InvalidParameter(format!(
            "covariance not symmetric (max asymmetry {asym:e})"
        )));
    }
    Ok(cov)
}

/// `log N(x | mean, Σ)` computed through the Cholesky factor of `Σ`.
pub fn log_gaussian_density(x: &[f64], mean: &[f64], cov: &GaussianNoise) -> Result<f64> {
    cov.log_density(x, mean)
}

/// Max-shifted `log Σ exp(w_i)`; `-inf` when every entry is `-inf`.
pub fn log_sum_exp(logw: &[f64]) -> f64 {
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    max + logw.iter().map(|w| (w - max).exp()).sum::<f64>().ln()
}

/// Turns log-weights into a probability vector plus its log-normalizer.
pub fn normalize_log_weights(logw: &[f64]) -> Result<(Vec<f64>, f64)> {
    if logw.is_empty() {
        return Err(Error::InvalidParameter("empty weight vector".into()));
    }
    if logw.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
        return Err(Error::NonFinite("log-weight".into()));
    }
    let norm = log_sum_exp(logw);
    if norm == f64::NEG_INFINITY {
        return Err(Error::Underflow("all log-weights are -inf".into()));
    }
    let probs = logw.iter().map(|w| (w - norm).exp()).collect();
    Ok((probs, norm))
}
