//! Basis-function auto-regressive dynamics `y_t ~ N(Ω φ(y_{t-1}), Σ)`.

use nalgebra::{DMatrix, DVector};

use crate::basis::BasisFamily;
use crate::dynamics::{total_weight, CovarianceKind, FitOptions, Transition};
use crate::error::{check_dim, Error, Result};
use crate::prob::{GaussianNoise, EIGEN_FLOOR};

#[derive(Clone, Debug, PartialEq)]
pub struct CartesianDynamics {
    basis: BasisFamily,
    /// `d × (N+1)` weight matrix Ω.
    weights: DMatrix<f64>,
    noise: GaussianNoise,
}

impl CartesianDynamics {
    pub fn new(basis: BasisFamily, weights: DMatrix<f64>, noise: GaussianNoise) -> Result<Self> {
        basis.validate()?;
        check_dim("Ω columns", basis.output_len(), weights.ncols())?;
        check_dim("Ω rows", basis.input_dim(), weights.nrows())?;
        check_dim("Σ dimension", basis.input_dim(), noise.dim())?;
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("Ω entry".into()));
        }
        Ok(Self {
            basis,
            weights,
            noise,
        })
    }

    /// Linear dynamics `y_t = A y_{t-1} + b`, i.e. Ω = [b | A].
    pub fn affine(a: &DMatrix<f64>, b: &[f64], noise: GaussianNoise) -> Result<Self> {
        let d = b.len();
        check_dim("A rows", d, a.nrows())?;
        check_dim("A columns", d, a.ncols())?;
        let mut w = DMatrix::zeros(d, d + 1);
        w.column_mut(0).copy_from_slice(b);
        w.view_mut((0, 1), (d, d)).copy_from(a);
        Self::new(BasisFamily::linear(d), w, noise)
    }

    /// `y_t = y_{t-1}` when the basis has linear monomials, otherwise the
    /// zero map.
    pub fn persistence(basis: BasisFamily, noise: GaussianNoise) -> Result<Self> {
        let d = basis.input_dim();
        let mut w = DMatrix::zeros(d, basis.output_len());
        for i in 0..d {
            if let Some(c) = basis.linear_feature(i) {
                w[(i, c)] = 1.0;
            }
        }
        Self::new(basis, w, noise)
    }

    pub fn basis(&self) -> &BasisFamily {
        &self.basis
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn noise(&self) -> &GaussianNoise {
        &self.noise
    }

    pub fn dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn predict(&self, y_prev: &[f64]) -> Result<Vec<f64>> {
        let phi = self.basis.evaluate(y_prev)?;
        Ok(self.apply(&phi))
    }

    fn apply(&self, phi: &[f64]) -> Vec<f64> {
        let w = &self.weights;
        (0..w.nrows())
            .map(|i| (0..w.ncols()).map(|j| w[(i, j)] * phi[j]).sum())
            .collect()
    }

    /// `y_next - Ω φ(y_prev)`.
    fn residual(&self, y_prev: &[f64], y_next: &[f64]) -> Result<Vec<f64>> {
        check_dim("Cartesian next observation", self.dim(), y_next.len())?;
        let mean = self.predict(y_prev)?;
        Ok(y_next.iter().zip(&mean).map(|(a, b)| a - b).collect())
    }

    pub fn log_emission(&self, y_prev: &[f64], y_next: &[f64]) -> Result<f64> {
        let e = self.residual(y_prev, y_next)?;
        Ok(self.noise.log_density_of_residual(&e))
    }

    /// `Σ_t γ_t log N(y_{t+1} | Ω φ(y_t), Σ)` over the given transitions.
    pub fn weighted_log_likelihood(&self, data: &[Transition]) -> Result<f64> {
        data.iter()
            .filter(|tr| tr.weight > 0.0)
            .map(|tr| Ok(tr.weight * self.log_emission(tr.prev, tr.next)?))
            .sum()
    }

    /// Weighted residual covariance `Σ γ e eᵀ / Σ γ` using the current Ω.
    pub fn covariance_update(&self, data: &[Transition], kind: CovarianceKind) -> Result<DMatrix<f64>> {
        let total = total_weight(data)?;
        let d = self.dim();
        let mut acc = DMatrix::zeros(d, d);
        for tr in data.iter().filter(|tr| tr.weight > 0.0) {
            let e = DVector::from_vec(self.residual(tr.prev, tr.next)?);
            acc.ger(tr.weight, &e, &e, 1.0);
        }
        acc /= total;
        Ok(kind.shape(acc))
    }

    /// Weighted least-squares Ω for the given transitions.
    pub fn weights_update(&self, data: &[Transition]) -> Result<DMatrix<f64>> {
        total_weight(data)?;
        let n = self.basis.output_len();
        let d = self.dim();
        let mut gram = DMatrix::<f64>::zeros(n, n);
        let mut cross = DMatrix::<f64>::zeros(n, d);
        let mut phi = Vec::with_capacity(n);
        for tr in data.iter().filter(|tr| tr.weight > 0.0) {
            check_dim("Cartesian previous observation", d, tr.prev.len())?;
            check_dim("Cartesian next observation", d, tr.next.len())?;
            phi.clear();
            self.basis.evaluate_into(tr.prev, &mut phi);
            let p = DVector::from_column_slice(&phi);
            let y = DVector::from_column_slice(tr.next);
            gram.ger(tr.weight, &p, &p, 1.0);
            cross.ger(tr.weight, &p, &y, 1.0);
        }
        let chol = match gram.clone().cholesky() {
            Some(c) => c,
            None => {
                let ridge = EIGEN_FLOOR * gram.trace() / n as f64;
                let loaded = &gram + DMatrix::identity(n, n) * ridge;
                match (ridge > 0.0).then(|| loaded.cholesky()).flatten() {
                    Some(c) => c,
                    None => {
                        return Err(Error::InsufficientData(format!(
                            "singular {n}x{n} basis Gram matrix"
                        )))
                    }
                }
            }
        };
        let omega_t = chol.solve(&cross);
        Ok(omega_t.transpose())
    }

    /// Closed-form maximization of the weighted emission term: Σ is
    /// re-estimated from the incoming Ω first, then Ω is re-solved.
    pub fn m_step(&self, data: &[Transition], opts: &FitOptions) -> Result<Self> {
        let sigma = self.covariance_update(data, opts.covariance)?;
        let noise = GaussianNoise::new(sigma)?;
        let omega = self.weights_update(data)?;
        Self::new(self.basis.clone(), omega, noise)
    }
}
