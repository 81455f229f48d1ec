//! Unit-quaternion dynamics `q_t ~ N(vec(Exp(a i + b j + c k) * q_{t-1}), Σ)`
//! with a 4×4 Gaussian on the embedded vectors.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{total_weight, CovarianceKind, FitOptions, Transition};
use crate::error::{check_dim, Error, Result};
use crate::prob::GaussianNoise;

/// Deviation from unit norm tolerated by [`UnitQuaternion::new`].
pub const UNIT_TOL: f64 = 1e-9;

/// `(q_r, q_i, q_j, q_k)` with unit Euclidean norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitQuaternion([f64; 4]);

impl UnitQuaternion {
    pub const IDENTITY: Self = UnitQuaternion([1.0, 0.0, 0.0, 0.0]);

    pub fn new(components: [f64; 4]) -> Result<Self> {
        let n = norm(&components);
        if !n.is_finite() || (n - 1.0).abs() > UNIT_TOL {
            return Err(Error::InvalidParameter(format!("quaternion norm {n} is not 1")));
        }
        Ok(Self(components))
    }

    /// Scales a non-zero 4-vector onto the unit sphere.
    pub fn normalize(components: [f64; 4]) -> Result<Self> {
        let n = norm(&components);
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidParameter("cannot normalize a zero quaternion".into()));
        }
        Ok(Self(components.map(|c| c / n)))
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        check_dim("quaternion", 4, v.len())?;
        Self::new([v[0], v[1], v[2], v[3]])
    }

    pub fn components(&self) -> [f64; 4] {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn dot(&self, other: &Self) -> f64 {
        dot(&self.0, &other.0)
    }
}

fn norm(q: &[f64; 4]) -> f64 {
    dot(q, q).sqrt()
}

fn dot(p: &[f64; 4], q: &[f64; 4]) -> f64 {
    p.iter().zip(q).map(|(a, b)| a * b).sum()
}

/// Hamilton product of arbitrary (not necessarily unit) quaternions.
pub(crate) fn hamilton(p: &[f64; 4], q: &[f64; 4]) -> [f64; 4] {
    let [pr, pi, pj, pk] = *p;
    let [qr, qi, qj, qk] = *q;
    [
        pr * qr - pi * qi - pj * qj - pk * qk,
        pr * qi + pi * qr + pj * qk - pk * qj,
        pr * qj - pi * qk + pj * qr + pk * qi,
        pr * qk + pi * qj - pj * qi + pk * qr,
    ]
}

pub fn quat_mul(p: &UnitQuaternion, q: &UnitQuaternion) -> UnitQuaternion {
    UnitQuaternion(hamilton(&p.0, &q.0))
}

/// `sin θ / θ`, with its Taylor branch below 1e-8.
fn sinc(theta: f64) -> f64 {
    if theta < 1e-8 {
        1.0 - theta * theta / 6.0
    } else {
        theta.sin() / theta
    }
}

/// `(θ cos θ - sin θ) / θ³`, i.e. `sinc'(θ) / θ`.
fn sinc_slope(theta: f64) -> f64 {
    if theta < 1e-3 {
        let t2 = theta * theta;
        -1.0 / 3.0 + t2 / 30.0 - t2 * t2 / 840.0
    } else {
        (theta * theta.cos() - theta.sin()) / (theta * theta * theta)
    }
}

/// Exponential of the pure quaternion `a i + b j + c k`.
pub fn quat_exp(a: f64, b: f64, c: f64) -> UnitQuaternion {
    UnitQuaternion(exp_raw(&[a, b, c]))
}

fn exp_raw(r: &[f64; 3]) -> [f64; 4] {
    let theta = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    let s = sinc(theta);
    [theta.cos(), s * r[0], s * r[1], s * r[2]]
}

/// Columns `∂Exp(r)/∂r_k`, k = 0..3.
fn exp_jacobian(r: &[f64; 3]) -> [[f64; 4]; 3] {
    let theta = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    let s = sinc(theta);
    let g = sinc_slope(theta);
    let mut out = [[0.0; 4]; 3];
    for (k, col) in out.iter_mut().enumerate() {
        col[0] = -s * r[k];
        for i in 0..3 {
            col[i + 1] = g * r[i] * r[k] + if i == k { s } else { 0.0 };
        }
    }
    out
}

fn renormalize(q: [f64; 4]) -> [f64; 4] {
    let n = norm(&q);
    if (n - 1.0).abs() > 1e-12 {
        q.map(|c| c / n)
    } else {
        q
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SearchDirection {
    /// Negative gradient.
    Steepest,
    /// Negative gradient preconditioned by the Gauss-Newton matrix.
    #[default]
    GaussNewton,
}

/// Controls the backtracking descent used for the rotation parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub direction: SearchDirection,
    /// First trial step for steepest descent (Gauss-Newton starts at 1).
    pub initial_step: f64,
    /// Stop once the gradient ∞-norm drops below this.
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Line search gives up once the step falls below this.
    pub min_step: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            direction: SearchDirection::GaussNewton,
            initial_step: 1e-1,
            grad_tol: 1e-8,
            max_iters: 500,
            min_step: 1e-20,
            armijo: 1e-4,
        }
    }
}

/// Outcome of [`QuaternionDynamics::fit_rotvec`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DescentReport {
    pub iterations: usize,
    pub start_objective: f64,
    pub objective: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuaternionDynamics {
    rotvec: [f64; 3],
    noise: GaussianNoise,
}

impl QuaternionDynamics {
    pub fn new(rotvec: [f64; 3], noise: GaussianNoise) -> Result<Self> {
        check_dim("quaternion Σ", 4, noise.dim())?;
        if rotvec.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("rotation parameter".into()));
        }
        Ok(Self { rotvec, noise })
    }

    pub fn rotvec(&self) -> [f64; 3] {
        self.rotvec
    }

    pub fn noise(&self) -> &GaussianNoise {
        &self.noise
    }

    pub fn predict(&self, q_prev: &UnitQuaternion) -> UnitQuaternion {
        UnitQuaternion(self.predict_raw(&q_prev.0))
    }

    fn predict_raw(&self, q_prev: &[f64; 4]) -> [f64; 4] {
        renormalize(hamilton(&exp_raw(&self.rotvec), q_prev))
    }

    pub fn log_emission(&self, q_prev: &UnitQuaternion, q_next: &UnitQuaternion) -> f64 {
        self.log_emission_raw(&q_prev.0, &q_next.0)
    }

    fn log_emission_raw(&self, q_prev: &[f64; 4], q_next: &[f64; 4]) -> f64 {
        let mu = self.predict_raw(q_prev);
        let e: Vec<f64> = (0..4).map(|i| q_next[i] - mu[i]).collect();
        self.noise.log_density_of_residual(&e)
    }

    /// Log-emission on raw observation slices of width 4.
    pub fn log_emission_slices(&self, prev: &[f64], next: &[f64]) -> Result<f64> {
        Ok(self.log_emission_raw(&as_quat(prev)?, &as_quat(next)?))
    }

    pub fn weighted_log_likelihood(&self, data: &[Transition]) -> Result<f64> {
        data.iter()
            .filter(|tr| tr.weight > 0.0)
            .map(|tr| Ok(tr.weight * self.log_emission_slices(tr.prev, tr.next)?))
            .sum()
    }

    /// Weighted outer-product average of `vec(q_{t+1} - μ_{t+1})` under the
    /// current rotation parameters.
    pub fn covariance_update(&self, data: &[Transition], kind: CovarianceKind) -> Result<DMatrix<f64>> {
        let total = total_weight(data)?;
        let mut acc = DMatrix::zeros(4, 4);
        for tr in data.iter().filter(|tr| tr.weight > 0.0) {
            let mu = self.predict_raw(&as_quat(tr.prev)?);
            let next = as_quat(tr.next)?;
            let e = DVector::from_iterator(4, (0..4).map(|i| next[i] - mu[i]));
            acc.ger(tr.weight, &e, &e, 1.0);
        }
        acc /= total;
        Ok(kind.shape(acc))
    }

    /// Σ first (with the incoming rotation), then the rotation parameters by
    /// backtracking descent warm-started at the incoming values.
    pub fn m_step(&self, data: &[Transition], opts: &FitOptions) -> Result<Self> {
        let sigma = self.covariance_update(data, opts.covariance)?;
        let noise = GaussianNoise::new(sigma)?;
        let (rotvec, _) = Self::fit_rotvec(self.rotvec, data, &noise, &opts.optimizer)?;
        Self::new(rotvec, noise)
    }

    /// Minimizes [`objective`] over the rotation parameters from `start`.
    /// Never returns a point worse than `start`.
    pub fn fit_rotvec(
        start: [f64; 3],
        data: &[Transition],
        noise: &GaussianNoise,
        cfg: &OptimizerConfig,
    ) -> Result<([f64; 3], DescentReport)> {
        let pairs = to_pairs(data)?;
        let eval = |r: &[f64; 3]| objective_pairs(r, &pairs, noise);
        let mut r = start;
        let mut f = eval(&r);
        if !f.is_finite() {
            return Err(Error::NonFinite("quaternion objective at start".into()));
        }
        let start_objective = f;
        let max_step = match cfg.direction {
            SearchDirection::Steepest => cfg.initial_step,
            SearchDirection::GaussNewton => 1.0,
        };
        let mut trial = max_step;
        let mut report = DescentReport {
            iterations: 0,
            start_objective,
            objective: f,
            converged: false,
        };
        for it in 0..cfg.max_iters {
            let (grad, gn) = gradient_and_gauss_newton(&r, &pairs, noise);
            if grad.amax() < cfg.grad_tol {
                report.converged = true;
                break;
            }
            let dir = match cfg.direction {
                SearchDirection::Steepest => -grad,
                SearchDirection::GaussNewton => {
                    let damp = 1e-12 * gn.trace().max(f64::MIN_POSITIVE);
                    (gn + Matrix3::identity() * damp)
                        .cholesky()
                        .map(|c| c.solve(&(-grad)))
                        .unwrap_or(-grad)
                }
            };
            let slope = grad.dot(&dir);
            if !(slope < 0.0) {
                break;
            }
            let mut step = trial;
            let mut accepted = None;
            while step >= cfg.min_step {
                let cand = [r[0] + step * dir[0], r[1] + step * dir[1], r[2] + step * dir[2]];
                let fc = eval(&cand);
                if fc.is_finite() && fc <= f + cfg.armijo * step * slope && fc < f {
                    accepted = Some((cand, fc));
                    break;
                }
                step *= 0.5;
            }
            report.iterations = it + 1;
            match accepted {
                Some((cand, fc)) => {
                    r = cand;
                    f = fc;
                    trial = (2.0 * step).min(max_step);
                }
                None => break,
            }
        }
        report.objective = f;
        Ok((r, report))
    }
}

/// `Σ_t γ_t ‖vec(q_{t+1} - Exp(r) * q_t)‖²_{Σ⁻¹}`.
pub fn objective(rotvec: &[f64; 3], data: &[Transition], noise: &GaussianNoise) -> Result<f64> {
    Ok(objective_pairs(rotvec, &to_pairs(data)?, noise))
}

/// Analytic gradient of [`objective`] with respect to the rotation parameters.
pub fn objective_gradient(rotvec: &[f64; 3], data: &[Transition], noise: &GaussianNoise) -> Result<[f64; 3]> {
    let g = gradient_and_gauss_newton(rotvec, &to_pairs(data)?, noise).0;
    Ok([g[0], g[1], g[2]])
}

type Pair = ([f64; 4], [f64; 4], f64);

fn as_quat(v: &[f64]) -> Result<[f64; 4]> {
    check_dim("quaternion block", 4, v.len())?;
    Ok([v[0], v[1], v[2], v[3]])
}

fn to_pairs(data: &[Transition]) -> Result<Vec<Pair>> {
    total_weight(data)?;
    data.iter()
        .filter(|tr| tr.weight > 0.0)
        .map(|tr| Ok((as_quat(tr.prev)?, as_quat(tr.next)?, tr.weight)))
        .collect()
}

fn objective_pairs(r: &[f64; 3], pairs: &[Pair], noise: &GaussianNoise) -> f64 {
    let e_r = exp_raw(r);
    pairs
        .iter()
        .map(|(prev, next, w)| {
            let mu = hamilton(&e_r, prev);
            let e = [next[0] - mu[0], next[1] - mu[1], next[2] - mu[2], next[3] - mu[3]];
            w * noise.mahalanobis_sq(&e)
        })
        .sum()
}

fn gradient_and_gauss_newton(r: &[f64; 3], pairs: &[Pair], noise: &GaussianNoise) -> (Vector3<f64>, Matrix3<f64>) {
    let e_r = exp_raw(r);
    let jac = exp_jacobian(r);
    let mut grad = Vector3::zeros();
    let mut gn = Matrix3::zeros();
    for (prev, next, w) in pairs {
        let mu = hamilton(&e_r, prev);
        let e = [next[0] - mu[0], next[1] - mu[1], next[2] - mu[2], next[3] - mu[3]];
        let pe = noise.solve(&e);
        let cols: [[f64; 4]; 3] = [
            hamilton(&jac[0], prev),
            hamilton(&jac[1], prev),
            hamilton(&jac[2], prev),
        ];
        let pcols: [Vec<f64>; 3] = [noise.solve(&cols[0]), noise.solve(&cols[1]), noise.solve(&cols[2])];
        for k in 0..3 {
            grad[k] -= 2.0 * w * (0..4).map(|i| pe[i] * cols[k][i]).sum::<f64>();
            for l in 0..3 {
                gn[(k, l)] += 2.0 * w * (0..4).map(|i| cols[k][i] * pcols[l][i]).sum::<f64>();
            }
        }
    }
    (grad, gn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_unit(rng: &mut ChaCha8Rng) -> UnitQuaternion {
        UnitQuaternion::normalize([
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ])
        .unwrap()
    }

    #[test]
    fn exp_examples() {
        assert_eq!(quat_exp(0.0, 0.0, 0.0).components(), [1.0, 0.0, 0.0, 0.0]);
        let half = quat_exp(PI, 0.0, 0.0).components();
        assert_abs_diff_eq!(half[0], -1.0, epsilon = 1e-12);
        for c in &half[1..] {
            assert_abs_diff_eq!(*c, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn exp_is_unit_across_magnitudes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for i in 0..2000 {
            let mag = if i % 4 == 0 { rng.random_range(0.0..1e-7) } else { rng.random_range(0.0..10.0 * PI) };
            let dir = random_unit(&mut rng).components();
            let n = (dir[1] * dir[1] + dir[2] * dir[2] + dir[3] * dir[3]).sqrt();
            let q = quat_exp(mag * dir[1] / n, mag * dir[2] / n, mag * dir[3] / n);
            assert!((q.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn product_examples() {
        let i = UnitQuaternion::new([0.0, 1.0, 0.0, 0.0]).unwrap();
        let j = UnitQuaternion::new([0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(quat_mul(&i, &j).components(), [0.0, 0.0, 0.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let p = random_unit(&mut rng);
            let q = random_unit(&mut rng);
            assert_eq!(quat_mul(&p, &UnitQuaternion::IDENTITY), p);
            assert!((quat_mul(&p, &q).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn predict_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_unit(&mut rng);
        let still = QuaternionDynamics::new([0.0; 3], GaussianNoise::identity(4)).unwrap();
        assert_eq!(still.predict(&q), q);
        let d = QuaternionDynamics::new([0.3, -0.1, 0.2], GaussianNoise::identity(4)).unwrap();
        assert_eq!(d.predict(&UnitQuaternion::IDENTITY), quat_exp(0.3, -0.1, 0.2));

        let once = QuaternionDynamics::new([0.37, 0.0, 0.0], GaussianNoise::identity(4)).unwrap();
        let double = QuaternionDynamics::new([0.74, 0.0, 0.0], GaussianNoise::identity(4)).unwrap();
        let a = once.predict(&once.predict(&q)).components();
        let b = double.predict(&q).components();
        for k in 0..4 {
            assert_abs_diff_eq!(a[k], b[k], epsilon = 1e-10);
        }
    }

    #[test]
    fn long_rollout_stays_unit() {
        let d = QuaternionDynamics::new([0.013, -0.071, 0.029], GaussianNoise::identity(4)).unwrap();
        let mut q = UnitQuaternion::IDENTITY;
        for _ in 0..1_000_000 {
            q = d.predict(&q);
        }
        assert!((q.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn log_emission_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = random_unit(&mut rng);
        let d = QuaternionDynamics::new([0.1, 0.2, -0.3], GaussianNoise::identity(4)).unwrap();
        let at_mean = d.log_emission(&q, &d.predict(&q));
        assert_abs_diff_eq!(at_mean, -2.0 * (2.0 * PI).ln(), epsilon = 1e-12);

        // Hand-evaluated density with diagonal Σ.
        let diag = [0.5, 2.0, 1.5, 0.25];
        let noise = GaussianNoise::new(DMatrix::from_diagonal(&DVector::from_row_slice(&diag))).unwrap();
        let d = QuaternionDynamics::new([0.2, 0.0, 0.1], noise).unwrap();
        let next = random_unit(&mut rng);
        let theta = (0.05f64).sqrt();
        let s = theta.sin() / theta;
        let e = [theta.cos(), 0.2 * s, 0.0, 0.1 * s];
        let [qr, qi, qj, qk] = q.components();
        let mu = [
            e[0] * qr - e[1] * qi - e[2] * qj - e[3] * qk,
            e[0] * qi + e[1] * qr + e[2] * qk - e[3] * qj,
            e[0] * qj - e[1] * qk + e[2] * qr + e[3] * qi,
            e[0] * qk + e[1] * qj - e[2] * qi + e[3] * qr,
        ];
        let nx = next.components();
        let quad: f64 = (0..4).map(|i| (nx[i] - mu[i]).powi(2) / diag[i]).sum();
        let logdet: f64 = diag.iter().map(|v| v.ln()).sum();
        let oracle = -0.5 * (4.0 * (2.0 * PI).ln() + logdet + quad);
        assert_abs_diff_eq!(d.log_emission(&q, &next), oracle, epsilon = 1e-12);

        let flipped = UnitQuaternion::new(next.components().map(|c| -c)).unwrap();
        assert_ne!(d.log_emission(&q, &next), d.log_emission(&q, &flipped));
    }

    fn rollout(rotvec: [f64; 3], n: usize, rng: &mut ChaCha8Rng, noise: f64) -> Vec<Vec<f64>> {
        let truth = QuaternionDynamics::new(rotvec, GaussianNoise::identity(4)).unwrap();
        let mut q = random_unit(rng);
        let mut out = vec![q.components().to_vec()];
        for _ in 0..n {
            let mut c = truth.predict(&q).components();
            for v in c.iter_mut() {
                *v += noise * rng.random_range(-1.0..1.0);
            }
            q = UnitQuaternion::normalize(c).unwrap();
            out.push(q.components().to_vec());
        }
        out
    }

    fn weighted<'a>(rows: &'a [Vec<f64>], w: &[f64]) -> Vec<Transition<'a>> {
        rows.windows(2)
            .zip(w)
            .map(|(p, &g)| Transition { prev: &p[0], next: &p[1], weight: g })
            .collect()
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let rows = rollout([0.1, 0.05, -0.2], 40, &mut rng, 0.05);
            let w: Vec<f64> = (0..40).map(|_| rng.random()).collect();
            let data = weighted(&rows, &w);
            let a = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
            let noise = GaussianNoise::new(&a * a.transpose() + DMatrix::identity(4, 4) * 0.2).unwrap();
            let r = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let g = objective_gradient(&r, &data, &noise).unwrap();
            let h = 1e-6;
            for k in 0..3 {
                let mut rp = r;
                let mut rm = r;
                rp[k] += h;
                rm[k] -= h;
                let fd = (objective(&rp, &data, &noise).unwrap() - objective(&rm, &data, &noise).unwrap()) / (2.0 * h);
                let rel = (fd - g[k]).abs() / g[k].abs().max(1e-8);
                assert!(rel < 1e-5, "component {k}: analytic {} fd {fd}", g[k]);
            }
        }
    }

    #[test]
    fn gradient_near_zero_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rows = rollout([0.0, 0.0, 0.0], 30, &mut rng, 0.05);
        let data = weighted(&rows, &[1.0; 30]);
        let noise = GaussianNoise::identity(4);
        let r = [1e-9, -2e-9, 5e-10];
        let g = objective_gradient(&r, &data, &noise).unwrap();
        let h = 1e-6;
        for k in 0..3 {
            let mut rp = r;
            let mut rm = r;
            rp[k] += h;
            rm[k] -= h;
            let fd = (objective(&rp, &data, &noise).unwrap() - objective(&rm, &data, &noise).unwrap()) / (2.0 * h);
            assert!((fd - g[k]).abs() / g[k].abs().max(1e-8) < 1e-5);
        }
    }

    #[test]
    fn noise_free_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let truth = [0.05, -0.02, 0.01];
        let rows = rollout(truth, 100, &mut rng, 0.0);
        let data = weighted(&rows, &[1.0; 100]);
        let start = QuaternionDynamics::new([0.0; 3], GaussianNoise::identity(4)).unwrap();
        let fitted = start.m_step(&data, &FitOptions::default()).unwrap();
        for k in 0..3 {
            assert_abs_diff_eq!(fitted.rotvec()[k], truth[k], epsilon = 1e-6);
        }
    }

    #[test]
    fn descent_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for direction in [SearchDirection::Steepest, SearchDirection::GaussNewton] {
            for _ in 0..10 {
                let rows = rollout([0.2, -0.1, 0.05], 50, &mut rng, 0.02);
                let w: Vec<f64> = (0..50).map(|_| rng.random()).collect();
                let data = weighted(&rows, &w);
                let start = [rng.random_range(-0.5..0.5), 0.0, rng.random_range(-0.5..0.5)];
                let noise = GaussianNoise::isotropic(4, 1e-3);
                let cfg = OptimizerConfig { direction, ..Default::default() };
                let (r, rep) = QuaternionDynamics::fit_rotvec(start, &data, &noise, &cfg).unwrap();
                assert!(rep.objective <= rep.start_objective);
                assert_eq!(objective(&r, &data, &noise).unwrap(), rep.objective);
            }
        }
    }

    #[test]
    fn single_supported_step_still_fits() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows = rollout([0.1, 0.0, 0.0], 20, &mut rng, 0.01);
        let mut w = vec![0.0; 20];
        w[7] = 1.0;
        let data = weighted(&rows, &w);
        let start = QuaternionDynamics::new([0.0; 3], GaussianNoise::identity(4)).unwrap();
        let fitted = start.m_step(&data, &FitOptions::default()).unwrap();
        assert!(fitted.noise().covariance().iter().all(|v| v.is_finite()));
        let all_zero = weighted(&rows, &[0.0; 20]);
        assert!(matches!(start.m_step(&all_zero, &FitOptions::default()), Err(Error::InsufficientData(_))));
    }
}
