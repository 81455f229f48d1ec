//! Scaled forward-backward smoothing and Viterbi decoding. Both work on a
//! precomputed `T × S` table of log-emissions, so they are independent of
//! the emission law.

use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};
use crate::observation::ObservationSequence;
use crate::params::ModelParams;

/// Smoothed marginals for `z_1 … z_T` (row `t` of `gamma` is `z_{t+1}`).
#[derive(Clone, Debug, PartialEq)]
pub struct Posterior {
    /// `T × S`, `γ_s(t) = Pr(z_t = s | Y)`.
    pub gamma: Vec<Vec<f64>>,
    /// `T - 1` matrices, `ξ_ij(t) = Pr(z_t = i, z_{t+1} = j | Y)`.
    pub xi: Vec<DMatrix<f64>>,
    /// `log p(y_1 … y_T | y_0)`.
    pub loglik: f64,
}

impl Posterior {
    /// `Σ_t ξ(t)`, the expected transition counts.
    pub fn expected_transitions(&self) -> DMatrix<f64> {
        let s = self.gamma.first().map_or(0, Vec::len);
        self.xi.iter().fold(DMatrix::zeros(s, s), |acc, x| acc + x)
    }
}

/// Most probable mode path and its log joint `log p(Y, z | y_0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentationResult {
    pub path: Vec<usize>,
    pub log_joint: f64,
}

fn check_table(init: &[f64], trans: &DMatrix<f64>, log_b: &[Vec<f64>]) -> Result<usize> {
    let s = init.len();
    check_dim("transition rows", s, trans.nrows())?;
    check_dim("transition columns", s, trans.ncols())?;
    if log_b.is_empty() {
        return Err(Error::InvalidParameter("no emitted steps".into()));
    }
    for row in log_b {
        check_dim("log-emission row", s, row.len())?;
        if row.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::NonFinite("log-emission".into()));
        }
    }
    Ok(s)
}

/// Forward-backward over a log-emission table. Each step's emissions are
/// shifted by their maximum and the forward messages renormalized, so the
/// recursion never underflows; the shifts and normalizers sum to the
/// log-likelihood.
pub fn forward_backward_table(init: &[f64], trans: &DMatrix<f64>, log_b: &[Vec<f64>]) -> Result<Posterior> {
    let s = check_table(init, trans, log_b)?;
    let t_len = log_b.len();
    let mut scaled_b = vec![vec![0.0; s]; t_len];
    let mut alpha = vec![vec![0.0; s]; t_len];
    let mut norm = vec![0.0; t_len];
    let mut loglik = 0.0;

    for t in 0..t_len {
        let shift = log_b[t].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if shift == f64::NEG_INFINITY {
            return Err(Error::Underflow(format!("every mode has zero density at step {}", t + 1)));
        }
        for j in 0..s {
            scaled_b[t][j] = (log_b[t][j] - shift).exp();
        }
        let mut total = 0.0;
        for j in 0..s {
            let prior = if t == 0 {
                init[j]
            } else {
                (0..s).map(|i| alpha[t - 1][i] * trans[(i, j)]).sum()
            };
            alpha[t][j] = prior * scaled_b[t][j];
            total += alpha[t][j];
        }
        if !(total > 0.0) {
            return Err(Error::Underflow(format!("forward message vanished at step {}", t + 1)));
        }
        alpha[t].iter_mut().for_each(|a| *a /= total);
        norm[t] = total;
        loglik += total.ln() + shift;
    }

    let mut beta = vec![vec![1.0; s]; t_len];
    for t in (0..t_len - 1).rev() {
        for i in 0..s {
            beta[t][i] = (0..s)
                .map(|j| trans[(i, j)] * scaled_b[t + 1][j] * beta[t + 1][j])
                .sum::<f64>()
                / norm[t + 1];
        }
    }

    let gamma: Vec<Vec<f64>> = (0..t_len)
        .map(|t| {
            let mut g: Vec<f64> = (0..s).map(|i| alpha[t][i] * beta[t][i]).collect();
            let total: f64 = g.iter().sum();
            g.iter_mut().for_each(|v| *v /= total);
            g
        })
        .collect();
    let xi = (0..t_len.saturating_sub(1))
        .map(|t| {
            let mut m = DMatrix::from_fn(s, s, |i, j| {
                alpha[t][i] * trans[(i, j)] * scaled_b[t + 1][j] * beta[t + 1][j] / norm[t + 1]
            });
            let total = m.sum();
            m /= total;
            m
        })
        .collect();
    Ok(Posterior { gamma, xi, loglik })
}

/// Max-product decoding over a log-emission table. Ties go to the lower
/// mode index, both in the recursion and in the final state.
pub fn viterbi_table(init: &[f64], trans: &DMatrix<f64>, log_b: &[Vec<f64>]) -> Result<SegmentationResult> {
    let s = check_table(init, trans, log_b)?;
    let t_len = log_b.len();
    let log_t = trans.map(f64::ln);
    let mut delta: Vec<f64> = (0..s).map(|j| init[j].ln() + log_b[0][j]).collect();
    let mut back = vec![vec![0usize; s]; t_len];
    for t in 1..t_len {
        let mut next = vec![f64::NEG_INFINITY; s];
        for j in 0..s {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for i in 0..s {
                let v = delta[i] + log_t[(i, j)];
                if v > best {
                    best = v;
                    arg = i;
                }
            }
            next[j] = best + log_b[t][j];
            back[t][j] = arg;
        }
        delta = next;
    }
    let mut last = 0;
    for j in 1..s {
        if delta[j] > delta[last] {
            last = j;
        }
    }
    let log_joint = delta[last];
    if !log_joint.is_finite() {
        return Err(Error::Underflow("no mode path has positive probability".into()));
    }
    let mut path = vec![0; t_len];
    path[t_len - 1] = last;
    for t in (1..t_len).rev() {
        path[t - 1] = back[t][path[t]];
    }
    Ok(SegmentationResult { path, log_joint })
}

pub fn forward_backward(model: &ModelParams, seq: &ObservationSequence) -> Result<Posterior> {
    let log_b = model.log_emissions(seq)?;
    forward_backward_table(model.init().weights(), model.trans().probs(), &log_b)
}

pub fn viterbi(model: &ModelParams, seq: &ObservationSequence) -> Result<SegmentationResult> {
    let log_b = model.log_emissions(seq)?;
    viterbi_table(model.init().weights(), model.trans().probs(), &log_b)
}
