//! The per-mode emission law `p(y_t | z_t = s, y_{t-1})` and the inputs its
//! M-steps consume.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cartesian::CartesianDynamics;
use crate::composite::{BlockDynamics, CompositeDynamics};
use crate::error::{check_dim, Error, Result};
use crate::observation::{BlockKind, ObservationLayout};
use crate::quaternion::{OptimizerConfig, QuaternionDynamics, UnitQuaternion};

/// One weighted step `y_t → y_{t+1}` of the training data. Multi-sequence
/// fits simply concatenate the transitions of every sequence.
#[derive(Clone, Copy, Debug)]
pub struct Transition<'a> {
    pub prev: &'a [f64],
    pub next: &'a [f64],
    /// Responsibility `γ_s(t+1)` of the mode being fitted.
    pub weight: f64,
}

/// Structure imposed on re-estimated noise covariances.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceKind {
    #[default]
    Full,
    Diagonal,
}

impl CovarianceKind {
    /// Symmetrizes (full) or strips off-diagonal terms (diagonal).
    pub(crate) fn shape(self, m: DMatrix<f64>) -> DMatrix<f64> {
        match self {
            CovarianceKind::Full => (&m + m.transpose()) * 0.5,
            CovarianceKind::Diagonal => DMatrix::from_diagonal(&m.diagonal()),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub covariance: CovarianceKind,
    pub optimizer: OptimizerConfig,
}

/// Sum of weights; errors if any weight is negative or non-finite, or if
/// nothing has positive weight.
pub(crate) fn total_weight(data: &[Transition]) -> Result<f64> {
    let mut total = 0.0;
    for tr in data {
        if !(tr.weight >= 0.0) || !tr.weight.is_finite() {
            return Err(Error::InvalidParameter(format!("responsibility {} outside [0, 1]", tr.weight)));
        }
        total += tr.weight;
    }
    if !(total > 0.0) {
        return Err(Error::InsufficientData("no responsibility mass for this mode".into()));
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq)]
pub enum EmissionDynamics {
    Cartesian(CartesianDynamics),
    Quaternion(QuaternionDynamics),
    Composite(CompositeDynamics),
}

impl EmissionDynamics {
    /// Observation row width this law expects.
    pub fn width(&self) -> usize {
        match self {
            EmissionDynamics::Cartesian(c) => c.dim(),
            EmissionDynamics::Quaternion(_) => 4,
            EmissionDynamics::Composite(c) => c.layout().width(),
        }
    }

    /// Checks that this law can consume rows of `layout`.
    pub fn check_layout(&self, layout: &ObservationLayout) -> Result<()> {
        match self {
            EmissionDynamics::Composite(c) => {
                if c.layout() != layout {
                    return Err(Error::LayoutMismatch("composite dynamics built for another layout".into()));
                }
                Ok(())
            }
            single => {
                let [block] = layout.blocks() else {
                    return Err(Error::LayoutMismatch(format!(
                        "single-block dynamics cannot cover {} blocks",
                        layout.blocks().len()
                    )));
                };
                let ok = match (single, block.kind) {
                    (EmissionDynamics::Cartesian(c), BlockKind::Cartesian { dim }) => c.dim() == dim,
                    (EmissionDynamics::Cartesian(c), BlockKind::Scalar) => c.dim() == 1,
                    (EmissionDynamics::Quaternion(_), BlockKind::Quaternion) => true,
                    _ => false,
                };
                if ok {
                    Ok(())
                } else {
                    Err(Error::LayoutMismatch(format!("dynamics do not match block {}", block.name)))
                }
            }
        }
    }

    pub fn log_emission(&self, prev: &[f64], next: &[f64]) -> Result<f64> {
        check_dim("emission previous row", self.width(), prev.len())?;
        check_dim("emission next row", self.width(), next.len())?;
        match self {
            EmissionDynamics::Cartesian(c) => c.log_emission(prev, next),
            EmissionDynamics::Quaternion(q) => q.log_emission_slices(prev, next),
            EmissionDynamics::Composite(c) => c.log_emission(prev, next),
        }
    }

    pub fn m_step(&self, data: &[Transition], opts: &FitOptions) -> Result<Self> {
        Ok(match self {
            EmissionDynamics::Cartesian(c) => EmissionDynamics::Cartesian(c.m_step(data, opts)?),
            EmissionDynamics::Quaternion(q) => EmissionDynamics::Quaternion(q.m_step(data, opts)?),
            EmissionDynamics::Composite(c) => EmissionDynamics::Composite(c.m_step(data, opts)?),
        })
    }

    pub fn weighted_log_likelihood(&self, data: &[Transition]) -> Result<f64> {
        data.iter()
            .filter(|tr| tr.weight > 0.0)
            .map(|tr| Ok(tr.weight * self.log_emission(tr.prev, tr.next)?))
            .sum()
    }

    /// Draws `y_next` given `prev`. Quaternion blocks are renormalized after
    /// the noise is added.
    pub fn sample_next<R: Rng + ?Sized>(&self, prev: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        check_dim("sampling previous row", self.width(), prev.len())?;
        match self {
            EmissionDynamics::Cartesian(c) => sample_cartesian(c, prev, rng),
            EmissionDynamics::Quaternion(q) => sample_quaternion(q, prev, rng),
            EmissionDynamics::Composite(c) => {
                let mut out = Vec::with_capacity(prev.len());
                for (i, part) in c.parts().iter().enumerate() {
                    let r = c.layout().range(i);
                    out.extend(match part {
                        BlockDynamics::Cartesian(d) => sample_cartesian(d, &prev[r], rng)?,
                        BlockDynamics::Quaternion(d) => sample_quaternion(d, &prev[r], rng)?,
                    });
                }
                Ok(out)
            }
        }
    }
}

fn sample_cartesian<R: Rng + ?Sized>(c: &CartesianDynamics, prev: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let mean = c.predict(prev)?;
    let eps = c.noise().sample(rng);
    Ok(mean.iter().zip(&eps).map(|(m, e)| m + e).collect())
}

fn sample_quaternion<R: Rng + ?Sized>(q: &QuaternionDynamics, prev: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let prev = UnitQuaternion::normalize([prev[0], prev[1], prev[2], prev[3]])?;
    let mean = q.predict(&prev).components();
    let eps = q.noise().sample(rng);
    let noisy = [mean[0] + eps[0], mean[1] + eps[1], mean[2] + eps[2], mean[3] + eps[3]];
    Ok(UnitQuaternion::normalize(noisy)?.components().to_vec())
}

impl From<CartesianDynamics> for EmissionDynamics {
    fn from(c: CartesianDynamics) -> Self {
        EmissionDynamics::Cartesian(c)
    }
}

impl From<QuaternionDynamics> for EmissionDynamics {
    fn from(q: QuaternionDynamics) -> Self {
        EmissionDynamics::Quaternion(q)
    }
}

impl From<CompositeDynamics> for EmissionDynamics {
    fn from(c: CompositeDynamics) -> Self {
        EmissionDynamics::Composite(c)
    }
}
