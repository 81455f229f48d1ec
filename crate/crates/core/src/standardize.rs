//! Pooled per-channel standardization. Quaternion channels pass through.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::observation::{ObservationLayout, ObservationSequence};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ChannelTransform {
    Affine { mean: f64, scale: f64 },
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    channels: Vec<ChannelTransform>,
}

impl Standardization {
    /// Mean and population standard deviation over every row of every
    /// sequence. Constant channels get scale 1.
    pub fn fit(sequences: &[ObservationSequence]) -> Result<Self> {
        let first = sequences
            .first()
            .ok_or_else(|| Error::InvalidParameter("no sequences to standardize".into()))?;
        let layout = first.layout();
        let mask = layout.quaternion_mask();
        let w = layout.width();
        let mut sum = vec![0.0; w];
        let mut n = 0usize;
        for s in sequences {
            if s.layout() != layout {
                return Err(Error::LayoutMismatch("sequences disagree on layout".into()));
            }
            for r in s.rows() {
                sum.iter_mut().zip(r).for_each(|(a, v)| *a += v);
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::InvalidParameter("no rows to standardize".into()));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let mut sq = vec![0.0; w];
        for s in sequences {
            for r in s.rows() {
                for c in 0..w {
                    sq[c] += (r[c] - mean[c]).powi(2);
                }
            }
        }
        let channels = (0..w)
            .map(|c| {
                if mask[c] {
                    ChannelTransform::Identity
                } else {
                    let sd = (sq[c] / n as f64).sqrt();
                    let scale = if sd > 0.0 && sd.is_finite() { sd } else { 1.0 };
                    ChannelTransform::Affine { mean: mean[c], scale }
                }
            })
            .collect();
        Ok(Self { channels })
    }

    pub fn identity(layout: &ObservationLayout) -> Self {
        Self {
            channels: vec![ChannelTransform::Identity; layout.width()],
        }
    }

    pub fn channels(&self) -> &[ChannelTransform] {
        &self.channels
    }

    pub fn validate(&self, layout: &ObservationLayout) -> Result<()> {
        check_dim("standardization channels", layout.width(), self.channels.len())?;
        for (c, (t, q)) in self.channels.iter().zip(layout.quaternion_mask()).enumerate() {
            match t {
                ChannelTransform::Affine { scale, mean } => {
                    if q {
                        return Err(Error::LayoutMismatch(format!("quaternion channel {c} must not be standardized")));
                    }
                    if !(*scale > 0.0) || !scale.is_finite() || !mean.is_finite() {
                        return Err(Error::InvalidParameter(format!("channel {c} has invalid scale {scale}")));
                    }
                }
                ChannelTransform::Identity => {}
            }
        }
        Ok(())
    }

    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.channels)
            .map(|(v, t)| match t {
                ChannelTransform::Affine { mean, scale } => (v - mean) / scale,
                ChannelTransform::Identity => *v,
            })
            .collect()
    }

    pub fn invert_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.channels)
            .map(|(v, t)| match t {
                ChannelTransform::Affine { mean, scale } => v * scale + mean,
                ChannelTransform::Identity => *v,
            })
            .collect()
    }

    pub fn apply(&self, seq: &ObservationSequence) -> Result<ObservationSequence> {
        check_dim("standardization channels", seq.layout().width(), self.channels.len())?;
        let rows = seq.rows().iter().map(|r| self.apply_row(r)).collect();
        ObservationSequence::new(seq.layout().clone(), rows)
    }

    pub fn invert(&self, seq: &ObservationSequence) -> Result<ObservationSequence> {
        check_dim("standardization channels", seq.layout().width(), self.channels.len())?;
        let rows = seq.rows().iter().map(|r| self.invert_row(r)).collect();
        ObservationSequence::new(seq.layout().clone(), rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn layout() -> ObservationLayout {
        ObservationLayout::pose_gripper(1)
    }

    #[test]
    fn fitted_channels_are_standard() {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|t| {
                let t = t as f64;
                vec![t, 2.0 * t + 1.0, 5.0, 1.0, 0.0, 0.0, 0.0, t * t]
            })
            .collect();
        let seq = ObservationSequence::new(layout(), rows).unwrap();
        let st = Standardization::fit(std::slice::from_ref(&seq)).unwrap();
        let out = st.apply(&seq).unwrap();
        for c in [0usize, 1, 7] {
            let m: f64 = out.rows().iter().map(|r| r[c]).sum::<f64>() / 20.0;
            let v: f64 = out.rows().iter().map(|r| (r[c] - m).powi(2)).sum::<f64>() / 20.0;
            assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-12);
        }
        assert_eq!(st.channels()[2], ChannelTransform::Affine { mean: 5.0, scale: 1.0 });
        assert_eq!(st.channels()[3], ChannelTransform::Identity);
        st.validate(&layout()).unwrap();
    }

    proptest! {
        #[test]
        fn round_trip(rows in proptest::collection::vec(proptest::collection::vec(-100.0f64..100.0, 8), 2..10)) {
            let seq = ObservationSequence::new(layout(), rows).unwrap();
            let st = Standardization::fit(std::slice::from_ref(&seq)).unwrap();
            let back = st.invert(&st.apply(&seq).unwrap()).unwrap();
            for (a, b) in seq.rows().iter().zip(back.rows()) {
                for c in 0..8 {
                    prop_assert!((a[c] - b[c]).abs() <= 1e-12 * a[c].abs().max(1.0));
                }
                prop_assert_eq!(&a[3..7], &b[3..7]);
            }
        }
    }
}
