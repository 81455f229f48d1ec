//! Product-form emissions: given the mode, every layout block evolves
//! independently, so the log-emission is a sum over blocks and each block is
//! refitted with the same responsibilities.

use crate::cartesian::CartesianDynamics;
use crate::dynamics::{FitOptions, Transition};
use crate::error::{check_dim, Error, Result};
use crate::observation::{BlockKind, ObservationLayout};
use crate::quaternion::QuaternionDynamics;

#[derive(Clone, Debug, PartialEq)]
pub enum BlockDynamics {
    Cartesian(CartesianDynamics),
    Quaternion(QuaternionDynamics),
}

impl BlockDynamics {
    fn log_emission(&self, prev: &[f64], next: &[f64]) -> Result<f64> {
        match self {
            BlockDynamics::Cartesian(c) => c.log_emission(prev, next),
            BlockDynamics::Quaternion(q) => q.log_emission_slices(prev, next),
        }
    }

    fn m_step(&self, data: &[Transition], opts: &FitOptions) -> Result<Self> {
        Ok(match self {
            BlockDynamics::Cartesian(c) => BlockDynamics::Cartesian(c.m_step(data, opts)?),
            BlockDynamics::Quaternion(q) => BlockDynamics::Quaternion(q.m_step(data, opts)?),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompositeDynamics {
    layout: ObservationLayout,
    parts: Vec<BlockDynamics>,
}

impl CompositeDynamics {
    /// Cartesian parts go with Cartesian blocks of equal dimension or scalar
    /// blocks (d = 1); quaternion parts with quaternion blocks.
    pub fn new(layout: ObservationLayout, parts: Vec<BlockDynamics>) -> Result<Self> {
        check_dim("composite parts", layout.blocks().len(), parts.len())?;
        for (block, part) in layout.blocks().iter().zip(&parts) {
            let ok = match (block.kind, part) {
                (BlockKind::Cartesian { dim }, BlockDynamics::Cartesian(c)) => c.dim() == dim,
                (BlockKind::Scalar, BlockDynamics::Cartesian(c)) => c.dim() == 1,
                (BlockKind::Quaternion, BlockDynamics::Quaternion(_)) => true,
                _ => false,
            };
            if !ok {
                return Err(Error::LayoutMismatch(format!(
                    "dynamics for block {} do not match its kind",
                    block.name
                )));
            }
        }
        Ok(Self { layout, parts })
    }

    pub fn layout(&self) -> &ObservationLayout {
        &self.layout
    }

    pub fn parts(&self) -> &[BlockDynamics] {
        &self.parts
    }

    pub fn log_emission(&self, prev: &[f64], next: &[f64]) -> Result<f64> {
        check_dim("composite row", self.layout.width(), prev.len())?;
        check_dim("composite row", self.layout.width(), next.len())?;
        let mut total = 0.0;
        for (i, part) in self.parts.iter().enumerate() {
            let r = self.layout.range(i);
            total += part.log_emission(&prev[r.clone()], &next[r])?;
        }
        Ok(total)
    }

    pub fn m_step(&self, data: &[Transition], opts: &FitOptions) -> Result<Self> {
        let mut parts = Vec::with_capacity(self.parts.len());
        for (i, part) in self.parts.iter().enumerate() {
            let r = self.layout.range(i);
            let block_data: Vec<Transition> = data
                .iter()
                .map(|tr| {
                    check_dim("composite row", self.layout.width(), tr.prev.len())?;
                    check_dim("composite row", self.layout.width(), tr.next.len())?;
                    Ok(Transition {
                        prev: &tr.prev[r.clone()],
                        next: &tr.next[r.clone()],
                        weight: tr.weight,
                    })
                })
                .collect::<Result<_>>()?;
            let fitted = part.m_step(&block_data, opts).map_err(|e| match e {
                Error::InsufficientData(msg) => {
                    Error::InsufficientData(format!("block {}: {msg}", self.layout.blocks()[i].name))
                }
                other => other,
            })?;
            parts.push(fitted);
        }
        Self::new(self.layout.clone(), parts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::BasisFamily;
    use crate::observation::Block;
    use crate::prob::GaussianNoise;
    use crate::quaternion::{UnitQuaternion, quat_exp, quat_mul};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_block_equals_cartesian() {
        let layout = ObservationLayout::cartesian("y", 2);
        let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.0, 1.1]);
        let c = CartesianDynamics::affine(&a, &[0.2, 0.1], GaussianNoise::isotropic(2, 0.3)).unwrap();
        let comp = CompositeDynamics::new(layout, vec![BlockDynamics::Cartesian(c.clone())]).unwrap();
        let (p, n) = ([0.4, -0.2], [0.5, 0.1]);
        assert_eq!(comp.log_emission(&p, &n).unwrap(), c.log_emission(&p, &n).unwrap());
    }

    #[test]
    fn sum_of_block_values() {
        let layout = ObservationLayout::new(vec![
            Block { name: "a".into(), kind: BlockKind::Scalar },
            Block { name: "b".into(), kind: BlockKind::Quaternion },
        ])
        .unwrap();
        let s = CartesianDynamics::persistence(BasisFamily::polynomial(1, 2), GaussianNoise::isotropic(1, 0.1)).unwrap();
        let q = QuaternionDynamics::new([0.1, 0.0, 0.0], GaussianNoise::isotropic(4, 0.01)).unwrap();
        let prev_q = UnitQuaternion::IDENTITY;
        let next_q = quat_mul(&quat_exp(0.09, 0.01, 0.0), &prev_q);
        let v1 = s.log_emission(&[0.3], &[0.35]).unwrap();
        let v2 = q.log_emission(&prev_q, &next_q);
        let comp = CompositeDynamics::new(layout, vec![BlockDynamics::Cartesian(s), BlockDynamics::Quaternion(q)]).unwrap();
        let mut prev = vec![0.3];
        prev.extend(prev_q.components());
        let mut next = vec![0.35];
        next.extend(next_q.components());
        assert_abs_diff_eq!(comp.log_emission(&prev, &next).unwrap(), v1 + v2, epsilon = 1e-12);
    }

    #[test]
    fn mismatched_parts_rejected() {
        let layout = ObservationLayout::quaternion("q");
        let c = CartesianDynamics::persistence(BasisFamily::linear(4), GaussianNoise::identity(4)).unwrap();
        assert!(CompositeDynamics::new(layout, vec![BlockDynamics::Cartesian(c)]).is_err());
    }

    #[test]
    fn m_step_matches_per_block_fits() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let layout = ObservationLayout::new(vec![
            Block { name: "x".into(), kind: BlockKind::Cartesian { dim: 2 } },
            Block { name: "g".into(), kind: BlockKind::Scalar },
        ])
        .unwrap();
        let rows: Vec<Vec<f64>> = (0..50).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let w: Vec<f64> = (0..49).map(|_| rng.random()).collect();
        let x = CartesianDynamics::persistence(BasisFamily::linear(2), GaussianNoise::identity(2)).unwrap();
        let g = CartesianDynamics::persistence(BasisFamily::polynomial(1, 2), GaussianNoise::identity(1)).unwrap();
        let comp = CompositeDynamics::new(layout, vec![BlockDynamics::Cartesian(x.clone()), BlockDynamics::Cartesian(g.clone())]).unwrap();
        let data: Vec<Transition> = rows.windows(2).zip(&w).map(|(p, &wt)| Transition { prev: &p[0], next: &p[1], weight: wt }).collect();
        let fitted = comp.m_step(&data, &FitOptions::default()).unwrap();

        let xs: Vec<Transition> = data.iter().map(|t| Transition { prev: &t.prev[0..2], next: &t.next[0..2], weight: t.weight }).collect();
        let gs: Vec<Transition> = data.iter().map(|t| Transition { prev: &t.prev[2..3], next: &t.next[2..3], weight: t.weight }).collect();
        let x_alone = x.m_step(&xs, &FitOptions::default()).unwrap();
        let g_alone = g.m_step(&gs, &FitOptions::default()).unwrap();
        match fitted.parts() {
            [BlockDynamics::Cartesian(a), BlockDynamics::Cartesian(b)] => {
                assert!((a.weights() - x_alone.weights()).amax() < 1e-10);
                assert!((b.weights() - g_alone.weights()).amax() < 1e-10);
                assert!((a.noise().covariance() - x_alone.noise().covariance()).amax() < 1e-10);
            }
            _ => panic!("unexpected parts"),
        }

        let zero: Vec<Transition> = data.iter().map(|t| Transition { weight: 0.0, ..*t }).collect();
        assert!(matches!(comp.m_step(&zero, &FitOptions::default()), Err(Error::InsufficientData(_))));
    }
}
