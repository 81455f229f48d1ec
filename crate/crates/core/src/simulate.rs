//! Synthetic datasets: sampling from any model and the fixed benchmark
//! systems (a two-mode polynomial flow in the plane, non-polynomial flows
//! for d = 1, 2, 3, and a two-arm pose+gripper system).
//!
//! Every sequence draws from its own ChaCha stream of `seed`, so datasets
//! are bit-identical for a given configuration regardless of thread count.

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::BasisFamily;
use crate::cartesian::CartesianDynamics;
use crate::composite::{BlockDynamics, CompositeDynamics};
use crate::dynamics::EmissionDynamics;
use crate::error::{check_dim, Error, Result};
use crate::observation::{ObservationLayout, ObservationSequence};
use crate::params::{InitialDistribution, ModelParams, TransitionMatrix};
use crate::prob::GaussianNoise;
use crate::quaternion::{QuaternionDynamics, UnitQuaternion};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub seed: u64,
    pub n_sequences: usize,
    /// Emitted steps per sequence; each sequence has `length + 1` rows.
    pub length: usize,
    pub dt: f64,
    /// Standard deviation of the additive noise on every channel.
    pub noise_std: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_sequences: 50,
            length: 100,
            dt: 0.05,
            noise_std: 5e-3,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_sequences == 0 || self.length == 0 || !(self.dt > 0.0) || !(self.noise_std >= 0.0) {
            return Err(Error::InvalidParameter(format!("invalid simulation settings {self:?}")));
        }
        Ok(())
    }

    fn rng(&self, sequence: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(sequence as u64);
        rng
    }
}

/// Sequences together with the mode paths that generated them
/// (`paths[k][t]` is the mode of row `t + 1`).
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub sequences: Vec<ObservationSequence>,
    pub paths: Vec<Vec<usize>>,
}

fn categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    WeightedIndex::new(weights).expect("probabilities validated on construction").sample(rng)
}

fn markov_path<R: Rng + ?Sized>(init: &[f64], trans: &DMatrix<f64>, length: usize, rng: &mut R) -> Vec<usize> {
    let mut path = Vec::with_capacity(length);
    path.push(categorical(init, rng));
    for t in 1..length {
        let row: Vec<f64> = trans.row(path[t - 1]).iter().copied().collect();
        path.push(categorical(&row, rng));
    }
    path
}

/// Draws `length` steps from `model` starting at `y0`.
pub fn sample_model<R: Rng + ?Sized>(
    model: &ModelParams,
    length: usize,
    y0: &[f64],
    rng: &mut R,
) -> Result<(ObservationSequence, Vec<usize>)> {
    check_dim("initial observation", model.layout().width(), y0.len())?;
    let path = markov_path(model.init().weights(), model.trans().probs(), length, rng);
    let mut rows = Vec::with_capacity(length + 1);
    rows.push(y0.to_vec());
    for &z in &path {
        let next = model.emissions()[z].sample_next(rows.last().expect("non-empty"), rng)?;
        rows.push(next);
    }
    Ok((ObservationSequence::new(model.layout().clone(), rows)?, path))
}

/// `n_sequences` draws from `model`, each starting at `y0(rng)`.
pub fn sample_dataset<F>(model: &ModelParams, cfg: &SimConfig, y0: F) -> Result<Dataset>
where
    F: Fn(&mut ChaCha8Rng) -> Vec<f64> + Sync,
{
    cfg.validate()?;
    let draws = (0..cfg.n_sequences)
        .into_par_iter()
        .map(|k| {
            let mut rng = cfg.rng(k);
            let start = y0(&mut rng);
            sample_model(model, cfg.length, &start, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let (sequences, paths) = draws.into_iter().unzip();
    Ok(Dataset { sequences, paths })
}

/// Deterministic vector field of one mode.
pub type Field = fn(&[f64]) -> Vec<f64>;

/// Two-mode flow `y_t = y_{t-1} + δt f_z(y_{t-1}) + ε`, `ε ~ N(0, ς² I)`.
#[derive(Clone, Debug)]
pub struct FlowSystem {
    pub dim: usize,
    pub fields: Vec<Field>,
    pub init: Vec<f64>,
    pub trans: DMatrix<f64>,
    /// `y_0` is uniform on `[-y0_half_width, y0_half_width]^d`.
    pub y0_half_width: f64,
    /// A sequence leaving this box is redrawn from the same stream.
    pub escape: f64,
}

const MAX_REDRAWS: usize = 10_000;

impl FlowSystem {
    pub fn euler_step(&self, mode: usize, y: &[f64], dt: f64) -> Vec<f64> {
        let f = (self.fields[mode])(y);
        y.iter().zip(&f).map(|(a, b)| a + dt * b).collect()
    }

    fn draw<R: Rng + ?Sized>(&self, cfg: &SimConfig, rng: &mut R) -> Option<(Vec<Vec<f64>>, Vec<usize>)> {
        let path = markov_path(&self.init, &self.trans, cfg.length, rng);
        let w = self.y0_half_width;
        let mut rows = vec![(0..self.dim).map(|_| rng.random_range(-w..=w)).collect::<Vec<f64>>()];
        for &z in &path {
            let mut next = self.euler_step(z, rows.last().expect("non-empty"), cfg.dt);
            for v in next.iter_mut() {
                let e: f64 = rng.sample(StandardNormal);
                *v += cfg.noise_std * e;
            }
            if next.iter().any(|v| !v.is_finite() || v.abs() > self.escape) {
                return None;
            }
            rows.push(next);
        }
        Some((rows, path))
    }

    pub fn generate(&self, cfg: &SimConfig) -> Result<Dataset> {
        cfg.validate()?;
        let layout = ObservationLayout::cartesian("y", self.dim);
        let draws = (0..cfg.n_sequences)
            .into_par_iter()
            .map(|k| {
                let mut rng = cfg.rng(k);
                let (rows, path) = (0..MAX_REDRAWS)
                    .find_map(|_| self.draw(cfg, &mut rng))
                    .ok_or_else(|| Error::NonFinite(format!("sequence {k} keeps leaving the simulation box")))?;
                Ok((ObservationSequence::new(layout.clone(), rows)?, path))
            })
            .collect::<Result<Vec<_>>>()?;
        let (sequences, paths) = draws.into_iter().unzip();
        Ok(Dataset { sequences, paths })
    }
}

fn sticky_pair() -> (Vec<f64>, DMatrix<f64>) {
    (vec![0.5, 0.5], DMatrix::from_row_slice(2, 2, &[0.95, 0.05, 0.05, 0.95]))
}

/// `f(y) = [y1³ + y2² y1 − y1 − y2, y2³ + y1² y2 + y1 − y2]`.
pub fn validation_field(y: &[f64]) -> Vec<f64> {
    let (y1, y2) = (y[0], y[1]);
    vec![
        y1 * y1 * y1 + y2 * y2 * y1 - y1 - y2,
        y2 * y2 * y2 + y1 * y1 * y2 + y1 - y2,
    ]
}

fn validation_forward(y: &[f64]) -> Vec<f64> {
    validation_field(y)
}

fn validation_backward(y: &[f64]) -> Vec<f64> {
    validation_field(y).into_iter().map(|v| -v).collect()
}

/// Mode 0 follows `+f`, mode 1 follows `−f`.
pub fn validation_system() -> FlowSystem {
    let (init, trans) = sticky_pair();
    FlowSystem {
        dim: 2,
        fields: vec![validation_forward, validation_backward],
        init,
        trans,
        y0_half_width: 1.0,
        escape: 3.0,
    }
}

/// The validation system as an exact cubic-basis model.
pub fn validation_model(cfg: &SimConfig) -> Result<ModelParams> {
    let basis = BasisFamily::polynomial(2, 3);
    let exps = basis.monomial_exponents().expect("polynomial basis");
    // Coefficients of f as (component, exponents of y1 and y2, value).
    let terms: [(usize, [u32; 2], f64); 8] = [
        (0, [3, 0], 1.0),
        (0, [1, 2], 1.0),
        (0, [1, 0], -1.0),
        (0, [0, 1], -1.0),
        (1, [0, 3], 1.0),
        (1, [2, 1], 1.0),
        (1, [1, 0], 1.0),
        (1, [0, 1], -1.0),
    ];
    let emission = |sign: f64| -> Result<EmissionDynamics> {
        let mut w = DMatrix::zeros(2, basis.output_len());
        w[(0, 1)] = 1.0;
        w[(1, 2)] = 1.0;
        for (row, e, c) in terms {
            let col = exps.iter().position(|x| x[..] == e[..]).expect("monomial present");
            w[(row, col)] += sign * cfg.dt * c;
        }
        let noise = GaussianNoise::isotropic(2, cfg.noise_std * cfg.noise_std);
        Ok(CartesianDynamics::new(basis.clone(), w, noise)?.into())
    };
    let (init, trans) = sticky_pair();
    ModelParams::new(
        InitialDistribution::new(init)?,
        TransitionMatrix::new(trans)?,
        vec![emission(1.0)?, emission(-1.0)?],
        ObservationLayout::cartesian("y", 2),
    )
}

// Dimension-sweep flows. In d = 1 the two modes share their linear trend
// and differ by an even bump whose best affine fit is nearly flat, so only
// a model with curvature separates them. In d = 3 the modes rotate about
// different axes, which any affine model already tells apart.

const BUMP: f64 = 2.0 * std::f64::consts::PI / 3.0;

fn sweep1_a(y: &[f64]) -> Vec<f64> {
    vec![-0.3 * y[0] + (BUMP * y[0]).cos()]
}

fn sweep1_b(y: &[f64]) -> Vec<f64> {
    vec![-0.3 * y[0] - (BUMP * y[0]).cos()]
}

fn sweep2_a(y: &[f64]) -> Vec<f64> {
    vec![
        -0.3 * y[0] + (BUMP * y[0]).cos() - 0.5 * y[1],
        -0.3 * y[1] + 0.5 * y[0] + (BUMP * y[1]).sin().tanh(),
    ]
}

fn sweep2_b(y: &[f64]) -> Vec<f64> {
    vec![
        -0.3 * y[0] - (BUMP * y[0]).cos() + 0.5 * y[1],
        -0.3 * y[1] - 0.5 * y[0] - (BUMP * y[1]).sin().tanh(),
    ]
}

fn sweep3_a(y: &[f64]) -> Vec<f64> {
    vec![
        -0.3 * y[0] - 2.0 * y[1] + 0.3 * (BUMP * y[2]).sin(),
        -0.3 * y[1] + 2.0 * y[0] + 0.3 * y[0].tanh(),
        -0.3 * y[2] + 0.3 * (BUMP * y[1]).cos(),
    ]
}

fn sweep3_b(y: &[f64]) -> Vec<f64> {
    vec![
        -0.3 * y[0] - 0.3 * (BUMP * y[2]).sin(),
        -0.3 * y[1] - 2.0 * y[2] - 0.3 * y[0].tanh(),
        -0.3 * y[2] + 2.0 * y[1] - 0.3 * (BUMP * y[1]).cos(),
    ]
}

/// Two non-polynomial flows in `d ∈ {1, 2, 3}` dimensions.
pub fn dimension_sweep_system(d: usize) -> Result<FlowSystem> {
    let fields: Vec<Field> = match d {
        1 => vec![sweep1_a, sweep1_b],
        2 => vec![sweep2_a, sweep2_b],
        3 => vec![sweep3_a, sweep3_b],
        _ => return Err(Error::InvalidParameter(format!("dimension sweep covers d = 1, 2, 3, not {d}"))),
    };
    let (init, trans) = sticky_pair();
    Ok(FlowSystem {
        dim: d,
        fields,
        init,
        trans,
        y0_half_width: 1.5,
        escape: 10.0,
    })
}

/// Two-mode, two-arm pose+gripper system: positions relax toward a
/// mode-specific target, orientations spin about a mode-specific axis and
/// the gripper follows a quadratic law.
pub fn pose_gripper_model(cfg: &SimConfig) -> Result<ModelParams> {
    let layout = ObservationLayout::pose_gripper(2);
    let var = cfg.noise_std * cfg.noise_std;
    let rate = 0.5 * cfg.dt;
    let targets = [[0.5, 0.0, 0.2], [-0.3, 0.4, -0.2]];
    let spins = [[2.0 * cfg.dt, 0.0, 0.0], [0.0, 0.0, -2.0 * cfg.dt]];
    // Gripper: θ' = θ ± δt (1 − θ²) opens in mode 0, closes in mode 1.
    let grips = [1.0, -1.0];
    let mut emissions = Vec::new();
    for m in 0..2 {
        let mut parts = Vec::new();
        for arm in 0..2 {
            let target: Vec<f64> = targets[m].iter().map(|v| v * if arm == 0 { 1.0 } else { -1.0 }).collect();
            let a = DMatrix::identity(3, 3) * (1.0 - rate);
            let b: Vec<f64> = target.iter().map(|v| rate * v).collect();
            parts.push(BlockDynamics::Cartesian(CartesianDynamics::affine(
                &a,
                &b,
                GaussianNoise::isotropic(3, var),
            )?));
            parts.push(BlockDynamics::Quaternion(QuaternionDynamics::new(
                spins[m],
                GaussianNoise::isotropic(4, var),
            )?));
            let g = grips[m] * cfg.dt;
            let w = DMatrix::from_row_slice(1, 3, &[g, 1.0, -g]);
            parts.push(BlockDynamics::Cartesian(CartesianDynamics::new(
                BasisFamily::polynomial(1, 2),
                w,
                GaussianNoise::isotropic(1, var),
            )?));
        }
        emissions.push(EmissionDynamics::Composite(CompositeDynamics::new(layout.clone(), parts)?));
    }
    let (init, trans) = sticky_pair();
    ModelParams::new(
        InitialDistribution::new(init)?,
        TransitionMatrix::new(trans)?,
        emissions,
        layout,
    )
}

fn pose_gripper_start<R: Rng + ?Sized>(rng: &mut R) -> Vec<f64> {
    let mut row = Vec::with_capacity(16);
    for _ in 0..2 {
        row.extend((0..3).map(|_| rng.random_range(-0.5..=0.5)));
        let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let q = UnitQuaternion::normalize(q).unwrap_or(UnitQuaternion::IDENTITY);
        row.extend(q.components());
        row.push(rng.random_range(-0.5..=0.5));
    }
    row
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Validation,
    SweepD1,
    SweepD2,
    SweepD3,
    Quat,
}

impl Preset {
    pub const ALL: [Preset; 5] = [Preset::Validation, Preset::SweepD1, Preset::SweepD2, Preset::SweepD3, Preset::Quat];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Validation => "validation",
            Preset::SweepD1 => "sweep-d1",
            Preset::SweepD2 => "sweep-d2",
            Preset::SweepD3 => "sweep-d3",
            Preset::Quat => "quat",
        }
    }

    pub fn generate(self, cfg: &SimConfig) -> Result<Dataset> {
        match self {
            Preset::Validation => validation_system().generate(cfg),
            Preset::SweepD1 => dimension_sweep_system(1)?.generate(cfg),
            Preset::SweepD2 => dimension_sweep_system(2)?.generate(cfg),
            Preset::SweepD3 => dimension_sweep_system(3)?.generate(cfg),
            Preset::Quat => sample_dataset(&pose_gripper_model(cfg)?, cfg, |rng| pose_gripper_start(rng)),
        }
    }
}
