//! Expectation-maximization for the full parameter set.
//!
//! Each iteration runs forward-backward on every sequence (in parallel),
//! then re-estimates `ϖ` and `T` from the expected counts and every mode's
//! emission law from its responsibilities. Emission laws re-estimate their
//! covariance before their dynamics parameters.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::BasisFamily;
use crate::cartesian::CartesianDynamics;
use crate::composite::{BlockDynamics, CompositeDynamics};
use crate::dynamics::{EmissionDynamics, FitOptions, Transition};
use crate::error::{Error, Result};
use crate::inference::{forward_backward, Posterior};
use crate::observation::{BlockKind, ObservationLayout, ObservationSequence};
use crate::params::{InitialDistribution, ModelParams, TransitionMatrix};
use crate::prob::GaussianNoise;
use crate::quaternion::QuaternionDynamics;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    /// Stop when `|Δℓ| / (|ℓ| + 1e-12)` falls below this.
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub restarts: usize,
    /// Starved-mode re-initializations allowed per run before giving up.
    pub max_rescues: usize,
    pub fit: FitOptions,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            tol: 1e-5,
            max_iters: 100,
            seed: 0,
            restarts: 5,
            max_rescues: 3,
            fit: FitOptions::default(),
        }
    }
}

impl EmConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter("EM tolerance must be positive".into()));
        }
        if self.max_iters == 0 || self.restarts == 0 {
            return Err(Error::InvalidParameter("EM needs at least one iteration and one restart".into()));
        }
        Ok(())
    }
}

/// Dynamics family chosen for one layout block.
#[derive(Clone, Debug, PartialEq)]
pub enum BlockSpec {
    Cartesian(BasisFamily),
    Quaternion,
}

/// Shape of the model to fit: number of modes, layout and per-block
/// dynamics families.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelTemplate {
    modes: usize,
    layout: ObservationLayout,
    blocks: Vec<BlockSpec>,
}

impl ModelTemplate {
    pub fn new(modes: usize, layout: ObservationLayout, blocks: Vec<BlockSpec>) -> Result<Self> {
        if modes == 0 {
            return Err(Error::InvalidParameter("at least one hidden mode is required".into()));
        }
        if blocks.len() != layout.blocks().len() {
            return Err(Error::LayoutMismatch("one dynamics family per block is required".into()));
        }
        for (b, spec) in layout.blocks().iter().zip(&blocks) {
            let ok = match (b.kind, spec) {
                (BlockKind::Quaternion, BlockSpec::Quaternion) => true,
                (BlockKind::Cartesian { dim }, BlockSpec::Cartesian(basis)) => basis.input_dim() == dim,
                (BlockKind::Scalar, BlockSpec::Cartesian(basis)) => basis.input_dim() == 1,
                _ => false,
            };
            if !ok {
                return Err(Error::LayoutMismatch(format!("dynamics family does not fit block {}", b.name)));
            }
            if let BlockSpec::Cartesian(basis) = spec {
                basis.validate()?;
            }
        }
        Ok(Self { modes, layout, blocks })
    }

    /// One Cartesian block with the given basis.
    pub fn cartesian(modes: usize, basis: BasisFamily) -> Result<Self> {
        let layout = ObservationLayout::cartesian("y", basis.input_dim());
        Self::new(modes, layout, vec![BlockSpec::Cartesian(basis)])
    }

    /// Default families: linear for Cartesian blocks, quadratic for scalar
    /// blocks, quaternion dynamics for quaternion blocks.
    pub fn with_defaults(modes: usize, layout: ObservationLayout) -> Result<Self> {
        let blocks = layout
            .blocks()
            .iter()
            .map(|b| match b.kind {
                BlockKind::Cartesian { dim } => BlockSpec::Cartesian(BasisFamily::linear(dim)),
                BlockKind::Scalar => BlockSpec::Cartesian(BasisFamily::polynomial(1, 2)),
                BlockKind::Quaternion => BlockSpec::Quaternion,
            })
            .collect();
        Self::new(modes, layout, blocks)
    }

    /// The families used by mode 0 of an existing model.
    pub fn from_model(model: &ModelParams) -> Result<Self> {
        let block = |b: &BlockDynamics| match b {
            BlockDynamics::Cartesian(c) => BlockSpec::Cartesian(c.basis().clone()),
            BlockDynamics::Quaternion(_) => BlockSpec::Quaternion,
        };
        let blocks = match &model.emissions()[0] {
            EmissionDynamics::Cartesian(c) => vec![BlockSpec::Cartesian(c.basis().clone())],
            EmissionDynamics::Quaternion(_) => vec![BlockSpec::Quaternion],
            EmissionDynamics::Composite(c) => c.parts().iter().map(block).collect(),
        };
        Self::new(model.modes(), model.layout().clone(), blocks)
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn layout(&self) -> &ObservationLayout {
        &self.layout
    }

    pub fn blocks(&self) -> &[BlockSpec] {
        &self.blocks
    }

    fn block_start(spec: &BlockSpec, width: usize) -> Result<BlockDynamics> {
        Ok(match spec {
            BlockSpec::Cartesian(basis) => {
                BlockDynamics::Cartesian(CartesianDynamics::persistence(basis.clone(), GaussianNoise::identity(width))?)
            }
            BlockSpec::Quaternion => BlockDynamics::Quaternion(QuaternionDynamics::new([0.0; 3], GaussianNoise::identity(4))?),
        })
    }

    /// Starting emission law: persistence maps and unit noise.
    pub fn initial_emission(&self) -> Result<EmissionDynamics> {
        let mut parts = self
            .blocks
            .iter()
            .zip(self.layout.blocks())
            .map(|(spec, b)| Self::block_start(spec, b.kind.width()))
            .collect::<Result<Vec<_>>>()?;
        if parts.len() == 1 {
            return Ok(match parts.pop().expect("one part") {
                BlockDynamics::Cartesian(c) => EmissionDynamics::Cartesian(c),
                BlockDynamics::Quaternion(q) => EmissionDynamics::Quaternion(q),
            });
        }
        Ok(EmissionDynamics::Composite(CompositeDynamics::new(self.layout.clone(), parts)?))
    }

    /// A model with uniform `ϖ`, a sticky `T` and starting emissions.
    pub fn initial_model(&self) -> Result<ModelParams> {
        let e = self.initial_emission()?;
        ModelParams::new(
            InitialDistribution::uniform(self.modes),
            TransitionMatrix::sticky(self.modes, 0.9)?,
            vec![e; self.modes],
            self.layout.clone(),
        )
    }
}

/// Outcome of a fit: the best model and the log-likelihood trace of the run
/// that produced it (entry 0 is the starting point).
#[derive(Clone, Debug)]
pub struct EmResult {
    pub model: ModelParams,
    pub trace: Vec<f64>,
    pub converged: bool,
    pub rescues: usize,
    pub restart: usize,
}

impl EmResult {
    pub fn loglik(&self) -> f64 {
        *self.trace.last().expect("trace is never empty")
    }
}

/// Posteriors for every sequence, computed in parallel.
pub fn e_step(model: &ModelParams, data: &[ObservationSequence]) -> Result<Vec<Posterior>> {
    data.par_iter().map(|s| forward_backward(model, s)).collect()
}

fn mode_transitions<'a>(data: &'a [ObservationSequence], gammas: &[&[Vec<f64>]], mode: usize) -> Vec<Transition<'a>> {
    data.iter()
        .zip(gammas)
        .flat_map(|(seq, g)| {
            seq.rows().windows(2).zip(g.iter()).map(move |(w, gt)| Transition {
                prev: &w[0],
                next: &w[1],
                weight: gt[mode],
            })
        })
        .collect()
}

fn fit_emissions(
    model: &ModelParams,
    data: &[ObservationSequence],
    gammas: &[&[Vec<f64>]],
    fit: &FitOptions,
) -> Vec<Result<EmissionDynamics>> {
    model
        .emissions()
        .par_iter()
        .enumerate()
        .map(|(s, e)| e.m_step(&mode_transitions(data, gammas, s), fit))
        .collect()
}

/// One M-step without starvation handling: any emission failure is
/// returned as is.
pub fn m_step(model: &ModelParams, data: &[ObservationSequence], posts: &[Posterior], fit: &FitOptions) -> Result<ModelParams> {
    let (init, trans) = markov_update(model, posts)?;
    let gammas: Vec<&[Vec<f64>]> = posts.iter().map(|p| p.gamma.as_slice()).collect();
    let emissions = fit_emissions(model, data, &gammas, fit).into_iter().collect::<Result<_>>()?;
    Ok(model.replace(init, trans, emissions))
}

fn markov_update(model: &ModelParams, posts: &[Posterior]) -> Result<(InitialDistribution, TransitionMatrix)> {
    let s = model.modes();
    let mut first = vec![0.0; s];
    let mut counts = DMatrix::zeros(s, s);
    for p in posts {
        first.iter_mut().zip(&p.gamma[0]).for_each(|(a, g)| *a += g);
        counts += p.expected_transitions();
    }
    let init = InitialDistribution::from_masses(first)?;
    let trans = TransitionMatrix::from_counts(&counts, model.trans())?;
    Ok((init, trans))
}

struct Run<'a> {
    data: &'a [ObservationSequence],
    template: &'a ModelTemplate,
    cfg: &'a EmConfig,
    rng: ChaCha8Rng,
    rescues: usize,
}

impl Run<'_> {
    /// Fits fresh starting dynamics on a random window of the data.
    fn rescue(&mut self, mode: usize, cause: Error) -> Result<EmissionDynamics> {
        loop {
            self.rescues += 1;
            if self.rescues > self.cfg.max_rescues {
                return Err(Error::EmFailed(format!(
                    "mode {mode} still starved after {} rescues: {cause}",
                    self.cfg.max_rescues
                )));
            }
            let k = self.rng.random_range(0..self.data.len());
            let rows = self.data[k].rows();
            let steps = rows.len() - 1;
            let window = steps.min(20.max(steps / 5));
            let start = self.rng.random_range(0..=steps - window);
            let pairs: Vec<Transition> = rows[start..=start + window]
                .windows(2)
                .map(|w| Transition { prev: &w[0], next: &w[1], weight: 1.0 })
                .collect();
            let fresh = self.template.initial_emission()?;
            match fresh.m_step(&pairs, &self.cfg.fit) {
                Ok(e) => return Ok(e),
                Err(Error::InsufficientData(_)) => continue,
                Err(e) => return Err(e),
            }
        }
    }

    fn m_step(&mut self, model: &ModelParams, gammas: &[&[Vec<f64>]], posts: Option<&[Posterior]>) -> Result<ModelParams> {
        let (init, trans) = match posts {
            Some(p) => markov_update(model, p)?,
            None => (model.init().clone(), model.trans().clone()),
        };
        let mut emissions = Vec::with_capacity(model.modes());
        for (s, res) in fit_emissions(model, self.data, gammas, &self.cfg.fit).into_iter().enumerate() {
            emissions.push(match res {
                Ok(e) => e,
                Err(err @ Error::InsufficientData(_)) => self.rescue(s, err)?,
                Err(err) => return Err(err),
            });
        }
        Ok(model.replace(init, trans, emissions))
    }

    /// Hard chunk assignment: every sequence is cut into `S` contiguous
    /// pieces that receive a random permutation of the modes.
    fn initialize(&mut self) -> Result<ModelParams> {
        let s = self.template.modes();
        let mut labels_all = Vec::with_capacity(self.data.len());
        for seq in self.data {
            let t_len = seq.steps();
            let mut order: Vec<usize> = (0..s).collect();
            order.shuffle(&mut self.rng);
            let labels: Vec<usize> = (0..t_len).map(|t| order[t * s / t_len]).collect();
            labels_all.push(labels);
        }
        let hard: Vec<Vec<Vec<f64>>> = labels_all
            .iter()
            .map(|l| l.iter().map(|&z| (0..s).map(|m| if m == z { 1.0 } else { 0.0 }).collect()).collect())
            .collect();
        // Add-one counts keep every transition reachable.
        let mut first = vec![1.0; s];
        let mut counts = DMatrix::from_element(s, s, 1.0);
        for l in &labels_all {
            first[l[0]] += 1.0;
            for w in l.windows(2) {
                counts[(w[0], w[1])] += 1.0;
            }
        }
        let start = self.template.initial_model()?;
        let start = start.replace(
            InitialDistribution::from_masses(first)?,
            TransitionMatrix::from_counts(&counts, start.trans())?,
            start.emissions().to_vec(),
        );
        let gammas: Vec<&[Vec<f64>]> = hard.iter().map(Vec::as_slice).collect();
        self.m_step(&start, &gammas, None)
    }
}

fn relative_change(new: f64, old: f64) -> f64 {
    (new - old).abs() / (old.abs() + 1e-12)
}

fn check_data(data: &[ObservationSequence], layout: &ObservationLayout) -> Result<()> {
    if data.is_empty() {
        return Err(Error::InvalidParameter("no training sequences".into()));
    }
    for (k, s) in data.iter().enumerate() {
        if s.layout() != layout {
            return Err(Error::LayoutMismatch(format!("training sequence {k} has a different layout")));
        }
        if s.steps() == 0 {
            return Err(Error::InvalidParameter(format!("training sequence {k} has fewer than two rows")));
        }
    }
    Ok(())
}

fn iterate(run: &mut Run, mut model: ModelParams, restart: usize) -> Result<EmResult> {
    let mut posts = e_step(&model, run.data)?;
    let mut ll: f64 = posts.iter().map(|p| p.loglik).sum();
    let mut trace = vec![ll];
    let mut converged = false;
    for _ in 0..run.cfg.max_iters {
        let gammas: Vec<&[Vec<f64>]> = posts.iter().map(|p| p.gamma.as_slice()).collect();
        let next = run.m_step(&model, &gammas, Some(&posts))?;
        posts = e_step(&next, run.data)?;
        let next_ll: f64 = posts.iter().map(|p| p.loglik).sum();
        trace.push(next_ll);
        model = next;
        if relative_change(next_ll, ll) < run.cfg.tol {
            converged = true;
            break;
        }
        ll = next_ll;
    }
    Ok(EmResult {
        model,
        trace,
        converged,
        rescues: run.rescues,
        restart,
    })
}

/// Runs EM from `start` without any re-initialization.
pub fn em_refine(start: ModelParams, data: &[ObservationSequence], cfg: &EmConfig) -> Result<EmResult> {
    cfg.validate()?;
    check_data(data, start.layout())?;
    let template = ModelTemplate::from_model(&start)?;
    let mut run = Run {
        data,
        template: &template,
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        rescues: 0,
    };
    iterate(&mut run, start, 0)
}

/// Fits `template` to `data` with `cfg.restarts` seeded chunk
/// initializations and keeps the run with the highest final
/// log-likelihood.
pub fn em_fit(data: &[ObservationSequence], template: &ModelTemplate, cfg: &EmConfig) -> Result<EmResult> {
    cfg.validate()?;
    check_data(data, template.layout())?;
    let mut best: Option<EmResult> = None;
    let mut last_err = None;
    for restart in 0..cfg.restarts {
        let seed = cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(restart as u64);
        let mut run = Run {
            data,
            template,
            cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
            rescues: 0,
        };
        let outcome = run.initialize().and_then(|m| iterate(&mut run, m, restart));
        match outcome {
            Ok(r) => {
                if best.as_ref().is_none_or(|b| r.loglik() > b.loglik()) {
                    best = Some(r);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| Error::EmFailed("no restart completed".into())))
}
