//! The full parameter set: initial mode law, transition matrix and one
//! emission law per mode.

use nalgebra::DMatrix;

use crate::dynamics::EmissionDynamics;
use crate::error::{check_dim, Error, Result};
use crate::observation::{ObservationLayout, ObservationSequence};
use crate::prob::SIMPLEX_TOL;
use crate::standardize::Standardization;

/// Number of hidden modes `S ≥ 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModeSet(usize);

impl ModeSet {
    pub fn new(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidParameter("at least one hidden mode is required".into()));
        }
        Ok(Self(count))
    }

    pub fn count(&self) -> usize {
        self.0
    }
}

fn check_simplex(what: &str, p: &[f64]) -> Result<()> {
    if let Some(v) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidParameter(format!("{what} entry {v} outside [0, 1]")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidParameter(format!("{what} sums to {total}")));
    }
    Ok(())
}

fn normalized(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let total: f64 = v.iter().sum();
    if !(total > 0.0) || !total.is_finite() || v.iter().any(|x| *x < 0.0) {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= total);
    Some(v)
}

/// `ϖ_i = Pr(z_1 = i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialDistribution(Vec<f64>);

impl InitialDistribution {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidParameter("empty initial distribution".into()));
        }
        check_simplex("initial distribution", &weights)?;
        Ok(Self(weights))
    }

    pub fn uniform(modes: usize) -> Self {
        Self(vec![1.0 / modes as f64; modes])
    }

    /// Normalizes non-negative masses.
    pub fn from_masses(masses: Vec<f64>) -> Result<Self> {
        let p = normalized(masses).ok_or_else(|| Error::InvalidParameter("initial masses sum to zero".into()))?;
        Self::new(p)
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Row-stochastic `t_ij = Pr(z_{t+1} = j | z_t = i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix(DMatrix<f64>);

impl TransitionMatrix {
    pub fn new(probs: DMatrix<f64>) -> Result<Self> {
        if probs.nrows() == 0 {
            return Err(Error::InvalidParameter("empty transition matrix".into()));
        }
        check_dim("transition matrix columns", probs.nrows(), probs.ncols())?;
        for (i, row) in probs.row_iter().enumerate() {
            let row: Vec<f64> = row.iter().copied().collect();
            check_simplex(&format!("transition row {i}"), &row)?;
        }
        Ok(Self(probs))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let s = rows.len();
        for r in rows {
            check_dim("transition row", s, r.len())?;
        }
        Self::new(DMatrix::from_fn(s, s, |i, j| rows[i][j]))
    }

    /// `stay` on the diagonal, the rest spread evenly.
    pub fn sticky(modes: usize, stay: f64) -> Result<Self> {
        if modes == 1 {
            return Self::new(DMatrix::from_element(1, 1, 1.0));
        }
        let off = (1.0 - stay) / (modes - 1) as f64;
        let rows: Vec<Vec<f64>> = (0..modes)
            .map(|i| (0..modes).map(|j| if i == j { stay } else { off }).collect())
            .collect();
        let rows = rows.into_iter().map(|r| normalized(r).unwrap_or_default()).collect::<Vec<_>>();
        Self::from_rows(&rows)
    }

    /// Row-normalizes expected transition counts; rows without mass fall
    /// back to the matching row of `fallback`.
    pub fn from_counts(counts: &DMatrix<f64>, fallback: &TransitionMatrix) -> Result<Self> {
        let s = counts.nrows();
        check_dim("transition counts", fallback.modes(), s)?;
        let rows: Vec<Vec<f64>> = (0..s)
            .map(|i| {
                let row: Vec<f64> = counts.row(i).iter().copied().collect();
                normalized(row).unwrap_or_else(|| fallback.0.row(i).iter().copied().collect())
            })
            .collect();
        Self::from_rows(&rows)
    }

    pub fn probs(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn modes(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.0.row_iter().map(|r| r.iter().copied().collect()).collect()
    }
}

/// Full parameter set Θ plus the observation layout it consumes and,
/// optionally, the standardization fitted on its training data.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    modes: ModeSet,
    init: InitialDistribution,
    trans: TransitionMatrix,
    emissions: Vec<EmissionDynamics>,
    layout: ObservationLayout,
    standardization: Option<Standardization>,
}

impl ModelParams {
    pub fn new(
        init: InitialDistribution,
        trans: TransitionMatrix,
        emissions: Vec<EmissionDynamics>,
        layout: ObservationLayout,
    ) -> Result<Self> {
        let modes = ModeSet::new(init.len())?;
        check_dim("transition matrix size", modes.count(), trans.modes())?;
        check_dim("emission laws", modes.count(), emissions.len())?;
        for e in &emissions {
            e.check_layout(&layout)?;
        }
        Ok(Self {
            modes,
            init,
            trans,
            emissions,
            layout,
            standardization: None,
        })
    }

    pub fn with_standardization(mut self, st: Option<Standardization>) -> Result<Self> {
        if let Some(s) = &st {
            s.validate(&self.layout)?;
        }
        self.standardization = st;
        Ok(self)
    }

    pub fn modes(&self) -> usize {
        self.modes.count()
    }

    pub fn init(&self) -> &InitialDistribution {
        &self.init
    }

    pub fn trans(&self) -> &TransitionMatrix {
        &self.trans
    }

    pub fn emissions(&self) -> &[EmissionDynamics] {
        &self.emissions
    }

    pub fn layout(&self) -> &ObservationLayout {
        &self.layout
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.standardization.as_ref()
    }

    /// Copy with mode `i` of the result taken from mode `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let s = self.modes();
        check_dim("permutation", s, perm.len())?;
        let mut seen = vec![false; s];
        for &p in perm {
            if p >= s || std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidParameter("not a permutation".into()));
            }
        }
        let init = InitialDistribution::new(perm.iter().map(|&p| self.init.weights()[p]).collect())?;
        let trans = TransitionMatrix::new(DMatrix::from_fn(s, s, |i, j| self.trans.get(perm[i], perm[j])))?;
        let emissions = perm.iter().map(|&p| self.emissions[p].clone()).collect();
        Ok(Self {
            modes: self.modes,
            init,
            trans,
            emissions,
            layout: self.layout.clone(),
            standardization: self.standardization.clone(),
        })
    }

    pub(crate) fn replace(
        &self,
        init: InitialDistribution,
        trans: TransitionMatrix,
        emissions: Vec<EmissionDynamics>,
    ) -> Self {
        Self {
            modes: self.modes,
            init,
            trans,
            emissions,
            layout: self.layout.clone(),
            standardization: self.standardization.clone(),
        }
    }

    pub fn check_sequence(&self, seq: &ObservationSequence) -> Result<()> {
        if seq.layout() != &self.layout {
            return Err(Error::LayoutMismatch(format!(
                "sequence channels {:?} do not match model channels {:?}",
                seq.layout().channel_names(),
                self.layout.channel_names()
            )));
        }
        if seq.steps() == 0 {
            return Err(Error::InvalidParameter("sequence needs at least two rows".into()));
        }
        Ok(())
    }

    /// `T × S` table of `log p(y_t | z_t = s, y_{t-1})` for `t = 1..=T`.
    pub fn log_emissions(&self, seq: &ObservationSequence) -> Result<Vec<Vec<f64>>> {
        self.check_sequence(seq)?;
        seq.rows()
            .windows(2)
            .map(|w| self.emissions.iter().map(|e| e.log_emission(&w[0], &w[1])).collect())
            .collect()
    }
}
