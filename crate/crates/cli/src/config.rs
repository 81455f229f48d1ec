//! Training configuration file.
//!
//! ```json
//! {
//!   "modes": 2,
//!   "layout": {"blocks": [{"name": "y", "kind": "cartesian", "dim": 2}]},
//!   "dynamics": [{"kind": "poly", "k": 2}],
//!   "em": {"tol": 1e-5, "restarts": 5, "seed": 0},
//!   "format": "csv"
//! }
//! ```
//!
//! `dynamics` may be omitted (or hold `null` entries) to use the defaults:
//! linear for Cartesian blocks, quadratic for scalars, quaternion dynamics
//! for quaternion blocks.

use std::fs;
use std::path::Path;

use arhmm::{BasisFamily, BlockKind, BlockSpec, EmConfig, ModelTemplate, ObservationLayout};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DynamicsChoice {
    Linear,
    Poly {
        k: u32,
    },
    /// Centres on a regular grid over `[lo, hi]` in every coordinate.
    Grbf {
        per_dim: usize,
        width: f64,
        lo: f64,
        hi: f64,
    },
    Quaternion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Csv,
    /// Whitespace kinematics tables; the layout is `pose_gripper(arms)`.
    Jigsaw { arms: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub modes: usize,
    #[serde(default)]
    pub layout: Option<ObservationLayout>,
    #[serde(default)]
    pub dynamics: Option<Vec<Option<DynamicsChoice>>>,
    #[serde(default)]
    pub em: EmConfig,
    #[serde(default = "default_format")]
    pub format: InputFormat,
    #[serde(default = "default_true")]
    pub standardize: bool,
}

fn default_format() -> InputFormat {
    InputFormat::Csv
}

fn default_true() -> bool {
    true
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn layout(&self) -> CliResult<ObservationLayout> {
        match (&self.format, &self.layout) {
            (InputFormat::Jigsaw { arms }, None) => Ok(ObservationLayout::pose_gripper(*arms)),
            (InputFormat::Jigsaw { arms }, Some(l)) if *l == ObservationLayout::pose_gripper(*arms) => Ok(l.clone()),
            (InputFormat::Jigsaw { .. }, Some(_)) => Err(CliError::Usage(
                "jigsaw input fixes the layout; remove the layout entry".into(),
            )),
            (InputFormat::Csv, Some(l)) => Ok(l.clone()),
            (InputFormat::Csv, None) => Err(CliError::Usage("csv input needs a layout".into())),
        }
    }

    pub fn template(&self) -> CliResult<ModelTemplate> {
        let layout = self.layout()?;
        let defaults = ModelTemplate::with_defaults(self.modes, layout.clone())
            .map_err(|e| CliError::Usage(format!("config: {e}")))?;
        let Some(choices) = &self.dynamics else {
            return Ok(defaults);
        };
        if choices.len() != layout.blocks().len() {
            return Err(CliError::Usage(format!(
                "config: {} dynamics entries for {} blocks",
                choices.len(),
                layout.blocks().len()
            )));
        }
        let mut specs = Vec::with_capacity(choices.len());
        for ((choice, block), default) in choices.iter().zip(layout.blocks()).zip(defaults.blocks()) {
            let d = match block.kind {
                BlockKind::Cartesian { dim } => dim,
                BlockKind::Scalar => 1,
                BlockKind::Quaternion => 4,
            };
            let spec = match choice {
                None => default.clone(),
                Some(DynamicsChoice::Quaternion) => BlockSpec::Quaternion,
                Some(DynamicsChoice::Linear) => BlockSpec::Cartesian(BasisFamily::linear(d)),
                Some(DynamicsChoice::Poly { k }) => BlockSpec::Cartesian(BasisFamily::polynomial(d, *k)),
                Some(DynamicsChoice::Grbf { per_dim, width, lo, hi }) => BlockSpec::Cartesian(
                    BasisFamily::grbf_grid(&vec![*lo; d], &vec![*hi; d], *per_dim, *width)
                        .map_err(|e| CliError::Usage(format!("config: block {}: {e}", block.name)))?,
                ),
            };
            specs.push(spec);
        }
        ModelTemplate::new(self.modes, layout, specs).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    pub fn em(&self) -> EmConfig {
        self.em
    }
}
