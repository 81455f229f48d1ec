//! Auto-regressive hidden Markov models whose modes evolve through
//! basis-function maps, unit-quaternion increments, or products of both.
//!
//! The usual flow: build an [`ObservationLayout`], wrap data in
//! [`ObservationSequence`]s, fit with [`em_fit`] from a [`ModelTemplate`],
//! then segment with [`viterbi`].

pub mod basis;
pub mod cartesian;
pub mod composite;
pub mod dynamics;
pub mod em;
pub mod error;
pub mod inference;
mod json;
pub mod metrics;
pub mod observation;
pub mod params;
pub mod prob;
pub mod quaternion;
pub mod simulate;
pub mod standardize;

pub use basis::BasisFamily;
pub use cartesian::CartesianDynamics;
pub use composite::{BlockDynamics, CompositeDynamics};
pub use dynamics::{CovarianceKind, EmissionDynamics, FitOptions, Transition};
pub use em::{em_fit, em_refine, BlockSpec, EmConfig, EmResult, ModelTemplate};
pub use error::{Error, Result};
pub use inference::{forward_backward, viterbi, Posterior, SegmentationResult};
pub use json::to_string_full_precision;
pub use metrics::{frame_accuracy, seg_score, silhouette};
pub use observation::{Block, BlockKind, ObservationLayout, ObservationSequence};
pub use params::{InitialDistribution, ModeSet, ModelParams, TransitionMatrix};
pub use prob::GaussianNoise;
pub use quaternion::{quat_exp, quat_mul, OptimizerConfig, QuaternionDynamics, SearchDirection, UnitQuaternion};
pub use simulate::{Dataset, Preset, SimConfig};
pub use standardize::{ChannelTransform, Standardization};
