//! Surrogate-based optimization of CPG swimming gaits.
//!
//! Ordinary Kriging with expected-improvement infill ([`ego`]) drives a CPG
//! gait generator ([`cpg`]) through closed-form hydrodynamic scenario
//! objectives ([`plant`]). [`magnetics`] models the passive magnetic joints of
//! the spine.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cpg;
pub mod ego;
pub mod export;
pub mod kriging;
pub mod magnetics;
pub mod plant;
pub mod rng;
pub mod sampling;

pub use cpg::{simulate, CouplingForm, CpgError, CpgParams, GaitMetrics, OscillatorState, Trajectory};
pub use ego::{
    resume_ego, run_ego, EgoConfig, EgoError, EgoOutcome, EgoResult, Evaluation, EvaluationDatabase, EvaluationRecord,
    Objective, Tag,
};
pub use export::{export_surface_grid, ExportError, SurfaceGrid};
pub use kriging::{fit, FitConfig, KrigingError, KrigingModel, ModelSnapshot, Prediction, TrainingSet};
pub use magnetics::{MagneticsError, RibcageGeometry, SpineConfiguration};
pub use plant::{BodyGeometry, PlantError, ScenarioKind, ScenarioObjective, ScenarioSpec, SwimKinematics};
pub use sampling::lhs_sample;

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
