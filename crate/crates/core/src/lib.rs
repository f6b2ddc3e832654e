//! Discrete-time survival models trained as a game between a failure-time
//! model and a censoring-time model.

pub mod error;
pub mod experiment;
pub mod games;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod oracle;
pub mod simgen;
pub mod survival;

pub use error::{Error, Result};
pub use losses::{Batch, ClampStats, LossFamily, LossSpec, Reweighting, Role, TimeSet};
pub use models::{Architecture, DifferentiableModel, ParamVector};
pub use simgen::{GammaSimConfig, MarginalWorld};
pub use survival::{
    quantile_discretize, BinEdges, CategoricalSurvival, Dataset, LatentTimes, SurvivalRecord,
};
