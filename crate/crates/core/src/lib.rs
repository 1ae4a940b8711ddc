//! Uniform uncertainty bounds for diagnostic classification and prevalence
//! estimation, driven by the largest Gershgorin radius `rho_max` of the
//! confusion matrix, plus partition optimizers that minimize it and a Monte
//! Carlo harness that checks the bounds.
//!
//! Class indices are 0-based throughout.

// `!(x > y)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cli;
pub mod confusion;
pub mod densities;
pub mod error;
pub mod integrate;
pub mod multiclass;
pub mod noise;
pub mod partitions;
pub mod prevalence;
mod regions;
pub mod waterlevel;

pub use bounds::Prevalence;
pub use confusion::{ConfusionMatrix, GershgorinReport, IntegrationConfig, Method};
pub use densities::{ClassModel, Density, NoiseSpec};
pub use error::{Error, Result};
pub use partitions::Partition;
