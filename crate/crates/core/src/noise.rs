//! Optimal and fixed-partition performance under additive Gaussian noise.
//!
//! A measurement `r + eta` with `eta ~ N(0, varsigma^2 * shape)` has class
//! densities `p_k * N(0, varsigma^2 * shape)`. Re-optimizing the partition
//! after convolution can never lower `rho_max` in the binary case; keeping a
//! partition fixed can.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::Prevalence;
use crate::confusion::{confusion_matrix, IntegrationConfig};
use crate::densities::{ClassModel, NoiseSpec};
use crate::error::{Error, Result};
use crate::multiclass::balance_prevalence;
use crate::partitions::Partition;
use crate::waterlevel::solve_water_level;

/// Slack allowed between successive optimal values before a sweep is
/// called non-monotone.
pub const MONOTONE_TOL: f64 = 1e-5;
const WATER_TOL: f64 = 1e-11;
const BALANCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSweepPoint {
    pub varsigma2: f64,
    pub rho_star: f64,
    /// Water level for two classes; absent for balanced multiclass points.
    pub t_star: Option<f64>,
    pub rho_fixed: Option<f64>,
    /// `rho_star` above 1/2 or an unconverged multiclass balance.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSweep {
    pub points: Vec<NoiseSweepPoint>,
    /// Whether `rho_star` is non-decreasing within [`MONOTONE_TOL`]. Only
    /// asserted for two classes.
    pub monotone: Option<bool>,
    /// Largest drop `rho_star[i] - rho_star[i + 1]` between neighbours.
    pub max_decrease: f64,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::param("varsigma2_grid", "is empty"));
    }
    if let Some(v) = grid.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::param("varsigma2_grid", format!("entries must be finite and non-negative, got {v}")));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::param("varsigma2_grid", "must be sorted ascending"));
    }
    Ok(())
}

fn sweep_point(
    model: &ClassModel,
    shape: &NoiseSpec,
    v2: f64,
    fixed: Option<&Partition>,
    cfg: &IntegrationConfig,
) -> Result<NoiseSweepPoint> {
    let noisy = model.convolve(&shape.with_variance(v2)?)?;
    let (rho_star, t_star, converged) = if model.c() == 2 {
        let w = solve_water_level(&noisy, WATER_TOL, cfg)?;
        (w.rho_star, Some(w.t_star), true)
    } else {
        let b = balance_prevalence(&noisy, &Prevalence::uniform(model.c())?, 500, BALANCE_TOL, cfg)?;
        (b.rho_star, None, b.converged)
    };
    let rho_fixed = match fixed {
        Some(part) => Some(confusion_matrix(&noisy, part, cfg)?.rho_max()),
        None => None,
    };
    Ok(NoiseSweepPoint {
        varsigma2: v2,
        rho_star,
        t_star,
        rho_fixed,
        degenerate: rho_star > 0.5 + MONOTONE_TOL || !converged,
    })
}

/// Re-optimizes the partition at each noise level of a sorted grid.
///
/// Two-class models use water-leveling; larger models use the balanced
/// Bayes prevalence, whose output carries no monotonicity verdict.
pub fn rho_star_vs_noise(
    model: &ClassModel,
    shape: &NoiseSpec,
    varsigma2_grid: &[f64],
    fixed: Option<&Partition>,
    cfg: &IntegrationConfig,
) -> Result<NoiseSweep> {
    check_grid(varsigma2_grid)?;
    if let Some(part) = fixed {
        part.validate(model)?;
    }
    let points: Vec<NoiseSweepPoint> = varsigma2_grid
        .par_iter()
        .map(|&v2| {
            sweep_point(model, shape, v2, fixed, cfg)
                .map_err(|e| Error::AtNoiseLevel { varsigma2: v2, source: Box::new(e) })
        })
        .collect::<Result<_>>()?;
    let max_decrease = points
        .windows(2)
        .map(|w| w[0].rho_star - w[1].rho_star)
        .fold(0.0, f64::max);
    let monotone = (model.c() == 2).then_some(max_decrease <= MONOTONE_TOL);
    Ok(NoiseSweep { points, monotone, max_decrease })
}

/// `rho_max` of a partition chosen before the noise was added, evaluated on
/// the convolved densities.
pub fn fixed_partition_noise(
    model: &ClassModel,
    part: &Partition,
    varsigma2: f64,
    shape: &NoiseSpec,
    cfg: &IntegrationConfig,
) -> Result<f64> {
    part.validate(model)?;
    let noisy = model.convolve(&shape.with_variance(varsigma2)?)?;
    Ok(confusion_matrix(&noisy, part, cfg)?.rho_max())
}
