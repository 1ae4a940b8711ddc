//! Binary water-leveling: the likelihood-ratio threshold that equalizes the
//! two diagonal entries of the confusion matrix and so minimizes `rho_max`.
//!
//! For a threshold `t` the domains are `D1(t) = {p0 > t p1}`,
//! `D2(t) = {p0 < t p1}` and the tie set `Db(t) = {p0 = t p1}`. With
//! `mu_j(t)` the mass of class `j` on its own domain, `Delta = mu1 - mu2`
//! decreases in `t` and the optimum sits at its zero. When `Delta` jumps
//! over zero the tie set carries mass and is split between the domains.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::confusion::{IntegrationConfig, Method};
use crate::densities::{ClassModel, Density, Segment};
use crate::error::{Error, Result};
use crate::partitions::{log_ratio_compare, Partition};
use crate::regions::{self, GaussianPair2d};
use std::cmp::Ordering;

const T_MIN: f64 = 1e-12;
const T_MAX: f64 = 1e12;
const MAX_EXPANSIONS: usize = 80;
/// Relative bracket width at which bisection stops.
const BRACKET_REL: f64 = 1e-12;
/// Tie-set mass below which the boundary is treated as empty. Log-space
/// tie detection leaves a band of width about `1e-12` around a crossing.
const NEGLIGIBLE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelCurvePoint {
    pub t: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub delta: f64,
    pub rho_max_at_t: f64,
    /// Masses of the two classes on the tie set.
    pub boundary1: f64,
    pub boundary2: f64,
}

impl LevelCurvePoint {
    fn new(t: f64, mu1: f64, mu2: f64, boundary1: f64, boundary2: f64) -> Self {
        LevelCurvePoint {
            t,
            mu1,
            mu2,
            delta: mu1 - mu2,
            rho_max_at_t: (1.0 - mu1).max(1.0 - mu2),
            boundary1,
            boundary2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterLevelResult {
    pub t_star: f64,
    pub rho_star: f64,
    /// Diagonal masses including the assigned share of the tie set.
    pub mu1_star: f64,
    pub mu2_star: f64,
    /// Tie-set mass of each class assigned to its own domain.
    pub boundary_mass: (f64, f64),
    pub atom_case: bool,
    pub partition: Partition,
    /// Number of level evaluations used.
    pub evaluations: usize,
    /// Set when the optimum still violates diagonal dominance.
    pub warning: Option<String>,
}

/// Evaluates level measures for one model, reusing preparation across
/// thresholds.
enum Engine<'a> {
    Line { model: &'a ClassModel, cfg: IntegrationConfig, quadrature: bool },
    GaussianPair { model: &'a ClassModel, cfg: IntegrationConfig },
    /// Sorted per-class log-ratios `ln p0 - ln p1` of seeded draws.
    Sampled { ratios: [Vec<f64>; 2] },
}

impl<'a> Engine<'a> {
    fn new(model: &'a ClassModel, cfg: &IntegrationConfig) -> Result<Self> {
        if model.c() != 2 {
            return Err(Error::param("classes", format!("water-leveling needs 2 classes, got {}", model.c())));
        }
        if !model.is_evaluable() {
            return Err(Error::Unsupported("water-leveling over an empirical density".into()));
        }
        let forced_mc = cfg.method == Some(Method::MonteCarlo);
        if model.dim() == 1 && !forced_mc {
            let closed = model.densities().all(Density::has_closed_form_cdf);
            let quadrature = cfg.method == Some(Method::Quadrature) || !closed;
            return Ok(Engine::Line { model, cfg: *cfg, quadrature });
        }
        let pair = matches!(
            (model.density(0), model.density(1)),
            (Density::GaussianNd(a), Density::GaussianNd(b)) if a.dim() == 2 && b.dim() == 2
        );
        if pair && !forced_mc {
            return Ok(Engine::GaussianPair { model, cfg: *cfg });
        }
        let n = cfg.mc_samples;
        let mut ratios = [Vec::new(), Vec::new()];
        let draws = (0..2)
            .into_par_iter()
            .map(|k| -> Result<Vec<f64>> {
                let pts = model.density(k).sample(cfg.seed.wrapping_add(k as u64), n)?;
                let mut l: Vec<f64> = pts
                    .iter()
                    .map(|r| model.density(0).ln_eval_unchecked(r) - model.density(1).ln_eval_unchecked(r))
                    .map(|v| if v.is_nan() { 0.0 } else { v })
                    .collect();
                l.sort_by(f64::total_cmp);
                Ok(l)
            })
            .collect::<Result<Vec<_>>>()?;
        for (slot, d) in ratios.iter_mut().zip(draws) {
            *slot = d;
        }
        Ok(Engine::Sampled { ratios })
    }

    fn at(&self, t: f64) -> Result<LevelCurvePoint> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::param("t", format!("must be finite and non-negative, got {t}")));
        }
        let ln_t = t.ln();
        match self {
            Engine::Line { model, cfg, quadrature } => {
                let m = line_masses(model, cfg, *quadrature, ln_t)?;
                Ok(LevelCurvePoint::new(t, m[(0, 0)], m[(1, 1)], m[(2, 0)], m[(2, 1)]))
            }
            Engine::GaussianPair { model, cfg } => {
                let (Density::GaussianNd(g0), Density::GaussianNd(g1)) = (model.density(0), model.density(1))
                else {
                    unreachable!("checked at construction")
                };
                if t == 0.0 {
                    return Ok(LevelCurvePoint::new(t, 1.0, 0.0, 0.0, 0.0));
                }
                let m = GaussianPair2d::new(g0, g1, ln_t)?.masses(cfg.quad_settings())?;
                Ok(LevelCurvePoint::new(t, m[0][0], m[1][1], m[0][2], m[1][2]))
            }
            Engine::Sampled { ratios } => {
                let frac = |v: &[f64], i: usize| i as f64 / v.len() as f64;
                let [r0, r1] = ratios;
                let above0 = r0.len() - r0.partition_point(|&l| l <= ln_t);
                let below1 = r1.partition_point(|&l| l < ln_t);
                let tie0 = r0.partition_point(|&l| l <= ln_t) - r0.partition_point(|&l| l < ln_t);
                let tie1 = r1.partition_point(|&l| l <= ln_t) - below1;
                Ok(LevelCurvePoint::new(
                    t,
                    frac(r0, above0),
                    frac(r1, below1),
                    frac(r0, tie0),
                    frac(r1, tie1),
                ))
            }
        }
    }
}

/// Ternary label: 0 on `D1`, 1 on `D2`, 2 on the tie set.
fn tie_label(model: &ClassModel, ln_t: f64, x: f64) -> usize {
    let l0 = model.density(0).ln_eval_unchecked(&[x]);
    let l1 = model.density(1).ln_eval_unchecked(&[x]);
    match log_ratio_compare(l0, l1, ln_t) {
        Ordering::Greater => 0,
        Ordering::Less => 1,
        Ordering::Equal => 2,
    }
}

fn line_intervals(model: &ClassModel, ln_t: f64) -> Vec<regions::Interval> {
    let (window, breaks) = regions::model_breaks(model);
    regions::label_intervals(|x| tie_label(model, ln_t, x), window, &breaks)
}

fn line_masses(
    model: &ClassModel,
    cfg: &IntegrationConfig,
    quadrature: bool,
    ln_t: f64,
) -> Result<nalgebra::DMatrix<f64>> {
    let intervals = line_intervals(model, ln_t);
    regions::interval_masses(model, &intervals, |l| l, 3, quadrature.then(|| cfg.quad_settings()))
}

/// `mu1`, `mu2`, `Delta` and the tie-set masses at threshold `t`.
pub fn level_measures(model: &ClassModel, t: f64, cfg: &IntegrationConfig) -> Result<LevelCurvePoint> {
    Engine::new(model, cfg)?.at(t)
}

/// Level measures at every point of a positive, sorted grid, evaluated in
/// parallel.
pub fn sweep_levels(
    model: &ClassModel,
    t_grid: &[f64],
    cfg: &IntegrationConfig,
) -> Result<Vec<LevelCurvePoint>> {
    if let Some(t) = t_grid.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(Error::param("t_grid", format!("thresholds must be positive, got {t}")));
    }
    if t_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::param("t_grid", "must be sorted"));
    }
    let engine = Engine::new(model, cfg)?;
    t_grid
        .par_iter()
        .map(|&t| engine.at(t).map_err(|e| Error::AtThreshold { t, source: Box::new(e) }))
        .collect()
}

/// Log-spaced grid of `n` thresholds on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && lo.is_finite() && hi.is_finite()) || n < 2 {
        return Err(Error::param("sweep", format!("need 0 < lo < hi and n >= 2, got {lo}:{hi}:{n}")));
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..n)
        .map(|i| match i {
            0 => lo,
            _ if i == n - 1 => hi,
            _ => (a + (b - a) * i as f64 / (n - 1) as f64).exp(),
        })
        .collect())
}

/// Finds the threshold minimizing `rho_max` for a two-class model.
///
/// The zero of `Delta` is bracketed by doubling or halving from `t = 1`
/// and refined by bisection on `ln t` until `|Delta| <= tol_delta`. A
/// bracket that collapses with `|Delta| > tol_delta` on both sides marks a
/// jump; the tie set at the jump is then split so that both diagonals
/// agree, which is supported for uniform and piecewise-uniform models.
pub fn solve_water_level(
    model: &ClassModel,
    tol_delta: f64,
    cfg: &IntegrationConfig,
) -> Result<WaterLevelResult> {
    if !(tol_delta > 0.0 && tol_delta.is_finite()) {
        return Err(Error::param("tol_delta", "must be positive"));
    }
    let engine = Engine::new(model, cfg)?;
    let mut evaluations = 0;
    let mut eval = |t: f64| {
        evaluations += 1;
        engine.at(t).map_err(|e| Error::AtThreshold { t, source: Box::new(e) })
    };

    let first = eval(1.0)?;
    let (mut lo, mut hi) = if first.delta.abs() <= tol_delta {
        return finish(model, &engine, first, false, tol_delta, evaluations);
    } else if first.delta > 0.0 {
        let mut lo = first;
        let mut expansions = 0;
        loop {
            let t = lo.t * 2.0;
            if t > T_MAX || expansions == MAX_EXPANSIONS {
                return Err(Error::NoWaterLevel { t_lo: T_MIN, t_hi: T_MAX, sign: 1.0 });
            }
            expansions += 1;
            let p = eval(t)?;
            if p.delta.abs() <= tol_delta {
                return finish(model, &engine, p, false, tol_delta, evaluations);
            }
            if p.delta < 0.0 {
                break (lo, p);
            }
            lo = p;
        }
    } else {
        let mut hi = first;
        let mut expansions = 0;
        loop {
            let t = hi.t * 0.5;
            if t < T_MIN || expansions == MAX_EXPANSIONS {
                return Err(Error::NoWaterLevel { t_lo: T_MIN, t_hi: T_MAX, sign: -1.0 });
            }
            expansions += 1;
            let p = eval(t)?;
            if p.delta.abs() <= tol_delta {
                return finish(model, &engine, p, false, tol_delta, evaluations);
            }
            if p.delta > 0.0 {
                break (p, hi);
            }
            hi = p;
        }
    };

    while hi.t - lo.t > BRACKET_REL * hi.t {
        let mid = (lo.t * hi.t).sqrt();
        if mid <= lo.t || mid >= hi.t {
            break;
        }
        let p = eval(mid)?;
        if p.delta.abs() <= tol_delta {
            return finish(model, &engine, p, false, tol_delta, evaluations);
        }
        if p.delta > 0.0 {
            lo = p;
        } else {
            hi = p;
        }
    }

    // Delta jumps across zero between lo and hi.
    let t0 = plateau_threshold(model, lo.t, hi.t).ok_or_else(|| {
        Error::Unsupported(format!(
            "unsupported boundary split: Delta jumps from {} to {} near t = {}",
            lo.delta, hi.delta, hi.t
        ))
    })?;
    let p = eval(t0)?;
    finish(model, &engine, p, true, tol_delta, evaluations)
}

fn finish(
    model: &ClassModel,
    engine: &Engine<'_>,
    p: LevelCurvePoint,
    jumped: bool,
    tol_delta: f64,
    evaluations: usize,
) -> Result<WaterLevelResult> {
    let (b1, b2) = (p.boundary1, p.boundary2);
    let (mut partition, mut assigned) = (
        Partition::RatioThreshold { t: p.t, boundary_to: 0, boundary_cut: None },
        (b1, 0.0),
    );
    let atom_case = jumped || b1 + b2 > NEGLIGIBLE;
    if b1 + b2 > NEGLIGIBLE {
        // fraction f of the tie set to D1 balancing mu1 + f b1 = mu2 + (1 - f) b2
        let f = ((p.mu2 + b2 - p.mu1) / (b1 + b2)).clamp(0.0, 1.0);
        match engine {
            Engine::Line { .. } => {
                let cut = tie_split_point(model, p.t, f * b1, f)?;
                partition = Partition::RatioThreshold { t: p.t, boundary_to: 0, boundary_cut: Some(cut) };
                assigned = (f * b1, (1.0 - f) * b2);
            }
            _ => {
                let to_first = (p.mu1 + b1 - p.mu2).abs();
                let to_second = (p.mu1 - p.mu2 - b2).abs();
                if to_first.min(to_second) > tol_delta {
                    return Err(Error::Unsupported(format!(
                        "unsupported boundary split at t = {} (tie masses {b1}, {b2})",
                        p.t
                    )));
                }
                if to_second < to_first {
                    partition = Partition::RatioThreshold { t: p.t, boundary_to: 1, boundary_cut: None };
                    assigned = (0.0, b2);
                }
            }
        }
    }
    let mu1_star = p.mu1 + assigned.0;
    let mu2_star = p.mu2 + assigned.1;
    let rho_star = 1.0 - mu1_star.min(mu2_star);
    let warning = (rho_star >= 0.5).then(|| {
        format!("optimal rho_max = {rho_star} is not below 1/2; no diagonally dominant partition exists")
    });
    Ok(WaterLevelResult {
        t_star: p.t,
        rho_star,
        mu1_star,
        mu2_star,
        boundary_mass: assigned,
        atom_case,
        partition,
        evaluations,
        warning,
    })
}

/// Flat pieces of a uniform or piecewise-uniform density.
fn flat_segments(d: &Density) -> Option<Vec<Segment>> {
    match d {
        Density::UniformInterval { lo, hi } => Some(vec![Segment { lo: *lo, hi: *hi, height: 1.0 / (hi - lo) }]),
        Density::PiecewiseUniform { segments } => Some(segments.clone()),
        _ => None,
    }
}

/// The height ratio of overlapping flat pieces lying in `[lo, hi]`.
fn plateau_threshold(model: &ClassModel, lo: f64, hi: f64) -> Option<f64> {
    if model.dim() != 1 {
        return None;
    }
    let s0 = flat_segments(model.density(0))?;
    let s1 = flat_segments(model.density(1))?;
    let target = (lo * hi).sqrt().ln();
    let slack = 1e-9;
    s0.iter()
        .flat_map(|a| s1.iter().map(move |b| (a, b)))
        .filter(|(a, b)| a.height > 0.0 && b.height > 0.0 && a.hi.min(b.hi) > a.lo.max(b.lo))
        .map(|(a, b)| a.height / b.height)
        .filter(|t| *t >= lo * (1.0 - slack) && *t <= hi * (1.0 + slack))
        .min_by(|x, y| (x.ln() - target).abs().total_cmp(&(y.ln() - target).abs()))
}

/// Point `x` such that the tie set left of `x` carries class-0 mass
/// `share`; `f` is the corresponding fraction.
fn tie_split_point(model: &ClassModel, t: f64, share: f64, f: f64) -> Result<f64> {
    let ties: Vec<_> = line_intervals(model, t.ln()).into_iter().filter(|iv| iv.label == 2).collect();
    let d = model.density(0);
    let first = ties.first().ok_or_else(|| Error::Integration("tie set has mass but no interval".into()))?;
    if f <= 0.0 {
        return Ok(finite_end(d, first.lo, true));
    }
    let mut acc = 0.0;
    for iv in &ties {
        let m = d.interval_mass(iv.lo, iv.hi)?;
        if acc + m >= share {
            let (mut a, mut b) = (finite_end(d, iv.lo, true), finite_end(d, iv.hi, false));
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                if acc + d.interval_mass(iv.lo, mid)? < share {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            return Ok(b);
        }
        acc += m;
    }
    Ok(ties.last().map_or(f64::INFINITY, |iv| finite_end(d, iv.hi, false)))
}

/// Replaces an infinite interval end by the edge of the density's window.
fn finite_end(d: &Density, x: f64, left: bool) -> f64 {
    if x.is_finite() {
        return x;
    }
    let (lo, hi) = d.support_window()[0];
    if left {
        lo
    } else {
        hi
    }
}
