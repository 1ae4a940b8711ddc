//! The prevalence estimator `q^ = P^-1 f` built from domain fractions `f`,
//! and a multinomial Monte Carlo simulator that checks its variance bounds.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{BoundReport, Prevalence};
use crate::confusion::{invert, ConfusionMatrix};
use crate::densities::ClassModel;
use crate::error::{Error, Result};
use crate::partitions::{check_simplex, Partition};

/// Replicates below which a verdict is flagged as low-power.
const LOW_POWER_REPLICATES: usize = 100;

/// `P^-1 f`. Components may fall outside `[0, 1]`; they are not clipped.
pub fn estimate_prevalence(p_inv: &DMatrix<f64>, fractions: &[f64]) -> Result<Vec<f64>> {
    let c = p_inv.nrows();
    if p_inv.ncols() != c {
        return Err(Error::ShapeMismatch(format!("inverse is {}x{}", c, p_inv.ncols())));
    }
    check_simplex(fractions, c, "fractions")?;
    Ok((p_inv * DVector::from_column_slice(fractions)).iter().copied().collect())
}

/// Euclidean projection onto the probability simplex.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (i, x) in u.iter().enumerate() {
        acc += x;
        let t = (acc - 1.0) / (i + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Extra knobs for [`simulate`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimOptions {
    /// Also estimate the `A`-weighted mean-square error.
    pub weight: Option<DMatrix<f64>>,
    /// Keep every replicate's estimate.
    pub keep_replicates: bool,
    /// Project each estimate onto the simplex. Biases the estimator; not for
    /// bound validation.
    pub clip_to_simplex: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub q_true: Prevalence,
    pub s: u64,
    pub replicates: usize,
    pub seed: u64,
    pub mean_q_hat: Vec<f64>,
    /// Replicate standard deviation of each component of `q^`.
    pub sd_q_hat: Vec<f64>,
    /// Mean over replicates of `|q^ - q|^2`.
    pub empirical_sigma2_identity: f64,
    /// Standard error of `empirical_sigma2_identity`.
    pub sigma2_standard_error: f64,
    pub empirical_sigma2_weighted: Option<f64>,
    pub weighted_standard_error: Option<f64>,
    pub clipped: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_replicate_q_hat: Option<Vec<Vec<f64>>>,
}

struct Replicate {
    q_hat: Vec<f64>,
    err2: f64,
    err2_weighted: f64,
}

/// Draws `replicates` independent sample sets of size `s`: class counts
/// from a multinomial with probabilities `q`, each point from its class
/// density, then `q^ = P^-1 f` from the domain fractions `f`. Replicate `i`
/// uses stream `i` of `seed`, and results are reduced in replicate order, so
/// output is identical for any thread count.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    model: &ClassModel,
    part: &Partition,
    p: &ConfusionMatrix,
    q: &Prevalence,
    s: u64,
    replicates: usize,
    seed: u64,
    opts: &SimOptions,
) -> Result<SimulationResult> {
    let c = model.c();
    if p.c() != c || q.c() != c {
        return Err(Error::ShapeMismatch(format!(
            "model has {c} classes, P has {}, q has {}",
            p.c(),
            q.c()
        )));
    }
    if s == 0 {
        return Err(Error::param("s", "must be at least 1"));
    }
    if replicates < 2 {
        return Err(Error::param("replicates", "need at least 2"));
    }
    if let Some(a) = &opts.weight {
        crate::bounds::weight_multiplier(a)?;
        if a.nrows() != c {
            return Err(Error::ShapeMismatch(format!("weight matrix is {}x{}", a.nrows(), a.ncols())));
        }
    }
    part.validate(model)?;
    if part.needs_evaluation() && !model.is_evaluable() {
        return Err(Error::Unsupported("likelihood-based partition over an empirical density".into()));
    }
    let p_inv = invert(p, false)?;
    let samplers = model.densities().map(|d| d.sampler()).collect::<Result<Vec<_>>>()?;
    let qv = q.as_slice();
    let dim = model.dim();

    let reps: Vec<Replicate> = (0..replicates)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let counts = multinomial(&mut rng, s, qv);
            let mut domain = vec![0u64; c];
            let mut r = vec![0.0; dim];
            for (k, &m) in counts.iter().enumerate() {
                for _ in 0..m {
                    samplers[k].draw(&mut rng, &mut r);
                    domain[part.assign_unchecked(model, &r).min(c - 1)] += 1;
                }
            }
            let f = DVector::from_iterator(c, domain.iter().map(|&n| n as f64 / s as f64));
            let mut q_hat: Vec<f64> = (&p_inv * f).iter().copied().collect();
            if opts.clip_to_simplex {
                q_hat = project_to_simplex(&q_hat);
            }
            let d = DVector::from_iterator(c, q_hat.iter().zip(qv).map(|(a, b)| a - b));
            let err2 = d.norm_squared();
            let err2_weighted = opts.weight.as_ref().map_or(0.0, |a| (d.transpose() * a * &d)[(0, 0)]);
            Replicate { q_hat, err2, err2_weighted }
        })
        .collect();

    let n = replicates as f64;
    let mut mean = vec![0.0; c];
    for rep in &reps {
        for (m, v) in mean.iter_mut().zip(&rep.q_hat) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; c];
    for rep in &reps {
        for ((v, x), m) in var.iter_mut().zip(&rep.q_hat).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let sd_q_hat = var.iter().map(|v| (v / (n - 1.0)).sqrt()).collect();
    let (sigma2, se) = mean_and_se(reps.iter().map(|r| r.err2), n);
    let weighted = opts.weight.as_ref().map(|_| mean_and_se(reps.iter().map(|r| r.err2_weighted), n));

    Ok(SimulationResult {
        q_true: q.clone(),
        s,
        replicates,
        seed,
        mean_q_hat: mean,
        sd_q_hat,
        empirical_sigma2_identity: sigma2,
        sigma2_standard_error: se,
        empirical_sigma2_weighted: weighted.map(|w| w.0),
        weighted_standard_error: weighted.map(|w| w.1),
        clipped: opts.clip_to_simplex,
        per_replicate_q_hat: opts.keep_replicates.then(|| reps.into_iter().map(|r| r.q_hat).collect()),
    })
}

/// Multinomial counts by sequential conditional binomials.
fn multinomial(rng: &mut ChaCha8Rng, s: u64, q: &[f64]) -> Vec<u64> {
    let mut out = vec![0; q.len()];
    let mut left = s;
    let mut mass = 1.0;
    for (k, &qk) in q.iter().enumerate() {
        if left == 0 {
            break;
        }
        if k + 1 == q.len() {
            out[k] = left;
            break;
        }
        let prob = if mass > 0.0 { (qk / mass).clamp(0.0, 1.0) } else { 0.0 };
        let m = if prob >= 1.0 {
            left
        } else if prob <= 0.0 {
            0
        } else {
            Binomial::new(left, prob).expect("probability in (0, 1)").sample(rng)
        };
        out[k] = m;
        left -= m;
        mass -= qk;
    }
    out
}

fn mean_and_se(values: impl Iterator<Item = f64> + Clone, n: f64) -> (f64, f64) {
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Comparison of a simulation against the bounds for the same `(c, s, q)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundVerdict {
    pub empirical_sigma2: f64,
    pub standard_error: f64,
    pub eps_sigma: f64,
    pub eps_sigma_tight: f64,
    /// `eps_sigma - sigma^2`.
    pub margin: f64,
    pub margin_tight: f64,
    /// `sigma^2` minus the multinomial term, compared with `eps_rho`.
    pub excess_uncertainty: f64,
    pub eps_rho: f64,
    /// `sigma^2 <= eps_sigma + 3 SE`.
    pub pass: bool,
    /// Same test against the tight bound; `None` unless it is certified.
    pub pass_tight: Option<bool>,
    /// Every component of the mean estimate within 4 SE of the truth.
    pub unbiased: bool,
    pub max_bias_in_se: f64,
    pub low_power: bool,
}

impl BoundVerdict {
    /// All certified checks pass.
    pub fn ok(&self) -> bool {
        self.pass && self.pass_tight.unwrap_or(true) && self.unbiased
    }
}

/// Checks `sim` against `report` at three Monte Carlo standard errors and
/// its bias at four.
pub fn bound_check(sim: &SimulationResult, report: &BoundReport) -> Result<BoundVerdict> {
    if sim.q_true.c() != report.c || sim.s != report.s {
        return Err(Error::ShapeMismatch(format!(
            "simulation has (c, s) = ({}, {}), bounds have ({}, {})",
            sim.q_true.c(),
            sim.s,
            report.c,
            report.s
        )));
    }
    let sigma2 = sim.empirical_sigma2_identity;
    let se = sim.sigma2_standard_error;
    let slack = 3.0 * se + 1e-15;
    let root_r = (sim.replicates as f64).sqrt();
    let mut max_bias: f64 = 0.0;
    let mut unbiased = true;
    for ((m, q), sd) in sim.mean_q_hat.iter().zip(sim.q_true.as_slice()).zip(&sim.sd_q_hat) {
        let bias = (m - q).abs();
        let scale = sd / root_r;
        if bias > 4.0 * scale + 1e-12 {
            unbiased = false;
        }
        if scale > 0.0 {
            max_bias = max_bias.max(bias / scale);
        }
    }
    Ok(BoundVerdict {
        empirical_sigma2: sigma2,
        standard_error: se,
        eps_sigma: report.eps_sigma,
        eps_sigma_tight: report.eps_sigma_tight,
        margin: report.eps_sigma - sigma2,
        margin_tight: report.eps_sigma_tight - sigma2,
        excess_uncertainty: sigma2 - report.multinomial_term,
        eps_rho: report.eps_rho,
        pass: sigma2 <= report.eps_sigma + slack,
        pass_tight: report.tight_certified.then_some(sigma2 <= report.eps_sigma_tight + slack),
        unbiased,
        max_bias_in_se: max_bias,
        low_power: sim.replicates < LOW_POWER_REPLICATES,
    })
}
