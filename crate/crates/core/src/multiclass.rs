//! Multiclass `rho_max` minimization.
//!
//! Two routes: searching for a prevalence whose Bayes partition has equal
//! diagonal entries (which certifies a global optimum), and direct
//! coordinate descent over 1D cut points.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::Prevalence;
use crate::confusion::{confusion_matrix, ConfusionMatrix, IntegrationConfig};
use crate::densities::ClassModel;
use crate::error::{Error, Result};
use crate::partitions::Partition;

const DAMPING: f64 = 0.5;
/// Fixed-point steps before switching to the Newton fallback.
const FIXED_POINT_LIMIT: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceResult {
    pub q_star: Prevalence,
    pub p_star: ConfusionMatrix,
    pub rho_star: f64,
    /// `max |P[k,k] - P[j,j]|`.
    pub residual: f64,
    pub converged: bool,
    pub iterations: usize,
}

fn diagonal_spread(p: &ConfusionMatrix) -> f64 {
    let d = p.diagonal();
    let hi = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
    hi - lo
}

fn bayes_matrix(model: &ClassModel, q: &[f64], cfg: &IntegrationConfig) -> Result<ConfusionMatrix> {
    confusion_matrix(model, &Partition::Bayes { q: q.to_vec() }, cfg)
}

fn normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
}

/// Searches for a prevalence whose Bayes partition has equal diagonals.
///
/// Runs the damped update `q <- normalize(q * mean(diag) / diag)` and, if
/// that has not met `tol` after 200 steps, a finite-difference Newton
/// iteration on the log-odds `ln(q_k / q_0)`. Non-convergence is reported
/// through `converged = false` together with the best iterate.
pub fn balance_prevalence(
    model: &ClassModel,
    q_init: &Prevalence,
    max_iters: usize,
    tol: f64,
    cfg: &IntegrationConfig,
) -> Result<BalanceResult> {
    let c = model.c();
    if q_init.c() != c {
        return Err(Error::ShapeMismatch(format!("q_init has {} entries for {c} classes", q_init.c())));
    }
    if !(tol > 0.0) {
        return Err(Error::param("tol", "must be positive"));
    }
    if let Some(k) = q_init.as_slice().iter().position(|&v| v <= 0.0) {
        return Err(Error::InvalidPrevalence(format!("q_init[{k}] must be positive")));
    }
    let mut q = q_init.as_slice().to_vec();
    let mut p = bayes_matrix(model, &q, cfg)?;
    check_degenerate(&p)?;
    let mut best = (diagonal_spread(&p), q.clone(), p.clone());
    let mut iterations = 0;

    while iterations < max_iters.min(FIXED_POINT_LIMIT) && best.0 > tol {
        let d = p.diagonal();
        let target = d.iter().sum::<f64>() / c as f64;
        let mut next: Vec<f64> = q.iter().zip(&d).map(|(qk, dk)| qk * target / dk).collect();
        normalize(&mut next);
        for (a, b) in q.iter_mut().zip(&next) {
            *a = (1.0 - DAMPING) * *a + DAMPING * b;
        }
        p = bayes_matrix(model, &q, cfg)?;
        check_degenerate(&p)?;
        iterations += 1;
        let r = diagonal_spread(&p);
        if r < best.0 {
            best = (r, q.clone(), p.clone());
        }
    }

    if best.0 > tol && iterations < max_iters {
        let (r, qn, pn, used) = newton(model, &best.1, max_iters - iterations, tol, cfg)?;
        iterations += used;
        if r < best.0 {
            best = (r, qn, pn);
        }
    }

    let (residual, q, p) = best;
    let rho_star = p.rho_max();
    Ok(BalanceResult {
        q_star: Prevalence::new(q)?,
        p_star: p,
        rho_star,
        residual,
        converged: residual <= tol,
        iterations,
    })
}

fn check_degenerate(p: &ConfusionMatrix) -> Result<()> {
    match p.diagonal().iter().position(|&d| d <= 0.0) {
        Some(k) => Err(Error::DegenerateBayes { class: k }),
        None => Ok(()),
    }
}

fn from_log_odds(l: &DVector<f64>) -> Vec<f64> {
    let m = l.iter().copied().fold(0.0, f64::max);
    let mut q: Vec<f64> = std::iter::once((-m).exp()).chain(l.iter().map(|x| (x - m).exp())).collect();
    normalize(&mut q);
    q
}

/// Residual `P[k,k] - P[0,0]` for `k >= 1`.
fn balance_residual(p: &ConfusionMatrix) -> DVector<f64> {
    let d = p.diagonal();
    DVector::from_iterator(d.len() - 1, d[1..].iter().map(|x| x - d[0]))
}

fn newton(
    model: &ClassModel,
    q0: &[f64],
    budget: usize,
    tol: f64,
    cfg: &IntegrationConfig,
) -> Result<(f64, Vec<f64>, ConfusionMatrix, usize)> {
    let c = model.c();
    let mut l = DVector::from_iterator(c - 1, q0[1..].iter().map(|x| (x / q0[0]).ln()));
    let mut q = from_log_odds(&l);
    let mut p = bayes_matrix(model, &q, cfg)?;
    let mut r = balance_residual(&p);
    let mut used = 0;
    let h = 1e-6;
    while used < budget && diagonal_spread(&p) > tol {
        let mut jac = DMatrix::zeros(c - 1, c - 1);
        for i in 0..c - 1 {
            let mut li = l.clone();
            li[i] += h;
            let pi = bayes_matrix(model, &from_log_odds(&li), cfg)?;
            jac.set_column(i, &((balance_residual(&pi) - &r) / h));
        }
        used += 1;
        let Some(step) = jac.lu().solve(&(-&r)) else { break };
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = &l + &step * lambda;
            let qt = from_log_odds(&trial);
            let pt = bayes_matrix(model, &qt, cfg)?;
            let rt = balance_residual(&pt);
            if rt.amax() < r.amax() && pt.diagonal().iter().all(|&d| d > 0.0) {
                l = trial;
                q = qt;
                p = pt;
                r = rt;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok((diagonal_spread(&p), q, p, used))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceVerdict {
    pub trials: usize,
    /// Trials with `rho_max(q') >= rho* - tol`.
    pub dominated: usize,
    /// Trials with `sum q*_k P'[k,k] <= sum q*_k P*[k,k] + tol`.
    pub chain_holds: usize,
    /// Smallest `rho_max(q') - rho*` seen.
    pub min_gap: f64,
    pub pass: bool,
}

/// Compares the balanced optimum with Bayes partitions for `trials` random
/// prevalences drawn uniformly from the simplex.
pub fn verify_balance_optimality(
    result: &BalanceResult,
    model: &ClassModel,
    trials: usize,
    seed: u64,
    tol: f64,
    cfg: &IntegrationConfig,
) -> Result<BalanceVerdict> {
    if !result.converged {
        return Err(Error::param("result", "balance did not converge; nothing to verify"));
    }
    let c = model.c();
    let q_star = result.q_star.as_slice();
    let own: f64 = q_star.iter().zip(result.p_star.diagonal()).map(|(q, d)| q * d).sum();
    let outcomes: Vec<(f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut q: Vec<f64> = (0..c).map(|_| Exp1.sample(&mut rng)).collect();
            normalize(&mut q);
            let p = bayes_matrix(model, &q, cfg)?;
            let chain: f64 = q_star.iter().zip(p.diagonal()).map(|(a, d)| a * d).sum();
            Ok((p.rho_max(), chain))
        })
        .collect::<Result<_>>()?;
    let dominated = outcomes.iter().filter(|(r, _)| *r >= result.rho_star - tol).count();
    let chain_holds = outcomes.iter().filter(|(_, ch)| *ch <= own + tol).count();
    let min_gap = outcomes.iter().map(|(r, _)| r - result.rho_star).fold(f64::INFINITY, f64::min);
    Ok(BalanceVerdict {
        trials,
        dominated,
        chain_holds,
        min_gap,
        pass: dominated == trials && chain_holds == trials,
    })
}

/// Step schedule for [`optimize_cutpoints_1d`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CutSearch {
    pub initial_step: f64,
    /// Rounds of tenfold step refinement after the first.
    pub refinements: usize,
    /// `rho_max` values this close count as tied; ties go to larger trace.
    pub tie_tol: f64,
}

impl Default for CutSearch {
    fn default() -> Self {
        CutSearch { initial_step: 0.01, refinements: 3, tie_tol: 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutResult {
    pub cuts: Vec<f64>,
    pub p: ConfusionMatrix,
    pub rho_max: f64,
    pub trace: f64,
    /// An evaluated cut vector tied with the optimum whose diagonal is
    /// constant, if one was met.
    pub constant_diagonal_alternative: Option<Vec<f64>>,
    pub evaluations: usize,
}

struct CutEval {
    cuts: Vec<f64>,
    p: ConfusionMatrix,
    rho: f64,
    trace: f64,
}

/// Coordinate descent over 1D cut points minimizing `rho_max`, with the
/// larger trace of `P` preferred among tied candidates.
///
/// Each coordinate is scanned on a grid between its neighbours, first at
/// `initial_step` across the whole support hull, then in tenfold finer
/// windows around the incumbent.
pub fn optimize_cutpoints_1d(
    model: &ClassModel,
    init_cuts: &[f64],
    search: &CutSearch,
    cfg: &IntegrationConfig,
) -> Result<CutResult> {
    Partition::cuts(init_cuts.to_vec()).validate(model)?;
    if !(search.initial_step > 0.0) {
        return Err(Error::param("initial_step", "must be positive"));
    }
    let (lo, hi) = model.support_window()[0];
    let mut evaluations = 0;
    let mut ties_constant: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut evaluate = |cuts: &[f64]| -> Result<CutEval> {
        evaluations += 1;
        let p = confusion_matrix(model, &Partition::cuts(cuts.to_vec()), cfg)?;
        let rho = p.rho_max();
        if diagonal_spread(&p) <= 1e-9 {
            ties_constant.push((rho, cuts.to_vec()));
        }
        let trace = p.trace();
        Ok(CutEval { cuts: cuts.to_vec(), p, rho, trace })
    };
    let better = |a: &CutEval, b: &CutEval| {
        a.rho < b.rho - search.tie_tol
            || ((a.rho - b.rho).abs() <= search.tie_tol && a.trace > b.trace + search.tie_tol)
    };

    let mut best = evaluate(init_cuts)?;
    let mut step = search.initial_step;
    for round in 0..=search.refinements {
        for _sweep in 0..100 {
            let mut moved = false;
            for i in 0..best.cuts.len() {
                let left = if i == 0 { lo } else { best.cuts[i - 1] };
                let right = if i + 1 == best.cuts.len() { hi } else { best.cuts[i + 1] };
                let (a, b) = if round == 0 {
                    (left, right)
                } else {
                    let x = best.cuts[i];
                    ((x - 10.0 * step).max(left), (x + 10.0 * step).min(right))
                };
                let first = (a / step).floor() as i64 + 1;
                let last = (b / step).ceil() as i64 - 1;
                for m in first..=last {
                    let x = m as f64 * step;
                    if !(x > left && x < right) || x == best.cuts[i] {
                        continue;
                    }
                    let mut cuts = best.cuts.clone();
                    cuts[i] = x;
                    let cand = evaluate(&cuts)?;
                    if better(&cand, &best) {
                        best = cand;
                        moved = true;
                    }
                }
            }
            if !moved {
                break;
            }
        }
        step /= 10.0;
    }

    let alternative = ties_constant
        .into_iter()
        .find(|(rho, cuts)| (rho - best.rho).abs() <= search.tie_tol && cuts != &best.cuts)
        .map(|(_, c)| c);
    Ok(CutResult {
        cuts: best.cuts,
        rho_max: best.rho,
        trace: best.trace,
        p: best.p,
        constant_diagonal_alternative: alternative,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::Density;
    use crate::integrate::{normal_cdf, normal_sf};

    fn gauss3() -> ClassModel {
        ClassModel::from_densities(vec![
            Density::gaussian(-2.0, 1.0).unwrap(),
            Density::gaussian(0.0, 1.0).unwrap(),
            Density::gaussian(2.0, 1.0).unwrap(),
        ])
        .unwrap()
    }

    fn uniforms() -> ClassModel {
        ClassModel::from_densities(vec![
            Density::uniform(0.0, 1.0).unwrap(),
            Density::uniform(0.9, 1.9).unwrap(),
            Density::uniform(1.5, 2.5).unwrap(),
        ])
        .unwrap()
    }

    /// With `q_0 = q_2` and `L = ln(q_0 / q_1)`, the Bayes boundaries sit at
    /// `+-(1 - L/2)`. Solves `P00 = P11` for `L` by bisection.
    fn three_gauss_oracle() -> (f64, f64) {
        let diag = |l: f64| {
            let b = 1.0 - l / 2.0;
            let p00 = normal_cdf(-b + 2.0);
            let p11 = normal_cdf(b) - normal_cdf(-b);
            (p00, p11)
        };
        let (mut a, mut b) = (-1.0, 1.0);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            let (p0, p1) = diag(m);
            // raising L favours the outer classes
            if p0 < p1 {
                a = m;
            } else {
                b = m;
            }
        }
        let l = 0.5 * (a + b);
        let r = l.exp();
        (r / (1.0 + 2.0 * r), diag(l).0)
    }

    #[test]
    fn three_gaussians_balance() {
        let (q0, common) = three_gauss_oracle();
        assert!((q0 - 0.27973).abs() < 1e-4 && (common - 0.78021).abs() < 1e-4);
        let r = balance_prevalence(&gauss3(), &Prevalence::uniform(3).unwrap(), 500, 1e-9, &Default::default())
            .unwrap();
        assert!(r.converged, "residual {}", r.residual);
        assert!((r.q_star.as_slice()[0] - q0).abs() < 1e-6, "{:?}", r.q_star);
        assert!((r.q_star.as_slice()[2] - q0).abs() < 1e-6);
        assert!((r.rho_star - (1.0 - common)).abs() < 1e-6);
    }

    #[test]
    fn binary_symmetric_balance() {
        let model = ClassModel::from_densities(vec![
            Density::gaussian(-1.0, 1.0).unwrap(),
            Density::gaussian(1.0, 1.0).unwrap(),
        ])
        .unwrap();
        let r = balance_prevalence(&model, &Prevalence::new(vec![0.2, 0.8]).unwrap(), 500, 1e-10, &Default::default())
            .unwrap();
        assert!(r.converged);
        assert!((r.q_star.as_slice()[0] - 0.5).abs() < 1e-6);
        assert!((r.rho_star - normal_sf(1.0)).abs() < 1e-9);
    }

    #[test]
    fn disjoint_supports_keep_initial_prevalence() {
        let model = ClassModel::from_densities(vec![
            Density::uniform(0.0, 1.0).unwrap(),
            Density::uniform(2.0, 3.0).unwrap(),
        ])
        .unwrap();
        let q = Prevalence::new(vec![0.3, 0.7]).unwrap();
        let r = balance_prevalence(&model, &q, 50, 1e-9, &Default::default()).unwrap();
        assert_eq!(r.q_star, q);
        assert_eq!(r.rho_star, 0.0);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn dominated_class_is_degenerate() {
        let model = ClassModel::from_densities(vec![
            Density::gaussian(0.0, 1.0).unwrap(),
            Density::gaussian(0.0, 1.0).unwrap(),
        ])
        .unwrap();
        let err = balance_prevalence(&model, &Prevalence::uniform(2).unwrap(), 10, 1e-9, &Default::default());
        assert_eq!(err.unwrap_err(), Error::DegenerateBayes { class: 1 });
    }

    #[test]
    fn balance_optimality_verification() {
        let model = gauss3();
        let r = balance_prevalence(&model, &Prevalence::uniform(3).unwrap(), 500, 1e-9, &Default::default())
            .unwrap();
        let v = verify_balance_optimality(&r, &model, 0, 1, 1e-4, &Default::default()).unwrap();
        assert!(v.pass && v.trials == 0);
        let v = verify_balance_optimality(&r, &model, 20, 1, 1e-4, &Default::default()).unwrap();
        assert!(v.pass, "{v:?}");
    }

    #[test]
    fn uniform_cutpoints() {
        let model = uniforms();
        let r = optimize_cutpoints_1d(&model, &[1.2, 1.6], &CutSearch::default(), &Default::default()).unwrap();
        assert!((r.cuts[0] - 0.9).abs() < 1e-3 && (r.cuts[1] - 1.7).abs() < 1e-3, "{:?}", r.cuts);
        assert!((r.rho_max - 0.2).abs() < 1e-9);
        let alt = r.constant_diagonal_alternative.expect("constant-diagonal tie");
        let p = confusion_matrix(&model, &Partition::cuts(alt), &Default::default()).unwrap();
        assert!(p.diagonal().iter().all(|d| (d - 0.8).abs() < 1e-9));
        assert!(r.trace > p.trace());
        let from_alt = optimize_cutpoints_1d(&model, &[0.8, 1.7], &CutSearch::default(), &Default::default()).unwrap();
        assert!((from_alt.cuts[0] - 0.9).abs() < 1e-3);
        assert!((from_alt.trace - 2.5).abs() < 1e-9);
    }

    #[test]
    fn binary_cut_matches_symmetry() {
        let model = ClassModel::from_densities(vec![
            Density::gaussian(-1.0, 1.0).unwrap(),
            Density::gaussian(1.0, 1.0).unwrap(),
        ])
        .unwrap();
        let r = optimize_cutpoints_1d(&model, &[0.7], &CutSearch::default(), &Default::default()).unwrap();
        assert!(r.cuts[0].abs() < 1e-4);
        assert!((r.rho_max - normal_sf(1.0)).abs() < 1e-4);
    }
}
