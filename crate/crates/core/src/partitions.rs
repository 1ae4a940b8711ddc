//! Partitions of the measurement space into class domains.
//!
//! Class indices are 0-based throughout. Ties are deterministic: Bayes ties
//! go to the lowest index, cut points belong to the interval on their left,
//! and likelihood-ratio equality goes to `boundary_to` unless a
//! `boundary_cut` splits the equality set.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::densities::ClassModel;
use crate::error::{Error, Result};

/// Relative tolerance under which two log-densities count as equal.
const LOG_TIE_TOL: f64 = 1e-12;

type AssignFn = dyn Fn(&[f64]) -> usize + Send + Sync;

/// Assignment rule backed by an arbitrary closure.
#[derive(Clone)]
pub struct PredicateFn(pub Arc<AssignFn>);

impl PredicateFn {
    pub fn new<F: Fn(&[f64]) -> usize + Send + Sync + 'static>(f: F) -> Self {
        PredicateFn(Arc::new(f))
    }
}

impl fmt::Debug for PredicateFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PredicateFn(..)")
    }
}

impl PartialEq for PredicateFn {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}

/// A rule sending every point of the measurement space to one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Partition {
    /// Binary rule: class 0 where `p0 > t p1`, class 1 where `p0 < t p1`.
    RatioThreshold {
        t: f64,
        #[serde(default)]
        boundary_to: usize,
        /// In 1D, equality points `x <= boundary_cut` go to class 0 and the
        /// rest to class 1.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        boundary_cut: Option<f64>,
    },
    /// 1D intervals `(-inf, c0], (c0, c1], ..., (c_last, inf)` mapped to
    /// classes through `order` (identity when absent).
    #[serde(rename = "cut_points")]
    CutPoints1D {
        cuts: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        order: Option<Vec<usize>>,
    },
    /// `argmax_k q_k p_k(r)`, ties to the lowest index.
    Bayes { q: Vec<f64> },
    #[serde(skip)]
    Predicate(PredicateFn),
}

impl Partition {
    pub fn threshold(t: f64) -> Self {
        Partition::RatioThreshold {
            t,
            boundary_to: 0,
            boundary_cut: None,
        }
    }

    pub fn cuts(cuts: Vec<f64>) -> Self {
        Partition::CutPoints1D { cuts, order: None }
    }

    pub fn predicate<F: Fn(&[f64]) -> usize + Send + Sync + 'static>(f: F) -> Self {
        Partition::Predicate(PredicateFn::new(f))
    }

    /// Checks compatibility with `model`.
    pub fn validate(&self, model: &ClassModel) -> Result<()> {
        let c = model.c();
        match self {
            Partition::RatioThreshold {
                t,
                boundary_to,
                boundary_cut,
            } => {
                if c != 2 {
                    return Err(Error::param("partition", "ratio threshold needs exactly two classes"));
                }
                if !(t.is_finite() && *t >= 0.0) {
                    return Err(Error::param("t", format!("must be finite and non-negative, got {t}")));
                }
                if *boundary_to > 1 {
                    return Err(Error::param("boundary_to", "must be 0 or 1"));
                }
                if boundary_cut.is_some() && model.dim() != 1 {
                    return Err(Error::param("boundary_cut", "only defined in one dimension"));
                }
            }
            Partition::CutPoints1D { cuts, order } => {
                if model.dim() != 1 {
                    return Err(Error::param("cuts", "cut points need a one-dimensional model"));
                }
                if cuts.len() + 1 != c {
                    return Err(Error::param(
                        "cuts",
                        format!("need {} cut points for {c} classes, got {}", c - 1, cuts.len()),
                    ));
                }
                if cuts.iter().any(|x| !x.is_finite()) || cuts.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::param("cuts", "must be finite and strictly increasing"));
                }
                if let Some(order) = order {
                    let mut seen = vec![false; c];
                    if order.len() != c || order.iter().any(|&k| k >= c || std::mem::replace(&mut seen[k], true)) {
                        return Err(Error::param("order", format!("must be a permutation of 0..{c}")));
                    }
                }
            }
            Partition::Bayes { q } => check_simplex(q, c, "q")?,
            Partition::Predicate(_) => {}
        }
        Ok(())
    }

    /// Class index of point `r`.
    pub fn assign(&self, model: &ClassModel, r: &[f64]) -> Result<usize> {
        self.validate(model)?;
        if r.len() != model.dim() {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                got: r.len(),
            });
        }
        if self.needs_evaluation() && !model.is_evaluable() {
            return Err(Error::Unsupported(
                "likelihood-based partition over an empirical density".into(),
            ));
        }
        let k = self.assign_unchecked(model, r);
        if k >= model.c() {
            return Err(Error::param("partition", format!("predicate returned class {k}")));
        }
        Ok(k)
    }

    pub(crate) fn needs_evaluation(&self) -> bool {
        matches!(self, Partition::RatioThreshold { .. } | Partition::Bayes { .. })
    }

    /// Assignment without validation; callers validate once up front.
    pub(crate) fn assign_unchecked(&self, model: &ClassModel, r: &[f64]) -> usize {
        match self {
            Partition::RatioThreshold {
                t,
                boundary_to,
                boundary_cut,
            } => match ratio_compare(model, *t, r) {
                Ordering::Greater => 0,
                Ordering::Less => 1,
                Ordering::Equal => match boundary_cut {
                    Some(x) => usize::from(r[0] > *x),
                    None => *boundary_to,
                },
            },
            Partition::CutPoints1D { cuts, order } => {
                let i = cuts.partition_point(|&c| c < r[0]);
                order.as_ref().map_or(i, |o| o[i])
            }
            Partition::Bayes { q } => {
                let mut best = 0;
                let mut best_score = f64::NEG_INFINITY;
                for (k, d) in model.densities().enumerate() {
                    let score = if q[k] > 0.0 {
                        q[k].ln() + d.ln_eval_unchecked(r)
                    } else {
                        f64::NEG_INFINITY
                    };
                    if score > best_score {
                        best = k;
                        best_score = score;
                    }
                }
                best
            }
            Partition::Predicate(f) => (f.0)(r),
        }
    }

    /// The ratio threshold equivalent to a binary Bayes rule, `t = q1 / q0`.
    pub fn threshold_equivalent(&self) -> Option<f64> {
        match self {
            Partition::RatioThreshold { t, .. } => Some(*t),
            Partition::Bayes { q } if q.len() == 2 && q[0] > 0.0 => Some(q[1] / q[0]),
            _ => None,
        }
    }
}

/// Sign of `p0(r) - t p1(r)`, compared in log space. Two zero densities and
/// log-values equal within a relative `1e-12` compare equal.
pub(crate) fn ratio_compare(model: &ClassModel, t: f64, r: &[f64]) -> Ordering {
    let l0 = model.density(0).ln_eval_unchecked(r);
    let l1 = model.density(1).ln_eval_unchecked(r);
    log_ratio_compare(l0, l1, t.ln())
}

pub(crate) fn log_ratio_compare(l0: f64, l1: f64, ln_t: f64) -> Ordering {
    let rhs = ln_t + l1;
    if l0 == f64::NEG_INFINITY && rhs == f64::NEG_INFINITY {
        return Ordering::Equal;
    }
    if l0 == f64::NEG_INFINITY {
        return Ordering::Less;
    }
    if rhs == f64::NEG_INFINITY {
        return Ordering::Greater;
    }
    let diff = l0 - rhs;
    if diff.abs() <= LOG_TIE_TOL * (1.0 + l0.abs().max(rhs.abs())) {
        Ordering::Equal
    } else if diff > 0.0 {
        Ordering::Greater
    } else {
        Ordering::Less
    }
}

pub(crate) fn check_simplex(q: &[f64], c: usize, field: &str) -> Result<()> {
    if q.len() != c {
        return Err(Error::InvalidPrevalence(format!(
            "`{field}` has {} entries, expected {c}",
            q.len()
        )));
    }
    if let Some((k, v)) = q.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::InvalidPrevalence(format!("`{field}[{k}]` = {v} is negative")));
    }
    let sum: f64 = q.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidPrevalence(format!(
            "`{field}` sums to {sum}; prevalence does not sum to 1"
        )));
    }
    Ok(())
}

/// Bayes-optimal partition for prevalence `q`.
pub fn bayes_partition(model: &ClassModel, q: &[f64]) -> Result<Partition> {
    check_simplex(q, model.c(), "q")?;
    Ok(Partition::Bayes { q: q.to_vec() })
}
