//! Uniform bounds on classification error and on the mean-square error of
//! the prevalence estimator, all driven by the largest Gershgorin radius.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::confusion::ConfusionMatrix;
use crate::densities::is_symmetric;
use crate::error::{Error, Result};
use crate::partitions::check_simplex;

/// A probability vector over the classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Prevalence(Vec<f64>);

impl Prevalence {
    /// Entries must be non-negative and sum to 1 within `1e-12`.
    pub fn new(q: Vec<f64>) -> Result<Self> {
        check_simplex(&q, q.len(), "q")?;
        if q.len() < 2 {
            return Err(Error::InvalidPrevalence("need at least two classes".into()));
        }
        Ok(Prevalence(q))
    }

    pub fn uniform(c: usize) -> Result<Self> {
        Prevalence::new(vec![1.0 / c as f64; c])
    }

    /// Point mass on class `k`.
    pub fn indicator(c: usize, k: usize) -> Result<Self> {
        if k >= c {
            return Err(Error::param("k", format!("class {k} out of range for c = {c}")));
        }
        let mut q = vec![0.0; c];
        q[k] = 1.0;
        Prevalence::new(q)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn c(&self) -> usize {
        self.0.len()
    }

    /// `sum q_j (1 - q_j)`.
    pub fn multinomial_spread(&self) -> f64 {
        self.0.iter().map(|q| q * (1.0 - q)).sum()
    }
}

impl TryFrom<Vec<f64>> for Prevalence {
    type Error = Error;
    fn try_from(q: Vec<f64>) -> Result<Self> {
        Prevalence::new(q)
    }
}

impl From<Prevalence> for Vec<f64> {
    fn from(q: Prevalence) -> Self {
        q.0
    }
}

fn check_shape(p: &ConfusionMatrix, q: &Prevalence) -> Result<()> {
    if p.c() != q.c() {
        return Err(Error::ShapeMismatch(format!(
            "confusion matrix has {} classes, prevalence has {}",
            p.c(),
            q.c()
        )));
    }
    Ok(())
}

/// `sum_k q_k (1 - P[k,k])`: the probability of misclassifying a sample
/// drawn from the mixture.
pub fn classification_error(p: &ConfusionMatrix, q: &Prevalence) -> Result<f64> {
    check_shape(p, q)?;
    Ok(q.0.iter().zip(p.diagonal()).map(|(q, d)| q * (1.0 - d)).sum())
}

/// `rho_max`, which dominates the classification error for every
/// prevalence. Requires column diagonal dominance.
pub fn error_bound(p: &ConfusionMatrix) -> Result<f64> {
    require_dominance(p)?;
    Ok(p.rho_max())
}

fn require_dominance(p: &ConfusionMatrix) -> Result<()> {
    match p.diagonal().iter().position(|&d| d <= 0.5) {
        Some(k) => Err(Error::NotDiagonallyDominant { column: k, diagonal: p.diagonal()[k] }),
        None => Ok(()),
    }
}

/// Excess variance due to mixing, `(2c rho - c^2 rho^2 / (c-1)) / (s (1 - 2 rho)^2)`.
pub fn eps_rho(c: usize, s: u64, rho: f64) -> Result<f64> {
    if c < 2 {
        return Err(Error::param("c", "need at least two classes"));
    }
    if s == 0 {
        return Err(Error::param("s", "must be at least 1"));
    }
    if !(0.0..0.5).contains(&rho) {
        return Err(Error::BoundDiverges { rho_max: rho });
    }
    let c = c as f64;
    let num = 2.0 * c * rho - c * c * rho * rho / (c - 1.0);
    Ok(num / (s as f64 * (1.0 - 2.0 * rho).powi(2)))
}

/// Variance bounds for one `(P, q, s)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub c: usize,
    pub s: u64,
    pub rho_max: f64,
    pub error_bound: f64,
    pub eps_rho: f64,
    /// `eps_rho / c`, valid when `P` is symmetric.
    pub eps_rho_tight: f64,
    pub eps_sigma: f64,
    pub eps_sigma_tight: f64,
    pub multinomial_term: f64,
    /// `P` is symmetric within its column tolerance, so the tight variant
    /// is a proven bound.
    pub tight_certified: bool,
    /// Integration accuracy of `P`; the bounds treat `P` as exact.
    pub column_tolerance: f64,
}

/// Both variance bounds for the estimator built from `p` with `s` samples.
/// With `assume_symmetric` the call fails unless `P` is symmetric within
/// its column tolerance.
pub fn variance_bounds(
    p: &ConfusionMatrix,
    q: &Prevalence,
    s: u64,
    assume_symmetric: bool,
) -> Result<BoundReport> {
    check_shape(p, q)?;
    let rho = p.rho_max();
    if rho >= 0.5 {
        return Err(Error::BoundDiverges { rho_max: rho });
    }
    let c = p.c();
    let eps = eps_rho(c, s, rho)?;
    let tight = eps / c as f64;
    let multinomial = q.multinomial_spread() / s as f64;
    let symmetric = p.asymmetry() <= p.column_tolerance().max(1e-12);
    if assume_symmetric && !symmetric {
        return Err(Error::param(
            "assume_symmetric",
            format!(
                "P is asymmetric by {:e}, above its tolerance {:e}",
                p.asymmetry(),
                p.column_tolerance()
            ),
        ));
    }
    Ok(BoundReport {
        c,
        s,
        rho_max: rho,
        error_bound: rho,
        eps_rho: eps,
        eps_rho_tight: tight,
        eps_sigma: eps + multinomial,
        eps_sigma_tight: tight + multinomial,
        multinomial_term: multinomial,
        tight_certified: symmetric,
        column_tolerance: p.column_tolerance(),
    })
}

/// `||A||_2^2` for a symmetric positive semi-definite weight matrix.
pub fn weight_multiplier(a: &DMatrix<f64>) -> Result<f64> {
    if !a.is_square() || a.nrows() == 0 {
        return Err(Error::ShapeMismatch(format!("weight matrix is {}x{}", a.nrows(), a.ncols())));
    }
    let scale = a.amax().max(1.0);
    if !is_symmetric(a, 1e-12 * scale) {
        return Err(Error::param("A", "weight matrix must be symmetric"));
    }
    let eig = SymmetricEigen::new(a.clone()).eigenvalues;
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -1e-12 * scale {
        return Err(Error::param("A", format!("weight matrix is indefinite (eigenvalue {min})")));
    }
    let top = eig.iter().copied().fold(0.0, f64::max);
    Ok(top * top)
}

/// Bound on the `A`-weighted mean-square error from a bound on the
/// unweighted one.
pub fn weighted_variance_bound(a: &DMatrix<f64>, sigma2_identity_bound: f64) -> Result<f64> {
    Ok(weight_multiplier(a)? * sigma2_identity_bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn example() -> ConfusionMatrix {
        ConfusionMatrix::from_rows(&[vec![0.9, 0.0, 0.0], vec![0.1, 0.8, 0.2], vec![0.0, 0.2, 0.8]])
            .unwrap()
    }

    fn two() -> ConfusionMatrix {
        ConfusionMatrix::from_rows(&[vec![0.9, 0.2], vec![0.1, 0.8]]).unwrap()
    }

    #[test]
    fn error_examples() {
        let id = ConfusionMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let q = Prevalence::new(vec![0.3, 0.7]).unwrap();
        assert_eq!(classification_error(&id, &q).unwrap(), 0.0);
        assert_eq!(error_bound(&id).unwrap(), 0.0);
        let half = Prevalence::uniform(2).unwrap();
        assert!((classification_error(&two(), &half).unwrap() - 0.15).abs() < 1e-15);
        let e = classification_error(&example(), &Prevalence::indicator(3, 1).unwrap()).unwrap();
        assert!((e - 0.2).abs() < 1e-15);
        assert!((error_bound(&example()).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn bound_is_attained_on_worst_column() {
        let p = example();
        let k = crate::confusion::gershgorin(&p).argmax_column;
        let e = classification_error(&p, &Prevalence::indicator(3, k).unwrap()).unwrap();
        assert_eq!(e, error_bound(&p).unwrap());
    }

    #[test]
    fn error_bound_requires_dominance() {
        let weak = ConfusionMatrix::from_rows(&[vec![0.4, 0.1], vec![0.6, 0.9]]).unwrap();
        assert!(matches!(error_bound(&weak), Err(Error::NotDiagonallyDominant { column: 0, .. })));
    }

    #[test]
    fn variance_bound_hand_values() {
        // rho_max = 0.1, symmetric
        let p = ConfusionMatrix::from_rows(&[vec![0.9, 0.1], vec![0.1, 0.9]]).unwrap();
        let r = variance_bounds(&p, &Prevalence::uniform(2).unwrap(), 100, true).unwrap();
        assert!((r.eps_sigma - 0.010625).abs() < 1e-15, "{}", r.eps_sigma);
        assert!((r.eps_sigma_tight - 0.0078125).abs() < 1e-15);
        assert!(r.tight_certified);
        assert_eq!(r.eps_rho, 2.0 * r.eps_rho_tight);
    }

    #[test]
    fn perfect_assay_is_pure_multinomial() {
        let id = ConfusionMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let q = Prevalence::new(vec![0.3, 0.7]).unwrap();
        let r = variance_bounds(&id, &q, 50, false).unwrap();
        assert_eq!(r.eps_rho, 0.0);
        assert!((r.eps_sigma - 0.42 / 50.0).abs() < 1e-16);
        let degenerate = variance_bounds(&id, &Prevalence::indicator(2, 0).unwrap(), 50, false).unwrap();
        assert_eq!(degenerate.eps_sigma, 0.0);
    }

    #[test]
    fn uniform_three_class_value() {
        let r = variance_bounds(&example(), &Prevalence::uniform(3).unwrap(), 100, false).unwrap();
        let expect = 1.02 / 36.0 + (2.0 / 9.0 * 3.0) / 100.0;
        assert!((r.eps_sigma - expect).abs() < 1e-14);
        assert!(!r.tight_certified);
        assert!(variance_bounds(&example(), &Prevalence::uniform(3).unwrap(), 100, true).is_err());
    }

    #[test]
    fn divergence() {
        let a = eps_rho(3, 10, 0.499).unwrap();
        let b = eps_rho(3, 10, 0.4999).unwrap();
        assert!(b > a && a > 1e3 / 10.0);
        assert!(matches!(eps_rho(3, 10, 0.5), Err(Error::BoundDiverges { .. })));
        let p = ConfusionMatrix::from_rows(&[vec![0.5, 0.1], vec![0.5, 0.9]]).unwrap();
        assert!(matches!(
            variance_bounds(&p, &Prevalence::uniform(2).unwrap(), 10, false),
            Err(Error::BoundDiverges { .. })
        ));
    }

    #[test]
    fn weight_multipliers() {
        assert_eq!(weight_multiplier(&DMatrix::identity(3, 3)).unwrap(), 1.0);
        assert!((weight_multiplier(&dmatrix![4.0, 0.0; 0.0, 1.0]).unwrap() - 16.0).abs() < 1e-12);
        assert!((weight_multiplier(&dmatrix![2.0, 1.0; 1.0, 2.0]).unwrap() - 9.0).abs() < 1e-12);
        assert!(weight_multiplier(&dmatrix![1.0, 2.0; 0.0, 1.0]).is_err());
        assert!(weight_multiplier(&dmatrix![1.0, 2.0; 2.0, 1.0]).is_err());
        assert!((weighted_variance_bound(&dmatrix![4.0, 0.0; 0.0, 1.0], 0.01).unwrap() - 0.16).abs() < 1e-14);
    }

    #[test]
    fn prevalence_validation() {
        assert!(matches!(Prevalence::new(vec![0.6, 0.6]), Err(Error::InvalidPrevalence(m)) if m.contains("does not sum to 1")));
        assert!(Prevalence::new(vec![1.2, -0.2]).is_err());
        assert!(serde_json::from_str::<Prevalence>("[0.25, 0.75]").is_ok());
        assert!(serde_json::from_str::<Prevalence>("[0.25, 0.25]").is_err());
    }
}
