//! Confusion matrices induced by partitions, their empirical estimates, and
//! Gershgorin diagnostics.
//!
//! `P[(j, k)]` is the probability that a class-`k` sample lands in domain
//! `D_j`, so `P` is column-stochastic.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::densities::{ClassModel, Density};
use crate::error::{Error, Result};
use crate::integrate::QuadSettings;
use crate::partitions::Partition;
use crate::regions::{self, GaussianPair2d, Interval};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    Quadrature,
    MonteCarlo,
    Empirical,
}

/// How region masses are integrated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegrationConfig {
    /// Forces a method; otherwise the cheapest exact path is chosen.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    pub mc_samples: usize,
    pub seed: u64,
    pub quad_tol: f64,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        IntegrationConfig {
            method: None,
            mc_samples: 1_000_000,
            seed: 0,
            quad_tol: 1e-10,
        }
    }
}

impl IntegrationConfig {
    pub(crate) fn quad_settings(&self) -> QuadSettings {
        QuadSettings {
            abs_tol: self.quad_tol,
            rel_tol: self.quad_tol,
            max_intervals: 8000,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.quad_tol > 0.0 && self.quad_tol < 1e-3) {
            return Err(Error::param("integration.quad_tol", "must lie in (0, 1e-3)"));
        }
        if self.mc_samples == 0 {
            return Err(Error::param("integration.mc_samples", "must be positive"));
        }
        Ok(())
    }

    fn mc_tolerance(&self) -> f64 {
        3.0 * (0.25 / self.mc_samples as f64).sqrt()
    }
}

/// A column-stochastic confusion matrix with the accuracy it was computed to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    #[serde(with = "rows")]
    entries: DMatrix<f64>,
    column_tolerance: f64,
    method: Method,
}

mod rows {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        crate::densities::matrix_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        let n = rows.len();
        crate::densities::matrix_from_rows(&rows, n, "entries").map_err(serde::de::Error::custom)
    }
}

impl ConfusionMatrix {
    /// Validates shape, entry range and column sums.
    pub fn new(entries: DMatrix<f64>, column_tolerance: f64, method: Method) -> Result<Self> {
        let c = entries.nrows();
        if c < 2 || entries.ncols() != c {
            return Err(Error::ShapeMismatch(format!(
                "confusion matrix must be square with c >= 2, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if !(column_tolerance >= 0.0 && column_tolerance.is_finite()) {
            return Err(Error::param("column_tolerance", "must be finite and non-negative"));
        }
        for ((j, k), v) in entries.iter().enumerate().map(|(i, v)| ((i % c, i / c), v)) {
            if !(v.is_finite() && *v >= -column_tolerance && *v <= 1.0 + column_tolerance) {
                return Err(Error::param(format!("P[{j},{k}]"), format!("{v} outside [0, 1]")));
            }
        }
        for k in 0..c {
            let sum = entries.column(k).sum();
            if (sum - 1.0).abs() > column_tolerance.max(1e-12) {
                return Err(Error::param(
                    format!("P[.,{k}]"),
                    format!("column sums to {sum}, not 1 within {column_tolerance:e}"),
                ));
            }
        }
        let entries = entries.map(|v| v.clamp(0.0, 1.0));
        Ok(ConfusionMatrix { entries, column_tolerance, method })
    }

    /// Exact matrix from rows, e.g. for hand-written examples.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = crate::densities::matrix_from_rows(rows, rows.len(), "P")?;
        ConfusionMatrix::new(m, 1e-12, Method::ClosedForm)
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn c(&self) -> usize {
        self.entries.nrows()
    }

    pub fn column_tolerance(&self) -> f64 {
        self.column_tolerance
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.c()).map(|k| self.entries[(k, k)]).collect()
    }

    /// Gershgorin radii `1 - P[k,k]`.
    pub fn radii(&self) -> Vec<f64> {
        self.diagonal().iter().map(|d| 1.0 - d).collect()
    }

    pub fn rho_max(&self) -> f64 {
        self.radii().into_iter().fold(0.0, f64::max)
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    /// `max |P - P^T|` entrywise.
    pub fn asymmetry(&self) -> f64 {
        (&self.entries - self.entries.transpose()).amax()
    }
}

/// Confusion matrix of `part` under `model`.
///
/// One-dimensional models are split into labelled intervals whose masses
/// come from closed-form CDFs when every density has one, adaptive
/// quadrature otherwise. Two 2D Gaussians under a likelihood-ratio rule use
/// the semi-analytic conditional-normal path. Anything else falls back to
/// seeded Monte Carlo with `cfg.mc_samples` draws per class.
pub fn confusion_matrix(
    model: &ClassModel,
    part: &Partition,
    cfg: &IntegrationConfig,
) -> Result<ConfusionMatrix> {
    cfg.validate()?;
    part.validate(model)?;
    if let Some(k) = model.densities().position(|d| matches!(d, Density::Empirical { .. })) {
        return Err(Error::Unsupported(format!(
            "class {k} is empirical; use the empirical confusion estimator"
        )));
    }
    let c = model.c();
    let forced = cfg.method;
    if forced == Some(Method::Empirical) {
        return Err(Error::Unsupported("empirical method needs labelled samples".into()));
    }

    if forced != Some(Method::MonteCarlo) {
        if model.dim() == 1 {
            return one_dimensional(model, part, cfg);
        }
        if let Some(p) = gaussian_pair_2d(model, part, cfg)? {
            return Ok(p);
        }
        if forced.is_some() {
            return Err(Error::Unsupported(format!(
                "{forced:?} integration for this {}D model and partition",
                model.dim()
            )));
        }
    }

    let m = regions::monte_carlo_fractions(
        model,
        |r| part.assign_unchecked(model, r),
        c,
        cfg.mc_samples,
        cfg.seed,
    )?;
    ConfusionMatrix::new(m, cfg.mc_tolerance(), Method::MonteCarlo)
}

fn one_dimensional(
    model: &ClassModel,
    part: &Partition,
    cfg: &IntegrationConfig,
) -> Result<ConfusionMatrix> {
    let closed = model.densities().all(Density::has_closed_form_cdf);
    let method = match cfg.method {
        Some(Method::ClosedForm) if !closed => {
            return Err(Error::Unsupported("closed-form masses for this model".into()))
        }
        Some(Method::Quadrature) => Method::Quadrature,
        _ if closed => Method::ClosedForm,
        _ => Method::Quadrature,
    };
    let intervals = match part {
        Partition::CutPoints1D { cuts, order } => cut_intervals(cuts, order.as_deref()),
        _ => {
            let (window, breaks) = regions::model_breaks(model);
            regions::label_intervals(|x| part.assign_unchecked(model, &[x]), window, &breaks)
        }
    };
    let quad = (method == Method::Quadrature).then(|| cfg.quad_settings());
    let m = regions::interval_masses(model, &intervals, |l| l, model.c(), quad)?;
    let floor = if method == Method::ClosedForm { 1e-12 } else { 10.0 * cfg.quad_tol };
    let tol = column_deviation(&m).max(floor);
    ConfusionMatrix::new(m, tol, method)
}

pub(crate) fn cut_intervals(cuts: &[f64], order: Option<&[usize]>) -> Vec<Interval> {
    let label = |i: usize| order.map_or(i, |o| o[i]);
    let mut out = Vec::with_capacity(cuts.len() + 1);
    let mut lo = f64::NEG_INFINITY;
    for (i, &x) in cuts.iter().enumerate() {
        out.push(Interval { lo, hi: x, label: label(i) });
        lo = x;
    }
    out.push(Interval { lo, hi: f64::INFINITY, label: label(cuts.len()) });
    out
}

fn column_deviation(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols()).map(|k| (m.column(k).sum() - 1.0).abs()).fold(0.0, f64::max)
}

/// Semi-analytic masses for a likelihood-ratio rule between two 2D
/// Gaussians; `None` when the pair does not qualify.
fn gaussian_pair_2d(
    model: &ClassModel,
    part: &Partition,
    cfg: &IntegrationConfig,
) -> Result<Option<ConfusionMatrix>> {
    let (Density::GaussianNd(g0), Density::GaussianNd(g1)) = (model.density(0), model.density(1))
    else {
        return Ok(None);
    };
    if model.c() != 2 || model.dim() != 2 {
        return Ok(None);
    }
    let (t, tie) = match part {
        Partition::RatioThreshold { t, boundary_to, .. } => (*t, *boundary_to),
        Partition::Bayes { q } if q[0] > 0.0 && q[1] > 0.0 => (q[1] / q[0], 0),
        _ => return Ok(None),
    };
    if t == 0.0 {
        return Ok(None);
    }
    let masses = GaussianPair2d::new(g0, g1, t.ln())?.masses(cfg.quad_settings())?;
    let mut m = DMatrix::zeros(2, 2);
    for k in 0..2 {
        m[(0, k)] = masses[k][0];
        m[(1, k)] = masses[k][1];
        m[(tie, k)] += masses[k][2];
    }
    let tol = column_deviation(&m).max(10.0 * cfg.quad_tol);
    ConfusionMatrix::new(m, tol, Method::Quadrature).map(Some)
}

/// Empirical estimate `P~[(j, k)] = #{i : r_{i,k} in D_j} / m_k` from
/// labelled samples, one list per class.
pub fn empirical_confusion(
    labeled: &[Vec<Vec<f64>>],
    part: &Partition,
    model: &ClassModel,
) -> Result<ConfusionMatrix> {
    let c = model.c();
    if labeled.len() != c {
        return Err(Error::ShapeMismatch(format!(
            "{} labelled sample lists for {c} classes",
            labeled.len()
        )));
    }
    part.validate(model)?;
    if part.needs_evaluation() && !model.is_evaluable() {
        return Err(Error::Unsupported(
            "likelihood-based partition over an empirical density".into(),
        ));
    }
    let mut m = DMatrix::zeros(c, c);
    let mut tol: f64 = 0.0;
    for (k, points) in labeled.iter().enumerate() {
        if points.is_empty() {
            return Err(Error::EmptyClass { class: k });
        }
        for r in points {
            if r.len() != model.dim() {
                return Err(Error::DimensionMismatch { expected: model.dim(), got: r.len() });
            }
            let j = part.assign_unchecked(model, r);
            if j >= c {
                return Err(Error::param("partition", format!("predicate returned class {j}")));
            }
            m[(j, k)] += 1.0;
        }
        let mk = points.len() as f64;
        m.column_mut(k).iter_mut().for_each(|v| *v /= mk);
        tol = tol.max(3.0 / (2.0 * mk.sqrt()));
    }
    ConfusionMatrix::new(m, tol, Method::Empirical)
}

/// Gershgorin radii and the spectral quantities they bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GershgorinReport {
    pub radii: Vec<f64>,
    pub rho_max: f64,
    /// First column attaining `rho_max`.
    pub argmax_column: usize,
    pub diagonally_dominant: bool,
    pub spectral_radius_i_minus_p: f64,
    pub min_abs_eigenvalue: f64,
    /// `||P^-1||_2^2`, infinite for singular `P`.
    pub inv_two_norm_sq: f64,
}

/// Dense eigen and singular value diagnostics; intended for `c <= 50`.
pub fn gershgorin(p: &ConfusionMatrix) -> GershgorinReport {
    let radii = p.radii();
    let (argmax_column, rho_max) = radii
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (k, r)| if r > best.1 { (k, r) } else { best });
    let eig = p.entries.complex_eigenvalues();
    let spectral = eig.iter().map(|l| (1.0 - l).norm()).fold(0.0, f64::max);
    let min_abs = eig.iter().map(|l| l.norm()).fold(f64::INFINITY, f64::min);
    let s_min = p
        .entries
        .singular_values()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    GershgorinReport {
        diagonally_dominant: radii.iter().all(|&r| r < 0.5),
        radii,
        rho_max,
        argmax_column,
        spectral_radius_i_minus_p: spectral,
        min_abs_eigenvalue: min_abs,
        inv_two_norm_sq: if s_min > 0.0 { 1.0 / (s_min * s_min) } else { f64::INFINITY },
    }
}

/// `P^-1` by LU with one step of iterative refinement. Refuses matrices
/// that are not column diagonally dominant unless `force` is set.
pub fn invert(p: &ConfusionMatrix, force: bool) -> Result<DMatrix<f64>> {
    if !force {
        if let Some(k) = (0..p.c()).find(|&k| p.entries[(k, k)] <= 0.5) {
            return Err(Error::NotDiagonallyDominant { column: k, diagonal: p.entries[(k, k)] });
        }
    }
    let c = p.c();
    let a = &p.entries;
    let mut x = a.clone().lu().try_inverse().ok_or(Error::Singular)?;
    let residual = DMatrix::identity(c, c) - a * &x;
    x += &x * residual;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    Ok(x)
}

/// Pass/fail record of the structural matrix properties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    /// Non-negative entries and unit column sums within tolerance.
    pub p1_left_stochastic: bool,
    pub p1_max_column_deviation: f64,
    /// Columns of `I - P` sum to zero.
    pub p2_zero_column_sums: bool,
    pub p3_diagonally_dominant: bool,
    /// All eigenvalues have positive real part.
    pub p4_positive_real_spectrum: bool,
    pub p5_spectral_radius_bound: bool,
    pub p6_min_eigenvalue_bound: bool,
    pub inverse_norm_bound: bool,
    pub gershgorin: GershgorinReport,
}

impl PropertyReport {
    pub fn all_hold(&self) -> bool {
        self.p1_left_stochastic
            && self.p2_zero_column_sums
            && self.p3_diagonally_dominant
            && self.p4_positive_real_spectrum
            && self.p5_spectral_radius_bound
            && self.p6_min_eigenvalue_bound
            && self.inverse_norm_bound
    }
}

/// Checks the matrix properties that the uniform bounds rest on. The last
/// three bounds are only asserted for diagonally dominant matrices.
pub fn validate(p: &ConfusionMatrix) -> PropertyReport {
    let g = gershgorin(p);
    let c = p.c() as f64;
    let tol = p.column_tolerance.max(1e-12);
    let dev = column_deviation(&p.entries);
    let min_re = p
        .entries
        .complex_eigenvalues()
        .iter()
        .map(|l| l.re)
        .fold(f64::INFINITY, f64::min);
    let dominant = g.diagonally_dominant;
    let rho = g.rho_max;
    PropertyReport {
        p1_left_stochastic: dev <= tol && p.entries.iter().all(|&v| v >= 0.0),
        p1_max_column_deviation: dev,
        p2_zero_column_sums: dev <= tol,
        p3_diagonally_dominant: dominant,
        p4_positive_real_spectrum: min_re > 0.0,
        p5_spectral_radius_bound: dominant && g.spectral_radius_i_minus_p <= 2.0 * rho + 1e-9,
        p6_min_eigenvalue_bound: dominant && g.min_abs_eigenvalue >= 1.0 - 2.0 * rho - 1e-9,
        inverse_norm_bound: dominant
            && g.inv_two_norm_sq <= c / ((1.0 - 2.0 * rho) * (1.0 - 2.0 * rho)) + 1e-9,
        gershgorin: g,
    }
}
