//! Class-conditional probability densities.
//!
//! A [`Density`] is one of a small set of analytic families, a tabulated
//! grid, or a bag of empirical points. Every evaluable variant can report a
//! support window (a box holding all but a negligible tail of its mass), its
//! 1D breakpoints, and in one dimension an exact interval mass. Sampling is
//! deterministic given a seed.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{
    self, normal_cdf, normal_cdf_integral, normal_pdf, normal_quantile, normal_sf, QuadSettings,
};

/// Half-width of Gaussian support windows, in standard deviations.
const GAUSS_WINDOW_SDS: f64 = 8.5;
/// Upper tail mass left outside a Weibull support window.
const WEIBULL_TAIL: f64 = 1e-14;
/// Knots per axis for numerically convolved grids.
pub const CONVOLUTION_KNOTS: usize = 2048;

/// One flat piece of a piecewise-uniform density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub lo: f64,
    pub hi: f64,
    pub height: f64,
}

impl Segment {
    fn mass(&self) -> f64 {
        self.height * (self.hi - self.lo)
    }

    fn overlap(&self, a: f64, b: f64) -> f64 {
        (b.min(self.hi) - a.max(self.lo)).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Nearest,
    #[default]
    Multilinear,
}

/// Multivariate normal with cached Cholesky factor and precision matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GaussianNdSpec", into = "GaussianNdSpec")]
pub struct GaussianNd {
    mean: Vec<f64>,
    covariance: DMatrix<f64>,
    chol: DMatrix<f64>,
    precision: DMatrix<f64>,
    log_norm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GaussianNdSpec {
    mean: Vec<f64>,
    covariance: Vec<Vec<f64>>,
}

impl TryFrom<GaussianNdSpec> for GaussianNd {
    type Error = Error;
    fn try_from(spec: GaussianNdSpec) -> Result<Self> {
        let n = spec.mean.len();
        GaussianNd::new(spec.mean, matrix_from_rows(&spec.covariance, n, "covariance")?)
    }
}

impl From<GaussianNd> for GaussianNdSpec {
    fn from(g: GaussianNd) -> Self {
        GaussianNdSpec {
            covariance: matrix_rows(&g.covariance),
            mean: g.mean,
        }
    }
}

impl GaussianNd {
    pub fn new(mean: Vec<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if n == 0 {
            return Err(Error::param("mean", "must have at least one entry"));
        }
        if covariance.nrows() != n || covariance.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: covariance.nrows(),
            });
        }
        if mean.iter().chain(covariance.iter()).any(|v| !v.is_finite()) {
            return Err(Error::param("covariance", "entries must be finite"));
        }
        if !is_symmetric(&covariance, 1e-12) {
            return Err(Error::param("covariance", "must be symmetric"));
        }
        let chol = covariance
            .clone()
            .cholesky()
            .ok_or_else(|| Error::param("covariance", "must be positive definite"))?;
        let l = chol.l();
        let log_det: f64 = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let precision = chol.inverse();
        let log_norm = -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
        Ok(GaussianNd {
            mean,
            covariance,
            chol: l,
            precision,
            log_norm,
        })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn ln_pdf(&self, r: &[f64]) -> f64 {
        let d = DVector::from_iterator(r.len(), r.iter().zip(&self.mean).map(|(x, m)| x - m));
        let quad = (&self.precision * &d).dot(&d);
        self.log_norm - 0.5 * quad
    }
}

/// Tabulated density on a tensor-product grid. Values are stored row-major
/// (last axis fastest) and vanish outside the knot range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct GridDensity {
    axes: Vec<Vec<f64>>,
    values: Vec<f64>,
    interpolation: Interpolation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GridSpec {
    axes: Vec<Vec<f64>>,
    values: Vec<f64>,
    #[serde(default)]
    interpolation: Interpolation,
}

impl TryFrom<GridSpec> for GridDensity {
    type Error = Error;
    fn try_from(s: GridSpec) -> Result<Self> {
        GridDensity::new(s.axes, s.values, s.interpolation)
    }
}

impl From<GridDensity> for GridSpec {
    fn from(g: GridDensity) -> Self {
        GridSpec {
            axes: g.axes,
            values: g.values,
            interpolation: g.interpolation,
        }
    }
}

impl GridDensity {
    /// Builds a grid, requiring total mass within 1e-6 of one.
    pub fn new(axes: Vec<Vec<f64>>, values: Vec<f64>, interpolation: Interpolation) -> Result<Self> {
        let g = Self::unchecked(axes, values, interpolation)?;
        let mass = g.mass();
        if (mass - 1.0).abs() > 1e-6 {
            return Err(Error::param("values", format!("grid mass {mass} is not 1")));
        }
        Ok(g)
    }

    /// Builds a grid and rescales its values to unit mass.
    pub fn normalized(
        axes: Vec<Vec<f64>>,
        values: Vec<f64>,
        interpolation: Interpolation,
    ) -> Result<Self> {
        let mut g = Self::unchecked(axes, values, interpolation)?;
        let mass = g.mass();
        if mass <= 0.0 {
            return Err(Error::param("values", "grid has zero mass"));
        }
        g.values.iter_mut().for_each(|v| *v /= mass);
        Ok(g)
    }

    fn unchecked(axes: Vec<Vec<f64>>, values: Vec<f64>, interpolation: Interpolation) -> Result<Self> {
        if axes.is_empty() || axes.len() > 3 {
            return Err(Error::param("axes", "grid dimension must be 1, 2 or 3"));
        }
        for (i, ax) in axes.iter().enumerate() {
            if ax.len() < 2 {
                return Err(Error::param(format!("axes[{i}]"), "needs at least two knots"));
            }
            if ax.windows(2).any(|w| !(w[1] > w[0])) || ax.iter().any(|x| !x.is_finite()) {
                return Err(Error::param(format!("axes[{i}]"), "knots must be finite and strictly increasing"));
            }
        }
        let expected: usize = axes.iter().map(Vec::len).product();
        if values.len() != expected {
            return Err(Error::param(
                "values",
                format!("expected {expected} values, got {}", values.len()),
            ));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::param("values", "must be finite and non-negative"));
        }
        Ok(GridDensity {
            axes,
            values,
            interpolation,
        })
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    fn strides(&self) -> Vec<usize> {
        let n = self.axes.len();
        let mut s = vec![1; n];
        for i in (0..n.saturating_sub(1)).rev() {
            s[i] = s[i + 1] * self.axes[i + 1].len();
        }
        s
    }

    /// Trapezoid weight of knot `i` on axis `ax`; also the width of its
    /// nearest-neighbour cell.
    fn knot_weight(ax: &[f64], i: usize) -> f64 {
        let last = ax.len() - 1;
        let left = if i == 0 { ax[0] } else { ax[i - 1] };
        let right = if i == last { ax[last] } else { ax[i + 1] };
        0.5 * (right - left)
    }

    /// Exact integral of the interpolant.
    fn mass(&self) -> f64 {
        let strides = self.strides();
        let mut total = 0.0;
        for (flat, &v) in self.values.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let mut w = v;
            let mut rem = flat;
            for (ax, &st) in self.axes.iter().zip(&strides) {
                let i = rem / st;
                rem %= st;
                w *= Self::knot_weight(ax, i);
            }
            total += w;
        }
        total
    }

    fn eval(&self, r: &[f64]) -> f64 {
        let strides = self.strides();
        let n = self.axes.len();
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..n {
            let ax = &self.axes[a];
            let x = r[a];
            if !(x >= ax[0] && x <= ax[ax.len() - 1]) {
                return 0.0;
            }
            let i = (ax.partition_point(|&k| k <= x)).clamp(1, ax.len() - 1) - 1;
            base[a] = i;
            frac[a] = (x - ax[i]) / (ax[i + 1] - ax[i]);
        }
        match self.interpolation {
            Interpolation::Nearest => {
                let flat: usize = (0..n)
                    .map(|a| {
                        let i = if frac[a] > 0.5 { base[a] + 1 } else { base[a] };
                        i * strides[a]
                    })
                    .sum();
                self.values[flat]
            }
            Interpolation::Multilinear => {
                let mut acc = 0.0;
                for corner in 0..(1usize << n) {
                    let mut w = 1.0;
                    let mut flat = 0;
                    for a in 0..n {
                        let up = (corner >> a) & 1 == 1;
                        w *= if up { frac[a] } else { 1.0 - frac[a] };
                        flat += (base[a] + usize::from(up)) * strides[a];
                    }
                    if w > 0.0 {
                        acc += w * self.values[flat];
                    }
                }
                acc
            }
        }
    }

    /// Exact CDF of a 1D grid interpolant.
    fn cdf_1d(&self, x: f64) -> f64 {
        let ax = &self.axes[0];
        let v = &self.values;
        if x <= ax[0] {
            return 0.0;
        }
        let last = ax.len() - 1;
        let x = x.min(ax[last]);
        let mut acc = 0.0;
        for i in 0..last {
            let (a, b) = (ax[i], ax[i + 1]);
            let h = b - a;
            if x >= b {
                acc += 0.5 * (v[i] + v[i + 1]) * h;
                continue;
            }
            let d = x - a;
            acc += match self.interpolation {
                Interpolation::Multilinear => v[i] * d + (v[i + 1] - v[i]) * d * d / (2.0 * h),
                Interpolation::Nearest => {
                    let half = 0.5 * h;
                    if d <= half {
                        v[i] * d
                    } else {
                        v[i] * half + v[i + 1] * (d - half)
                    }
                }
            };
            break;
        }
        acc
    }
}

/// A class-conditional probability density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Density {
    #[serde(rename = "gaussian")]
    Gaussian1D { mean: f64, sd: f64 },
    #[serde(rename = "gaussian_nd")]
    GaussianNd(GaussianNd),
    Weibull { shape: f64, scale: f64 },
    #[serde(rename = "uniform")]
    UniformInterval { lo: f64, hi: f64 },
    PiecewiseUniform { segments: Vec<Segment> },
    /// Piecewise-uniform density smoothed by a centred normal with the given
    /// standard deviation.
    ConvolvedUniform { segments: Vec<Segment>, sd: f64 },
    Mixture {
        weights: Vec<f64>,
        components: Vec<Density>,
    },
    Grid(GridDensity),
    Empirical { points: Vec<Vec<f64>> },
}

impl Density {
    pub fn gaussian(mean: f64, sd: f64) -> Result<Self> {
        let d = Density::Gaussian1D { mean, sd };
        d.validate()?;
        Ok(d)
    }

    pub fn gaussian_nd(mean: Vec<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        Ok(Density::GaussianNd(GaussianNd::new(mean, covariance)?))
    }

    pub fn weibull(shape: f64, scale: f64) -> Result<Self> {
        let d = Density::Weibull { shape, scale };
        d.validate()?;
        Ok(d)
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        let d = Density::UniformInterval { lo, hi };
        d.validate()?;
        Ok(d)
    }

    pub fn piecewise_uniform(segments: Vec<Segment>) -> Result<Self> {
        let d = Density::PiecewiseUniform { segments };
        d.validate()?;
        Ok(d)
    }

    pub fn mixture(weights: Vec<f64>, components: Vec<Density>) -> Result<Self> {
        let d = Density::Mixture { weights, components };
        d.validate()?;
        Ok(d)
    }

    pub fn empirical(points: Vec<Vec<f64>>) -> Result<Self> {
        let d = Density::Empirical { points };
        d.validate()?;
        Ok(d)
    }

    /// Checks parameter constraints. Mass normalisation is checked
    /// analytically where the family allows it.
    pub fn validate(&self) -> Result<()> {
        match self {
            Density::Gaussian1D { mean, sd } => {
                if !mean.is_finite() {
                    return Err(Error::param("mean", "must be finite"));
                }
                if !(sd.is_finite() && *sd > 0.0) {
                    return Err(Error::param("sd", format!("must be positive, got {sd}")));
                }
            }
            Density::GaussianNd(_) | Density::Grid(_) => {}
            Density::Weibull { shape, scale } => {
                if !(shape.is_finite() && *shape > 0.0) {
                    return Err(Error::param("shape", format!("must be positive, got {shape}")));
                }
                if !(scale.is_finite() && *scale > 0.0) {
                    return Err(Error::param("scale", format!("must be positive, got {scale}")));
                }
            }
            Density::UniformInterval { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::param("lo", format!("need finite lo < hi, got [{lo}, {hi}]")));
                }
            }
            Density::PiecewiseUniform { segments } => validate_segments(segments)?,
            Density::ConvolvedUniform { segments, sd } => {
                validate_segments(segments)?;
                if !(sd.is_finite() && *sd > 0.0) {
                    return Err(Error::param("sd", format!("must be positive, got {sd}")));
                }
            }
            Density::Mixture { weights, components } => {
                if weights.is_empty() || weights.len() != components.len() {
                    return Err(Error::param(
                        "weights",
                        "need one weight per component and at least one component",
                    ));
                }
                if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                    return Err(Error::param("weights", "must be non-negative"));
                }
                let sum: f64 = weights.iter().sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(Error::param("weights", format!("sum to {sum}, not 1")));
                }
                let n = components[0].dim();
                for (i, c) in components.iter().enumerate() {
                    c.validate()?;
                    if matches!(c, Density::Empirical { .. }) {
                        return Err(Error::param(
                            format!("components[{i}]"),
                            "empirical components are not allowed in a mixture",
                        ));
                    }
                    if c.dim() != n {
                        return Err(Error::DimensionMismatch { expected: n, got: c.dim() });
                    }
                }
            }
            Density::Empirical { points } => {
                if points.is_empty() {
                    return Err(Error::param("points", "empirical density needs points"));
                }
                let n = points[0].len();
                if n == 0 {
                    return Err(Error::param("points", "points must have at least one coordinate"));
                }
                if points.iter().any(|p| p.len() != n) {
                    return Err(Error::param("points", "all points must share one dimension"));
                }
                if points.iter().flatten().any(|x| !x.is_finite()) {
                    return Err(Error::param("points", "coordinates must be finite"));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            Density::GaussianNd(g) => g.dim(),
            Density::Grid(g) => g.dim(),
            Density::Mixture { components, .. } => components.first().map_or(1, Density::dim),
            Density::Empirical { points } => points.first().map_or(1, Vec::len),
            _ => 1,
        }
    }

    pub fn is_evaluable(&self) -> bool {
        !matches!(self, Density::Empirical { .. })
    }

    fn check_point(&self, r: &[f64]) -> Result<()> {
        if !self.is_evaluable() {
            return Err(Error::Unsupported(
                "pointwise evaluation of an empirical density".into(),
            ));
        }
        if r.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: r.len(),
            });
        }
        Ok(())
    }

    /// Density value `p(r)`.
    pub fn eval(&self, r: &[f64]) -> Result<f64> {
        self.check_point(r)?;
        Ok(self.eval_unchecked(r))
    }

    /// Natural log of the density; `-inf` outside the support.
    pub fn ln_eval(&self, r: &[f64]) -> Result<f64> {
        self.check_point(r)?;
        Ok(self.ln_eval_unchecked(r))
    }

    pub(crate) fn eval_unchecked(&self, r: &[f64]) -> f64 {
        match self {
            Density::Gaussian1D { mean, sd } => normal_pdf((r[0] - mean) / sd) / sd,
            Density::GaussianNd(g) => g.ln_pdf(r).exp(),
            Density::Weibull { shape, scale } => {
                let x = r[0];
                if x < 0.0 {
                    return 0.0;
                }
                let z = x / scale;
                shape / scale * z.powf(shape - 1.0) * (-z.powf(*shape)).exp()
            }
            Density::UniformInterval { lo, hi } => {
                if r[0] >= *lo && r[0] <= *hi {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            Density::PiecewiseUniform { segments } => segments
                .iter()
                .filter(|s| r[0] >= s.lo && r[0] <= s.hi)
                .map(|s| s.height)
                .fold(0.0, f64::max),
            Density::ConvolvedUniform { segments, sd } => segments
                .iter()
                .map(|s| s.height * smoothed_box(r[0], s.lo, s.hi, *sd))
                .sum(),
            Density::Mixture { weights, components } => weights
                .iter()
                .zip(components)
                .map(|(w, c)| w * c.eval_unchecked(r))
                .sum(),
            Density::Grid(g) => g.eval(r),
            Density::Empirical { .. } => f64::NAN,
        }
    }

    pub(crate) fn ln_eval_unchecked(&self, r: &[f64]) -> f64 {
        match self {
            Density::Gaussian1D { mean, sd } => {
                let z = (r[0] - mean) / sd;
                -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
            Density::GaussianNd(g) => g.ln_pdf(r),
            Density::Weibull { shape, scale } => {
                let x = r[0];
                if x < 0.0 {
                    return f64::NEG_INFINITY;
                }
                let z = x / scale;
                (shape / scale).ln() + (shape - 1.0) * z.ln() - z.powf(*shape)
            }
            Density::Mixture { weights, components } => {
                let logs: Vec<f64> = weights
                    .iter()
                    .zip(components)
                    .filter(|(w, _)| **w > 0.0)
                    .map(|(w, c)| w.ln() + c.ln_eval_unchecked(r))
                    .collect();
                log_sum_exp(&logs)
            }
            _ => self.eval_unchecked(r).ln(),
        }
    }

    /// Axis-aligned box holding all but a negligible tail (< 1e-8) of the mass.
    pub fn support_window(&self) -> Vec<(f64, f64)> {
        match self {
            Density::Gaussian1D { mean, sd } => {
                vec![(mean - GAUSS_WINDOW_SDS * sd, mean + GAUSS_WINDOW_SDS * sd)]
            }
            Density::GaussianNd(g) => g
                .mean
                .iter()
                .enumerate()
                .map(|(i, m)| {
                    let s = g.covariance[(i, i)].sqrt();
                    (m - GAUSS_WINDOW_SDS * s, m + GAUSS_WINDOW_SDS * s)
                })
                .collect(),
            Density::Weibull { shape, scale } => {
                vec![(0.0, scale * (-WEIBULL_TAIL.ln()).powf(1.0 / shape))]
            }
            Density::UniformInterval { lo, hi } => vec![(*lo, *hi)],
            Density::PiecewiseUniform { segments } => vec![segment_hull(segments)],
            Density::ConvolvedUniform { segments, sd } => {
                let (lo, hi) = segment_hull(segments);
                vec![(lo - GAUSS_WINDOW_SDS * sd, hi + GAUSS_WINDOW_SDS * sd)]
            }
            Density::Mixture { weights, components } => {
                let mut hull: Option<Vec<(f64, f64)>> = None;
                for (w, c) in weights.iter().zip(components) {
                    if *w == 0.0 {
                        continue;
                    }
                    let win = c.support_window();
                    hull = Some(match hull {
                        None => win,
                        Some(h) => h
                            .iter()
                            .zip(&win)
                            .map(|(a, b)| (a.0.min(b.0), a.1.max(b.1)))
                            .collect(),
                    });
                }
                hull.unwrap_or_else(|| components[0].support_window())
            }
            Density::Grid(g) => g.axes.iter().map(|ax| (ax[0], ax[ax.len() - 1])).collect(),
            Density::Empirical { points } => {
                let n = points[0].len();
                (0..n)
                    .map(|i| {
                        points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                            (lo.min(p[i]), hi.max(p[i]))
                        })
                    })
                    .collect()
            }
        }
    }

    /// Points where a 1D density (or one of its derivatives) is discontinuous.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = match self {
            Density::Weibull { .. } => vec![0.0],
            Density::UniformInterval { lo, hi } => vec![*lo, *hi],
            Density::PiecewiseUniform { segments } => {
                segments.iter().flat_map(|s| [s.lo, s.hi]).collect()
            }
            Density::Mixture { components, .. } => {
                components.iter().flat_map(Density::breakpoints).collect()
            }
            Density::Grid(g) if g.dim() == 1 => g.axes[0].clone(),
            _ => Vec::new(),
        };
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// Whether [`Density::interval_mass`] is available in closed form.
    pub fn has_closed_form_cdf(&self) -> bool {
        match self {
            Density::Gaussian1D { .. }
            | Density::Weibull { .. }
            | Density::UniformInterval { .. }
            | Density::PiecewiseUniform { .. }
            | Density::ConvolvedUniform { .. } => true,
            Density::Grid(g) => g.dim() == 1,
            Density::Mixture { components, .. } => {
                components.iter().all(Density::has_closed_form_cdf)
            }
            _ => false,
        }
    }

    /// Probability mass on `[a, b]` for a 1D density. Closed form where
    /// available, adaptive quadrature otherwise.
    pub fn interval_mass(&self, a: f64, b: f64) -> Result<f64> {
        if self.dim() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: self.dim() });
        }
        if !self.is_evaluable() {
            return Err(Error::Unsupported("interval mass of an empirical density".into()));
        }
        if !(b > a) {
            return Ok(0.0);
        }
        Ok(match self {
            Density::Gaussian1D { mean, sd } => gaussian_interval((a - mean) / sd, (b - mean) / sd),
            Density::Weibull { shape, scale } => {
                let sf = |x: f64| if x <= 0.0 { 1.0 } else { (-(x / scale).powf(*shape)).exp() };
                (sf(a) - sf(b)).max(0.0)
            }
            Density::UniformInterval { lo, hi } => {
                (b.min(*hi) - a.max(*lo)).max(0.0) / (hi - lo)
            }
            Density::PiecewiseUniform { segments } => {
                segments.iter().map(|s| s.height * s.overlap(a, b)).sum()
            }
            Density::ConvolvedUniform { segments, sd } => segments
                .iter()
                .map(|s| s.height * smoothed_box_mass(a, b, s.lo, s.hi, *sd))
                .sum(),
            Density::Mixture { weights, components } => {
                let mut acc = 0.0;
                for (w, c) in weights.iter().zip(components) {
                    if *w > 0.0 {
                        acc += w * c.interval_mass(a, b)?;
                    }
                }
                acc
            }
            Density::Grid(g) => (g.cdf_1d(b) - g.cdf_1d(a)).max(0.0),
            _ => self.quadrature_mass(a, b, QuadSettings::default())?,
        })
    }

    /// Mass on `[a, b]` by adaptive quadrature of the pointwise density.
    pub fn quadrature_mass(&self, a: f64, b: f64, settings: QuadSettings) -> Result<f64> {
        if self.dim() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: self.dim() });
        }
        if !self.is_evaluable() {
            return Err(Error::Unsupported("quadrature of an empirical density".into()));
        }
        let (lo, hi) = self.support_window()[0];
        let (a, b) = (a.max(lo), b.min(hi));
        if !(b > a) {
            return Ok(0.0);
        }
        let e = integrate::integrate_with_breaks(
            |x| self.eval_unchecked(&[x]),
            a,
            b,
            &self.breakpoints(),
            settings,
        )?;
        Ok(e.value)
    }

    /// 1D cumulative distribution function.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        let (lo, _) = self.support_window()[0];
        self.interval_mass(lo.min(x) - 1.0, x)
    }

    /// Total mass computed with the module's own integrator: adaptive
    /// quadrature in 1D, exact interpolant sums for grids, nested quadrature
    /// over the support window otherwise.
    pub fn total_mass(&self) -> Result<f64> {
        if !self.is_evaluable() {
            return Err(Error::Unsupported("mass of an empirical density".into()));
        }
        if let Density::Grid(g) = self {
            return Ok(g.mass());
        }
        let window = self.support_window();
        let settings = QuadSettings {
            abs_tol: 1e-13,
            rel_tol: 1e-12,
            max_intervals: 20_000,
        };
        if window.len() == 1 {
            let (lo, hi) = window[0];
            return self.quadrature_mass(lo, hi, settings);
        }
        if window.len() > 3 {
            return Err(Error::Unsupported("nested quadrature for dimension > 3".into()));
        }
        let f = |p: &[f64]| self.eval_unchecked(p);
        Ok(integrate::integrate_box(&f, &window, QuadSettings { abs_tol: 1e-12, ..settings })?.value)
    }

    /// Draws `count` i.i.d. points, deterministically from `seed`.
    pub fn sample(&self, seed: u64, count: usize) -> Result<Vec<Vec<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sampler = self.sampler()?;
        let n = self.dim();
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let mut p = vec![0.0; n];
            sampler.draw(&mut rng, &mut p);
            out.push(p);
        }
        Ok(out)
    }

    /// Prepares lookup tables for repeated draws.
    pub fn sampler(&self) -> Result<Sampler<'_>> {
        Sampler::new(self)
    }

    /// Convolution with a centred Gaussian noise kernel `N(0, scale^2 * shape)`.
    pub fn convolve_gaussian(&self, noise: &NoiseSpec) -> Result<Density> {
        if noise.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: noise.dim(),
            });
        }
        if noise.scale == 0.0 {
            return Ok(self.clone());
        }
        let var1 = || noise.scale * noise.scale * noise.shape[(0, 0)];
        match self {
            Density::Gaussian1D { mean, sd } => Ok(Density::Gaussian1D {
                mean: *mean,
                sd: (sd * sd + var1()).sqrt(),
            }),
            Density::GaussianNd(g) => {
                let cov = &g.covariance + noise.covariance();
                Ok(Density::GaussianNd(GaussianNd::new(g.mean.clone(), cov)?))
            }
            Density::UniformInterval { lo, hi } => Ok(Density::ConvolvedUniform {
                segments: vec![Segment {
                    lo: *lo,
                    hi: *hi,
                    height: 1.0 / (hi - lo),
                }],
                sd: var1().sqrt(),
            }),
            Density::PiecewiseUniform { segments } => Ok(Density::ConvolvedUniform {
                segments: segments.clone(),
                sd: var1().sqrt(),
            }),
            Density::ConvolvedUniform { segments, sd } => Ok(Density::ConvolvedUniform {
                segments: segments.clone(),
                sd: (sd * sd + var1()).sqrt(),
            }),
            Density::Mixture { weights, components } => Ok(Density::Mixture {
                weights: weights.clone(),
                components: components
                    .iter()
                    .map(|c| c.convolve_gaussian(noise))
                    .collect::<Result<_>>()?,
            }),
            Density::Weibull { .. } => self.convolve_numerically(var1().sqrt()),
            Density::Grid(g) if g.dim() == 1 => self.convolve_numerically(var1().sqrt()),
            Density::Grid(_) => Err(Error::Unsupported(
                "numerical convolution of grids with dimension > 1".into(),
            )),
            Density::Empirical { .. } => {
                Err(Error::Unsupported("convolution of an empirical density".into()))
            }
        }
    }

    /// Tabulates `int N_sd(r - x) p(x) dx` on a uniform grid spanning the
    /// support inflated by the kernel width.
    fn convolve_numerically(&self, sd: f64) -> Result<Density> {
        let (lo, hi) = self.support_window()[0];
        let reach = GAUSS_WINDOW_SDS * sd;
        let (a, b) = (lo - reach, hi + reach);
        let h = (b - a) / (CONVOLUTION_KNOTS - 1) as f64;
        let breaks = self.breakpoints();
        let settings = QuadSettings {
            abs_tol: 1e-13,
            rel_tol: 1e-11,
            max_intervals: 4000,
        };
        let mut knots = Vec::with_capacity(CONVOLUTION_KNOTS);
        let mut values = Vec::with_capacity(CONVOLUTION_KNOTS);
        for i in 0..CONVOLUTION_KNOTS {
            let r = if i + 1 == CONVOLUTION_KNOTS { b } else { a + i as f64 * h };
            let (xa, xb) = ((r - reach).max(lo), (r + reach).min(hi));
            let v = if xb > xa {
                let mut local = breaks.clone();
                local.push(r);
                integrate::integrate_with_breaks(
                    |x| normal_pdf((r - x) / sd) / sd * self.eval_unchecked(&[x]),
                    xa,
                    xb,
                    &local,
                    settings,
                )?
                .value
                .max(0.0)
            } else {
                0.0
            };
            knots.push(r);
            values.push(v);
        }
        Ok(Density::Grid(GridDensity::normalized(
            vec![knots],
            values,
            Interpolation::Multilinear,
        )?))
    }
}

fn validate_segments(segments: &[Segment]) -> Result<()> {
    if segments.is_empty() {
        return Err(Error::param("segments", "need at least one segment"));
    }
    for (i, s) in segments.iter().enumerate() {
        if !(s.lo.is_finite() && s.hi.is_finite() && s.lo < s.hi) {
            return Err(Error::param(format!("segments[{i}]"), "need finite lo < hi"));
        }
        if !(s.height.is_finite() && s.height >= 0.0) {
            return Err(Error::param(format!("segments[{i}]"), "height must be non-negative"));
        }
    }
    let mut sorted = segments.to_vec();
    sorted.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    if sorted.windows(2).any(|w| w[1].lo < w[0].hi) {
        return Err(Error::param("segments", "segments must be disjoint"));
    }
    let mass: f64 = segments.iter().map(Segment::mass).sum();
    if (mass - 1.0).abs() > 1e-9 {
        return Err(Error::param("segments", format!("total mass {mass} is not 1")));
    }
    Ok(())
}

fn segment_hull(segments: &[Segment]) -> (f64, f64) {
    segments
        .iter()
        .filter(|s| s.height > 0.0)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
            (lo.min(s.lo), hi.max(s.hi))
        })
}

pub(crate) fn log_sum_exp(logs: &[f64]) -> f64 {
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + logs.iter().map(|l| (l - m).exp()).sum::<f64>().ln()
}

/// Mass of a standard normal between z-scores `za <= zb`.
pub(crate) fn gaussian_interval(za: f64, zb: f64) -> f64 {
    if za > 0.0 {
        (normal_sf(za) - normal_sf(zb)).max(0.0)
    } else {
        (normal_cdf(zb) - normal_cdf(za)).max(0.0)
    }
}

/// `Phi((x - lo)/sd) - Phi((x - hi)/sd)`, evaluated on the side that avoids
/// cancellation.
fn smoothed_box(x: f64, lo: f64, hi: f64, sd: f64) -> f64 {
    let (za, zb) = ((x - hi) / sd, (x - lo) / sd);
    gaussian_interval(za, zb)
}

/// `int_a^b smoothed_box(x) dx`.
fn smoothed_box_mass(a: f64, b: f64, lo: f64, hi: f64, sd: f64) -> f64 {
    let reach = 40.0 * sd;
    let (a, b) = (a.max(lo - reach), b.min(hi + reach));
    if !(b > a) {
        return 0.0;
    }
    let center = 0.5 * (lo + hi);
    // Antiderivative of Phi((x-lo)/sd) - Phi((x-hi)/sd), anchored at -inf or +inf.
    let left = |x: f64| sd * (normal_cdf_integral((x - lo) / sd) - normal_cdf_integral((x - hi) / sd));
    let right = |x: f64| sd * (normal_cdf_integral((hi - x) / sd) - normal_cdf_integral((lo - x) / sd));
    let m = if a < center { left(b) - left(a) } else { right(a) - right(b) };
    m.max(0.0)
}

/// Prepared sampler for one density.
#[derive(Debug)]
pub struct Sampler<'a> {
    density: &'a Density,
    table: SamplerTable<'a>,
}

#[derive(Debug)]
enum SamplerTable<'a> {
    Direct,
    Segments(Vec<f64>),
    Mixture(Vec<f64>, Vec<Sampler<'a>>),
    Grid(Vec<f64>),
}

/// Uniform draw on the open interval (0, 1).
fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    ((rng.random::<u64>() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

fn cumulative(weights: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = weights
        .map(|w| {
            acc += w;
            acc
        })
        .collect();
    if let Some(&total) = out.last() {
        if total > 0.0 {
            out.iter_mut().for_each(|v| *v /= total);
        }
    }
    out
}

fn pick(cum: &[f64], u: f64) -> usize {
    cum.partition_point(|&c| c < u).min(cum.len() - 1)
}

impl<'a> Sampler<'a> {
    fn new(density: &'a Density) -> Result<Self> {
        let table = match density {
            Density::PiecewiseUniform { segments } | Density::ConvolvedUniform { segments, .. } => {
                SamplerTable::Segments(cumulative(segments.iter().map(Segment::mass)))
            }
            Density::Mixture { weights, components } => SamplerTable::Mixture(
                cumulative(weights.iter().copied()),
                components.iter().map(Sampler::new).collect::<Result<_>>()?,
            ),
            Density::Grid(g) => {
                if g.dim() > 2 {
                    return Err(Error::Unsupported(
                        "sampling a grid density with dimension > 2".into(),
                    ));
                }
                SamplerTable::Grid(cumulative(grid_cell_masses(g).into_iter()))
            }
            Density::Empirical { points } if points.is_empty() => {
                return Err(Error::param("points", "empirical density needs points"));
            }
            _ => SamplerTable::Direct,
        };
        Ok(Sampler { density, table })
    }

    /// Writes one draw into `out` (length = dimension).
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match (self.density, &self.table) {
            (Density::Gaussian1D { mean, sd }, _) => {
                out[0] = mean + sd * normal_quantile(open_unit(rng));
            }
            (Density::GaussianNd(g), _) => {
                let z = DVector::from_iterator(g.dim(), (0..g.dim()).map(|_| rng.sample::<f64, _>(StandardNormal)));
                let x = &g.chol * z;
                for (o, (xi, m)) in out.iter_mut().zip(x.iter().zip(&g.mean)) {
                    *o = xi + m;
                }
            }
            (Density::Weibull { shape, scale }, _) => {
                // Inverse of the survival function keeps precision near 0.
                out[0] = scale * (-open_unit(rng).ln()).powf(1.0 / shape);
            }
            (Density::UniformInterval { lo, hi }, _) => {
                out[0] = lo + open_unit(rng) * (hi - lo);
            }
            (Density::PiecewiseUniform { segments }, SamplerTable::Segments(cum)) => {
                let s = &segments[pick(cum, open_unit(rng))];
                out[0] = s.lo + open_unit(rng) * (s.hi - s.lo);
            }
            (Density::ConvolvedUniform { segments, sd }, SamplerTable::Segments(cum)) => {
                let s = &segments[pick(cum, open_unit(rng))];
                out[0] = s.lo + open_unit(rng) * (s.hi - s.lo) + sd * normal_quantile(open_unit(rng));
            }
            (Density::Mixture { .. }, SamplerTable::Mixture(cum, subs)) => {
                subs[pick(cum, open_unit(rng))].draw(rng, out);
            }
            (Density::Grid(g), SamplerTable::Grid(cum)) => grid_draw(g, cum, rng, out),
            (Density::Empirical { points }, _) => {
                let i = rng.random_range(0..points.len());
                out.copy_from_slice(&points[i]);
            }
            _ => unreachable!("sampler table does not match density"),
        }
    }
}

/// Mass of every grid cell, row-major over cells.
fn grid_cell_masses(g: &GridDensity) -> Vec<f64> {
    let strides = g.strides();
    match g.dim() {
        1 => {
            let ax = &g.axes[0];
            (0..ax.len() - 1)
                .map(|i| 0.5 * (g.values[i] + g.values[i + 1]) * (ax[i + 1] - ax[i]))
                .collect()
        }
        _ => {
            let (ax0, ax1) = (&g.axes[0], &g.axes[1]);
            let mut out = Vec::with_capacity((ax0.len() - 1) * (ax1.len() - 1));
            for i in 0..ax0.len() - 1 {
                for j in 0..ax1.len() - 1 {
                    let v = |di: usize, dj: usize| g.values[(i + di) * strides[0] + (j + dj)];
                    let area = (ax0[i + 1] - ax0[i]) * (ax1[j + 1] - ax1[j]);
                    out.push(0.25 * (v(0, 0) + v(1, 0) + v(0, 1) + v(1, 1)) * area);
                }
            }
            out
        }
    }
}

/// Position within `[0, 1]` for a density linear between `v0` and `v1`.
fn linear_cell_offset(v0: f64, v1: f64, u: f64) -> f64 {
    let slope = v1 - v0;
    if slope.abs() < 1e-12 * (v0 + v1).max(f64::MIN_POSITIVE) {
        return u;
    }
    // Solve v0 d + slope d^2 / 2 = u (v0 + v1) / 2 for d in [0, 1].
    let rhs = u * 0.5 * (v0 + v1);
    let disc = (v0 * v0 + 2.0 * slope * rhs).max(0.0);
    (2.0 * rhs / (v0 + disc.sqrt())).clamp(0.0, 1.0)
}

fn grid_draw<R: Rng + ?Sized>(g: &GridDensity, cum: &[f64], rng: &mut R, out: &mut [f64]) {
    let cell = pick(cum, open_unit(rng));
    match g.dim() {
        1 => {
            let ax = &g.axes[0];
            let (v0, v1) = (g.values[cell], g.values[cell + 1]);
            let h = ax[cell + 1] - ax[cell];
            let d = match g.interpolation {
                Interpolation::Multilinear => linear_cell_offset(v0, v1, open_unit(rng)),
                Interpolation::Nearest => {
                    let left = v0 / (v0 + v1);
                    if open_unit(rng) < left {
                        0.5 * open_unit(rng)
                    } else {
                        0.5 + 0.5 * open_unit(rng)
                    }
                }
            };
            out[0] = ax[cell] + d * h;
        }
        _ => {
            let (ax0, ax1) = (&g.axes[0], &g.axes[1]);
            let n1 = ax1.len() - 1;
            let (i, j) = (cell / n1, cell % n1);
            let stride = ax1.len();
            let corners = [
                g.values[i * stride + j],
                g.values[(i + 1) * stride + j],
                g.values[i * stride + j + 1],
                g.values[(i + 1) * stride + j + 1],
            ];
            let (fx, fy) = match g.interpolation {
                Interpolation::Nearest => {
                    let cq = cumulative(corners.iter().copied());
                    let k = pick(&cq, open_unit(rng));
                    let fx = 0.5 * ((k & 1) as f64) + 0.5 * open_unit(rng);
                    let fy = 0.5 * ((k >> 1) as f64) + 0.5 * open_unit(rng);
                    (fx, fy)
                }
                Interpolation::Multilinear => {
                    let top = corners.iter().copied().fold(0.0, f64::max);
                    loop {
                        let (fx, fy) = (open_unit(rng), open_unit(rng));
                        let v = corners[0] * (1.0 - fx) * (1.0 - fy)
                            + corners[1] * fx * (1.0 - fy)
                            + corners[2] * (1.0 - fx) * fy
                            + corners[3] * fx * fy;
                        if open_unit(rng) * top <= v {
                            break (fx, fy);
                        }
                    }
                }
            };
            out[0] = ax0[i] + fx * (ax0[i + 1] - ax0[i]);
            out[1] = ax1[j] + fy * (ax1[j + 1] - ax1[j]);
        }
    }
}

/// Additive Gaussian measurement noise with covariance `scale^2 * shape`,
/// where `shape` is symmetric positive definite with largest eigenvalue 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NoiseSpecRaw", into = "NoiseSpecRaw")]
pub struct NoiseSpec {
    scale: f64,
    shape: DMatrix<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NoiseSpecRaw {
    scale: f64,
    shape: Vec<Vec<f64>>,
}

impl TryFrom<NoiseSpecRaw> for NoiseSpec {
    type Error = Error;
    fn try_from(raw: NoiseSpecRaw) -> Result<Self> {
        let n = raw.shape.len();
        NoiseSpec::new(raw.scale, matrix_from_rows(&raw.shape, n, "shape")?)
    }
}

impl From<NoiseSpec> for NoiseSpecRaw {
    fn from(n: NoiseSpec) -> Self {
        NoiseSpecRaw {
            scale: n.scale,
            shape: matrix_rows(&n.shape),
        }
    }
}

impl NoiseSpec {
    pub fn new(scale: f64, shape: DMatrix<f64>) -> Result<Self> {
        if !(scale.is_finite() && scale >= 0.0) {
            return Err(Error::param("scale", format!("must be non-negative, got {scale}")));
        }
        if shape.nrows() == 0 || shape.nrows() != shape.ncols() {
            return Err(Error::param("shape", "must be a non-empty square matrix"));
        }
        if !is_symmetric(&shape, 1e-12) {
            return Err(Error::param("shape", "must be symmetric"));
        }
        let eig = SymmetricEigen::new(shape.clone()).eigenvalues;
        let max = eig.max();
        let min = eig.min();
        if min <= 0.0 {
            return Err(Error::param("shape", "must be positive definite"));
        }
        if (max - 1.0).abs() > 1e-9 {
            return Err(Error::param("shape", format!("largest eigenvalue is {max}, not 1")));
        }
        Ok(NoiseSpec { scale, shape })
    }

    /// Isotropic noise in `n` dimensions with standard deviation `scale`.
    pub fn isotropic(n: usize, scale: f64) -> Result<Self> {
        NoiseSpec::new(scale, DMatrix::identity(n, n))
    }

    /// Same shape, scale set from a variance parameter.
    pub fn with_variance(&self, varsigma2: f64) -> Result<Self> {
        if !(varsigma2.is_finite() && varsigma2 >= 0.0) {
            return Err(Error::param("varsigma2", format!("must be non-negative, got {varsigma2}")));
        }
        Ok(NoiseSpec {
            scale: varsigma2.sqrt(),
            shape: self.shape.clone(),
        })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.shape.nrows()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        &self.shape * (self.scale * self.scale)
    }
}

/// Labelled class-conditional densities sharing one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ClassSpec>", into = "Vec<ClassSpec>")]
pub struct ClassModel {
    classes: Vec<ClassSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub label: String,
    pub density: Density,
}

impl TryFrom<Vec<ClassSpec>> for ClassModel {
    type Error = Error;
    fn try_from(classes: Vec<ClassSpec>) -> Result<Self> {
        ClassModel::from_specs(classes)
    }
}

impl From<ClassModel> for Vec<ClassSpec> {
    fn from(m: ClassModel) -> Self {
        m.classes
    }
}

impl ClassModel {
    pub fn new<S: Into<String>>(classes: Vec<(S, Density)>) -> Result<Self> {
        Self::from_specs(
            classes
                .into_iter()
                .map(|(label, density)| ClassSpec {
                    label: label.into(),
                    density,
                })
                .collect(),
        )
    }

    /// Unlabelled convenience constructor; classes are named `C1`, `C2`, ...
    pub fn from_densities(densities: Vec<Density>) -> Result<Self> {
        Self::new(
            densities
                .into_iter()
                .enumerate()
                .map(|(i, d)| (format!("C{}", i + 1), d))
                .collect(),
        )
    }

    fn from_specs(classes: Vec<ClassSpec>) -> Result<Self> {
        if classes.len() < 2 {
            return Err(Error::param("classes", "need at least two classes"));
        }
        let n = classes[0].density.dim();
        for (i, c) in classes.iter().enumerate() {
            c.density.validate().map_err(|e| match e {
                Error::InvalidParameter { field, reason } => Error::InvalidParameter {
                    field: format!("classes[{i}].{field}"),
                    reason,
                },
                other => other,
            })?;
            if c.density.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: c.density.dim(),
                });
            }
            if classes[..i].iter().any(|o| o.label == c.label) {
                return Err(Error::param("classes", format!("duplicate label `{}`", c.label)));
            }
        }
        Ok(ClassModel { classes })
    }

    pub fn c(&self) -> usize {
        self.classes.len()
    }

    pub fn dim(&self) -> usize {
        self.classes[0].density.dim()
    }

    pub fn density(&self, k: usize) -> &Density {
        &self.classes[k].density
    }

    pub fn label(&self, k: usize) -> &str {
        &self.classes[k].label
    }

    pub fn densities(&self) -> impl Iterator<Item = &Density> {
        self.classes.iter().map(|c| &c.density)
    }

    pub fn is_evaluable(&self) -> bool {
        self.densities().all(Density::is_evaluable)
    }

    /// Every class density convolved with the same noise kernel.
    pub fn convolve(&self, noise: &NoiseSpec) -> Result<ClassModel> {
        let classes = self
            .classes
            .iter()
            .map(|c| {
                Ok(ClassSpec {
                    label: c.label.clone(),
                    density: c.density.convolve_gaussian(noise)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(ClassModel { classes })
    }

    /// Hull of all class support windows.
    pub fn support_window(&self) -> Vec<(f64, f64)> {
        let mut hull = self.classes[0].density.support_window();
        for c in &self.classes[1..] {
            for (h, w) in hull.iter_mut().zip(c.density.support_window()) {
                h.0 = h.0.min(w.0);
                h.1 = h.1.max(w.1);
            }
        }
        hull
    }
}

pub(crate) fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.nrows() == m.ncols()
        && (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol * (1.0 + m[(i, j)].abs())))
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>], n: usize, field: &str) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::param(field, format!("must be a {n}x{n} matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub(crate) fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}
