//! Mass of each class density on each region of a labelled partition.
//!
//! Three engines: 1D label-interval decomposition with exact or quadrature
//! interval masses, a semi-analytic path for quadratic boundaries between two
//! 2D Gaussians, and seeded Monte Carlo for everything else.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::densities::{gaussian_interval, ClassModel, GaussianNd};
use crate::error::{Error, Result};
use crate::integrate::{self, normal_cdf, normal_sf, QuadSettings};

/// Label probes per sub-interval between breakpoints.
const PROBES: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub label: usize,
}

/// Splits the real line into maximal intervals of constant label. Labels
/// are probed on a grid over `window` (refined between `breaks`) and every
/// change is located by bisection to floating-point resolution. The outer
/// intervals extend to infinity with the label of the nearest probe.
pub(crate) fn label_intervals<F: Fn(f64) -> usize>(
    label: F,
    window: (f64, f64),
    breaks: &[f64],
) -> Vec<Interval> {
    let mut knots: Vec<f64> = std::iter::once(window.0)
        .chain(breaks.iter().copied().filter(|&x| x > window.0 && x < window.1))
        .chain(std::iter::once(window.1))
        .collect();
    knots.sort_by(f64::total_cmp);
    knots.dedup();

    let mut probes = Vec::with_capacity(PROBES * knots.len());
    for w in knots.windows(2) {
        let h = (w[1] - w[0]) / PROBES as f64;
        for i in 0..PROBES {
            let x = w[0] + h * (i as f64 + 0.5);
            probes.push((x, label(x)));
        }
    }

    let mut transitions = Vec::new();
    for p in probes.windows(2) {
        if p[0].1 != p[1].1 {
            refine(&label, p[0], p[1], &mut transitions);
        }
    }

    let mut out = Vec::with_capacity(transitions.len() + 1);
    let mut lo = f64::NEG_INFINITY;
    let mut current = probes[0].1;
    for (x, next) in transitions {
        if next == current {
            continue;
        }
        out.push(Interval { lo, hi: x, label: current });
        lo = x;
        current = next;
    }
    out.push(Interval { lo, hi: f64::INFINITY, label: current });
    out
}

fn refine<F: Fn(f64) -> usize>(
    label: &F,
    (lo, llo): (f64, usize),
    (hi, lhi): (f64, usize),
    out: &mut Vec<(f64, usize)>,
) {
    let mid = 0.5 * (lo + hi);
    if mid <= lo || mid >= hi {
        out.push((hi, lhi));
        return;
    }
    let m = label(mid);
    if m == llo {
        refine(label, (mid, m), (hi, lhi), out);
    } else if m == lhi {
        refine(label, (lo, llo), (mid, m), out);
    } else {
        refine(label, (lo, llo), (mid, m), out);
        refine(label, (mid, m), (hi, lhi), out);
    }
}

/// Breakpoints of every class density plus the model's support hull.
pub(crate) fn model_breaks(model: &ClassModel) -> ((f64, f64), Vec<f64>) {
    let window = model.support_window()[0];
    let breaks = model.densities().flat_map(|d| d.breakpoints()).collect();
    (window, breaks)
}

/// Masses `M[(row, k)]` of class `k` on the union of intervals whose label
/// maps to `row`.
pub(crate) fn interval_masses(
    model: &ClassModel,
    intervals: &[Interval],
    row_of: impl Fn(usize) -> usize,
    rows: usize,
    quadrature: Option<QuadSettings>,
) -> Result<DMatrix<f64>> {
    let c = model.c();
    let mut m = DMatrix::zeros(rows, c);
    for (k, d) in model.densities().enumerate() {
        for iv in intervals {
            let mass = match quadrature {
                Some(s) => d.quadrature_mass(iv.lo, iv.hi, s)?,
                None => d.interval_mass(iv.lo, iv.hi)?,
            };
            m[(row_of(iv.label), k)] += mass;
        }
    }
    Ok(m)
}

/// Signs of `Q(r) = ln g0(r) - ln g1(r) - ln t` for two 2D Gaussians.
/// `Q` is quadratic; conditioning on the first coordinate leaves a quadratic
/// in the second whose sign is resolved by normal CDFs, and the remaining
/// axis is integrated adaptively.
pub(crate) struct GaussianPair2d<'a> {
    g: [&'a GaussianNd; 2],
    /// Coefficient of `y^2` in `Q`.
    a: f64,
    ln_t: f64,
}

/// Per-class mass of `{Q > 0}`, `{Q < 0}` and `{Q = 0}`.
pub(crate) type SignMasses = [[f64; 3]; 2];

impl<'a> GaussianPair2d<'a> {
    pub fn new(g0: &'a GaussianNd, g1: &'a GaussianNd, ln_t: f64) -> Result<Self> {
        if g0.dim() != 2 || g1.dim() != 2 {
            return Err(Error::Unsupported("semi-analytic path needs 2D Gaussians".into()));
        }
        let (p0, p1) = (g0.precision()[(1, 1)], g1.precision()[(1, 1)]);
        let mut a = -0.5 * (p0 - p1);
        if a.abs() <= 1e-13 * p0.max(p1) {
            a = 0.0;
        }
        Ok(GaussianPair2d { g: [g0, g1], a, ln_t })
    }

    fn q(&self, x: f64, y: f64) -> f64 {
        self.g[0].ln_pdf(&[x, y]) - self.g[1].ln_pdf(&[x, y]) - self.ln_t
    }

    /// Coefficients of `Q` in the standardized conditional coordinate of
    /// class `k` at abscissa `x`.
    fn conditional_quadratic(&self, k: usize, x: f64) -> (f64, f64, f64) {
        let (m, s) = conditional(self.g[k], x);
        let c0 = self.q(x, m);
        let qp = self.q(x, m + s);
        let qm = self.q(x, m - s);
        (self.a * s * s, 0.5 * (qp - qm), c0)
    }

    /// `Q` vanishes identically.
    fn degenerate(&self) -> bool {
        let probes = [(-1.3, 0.4), (0.0, 0.0), (2.1, -0.7), (0.5, 3.0), (-2.0, -2.5), (1.0, 1.0)];
        probes.iter().all(|&(x, y)| {
            let scale = 1.0 + self.g[0].ln_pdf(&[x, y]).abs();
            self.q(x, y).abs() <= 1e-12 * scale
        })
    }

    pub fn masses(&self, settings: QuadSettings) -> Result<SignMasses> {
        if self.degenerate() {
            return Ok([[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]]);
        }
        let mut out = [[0.0; 3]; 2];
        for (k, row) in out.iter_mut().enumerate() {
            let g = self.g[k];
            let (mx, sx) = (g.mean()[0], g.covariance()[(0, 0)].sqrt());
            let window = (-8.5, 8.5);
            let breaks = self.kinks(k, mx, sx, window);
            for (sign, slot) in [(1.0, 0), (-1.0, 1)] {
                let e = integrate::integrate_with_breaks(
                    |z| {
                        let x = mx + sx * z;
                        let (a, b, c) = self.conditional_quadratic(k, x);
                        integrate::normal_pdf(z) * positive_probability(sign * a, sign * b, sign * c)
                    },
                    window.0,
                    window.1,
                    &breaks,
                    settings,
                )?;
                row[slot] = e.value.clamp(0.0, 1.0);
            }
        }
        Ok(out)
    }

    /// Standardized abscissae where the conditional discriminant changes
    /// sign; the integrand has square-root kinks there.
    fn kinks(&self, k: usize, mx: f64, sx: f64, window: (f64, f64)) -> Vec<f64> {
        let disc = |z: f64| {
            let (a, b, c) = self.conditional_quadratic(k, mx + sx * z);
            b * b - 4.0 * a * c
        };
        let n = 512;
        let h = (window.1 - window.0) / n as f64;
        let mut out = Vec::new();
        let mut prev = (window.0, disc(window.0));
        for i in 1..=n {
            let z = window.0 + h * i as f64;
            let cur = (z, disc(z));
            if (prev.1 > 0.0) != (cur.1 > 0.0) {
                let (mut lo, mut hi) = (prev.0, cur.0);
                let lo_pos = prev.1 > 0.0;
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if (disc(mid) > 0.0) == lo_pos {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                out.push(0.5 * (lo + hi));
            }
            prev = cur;
        }
        out
    }
}

/// Mean and standard deviation of the second coordinate given the first.
fn conditional(g: &GaussianNd, x: f64) -> (f64, f64) {
    let s = g.covariance();
    let (mx, my) = (g.mean()[0], g.mean()[1]);
    let m = my + s[(0, 1)] / s[(0, 0)] * (x - mx);
    let v = s[(1, 1)] - s[(0, 1)] * s[(0, 1)] / s[(0, 0)];
    (m, v.max(0.0).sqrt())
}

/// `P(a u^2 + b u + c > 0)` for standard normal `u`.
fn positive_probability(a: f64, b: f64, c: f64) -> f64 {
    if a == 0.0 {
        return if b > 0.0 {
            normal_sf(-c / b)
        } else if b < 0.0 {
            normal_cdf(-c / b)
        } else {
            f64::from(u8::from(c > 0.0))
        };
    }
    let disc = b * b - 4.0 * a * c;
    if disc <= 0.0 {
        return f64::from(u8::from(a > 0.0));
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let (r1, r2) = if q == 0.0 {
        let r = (disc.sqrt() / (2.0 * a)).abs();
        (-r, r)
    } else {
        let (x, y) = (q / a, c / q);
        (x.min(y), x.max(y))
    };
    if a > 0.0 {
        normal_cdf(r1) + normal_sf(r2)
    } else {
        gaussian_interval(r1, r2)
    }
}

/// Fractions of `n` seeded draws per class landing in each row. Class `k`
/// draws from stream `k` of `seed`, so the result does not depend on the
/// thread count.
pub(crate) fn monte_carlo_fractions<F>(
    model: &ClassModel,
    row_of_point: F,
    rows: usize,
    n: usize,
    seed: u64,
) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> usize + Sync,
{
    if n == 0 {
        return Err(Error::param("mc_samples", "must be positive"));
    }
    let dim = model.dim();
    let columns: Vec<Vec<u64>> = (0..model.c())
        .into_par_iter()
        .map(|k| {
            let sampler = model.density(k).sampler()?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let mut counts = vec![0u64; rows];
            let mut r = vec![0.0; dim];
            for _ in 0..n {
                sampler.draw(&mut rng, &mut r);
                counts[row_of_point(&r)] += 1;
            }
            Ok(counts)
        })
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(rows, model.c(), |j, k| columns[k][j] as f64 / n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::Density;
    use nalgebra::dmatrix;

    #[test]
    fn intervals_find_sign_changes() {
        let iv = label_intervals(|x| usize::from(x > 0.3) + usize::from(x > 0.30001), (0.0, 1.0), &[]);
        assert_eq!(iv.len(), 3);
        assert!((iv[0].hi - 0.3).abs() < 1e-15);
        assert!((iv[1].hi - 0.30001).abs() < 1e-15);
        assert_eq!(iv[2].label, 2);
        assert_eq!(iv[0].lo, f64::NEG_INFINITY);
    }

    #[test]
    fn narrow_middle_label_at_break() {
        // a sliver narrower than a probe spacing, aligned with a breakpoint
        let f = |x: f64| if (0.5..0.5 + 1e-6).contains(&x) { 1 } else { 0 };
        let iv = label_intervals(f, (0.0, 1.0), &[0.5, 0.5 + 1e-6]);
        assert_eq!(iv.len(), 3);
        assert!((iv[1].hi - iv[1].lo - 1e-6).abs() < 1e-15);
    }

    #[test]
    fn quadratic_sign_probabilities() {
        // u^2 - 1 > 0 outside [-1, 1]
        let p = positive_probability(1.0, 0.0, -1.0);
        assert!((p - 2.0 * normal_sf(1.0)).abs() < 1e-15);
        assert!((positive_probability(-1.0, 0.0, 1.0) - (1.0 - p)).abs() < 1e-15);
        assert_eq!(positive_probability(1.0, 0.0, 1.0), 1.0);
        assert!((positive_probability(0.0, 2.0, -1.0) - normal_sf(0.5)).abs() < 1e-16);
    }

    #[test]
    fn linear_boundary_matches_1d() {
        // equal covariances: the boundary is a line, masses reduce to Phi
        let cov = dmatrix![1.0, 0.3; 0.3, 2.0];
        let g0 = GaussianNd::new(vec![0.0, 0.0], cov.clone()).unwrap();
        let g1 = GaussianNd::new(vec![1.0, 1.0], cov.clone()).unwrap();
        let pair = GaussianPair2d::new(&g0, &g1, 0.0).unwrap();
        let m = pair.masses(QuadSettings::default()).unwrap();
        let d = nalgebra::DVector::from_vec(vec![1.0, 1.0]);
        let maha = (d.transpose() * cov.try_inverse().unwrap() * &d)[(0, 0)].sqrt();
        let expect = normal_cdf(maha / 2.0);
        assert!((m[0][0] - expect).abs() < 1e-10, "{} vs {expect}", m[0][0]);
        assert!((m[1][1] - expect).abs() < 1e-10);
        assert!((m[0][0] + m[0][1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn quadratic_boundary_matches_monte_carlo() {
        let g0 = GaussianNd::new(vec![0.0, 0.0], DMatrix::identity(2, 2)).unwrap();
        let g1 = GaussianNd::new(vec![0.0, 2.0], dmatrix![4.0, 0.0; 0.0, 1.0]).unwrap();
        let pair = GaussianPair2d::new(&g0, &g1, 0.0).unwrap();
        let m = pair.masses(QuadSettings::default()).unwrap();
        let model = ClassModel::from_densities(vec![
            Density::GaussianNd(g0.clone()),
            Density::GaussianNd(g1.clone()),
        ])
        .unwrap();
        let n = 400_000;
        let mc = monte_carlo_fractions(
            &model,
            |r| usize::from(g0.ln_pdf(r) < g1.ln_pdf(r)),
            2,
            n,
            17,
        )
        .unwrap();
        let tol = 4.0 * (0.25 / n as f64).sqrt();
        for k in 0..2 {
            assert!((m[k][0] - mc[(0, k)]).abs() < tol, "class {k}: {} vs {}", m[k][0], mc[(0, k)]);
            assert!((m[k][0] + m[k][1] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn identical_pair_is_all_boundary() {
        let g = GaussianNd::new(vec![0.5, -0.5], dmatrix![1.0, 0.2; 0.2, 1.0]).unwrap();
        let m = GaussianPair2d::new(&g, &g, 0.0).unwrap().masses(QuadSettings::default()).unwrap();
        assert_eq!(m[0], [0.0, 0.0, 1.0]);
    }

    #[test]
    fn monte_carlo_is_seeded() {
        let model = ClassModel::from_densities(vec![
            Density::uniform(0.0, 1.0).unwrap(),
            Density::uniform(0.5, 1.5).unwrap(),
        ])
        .unwrap();
        let f = |r: &[f64]| usize::from(r[0] > 0.75);
        let a = monte_carlo_fractions(&model, f, 2, 10_000, 5).unwrap();
        let b = monte_carlo_fractions(&model, f, 2, 10_000, 5).unwrap();
        assert_eq!(a, b);
        assert!((a[(0, 0)] - 0.75).abs() < 0.02);
    }
}
