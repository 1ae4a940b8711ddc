//! One-dimensional adaptive quadrature and normal-distribution helpers.
//!
//! The integrator is a globally adaptive Gauss-Kronrod 7/15 scheme: the
//! interval with the largest error estimate is bisected until the summed
//! estimate drops below `max(abs_tol, rel_tol * |value|)`.

use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Result of a quadrature: value and estimated absolute error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct QuadSettings {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadSettings {
    fn default() -> Self {
        QuadSettings {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_intervals: 4000,
        }
    }
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (i, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kronrod += w * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    let value = kronrod * half;
    let error = ((kronrod - gauss) * half).abs();
    (value, error)
}

/// Integrates `f` over `[a, b]`. A reversed interval yields the negated
/// integral; an empty one yields zero.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    settings: QuadSettings,
) -> Result<Estimate> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Integration(format!(
            "non-finite limits [{a}, {b}]"
        )));
    }
    if a == b {
        return Ok(Estimate { value: 0.0, error: 0.0 });
    }
    if a > b {
        let e = integrate(f, b, a, settings)?;
        return Ok(Estimate { value: -e.value, error: e.error });
    }
    let mut heap = BinaryHeap::new();
    let (v, e) = gk15(&mut f, a, b);
    heap.push(Piece { a, b, value: v, error: e });
    let mut total = v;
    let mut total_err = e;
    while total_err > settings.abs_tol.max(settings.rel_tol * total.abs()) {
        if heap.len() >= settings.max_intervals {
            return Err(Error::Integration(format!(
                "no convergence on [{a}, {b}] after {} intervals (error {total_err:e})",
                heap.len()
            )));
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval cannot be split further in floating point.
            heap.push(Piece { error: 0.0, ..worst });
            total_err = heap.iter().map(|p| p.error).sum();
            continue;
        }
        let (v1, e1) = gk15(&mut f, worst.a, mid);
        let (v2, e2) = gk15(&mut f, mid, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Piece { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Piece { a: mid, b: worst.b, value: v2, error: e2 });
        if !total.is_finite() {
            return Err(Error::Integration(format!("non-finite integrand on [{a}, {b}]")));
        }
    }
    // Re-sum to shed accumulated cancellation in the running totals.
    let value = heap.iter().map(|p| p.value).sum();
    let error = heap.iter().map(|p| p.error).sum();
    Ok(Estimate { value, error })
}

/// Integrates over `[a, b]` splitting at every interior breakpoint.
pub fn integrate_with_breaks<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    settings: QuadSettings,
) -> Result<Estimate> {
    let mut knots: Vec<f64> = std::iter::once(a)
        .chain(breaks.iter().copied().filter(|&x| x > a && x < b))
        .chain(std::iter::once(b))
        .collect();
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let mut out = Estimate { value: 0.0, error: 0.0 };
    for w in knots.windows(2) {
        let e = integrate(&mut f, w[0], w[1], settings)?;
        out.value += e.value;
        out.error += e.error;
    }
    Ok(out)
}

/// Nested adaptive quadrature over an axis-aligned box (product of
/// intervals). Cost grows geometrically with dimension; intended for n <= 3.
pub fn integrate_box<F: Fn(&[f64]) -> f64>(
    f: &F,
    window: &[(f64, f64)],
    settings: QuadSettings,
) -> Result<Estimate> {
    let mut point = vec![0.0; window.len()];
    nested(f, window, 0, &mut point, settings)
}

fn nested<F: Fn(&[f64]) -> f64>(
    f: &F,
    window: &[(f64, f64)],
    axis: usize,
    point: &mut [f64],
    settings: QuadSettings,
) -> Result<Estimate> {
    let (lo, hi) = window[axis];
    if axis + 1 == window.len() {
        return integrate(
            |x| {
                point[axis] = x;
                f(point)
            },
            lo,
            hi,
            settings,
        );
    }
    let mut failure = None;
    let mut err_sum = 0.0;
    let inner = QuadSettings {
        abs_tol: settings.abs_tol * 0.1,
        ..settings
    };
    let outer = integrate(
        |x| {
            let mut p = point.to_vec();
            p[axis] = x;
            match nested(f, window, axis + 1, &mut p, inner) {
                Ok(e) => {
                    err_sum += e.error;
                    e.value
                }
                Err(e) => {
                    failure = Some(e);
                    0.0
                }
            }
        },
        lo,
        hi,
        settings,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(outer)
}

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF, accurate in both tails.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Upper tail `1 - Phi(x)` without cancellation.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// Standard normal quantile: rational initial guess refined by two Halley
/// steps against the accurate CDF.
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let mut x = quantile_guess(p);
    for _ in 0..2 {
        let e = if x > 0.0 { (1.0 - p) - normal_sf(x) } else { normal_cdf(x) - p };
        let u = e / normal_pdf(x).max(f64::MIN_POSITIVE);
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}

fn quantile_guess(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < 0.024_25 {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - 0.024_25 {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Antiderivative of the standard normal CDF: `z Phi(z) + phi(z)`.
pub(crate) fn normal_cdf_integral(z: f64) -> f64 {
    if z < -40.0 {
        return 0.0;
    }
    z * normal_cdf(z) + normal_pdf(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let e = integrate(|x| x * x * x - 2.0 * x, 0.0, 2.0, QuadSettings::default()).unwrap();
        assert!((e.value - 0.0).abs() < 1e-14);
        let e = integrate(|x| x.powi(6), -1.0, 1.0, QuadSettings::default()).unwrap();
        assert!((e.value - 2.0 / 7.0).abs() < 1e-14);
    }

    #[test]
    fn gaussian_mass_on_window() {
        let e = integrate(normal_pdf, -8.0, 8.0, QuadSettings::default()).unwrap();
        assert!((e.value - 1.0).abs() < 1e-12);
        let half = integrate(normal_pdf, 0.0, 1.0, QuadSettings::default()).unwrap();
        assert!((half.value - (normal_cdf(1.0) - 0.5)).abs() < 1e-13);
    }

    #[test]
    fn discontinuity_with_breaks() {
        let step = |x: f64| if x < 0.3 { 1.0 } else { 0.0 };
        let e = integrate_with_breaks(step, 0.0, 1.0, &[0.3], QuadSettings::default()).unwrap();
        assert!((e.value - 0.3).abs() < 1e-14);
    }

    #[test]
    fn reversed_and_empty_intervals() {
        let e = integrate(|_| 1.0, 1.0, 0.0, QuadSettings::default()).unwrap();
        assert!((e.value + 1.0).abs() < 1e-15);
        assert_eq!(integrate(|_| 1.0, 2.0, 2.0, QuadSettings::default()).unwrap().value, 0.0);
        assert!(integrate(|_| 1.0, 0.0, f64::INFINITY, QuadSettings::default()).is_err());
    }

    #[test]
    fn box_integral_of_product_density() {
        let f = |p: &[f64]| normal_pdf(p[0]) * normal_pdf(p[1]);
        let e = integrate_box(&f, &[(-8.0, 8.0), (-8.0, 0.0)], QuadSettings::default()).unwrap();
        assert!((e.value - 0.5).abs() < 1e-9);
    }

    #[test]
    fn normal_helpers() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((normal_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((normal_sf(10.0) - 7.619_853_024_160_527e-24).abs() < 1e-35);
        for &p in &[1e-10, 0.01, 0.3, 0.5, 0.9, 1.0 - 1e-9] {
            assert!((normal_cdf(normal_quantile(p)) - p).abs() < 1e-12 * p.max(1e-3));
        }
        // d/dz [z Phi + phi] = Phi
        let h = 1e-5;
        let z = 0.7;
        let fd = (normal_cdf_integral(z + h) - normal_cdf_integral(z - h)) / (2.0 * h);
        assert!((fd - normal_cdf(z)).abs() < 1e-9);
    }
}
