use assay_bounds::bounds::{
    classification_error, eps_rho, error_bound, variance_bounds, weight_multiplier, weighted_variance_bound,
    Prevalence,
};
use assay_bounds::confusion::{confusion_matrix, gershgorin};
use assay_bounds::densities::Segment;
use assay_bounds::multiclass::{balance_prevalence, optimize_cutpoints_1d, CutSearch};
use assay_bounds::noise::rho_star_vs_noise;
use assay_bounds::prevalence::{simulate, SimOptions};
use assay_bounds::waterlevel::{level_measures, solve_water_level, sweep_levels};
use assay_bounds::{ClassModel, ConfusionMatrix, Density, IntegrationConfig, Method, NoiseSpec, Partition};
use nalgebra::{dmatrix, DMatrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cfg() -> IntegrationConfig {
    IntegrationConfig::default()
}

fn density_1d() -> impl Strategy<Value = Density> {
    prop_oneof![
        (-5.0..5.0f64, 0.1..3.0f64).prop_map(|(m, s)| Density::gaussian(m, s).unwrap()),
        (0.5..5.0f64, 0.2..4.0f64).prop_map(|(k, l)| Density::weibull(k, l).unwrap()),
        (-3.0..3.0f64, 0.1..4.0f64).prop_map(|(a, w)| Density::uniform(a, a + w).unwrap()),
        (0.05..0.95f64, 0.1..2.0f64, 0.0..1.0f64, 0.1..2.0f64).prop_map(|(frac, w1, gap, w2)| {
            let lo2 = w1 + gap;
            Density::piecewise_uniform(vec![
                Segment { lo: 0.0, hi: w1, height: frac / w1 },
                Segment { lo: lo2, hi: lo2 + w2, height: (1.0 - frac) / w2 },
            ])
            .unwrap()
        }),
        (0.1..0.9f64, -3.0..0.0f64, 0.0..3.0f64).prop_map(|(w, a, b)| {
            Density::mixture(
                vec![w, 1.0 - w],
                vec![Density::gaussian(a, 0.7).unwrap(), Density::gaussian(b, 1.3).unwrap()],
            )
            .unwrap()
        }),
    ]
}

fn random_dominant_stochastic(rng: &mut ChaCha8Rng, c: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(c, c);
    for k in 0..c {
        let d = 0.5 + 1e-3 + rng.random::<f64>() * (0.5 - 1e-3);
        let w: Vec<f64> = (0..c - 1).map(|_| rng.random::<f64>() + 1e-9).collect();
        let total: f64 = w.iter().sum();
        let mut it = w.iter();
        for j in 0..c {
            m[(j, k)] = if j == k { d } else { (1.0 - d) * it.next().unwrap() / total };
        }
    }
    m
}

fn random_simplex(rng: &mut ChaCha8Rng, c: usize) -> Vec<f64> {
    let mut q: Vec<f64> = (0..c).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = q.iter().sum();
    q.iter_mut().for_each(|v| *v /= s);
    // put any rounding residue on the largest entry so the sum is 1 to 1e-12
    let k = (0..c).max_by(|&a, &b| q[a].total_cmp(&q[b])).unwrap();
    q[k] += 1.0 - q.iter().sum::<f64>();
    q
}

fn ks_statistic(d: &Density, draws: &[Vec<f64>]) -> f64 {
    let mut xs: Vec<f64> = draws.iter().map(|p| p[0]).collect();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = d.cdf(x).unwrap();
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn densities_are_normalized(d in density_1d()) {
        prop_assert!((d.total_mass().unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn convolution_preserves_mass(d in density_1d(), v2 in 0.001..2.0f64) {
        let noisy = d.convolve_gaussian(&NoiseSpec::isotropic(1, v2.sqrt()).unwrap()).unwrap();
        prop_assert!((noisy.total_mass().unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn convolution_semigroup(m in -2.0..2.0f64, s in 0.2..2.0f64, a in 0.01..1.5f64, b in 0.01..1.5f64, x in -4.0..4.0f64) {
        let noise = NoiseSpec::isotropic(1, 1.0).unwrap();
        for d in [Density::gaussian(m, s).unwrap(), Density::uniform(m, m + s).unwrap()] {
            let twice = d
                .convolve_gaussian(&noise.with_variance(a).unwrap()).unwrap()
                .convolve_gaussian(&noise.with_variance(b).unwrap()).unwrap();
            let once = d.convolve_gaussian(&noise.with_variance(a + b).unwrap()).unwrap();
            prop_assert!((twice.eval(&[x]).unwrap() - once.eval(&[x]).unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn bayes_matches_threshold(q0 in 0.05..0.95f64, m in -1.0..1.0f64, seed in 0u64..1000) {
        let model = ClassModel::from_densities(vec![
            Density::gaussian(m - 1.0, 1.0).unwrap(),
            Density::weibull(2.0, 1.5).unwrap(),
        ]).unwrap();
        let bayes = Partition::Bayes { q: vec![q0, 1.0 - q0] };
        let thr = Partition::threshold((1.0 - q0) / q0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..2000 {
            let r = [rng.random::<f64>() * 6.0 - 3.0];
            let (l0, l1) = (model.density(0).ln_eval(&r).unwrap(), model.density(1).ln_eval(&r).unwrap());
            let tie = ((q0.ln() + l0) - ((1.0 - q0).ln() + l1)).abs() < 1e-9;
            let (a, b) = (bayes.assign(&model, &r).unwrap(), thr.assign(&model, &r).unwrap());
            prop_assert!(a < 2);
            prop_assert!(tie || a == b);
        }
    }

    #[test]
    fn bayes_error_beats_other_cuts(gap1 in 0.5..3.0f64, gap2 in 0.5..3.0f64, seed in 0u64..1000) {
        let model = ClassModel::from_densities(vec![
            Density::gaussian(0.0, 1.0).unwrap(),
            Density::gaussian(gap1, 1.0).unwrap(),
            Density::gaussian(gap1 + gap2, 1.0).unwrap(),
        ]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = Prevalence::new(random_simplex(&mut rng, 3)).unwrap();
        let p = confusion_matrix(&model, &Partition::Bayes { q: q.as_slice().to_vec() }, &cfg()).unwrap();
        let best = classification_error(&p, &q).unwrap();
        for _ in 0..20 {
            let mut cuts = [rng.random::<f64>() * 8.0 - 2.0, rng.random::<f64>() * 8.0 - 2.0];
            cuts.sort_by(f64::total_cmp);
            let pc = confusion_matrix(&model, &Partition::cuts(cuts.to_vec()), &cfg()).unwrap();
            prop_assert!(best <= classification_error(&pc, &q).unwrap() + 1e-9);
        }
    }

    #[test]
    fn assignment_is_total(seed in 0u64..10_000) {
        let model = ClassModel::from_densities(vec![
            Density::gaussian(-1.0, 0.5).unwrap(),
            Density::uniform(-0.5, 2.0).unwrap(),
            Density::weibull(1.5, 2.0).unwrap(),
        ]).unwrap();
        let parts = [
            Partition::Bayes { q: vec![0.2, 0.5, 0.3] },
            Partition::cuts(vec![0.0, 1.0]),
        ];
        let draws: Vec<Vec<f64>> = (0..3).flat_map(|k| model.density(k).sample(seed + k as u64, 300).unwrap()).collect();
        for part in &parts {
            for r in &draws {
                prop_assert!(part.assign(&model, r).unwrap() < 3);
            }
        }
    }

    #[test]
    fn confusion_columns_sum_to_one(a in density_1d(), b in density_1d(), t in 0.05..20.0f64) {
        let model = ClassModel::from_densities(vec![a, b]).unwrap();
        let p = confusion_matrix(&model, &Partition::threshold(t), &cfg()).unwrap();
        for k in 0..2 {
            prop_assert!((p.entries().column(k).sum() - 1.0).abs() <= p.column_tolerance().max(1e-12));
        }
    }

    #[test]
    fn eigenvalues_in_gershgorin_disk(seed in 0u64..10_000, c in 2usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_dominant_stochastic(&mut rng, c);
        let p = ConfusionMatrix::new(m.clone(), 1e-12, Method::ClosedForm).unwrap();
        let rho = gershgorin(&p).rho_max;
        for l in m.complex_eigenvalues().iter() {
            prop_assert!((l - nalgebra::Complex::new(1.0 - rho, 0.0)).norm() <= rho + 1e-10);
        }
    }

    #[test]
    fn error_bound_dominates(seed in 0u64..100_000, c in 2usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = ConfusionMatrix::new(random_dominant_stochastic(&mut rng, c), 1e-12, Method::ClosedForm).unwrap();
        let q = Prevalence::new(random_simplex(&mut rng, c)).unwrap();
        prop_assert!(classification_error(&p, &q).unwrap() <= error_bound(&p).unwrap() + 1e-12);
    }

    #[test]
    fn eps_rho_increases_with_rho(c in 2usize..=8, s in 1u64..10_000, r1 in 0.001..0.499f64, r2 in 0.001..0.499f64) {
        prop_assume!((r1 - r2).abs() > 1e-9);
        let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
        prop_assert!(eps_rho(c, s, lo).unwrap() < eps_rho(c, s, hi).unwrap());
    }

    #[test]
    fn tight_is_eps_over_c(seed in 0u64..10_000, c in 2usize..=6, s in 1u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = ConfusionMatrix::new(random_dominant_stochastic(&mut rng, c), 1e-12, Method::ClosedForm).unwrap();
        prop_assume!(p.rho_max() < 0.5);
        let q = Prevalence::new(random_simplex(&mut rng, c)).unwrap();
        let r = variance_bounds(&p, &q, s, false).unwrap();
        // bit-exact as a quotient; the product form can differ by one rounding
        prop_assert_eq!(r.eps_rho_tight, r.eps_rho / c as f64);
        prop_assert!((r.eps_rho - c as f64 * r.eps_rho_tight).abs() <= f64::EPSILON * r.eps_rho);
    }

    #[test]
    fn water_level_properties(m in 0.3..3.0f64, s0 in 0.5..2.0f64, s1 in 0.5..2.0f64, seed in 0u64..1000) {
        let model = ClassModel::from_densities(vec![
            Density::gaussian(0.0, s0).unwrap(),
            Density::gaussian(m, s1).unwrap(),
        ]).unwrap();
        let w = solve_water_level(&model, 1e-11, &cfg()).unwrap();
        prop_assert!((w.mu1_star - w.mu2_star).abs() <= 1e-6);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut grid: Vec<f64> = (0..50).map(|_| (rng.random::<f64>() * 10.0 - 5.0).exp()).collect();
        grid.sort_by(f64::total_cmp);
        let curve = sweep_levels(&model, &grid, &cfg()).unwrap();
        for pair in curve.windows(2) {
            prop_assert!(pair[1].mu1 <= pair[0].mu1 + 1e-12);
            prop_assert!(pair[1].mu2 >= pair[0].mu2 - 1e-12);
        }
        for p in &curve {
            prop_assert!(w.rho_star <= p.rho_max_at_t + 1e-9);
        }
    }

    #[test]
    fn moving_the_optimal_cut_never_helps(m in 0.3..4.0f64, s in 0.3..2.0f64) {
        let model = ClassModel::from_densities(vec![
            Density::gaussian(0.0, s).unwrap(),
            Density::gaussian(m, s).unwrap(),
        ]).unwrap();
        let w = solve_water_level(&model, 1e-12, &cfg()).unwrap();
        // ln p0 - ln p1 = ln t* at this x for equal variances
        let x = m / 2.0 - s * s * w.t_star.ln() / m;
        let at = |x: f64| confusion_matrix(&model, &Partition::cuts(vec![x]), &cfg()).unwrap().rho_max();
        prop_assert!((at(x) - w.rho_star).abs() < 1e-8);
        prop_assert!(at(x - 0.01) >= at(x));
        prop_assert!(at(x + 0.01) >= at(x));
    }

    #[test]
    fn level_measures_at_optimum(m in 0.3..3.0f64) {
        let model = ClassModel::from_densities(vec![
            Density::gaussian(0.0, 1.0).unwrap(),
            Density::gaussian(m, 1.0).unwrap(),
        ]).unwrap();
        let w = solve_water_level(&model, 1e-12, &cfg()).unwrap();
        let p = level_measures(&model, w.t_star, &cfg()).unwrap();
        prop_assert!((p.rho_max_at_t - w.rho_star).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sampling_matches_cdf(d in density_1d(), seed in 0u64..1000) {
        let draws = d.sample(seed, 100_000).unwrap();
        prop_assert!(ks_statistic(&d, &draws) < 0.01);
    }

    #[test]
    fn noise_sweeps_are_monotone(m in 0.2..3.0f64, s in 0.3..2.0f64, mut grid in proptest::collection::vec(0.0..6.0f64, 2..10)) {
        grid.sort_by(f64::total_cmp);
        let model = ClassModel::from_densities(vec![
            Density::gaussian(-m, s).unwrap(),
            Density::gaussian(m, s).unwrap(),
        ]).unwrap();
        let sweep = rho_star_vs_noise(&model, &NoiseSpec::isotropic(1, 1.0).unwrap(), &grid, None, &cfg()).unwrap();
        prop_assert_eq!(sweep.monotone, Some(true));
        let r0 = rho_star_vs_noise(&model, &NoiseSpec::isotropic(1, 1.0).unwrap(), &[0.0], None, &cfg()).unwrap();
        for p in &sweep.points {
            prop_assert!(p.rho_star < 0.5);
            if p.varsigma2 > 1e-3 {
                prop_assert!(p.rho_star > r0.points[0].rho_star);
            }
        }
    }

    #[test]
    fn cut_search_agrees_with_water_level(m in 0.5..4.0f64, s in 0.3..2.0f64, init in -1.0..1.0f64) {
        let model = ClassModel::from_densities(vec![
            Density::gaussian(0.0, s).unwrap(),
            Density::gaussian(m, s).unwrap(),
        ]).unwrap();
        let w = solve_water_level(&model, 1e-12, &cfg()).unwrap();
        let r = optimize_cutpoints_1d(&model, &[m / 2.0 + init], &CutSearch::default(), &cfg()).unwrap();
        prop_assert!((r.rho_max - w.rho_star).abs() <= 1e-4);
    }

    #[test]
    fn balance_equalizes_diagonals(g1 in 1.0..3.5f64, g2 in 1.0..3.5f64, s in 0.5..1.5f64) {
        let model = ClassModel::from_densities(vec![
            Density::gaussian(0.0, s).unwrap(),
            Density::gaussian(g1, s).unwrap(),
            Density::gaussian(g1 + g2, s).unwrap(),
        ]).unwrap();
        let r = balance_prevalence(&model, &Prevalence::uniform(3).unwrap(), 500, 1e-9, &cfg()).unwrap();
        prop_assert!(r.converged);
        prop_assert!(r.residual <= 1e-6);
    }
}

#[test]
fn eps_rho_diverges_near_half() {
    for c in 2..=8 {
        for s in [1u64, 10, 100] {
            let a = eps_rho(c, s, 0.499).unwrap();
            let b = eps_rho(c, s, 0.4999).unwrap();
            assert!(b > a && a > 1e3 / s as f64);
        }
        assert!(eps_rho(c, 10, 0.5).is_err());
    }
}

fn symmetric_model() -> (ClassModel, Partition, ConfusionMatrix) {
    let model =
        ClassModel::from_densities(vec![Density::gaussian(-1.0, 1.0).unwrap(), Density::gaussian(1.0, 1.0).unwrap()])
            .unwrap();
    let part = Partition::threshold(1.0);
    let p = confusion_matrix(&model, &part, &cfg()).unwrap();
    (model, part, p)
}

#[test]
fn sigma2_scales_inversely_with_s() {
    let (model, part, p) = symmetric_model();
    let q = Prevalence::new(vec![0.3, 0.7]).unwrap();
    let sizes = [50u64, 200, 800];
    let sig: Vec<f64> = sizes
        .iter()
        .map(|&s| simulate(&model, &part, &p, &q, s, 4000, 17, &SimOptions::default()).unwrap().empirical_sigma2_identity)
        .collect();
    let xs: Vec<f64> = sizes.iter().map(|&s| (s as f64).ln()).collect();
    let ys: Vec<f64> = sig.iter().map(|v| v.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 3.0, ys.iter().sum::<f64>() / 3.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    assert!((slope + 1.0).abs() <= 0.1, "slope {slope}");
}

#[test]
fn weighted_error_within_scaled_bound() {
    let (model, part, p) = symmetric_model();
    let a = dmatrix![4.0, 0.0; 0.0, 1.0];
    assert_eq!(weight_multiplier(&a).unwrap(), 16.0);
    for q1 in [0.2, 0.5, 0.8] {
        let q = Prevalence::new(vec![q1, 1.0 - q1]).unwrap();
        let report = variance_bounds(&p, &q, 100, false).unwrap();
        let opts = SimOptions { weight: Some(a.clone()), ..Default::default() };
        let sim = simulate(&model, &part, &p, &q, 100, 3000, 23, &opts).unwrap();
        let bound = weighted_variance_bound(&a, report.eps_sigma).unwrap();
        assert!(sim.empirical_sigma2_weighted.unwrap() <= bound);
    }
}

#[test]
fn estimator_is_unbiased_across_prevalence_grid() {
    let (model, part, p) = symmetric_model();
    for i in 1..=9 {
        let q1 = i as f64 / 10.0;
        let q = Prevalence::new(vec![q1, 1.0 - q1]).unwrap();
        let sim = simulate(&model, &part, &p, &q, 100, 2000, 31 + i, &SimOptions::default()).unwrap();
        for k in 0..2 {
            let se = sim.sd_q_hat[k] / (sim.replicates as f64).sqrt();
            assert!((sim.mean_q_hat[k] - q.as_slice()[k]).abs() <= 4.0 * se, "q1 = {q1}, class {k}");
        }
    }
}
