// Optimal `rho_max` can only grow with measurement noise, while a partition
// fixed in advance can get better.

use assay_bounds::densities::Segment;
use assay_bounds::noise::{fixed_partition_noise, rho_star_vs_noise};
use assay_bounds::{ClassModel, Density, IntegrationConfig, NoiseSpec, Partition};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = IntegrationConfig::default();
    let shape = NoiseSpec::isotropic(1, 1.0)?;

    let model = ClassModel::from_densities(vec![Density::gaussian(-1.0, 1.0)?, Density::gaussian(1.0, 1.0)?])?;
    let grid: Vec<f64> = (0..=8).map(|i| i as f64 * 0.5).collect();
    let sweep = rho_star_vs_noise(&model, &shape, &grid, None, &cfg)?;
    for p in &sweep.points {
        println!("varsigma2 = {:.2}  rho* = {:.6}", p.varsigma2, p.rho_star);
    }
    assert_eq!(sweep.monotone, Some(true));

    let blocks = ClassModel::from_densities(vec![
        Density::piecewise_uniform(vec![
            Segment { lo: 0.0, hi: 0.6, height: 1.0 },
            Segment { lo: 1.0, hi: 1.4, height: 1.0 },
        ])?,
        Density::uniform(10.0, 11.0)?,
    ])?;
    let cut = Partition::cuts(vec![1.0]);
    let before = fixed_partition_noise(&blocks, &cut, 0.0, &shape, &cfg)?;
    let after = fixed_partition_noise(&blocks, &cut, 0.0025, &shape, &cfg)?;
    println!("fixed cut: rho_max {before:.5} without noise, {after:.5} with sd 0.05");
    assert!(after < before);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("noise sweep");
}
