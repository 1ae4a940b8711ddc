// Monte Carlo check of the prevalence variance bounds at the water-level
// optimum of two symmetric normals.

use assay_bounds::bounds::variance_bounds;
use assay_bounds::confusion::confusion_matrix;
use assay_bounds::prevalence::{bound_check, simulate, SimOptions};
use assay_bounds::waterlevel::solve_water_level;
use assay_bounds::{ClassModel, Density, IntegrationConfig, Prevalence};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let model = ClassModel::from_densities(vec![Density::gaussian(-1.0, 1.0)?, Density::gaussian(1.0, 1.0)?])?;
    let cfg = IntegrationConfig::default();
    let part = solve_water_level(&model, 1e-12, &cfg)?.partition;
    let p = confusion_matrix(&model, &part, &cfg)?;
    let q = Prevalence::new(vec![0.3, 0.7])?;
    let report = variance_bounds(&p, &q, 100, true)?;
    let sim = simulate(&model, &part, &p, &q, 100, 2000, 11, &SimOptions::default())?;
    let v = bound_check(&sim, &report)?;
    println!(
        "sigma2 = {:.5} +- {:.5}; eps_sigma = {:.5}; tight = {:.5}",
        v.empirical_sigma2, v.standard_error, v.eps_sigma, v.eps_sigma_tight
    );
    println!("pass = {}, tight pass = {:?}, unbiased = {}", v.pass, v.pass_tight, v.unbiased);
    assert!(v.ok());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("variance bound simulation");
}
