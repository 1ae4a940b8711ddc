// Water-leveling for two bivariate normals. The quadratic boundary is
// integrated semi-analytically through the conditional normal of `y`.

use assay_bounds::waterlevel::solve_water_level;
use assay_bounds::{ClassModel, Density, IntegrationConfig};
use nalgebra::dmatrix;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let model = ClassModel::new(vec![
        ("g", Density::gaussian_nd(vec![0.0, 2.0], dmatrix![4.0, 0.0; 0.0, 1.0])?),
        ("f", Density::gaussian_nd(vec![0.0, 0.0], dmatrix![1.0, 0.0; 0.0, 1.0])?),
    ])?;
    let w = solve_water_level(&model, 1e-9, &IntegrationConfig::default())?;
    println!("t* = {:.5}, rho* = {:.5}, method evaluations = {}", w.t_star, w.rho_star, w.evaluations);
    assert!((w.t_star - 0.9428).abs() < 0.002);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("2D water level");
}
