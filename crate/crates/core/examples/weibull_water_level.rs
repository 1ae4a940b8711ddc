// Binary water-leveling for two Weibull classes, with the level curves
// `mu1(t)` and `mu2(t)` on a log grid.

use assay_bounds::waterlevel::{log_grid, solve_water_level, sweep_levels};
use assay_bounds::{ClassModel, Density, IntegrationConfig};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let model = ClassModel::new(vec![
        ("negative", Density::weibull(2.0, 1.0)?),
        ("positive", Density::weibull(2.0, 2.0)?),
    ])?;
    let cfg = IntegrationConfig::default();
    let w = solve_water_level(&model, 1e-10, &cfg)?;
    println!("t* = {:.6}, rho* = {:.6}", w.t_star, w.rho_star);

    for p in sweep_levels(&model, &log_grid(0.1, 10.0, 9)?, &cfg)? {
        println!("t = {:>8.4}  mu1 = {:.4}  mu2 = {:.4}  rho_max = {:.4}", p.t, p.mu1, p.mu2, p.rho_max_at_t);
    }
    assert!((w.t_star - 1.52116).abs() < 1e-4);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("weibull water level");
}
