// Multiclass optimum through the prevalence whose Bayes partition has equal
// diagonal entries, checked against random Bayes partitions.

use assay_bounds::multiclass::{balance_prevalence, verify_balance_optimality};
use assay_bounds::{ClassModel, Density, IntegrationConfig, Prevalence};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let model = ClassModel::new(vec![
        ("low", Density::gaussian(-2.0, 1.0)?),
        ("mid", Density::gaussian(0.0, 1.0)?),
        ("high", Density::gaussian(2.0, 1.0)?),
    ])?;
    let cfg = IntegrationConfig::default();
    let r = balance_prevalence(&model, &Prevalence::uniform(3)?, 500, 1e-9, &cfg)?;
    println!("q* = {:?}", r.q_star.as_slice());
    println!("diagonal = {:?}, rho* = {:.5}", r.p_star.diagonal(), r.rho_star);
    let v = verify_balance_optimality(&r, &model, 20, 5, 1e-4, &cfg)?;
    println!("{} of {} random prevalences do no better (closest gap {:.4})", v.dominated, v.trials, v.min_gap);
    assert!(r.converged && v.pass);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("balanced prevalence");
}
