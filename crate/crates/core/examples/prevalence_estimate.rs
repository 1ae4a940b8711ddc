// Estimating prevalence from the domain fractions of an unlabelled sample.

use assay_bounds::confusion::{confusion_matrix, invert};
use assay_bounds::prevalence::estimate_prevalence;
use assay_bounds::{ClassModel, Density, IntegrationConfig, Partition};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let model = ClassModel::from_densities(vec![Density::gaussian(-1.0, 1.0)?, Density::gaussian(1.0, 1.0)?])?;
    let part = Partition::threshold(1.0);
    let p = confusion_matrix(&model, &part, &IntegrationConfig::default())?;
    let p_inv = invert(&p, false)?;

    // 250 of 1000 samples landed in the first domain
    let q_hat = estimate_prevalence(&p_inv, &[0.25, 0.75])?;
    println!("P =\n{}", p.entries());
    println!("q_hat = {q_hat:?}");
    assert!((q_hat.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("prevalence estimate");
}
