// Three overlapping uniform classes on a line: search for the cut points
// that minimize the largest Gershgorin radius.

use assay_bounds::multiclass::{optimize_cutpoints_1d, CutSearch};
use assay_bounds::{ClassModel, Density, IntegrationConfig};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let model = ClassModel::new(vec![
        ("C1", Density::uniform(0.0, 1.0)?),
        ("C2", Density::uniform(0.9, 1.9)?),
        ("C3", Density::uniform(1.5, 2.5)?),
    ])?;
    let r = optimize_cutpoints_1d(&model, &[1.2, 1.6], &CutSearch::default(), &IntegrationConfig::default())?;
    println!("cuts = {:?}", r.cuts);
    println!("P =\n{}", r.p.entries());
    println!("rho_max = {:.6}, trace = {:.6}", r.rho_max, r.trace);
    if let Some(alt) = &r.constant_diagonal_alternative {
        println!("equally good, constant diagonal: {alt:?}");
    }
    assert!((r.cuts[0] - 0.9).abs() < 1e-3 && (r.cuts[1] - 1.7).abs() < 1e-3);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("uniform cut points");
}
