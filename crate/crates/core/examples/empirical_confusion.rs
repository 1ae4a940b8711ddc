// Estimating `P` from labelled training samples and watching it approach
// the integrated matrix.

use assay_bounds::confusion::{confusion_matrix, empirical_confusion};
use assay_bounds::{ClassModel, Density, IntegrationConfig, Partition};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let model = ClassModel::from_densities(vec![Density::gaussian(-1.0, 1.0)?, Density::gaussian(1.0, 1.0)?])?;
    let part = Partition::threshold(1.0);
    let exact = confusion_matrix(&model, &part, &IntegrationConfig::default())?;
    for m in [100, 1000, 10_000] {
        let labeled = model
            .densities()
            .enumerate()
            .map(|(k, d)| d.sample(100 + k as u64, m))
            .collect::<Result<Vec<_>, _>>()?;
        let est = empirical_confusion(&labeled, &part, &model)?;
        let err = (est.entries() - exact.entries()).amax();
        println!("m = {m:>6}: max |P~ - P| = {err:.5} (tolerance {:.5})", est.column_tolerance());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("empirical confusion");
}
