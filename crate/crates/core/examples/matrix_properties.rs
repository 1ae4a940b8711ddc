// Gershgorin radii, spectral checks and the error bound for a given
// confusion matrix.

use assay_bounds::bounds::{classification_error, error_bound, Prevalence};
use assay_bounds::confusion::{gershgorin, validate};
use assay_bounds::ConfusionMatrix;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let p = ConfusionMatrix::from_rows(&[vec![0.9, 0.0, 0.0], vec![0.1, 0.8, 0.2], vec![0.0, 0.2, 0.8]])?;
    let g = gershgorin(&p);
    println!("radii = {:?}, rho_max = {}", g.radii, g.rho_max);
    println!(
        "spectral radius of I - P = {:.4}, smallest |eigenvalue| = {:.4}, |P^-1|^2 = {:.4}",
        g.spectral_radius_i_minus_p, g.min_abs_eigenvalue, g.inv_two_norm_sq
    );
    let report = validate(&p);
    println!("all properties hold: {}", report.all_hold());

    // the error bound is attained by putting all prevalence on the worst column
    let worst = Prevalence::indicator(3, g.argmax_column)?;
    println!("error bound = {}, attained = {}", error_bound(&p)?, classification_error(&p, &worst)?);
    assert!(report.all_hold());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("matrix properties");
}
