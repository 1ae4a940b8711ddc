macro_rules! example {
    ($module:ident, $file:literal) => {
        mod $module {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", $file));
        }
    };
}

example!(uniform_cutpoints, "uniform_cutpoints.rs");
example!(weibull_water_level, "weibull_water_level.rs");
example!(gaussian2d_water_level, "gaussian2d_water_level.rs");
example!(variance_bound_simulation, "variance_bound_simulation.rs");
example!(noise_monotonicity, "noise_monotonicity.rs");
example!(balanced_prevalence, "balanced_prevalence.rs");
example!(matrix_properties, "matrix_properties.rs");
example!(empirical_confusion, "empirical_confusion.rs");
example!(prevalence_estimate, "prevalence_estimate.rs");

#[test]
fn uniform_cutpoints_runs() {
    uniform_cutpoints::run_example().unwrap();
}

#[test]
fn weibull_water_level_runs() {
    weibull_water_level::run_example().unwrap();
}

#[test]
fn gaussian2d_water_level_runs() {
    gaussian2d_water_level::run_example().unwrap();
}

#[test]
fn variance_bound_simulation_runs() {
    variance_bound_simulation::run_example().unwrap();
}

#[test]
fn noise_monotonicity_runs() {
    noise_monotonicity::run_example().unwrap();
}

#[test]
fn balanced_prevalence_runs() {
    balanced_prevalence::run_example().unwrap();
}

#[test]
fn matrix_properties_runs() {
    matrix_properties::run_example().unwrap();
}

#[test]
fn empirical_confusion_runs() {
    empirical_confusion::run_example().unwrap();
}

#[test]
fn prevalence_estimate_runs() {
    prevalence_estimate::run_example().unwrap();
}
