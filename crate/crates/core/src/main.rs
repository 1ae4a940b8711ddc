use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(assay_bounds::cli::run() as u8)
}
