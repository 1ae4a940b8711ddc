//! Command-line front end: JSON experiment configs in, text reports and
//! CSV/JSON artifacts out.
//!
//! Exit codes: 0 success, 2 property violation, 3 solver non-convergence,
//! 4 configuration error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bounds::{classification_error, error_bound, variance_bounds, weighted_variance_bound, Prevalence};
use crate::confusion::{confusion_matrix, gershgorin, validate, ConfusionMatrix, IntegrationConfig};
use crate::densities::{matrix_from_rows, ClassModel, NoiseSpec};
use crate::error::Error;
use crate::multiclass::{balance_prevalence, optimize_cutpoints_1d, verify_balance_optimality, CutSearch};
use crate::noise::rho_star_vs_noise;
use crate::partitions::Partition;
use crate::prevalence::{bound_check, simulate, SimOptions};
use crate::waterlevel::{log_grid, solve_water_level, sweep_levels};

pub const CONFIG_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

/// One experiment: a class model plus optional task blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<ClassModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<Partition>,
    /// A confusion matrix given directly, rows are domains.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub integration: IntegrationConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waterlevel: Option<WaterLevelBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub balance: Option<BalanceBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cuts: Option<CutsBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseBlock {
    /// Noise covariance shape; identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsBlock {
    pub q: Vec<f64>,
    pub s: u64,
    #[serde(default)]
    pub assume_symmetric: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    pub q: Vec<f64>,
    pub s: u64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_matrix: Option<Vec<Vec<f64>>>,
}

fn default_replicates() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaterLevelBlock {
    #[serde(default = "default_water_tol")]
    pub tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

impl Default for WaterLevelBlock {
    fn default() -> Self {
        WaterLevelBlock { tol: default_water_tol(), sweep: None }
    }
}

fn default_water_tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BalanceBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_init: Option<Vec<f64>>,
    pub max_iters: usize,
    pub tol: f64,
    /// Random-prevalence comparisons; 0 skips verification.
    pub trials: usize,
    pub verify_tol: f64,
    pub seed: u64,
}

impl Default for BalanceBlock {
    fn default() -> Self {
        BalanceBlock { q_init: None, max_iters: 500, tol: 1e-9, trials: 50, verify_tol: 1e-4, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutsBlock {
    pub init: Vec<f64>,
    #[serde(default)]
    pub search: CutSearch,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| CliError::config(format!("config: {e}")))?;
        if cfg.version != CONFIG_VERSION {
            return Err(CliError::config(format!(
                "version: unsupported value {}, expected {CONFIG_VERSION}",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("config `{}`: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn model(&self) -> Result<&ClassModel, CliError> {
        self.classes
            .as_ref()
            .ok_or_else(|| CliError::config("classes: required for this command"))
    }

    fn partition(&self) -> Result<&Partition, CliError> {
        self.partition
            .as_ref()
            .ok_or_else(|| CliError::config("partition: required for this command"))
    }
}

/// A failure with its exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        CliError { code: EXIT_CONFIG, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError { code: exit_code(&e), message: e.to_string() }
    }
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::AtThreshold { source, .. } | Error::AtNoiseLevel { source, .. } => exit_code(source),
        Error::NotDiagonallyDominant { .. } | Error::BoundDiverges { .. } | Error::Singular => EXIT_VIOLATION,
        Error::NoWaterLevel { .. } | Error::DegenerateBayes { .. } | Error::Integration(_) => EXIT_NONCONVERGENCE,
        Error::DimensionMismatch { .. }
        | Error::InvalidParameter { .. }
        | Error::Unsupported(_)
        | Error::InvalidPrevalence(_)
        | Error::EmptyClass { .. }
        | Error::ShapeMismatch(_) => EXIT_CONFIG,
    }
}

#[derive(Debug, Parser)]
#[command(name = "assay-bounds", version, about = "Gershgorin-radius bounds for diagnostic assays")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Write results to a .csv or .json file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the machine's parallelism.
    #[arg(long, env = "ASSAY_THREADS")]
    pub threads: Option<usize>,
    /// Print the effective config (after flag overrides) and exit.
    #[arg(long)]
    pub dump_config: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Confusion matrix of the configured partition.
    Confusion {
        #[command(flatten)]
        common: Common,
    },
    /// Error and variance bounds for the configured partition.
    Bounds {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        q: Option<Vec<f64>>,
        #[arg(long)]
        s: Option<u64>,
    },
    /// Binary water-leveling optimum, optionally with a level-curve sweep.
    Waterlevel {
        #[command(flatten)]
        common: Common,
        /// Log-spaced threshold grid `lo:hi:n`.
        #[arg(long)]
        sweep: Option<String>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Multinomial Monte Carlo check of the variance bounds.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        q: Option<Vec<f64>>,
        #[arg(long)]
        s: Option<u64>,
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Optimal `rho_max` over a grid of noise variances.
    NoiseSweep {
        #[command(flatten)]
        common: Common,
        /// Linear variance grid `lo:hi:n`.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Equal-diagonal Bayes prevalence search.
    Balance {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Cut-point search minimizing `rho_max` in one dimension.
    Cuts1d {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        init: Option<Vec<f64>>,
    },
    /// Matrix property report.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Confusion { common }
            | Command::Bounds { common, .. }
            | Command::Waterlevel { common, .. }
            | Command::Simulate { common, .. }
            | Command::NoiseSweep { common, .. }
            | Command::Balance { common, .. }
            | Command::Cuts1d { common, .. }
            | Command::Validate { common } => common,
        }
    }
}

/// What a command produced.
struct Outcome {
    text: String,
    json: Value,
    csv: String,
    code: i32,
}

fn parse_triple(flag: &str, s: &str) -> Result<SweepSpec, CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || CliError::config(format!("{flag}: expected lo:hi:n, got `{s}`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    Ok(SweepSpec {
        lo: parts[0].parse().map_err(|_| bad())?,
        hi: parts[1].parse().map_err(|_| bad())?,
        n: parts[2].parse().map_err(|_| bad())?,
    })
}

fn linear_grid(spec: SweepSpec) -> Result<Vec<f64>, CliError> {
    if !(spec.lo.is_finite() && spec.hi.is_finite() && spec.hi >= spec.lo) || spec.n < 1 {
        return Err(CliError::config(format!("grid: need lo <= hi and n >= 1, got {}:{}:{}", spec.lo, spec.hi, spec.n)));
    }
    if spec.n == 1 {
        return Ok(vec![spec.lo]);
    }
    let h = (spec.hi - spec.lo) / (spec.n - 1) as f64;
    Ok((0..spec.n)
        .map(|i| if i + 1 == spec.n { spec.hi } else { spec.lo + i as f64 * h })
        .collect())
}

/// Folds command-line overrides into the config.
fn apply_overrides(cmd: &Command, cfg: &mut ExperimentConfig) -> Result<(), CliError> {
    if let Some(seed) = cmd.common().seed {
        cfg.integration.seed = seed;
        if let Some(sim) = cfg.simulate.as_mut() {
            sim.seed = seed;
        }
        if let Some(b) = cfg.balance.as_mut() {
            b.seed = seed;
        }
    }
    match cmd {
        Command::Bounds { q, s, .. } => {
            if q.is_some() || s.is_some() {
                let block = cfg.bounds.get_or_insert(BoundsBlock { q: Vec::new(), s: 0, assume_symmetric: false });
                if let Some(q) = q {
                    block.q = q.clone();
                }
                if let Some(s) = s {
                    block.s = *s;
                }
            }
        }
        Command::Simulate { q, s, replicates, common } => {
            if q.is_some() || s.is_some() || replicates.is_some() {
                let block = cfg.simulate.get_or_insert(SimulateBlock {
                    q: Vec::new(),
                    s: 0,
                    replicates: default_replicates(),
                    seed: common.seed.unwrap_or(0),
                    weight_matrix: None,
                });
                if let Some(q) = q {
                    block.q = q.clone();
                }
                if let Some(s) = s {
                    block.s = *s;
                }
                if let Some(r) = replicates {
                    block.replicates = *r;
                }
            }
        }
        Command::Waterlevel { sweep, tol, .. } => {
            if sweep.is_some() || tol.is_some() {
                let block = cfg.waterlevel.get_or_insert_with(WaterLevelBlock::default);
                if let Some(s) = sweep {
                    block.sweep = Some(parse_triple("--sweep", s)?);
                }
                if let Some(t) = tol {
                    block.tol = *t;
                }
            }
        }
        Command::NoiseSweep { grid: Some(g), .. } => {
            let grid = linear_grid(parse_triple("--grid", g)?)?;
            cfg.noise.get_or_insert(NoiseBlock { shape: None, grid: None }).grid = Some(grid);
        }
        Command::Balance { trials: Some(t), .. } => {
            cfg.balance.get_or_insert_with(BalanceBlock::default).trials = *t;
        }
        Command::Cuts1d { init: Some(init), .. } => match cfg.cuts.as_mut() {
            Some(b) => b.init = init.clone(),
            None => cfg.cuts = Some(CutsBlock { init: init.clone(), search: CutSearch::default() }),
        },
        _ => {}
    }
    Ok(())
}

/// Human-readable number: ten significant decimals, trailing zeros trimmed.
fn human(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x != 0.0 && x.abs() < 1e-4 {
        return format!("{x:.6e}");
    }
    let s = format!("{x:.10}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn human_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| human(*x)).collect();
    format!("[{}]", parts.join(", "))
}

fn matrix_text(p: &DMatrix<f64>) -> String {
    let mut s = String::new();
    for i in 0..p.nrows() {
        let row: Vec<String> = (0..p.ncols()).map(|j| format!("{:>14}", human(p[(i, j)]))).collect();
        let _ = writeln!(s, "  {}", row.join(" "));
    }
    s
}

fn csv_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// CSV text with a header row; numbers are expected pre-formatted with
/// `to_string`, which gives the shortest round-trip representation.
fn table<R: IntoIterator<Item = Vec<String>>>(header: &[&str], rows: R) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

fn key_value_csv(rows: &[(&str, String)]) -> String {
    table(&["quantity", "value"], rows.iter().map(|(k, v)| vec![k.to_string(), v.clone()]))
}

fn matrix_csv(model: Option<&ClassModel>, p: &ConfusionMatrix) -> String {
    let c = p.c();
    let labels: Vec<String> = (0..c)
        .map(|k| model.map(|m| m.label(k).to_string()).unwrap_or_else(|| format!("C{}", k + 1)))
        .collect();
    let mut header = vec!["domain"];
    header.extend(labels.iter().map(String::as_str));
    table(
        &header,
        labels.iter().enumerate().map(|(j, label)| {
            std::iter::once(label.clone()).chain((0..c).map(|k| p.entries()[(j, k)].to_string())).collect()
        }),
    )
}

fn config_matrix(cfg: &ExperimentConfig) -> Result<ConfusionMatrix, CliError> {
    if let Some(rows) = &cfg.matrix {
        return Ok(ConfusionMatrix::from_rows(rows)?);
    }
    Ok(confusion_matrix(cfg.model()?, cfg.partition()?, &cfg.integration)?)
}

fn cmd_confusion(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let p = confusion_matrix(model, cfg.partition()?, &cfg.integration)?;
    let g = gershgorin(&p);
    let mut text = format!("P ({:?}, column tolerance {}):\n", p.method(), human(p.column_tolerance()));
    text += &matrix_text(p.entries());
    let _ = writeln!(text, "radii = {}", human_vec(&g.radii));
    let _ = writeln!(text, "rho_max = {} (column {})", human(g.rho_max), g.argmax_column);
    Ok(Outcome {
        csv: matrix_csv(Some(model), &p),
        json: json!({ "confusion": p, "gershgorin": g }),
        text,
        code: EXIT_OK,
    })
}

fn cmd_bounds(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let block = cfg.bounds.as_ref().ok_or_else(|| CliError::config("bounds: block (or --q and --s) required"))?;
    let q = Prevalence::new(block.q.clone())?;
    if block.s == 0 {
        return Err(CliError::config("bounds.s: must be at least 1"));
    }
    let p = config_matrix(cfg)?;
    let err = classification_error(&p, &q)?;
    let err_bound = error_bound(&p)?;
    let r = variance_bounds(&p, &q, block.s, block.assume_symmetric)?;
    let rows = [
        ("rho_max", r.rho_max.to_string()),
        ("classification_error", err.to_string()),
        ("error_bound", err_bound.to_string()),
        ("eps_rho", r.eps_rho.to_string()),
        ("eps_rho_tight", r.eps_rho_tight.to_string()),
        ("multinomial_term", r.multinomial_term.to_string()),
        ("eps_sigma", r.eps_sigma.to_string()),
        ("eps_sigma_tight", r.eps_sigma_tight.to_string()),
        ("tight_certified", r.tight_certified.to_string()),
    ];
    let mut text = String::new();
    for (k, v) in &rows {
        let shown = v.parse::<f64>().map(human).unwrap_or_else(|_| v.clone());
        let _ = writeln!(text, "{k} = {shown}");
    }
    Ok(Outcome {
        csv: key_value_csv(&rows),
        json: json!({ "classification_error": err, "error_bound": err_bound, "bounds": r }),
        text,
        code: EXIT_OK,
    })
}

fn cmd_waterlevel(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let block = cfg.waterlevel.clone().unwrap_or_default();
    let w = solve_water_level(model, block.tol, &cfg.integration)?;
    let mut text = String::new();
    let _ = writeln!(text, "t* = {}", human(w.t_star));
    let _ = writeln!(text, "rho* = {}", human(w.rho_star));
    let _ = writeln!(text, "mu1* = {}, mu2* = {}", human(w.mu1_star), human(w.mu2_star));
    let _ = writeln!(text, "atom case = {}, evaluations = {}", w.atom_case, w.evaluations);
    if let Some(msg) = &w.warning {
        let _ = writeln!(text, "warning: {msg}");
    }
    let code = if w.rho_star >= 0.5 { EXIT_VIOLATION } else { EXIT_OK };
    let (csv, curve) = match block.sweep {
        Some(s) => {
            let grid = log_grid(s.lo, s.hi, s.n)?;
            let curve = sweep_levels(model, &grid, &cfg.integration)?;
            let csv = table(
                &["t", "mu1", "mu2", "delta", "rho_max_at_t", "boundary1", "boundary2"],
                curve.iter().map(|p| {
                    [p.t, p.mu1, p.mu2, p.delta, p.rho_max_at_t, p.boundary1, p.boundary2]
                        .iter()
                        .map(|v| v.to_string())
                        .collect()
                }),
            );
            let _ = writeln!(text, "sweep: {} thresholds on [{}, {}]", curve.len(), human(s.lo), human(s.hi));
            (csv, Some(curve))
        }
        None => (
            table(
                &["t_star", "rho_star", "mu1_star", "mu2_star", "atom_case"],
                [vec![
                    w.t_star.to_string(),
                    w.rho_star.to_string(),
                    w.mu1_star.to_string(),
                    w.mu2_star.to_string(),
                    w.atom_case.to_string(),
                ]],
            ),
            None,
        ),
    };
    Ok(Outcome { text, csv, json: json!({ "water_level": w, "sweep": curve }), code })
}

fn cmd_simulate(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let block = cfg.simulate.as_ref().ok_or_else(|| CliError::config("simulate: block (or --q and --s) required"))?;
    let q = Prevalence::new(block.q.clone())?;
    if block.s == 0 {
        return Err(CliError::config("simulate.s: must be at least 1"));
    }
    let part = match (&cfg.partition, model.c()) {
        (Some(p), _) => p.clone(),
        (None, 2) => solve_water_level(model, default_water_tol(), &cfg.integration)?.partition,
        (None, _) => return Err(CliError::config("partition: required for simulate with more than two classes")),
    };
    let p = confusion_matrix(model, &part, &cfg.integration)?;
    let weight = match &block.weight_matrix {
        Some(rows) => Some(matrix_from_rows(rows, model.c(), "simulate.weight_matrix")?),
        None => None,
    };
    let opts = SimOptions { weight: weight.clone(), ..Default::default() };
    let report = variance_bounds(&p, &q, block.s, false)?;
    let sim = simulate(model, &part, &p, &q, block.s, block.replicates, block.seed, &opts)?;
    let verdict = bound_check(&sim, &report)?;
    let weighted = match (&weight, sim.empirical_sigma2_weighted, sim.weighted_standard_error) {
        (Some(a), Some(v), Some(se)) => {
            let b = weighted_variance_bound(a, report.eps_sigma)?;
            Some((v, se, b, v <= b + 3.0 * se))
        }
        _ => None,
    };
    let ok = verdict.ok() && weighted.is_none_or(|w| w.3);
    let mut rows = vec![
        ("s", block.s.to_string()),
        ("replicates", block.replicates.to_string()),
        ("seed", block.seed.to_string()),
        ("empirical_sigma2", verdict.empirical_sigma2.to_string()),
        ("standard_error", verdict.standard_error.to_string()),
        ("eps_sigma", verdict.eps_sigma.to_string()),
        ("eps_sigma_tight", verdict.eps_sigma_tight.to_string()),
        ("excess_uncertainty", verdict.excess_uncertainty.to_string()),
        ("eps_rho", verdict.eps_rho.to_string()),
        ("pass", verdict.pass.to_string()),
        ("pass_tight", verdict.pass_tight.map(|b| b.to_string()).unwrap_or_default()),
        ("unbiased", verdict.unbiased.to_string()),
        ("max_bias_in_se", verdict.max_bias_in_se.to_string()),
    ];
    if let Some((v, se, b, pass)) = weighted {
        rows.push(("weighted_sigma2", v.to_string()));
        rows.push(("weighted_standard_error", se.to_string()));
        rows.push(("weighted_bound", b.to_string()));
        rows.push(("weighted_pass", pass.to_string()));
    }
    let mut text = String::new();
    let _ = writeln!(text, "rho_max = {}", human(p.rho_max()));
    for (k, v) in &rows {
        let shown = v.parse::<f64>().map(human).unwrap_or_else(|_| v.clone());
        let _ = writeln!(text, "{k} = {shown}");
    }
    if verdict.low_power {
        let _ = writeln!(text, "warning: fewer than 100 replicates; the check has low power");
    }
    Ok(Outcome {
        csv: key_value_csv(&rows),
        json: json!({ "bounds": report, "simulation": sim, "verdict": verdict }),
        text,
        code: if ok { EXIT_OK } else { EXIT_VIOLATION },
    })
}

fn cmd_noise_sweep(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let block = cfg.noise.as_ref().ok_or_else(|| CliError::config("noise: block (or --grid) required"))?;
    let grid = block.grid.as_ref().ok_or_else(|| CliError::config("noise.grid: required (or --grid)"))?;
    let n = model.dim();
    let shape = match &block.shape {
        Some(rows) => NoiseSpec::new(1.0, matrix_from_rows(rows, n, "noise.shape")?)?,
        None => NoiseSpec::isotropic(n, 1.0)?,
    };
    let sweep = rho_star_vs_noise(model, &shape, grid, cfg.partition.as_ref(), &cfg.integration)?;
    let csv = table(
        &["varsigma2", "rho_star", "rho_fixed", "t_star"],
        sweep.points.iter().map(|p| vec![p.varsigma2.to_string(), p.rho_star.to_string(), csv_opt(p.rho_fixed), csv_opt(p.t_star)]),
    );
    let mut text = String::from("varsigma2         rho_star          rho_fixed\n");
    for p in &sweep.points {
        let _ = writeln!(
            text,
            "{:<17} {:<17} {}{}",
            human(p.varsigma2),
            human(p.rho_star),
            p.rho_fixed.map(human).unwrap_or_else(|| "-".into()),
            if p.degenerate { "  (degenerate)" } else { "" }
        );
    }
    match sweep.monotone {
        Some(m) => {
            let _ = writeln!(text, "monotone = {m} (largest decrease {})", human(sweep.max_decrease));
        }
        None => text.push_str("monotonicity not asserted for more than two classes\n"),
    }
    Ok(Outcome {
        code: if sweep.monotone == Some(false) { EXIT_VIOLATION } else { EXIT_OK },
        json: json!({ "sweep": sweep }),
        csv,
        text,
    })
}

fn cmd_balance(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let block = cfg.balance.clone().unwrap_or_default();
    let q_init = match &block.q_init {
        Some(q) => Prevalence::new(q.clone())?,
        None => Prevalence::uniform(model.c())?,
    };
    let r = balance_prevalence(model, &q_init, block.max_iters, block.tol, &cfg.integration)?;
    let mut text = String::new();
    let _ = writeln!(text, "q* = {}", human_vec(r.q_star.as_slice()));
    let _ = writeln!(text, "diagonal = {}", human_vec(&r.p_star.diagonal()));
    let _ = writeln!(text, "rho* = {}", human(r.rho_star));
    let _ = writeln!(text, "residual = {}, converged = {}, iterations = {}", human(r.residual), r.converged, r.iterations);
    let mut code = if r.converged { EXIT_OK } else { EXIT_NONCONVERGENCE };
    let verdict = if r.converged && block.trials > 0 {
        let v = verify_balance_optimality(&r, model, block.trials, block.seed, block.verify_tol, &cfg.integration)?;
        let _ = writeln!(
            text,
            "optimality check: {}/{} trials dominated, {}/{} chain, min gap {}",
            v.dominated,
            v.trials,
            v.chain_holds,
            v.trials,
            human(v.min_gap)
        );
        if !v.pass {
            code = EXIT_VIOLATION;
        }
        Some(v)
    } else {
        None
    };
    let csv = table(
        &["class", "q_star", "diagonal"],
        r.q_star
            .as_slice()
            .iter()
            .zip(r.p_star.diagonal())
            .enumerate()
            .map(|(k, (q, d))| vec![model.label(k).to_string(), q.to_string(), d.to_string()]),
    );
    Ok(Outcome { text, csv, json: json!({ "balance": r, "verification": verdict }), code })
}

fn cmd_cuts1d(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let block = cfg.cuts.as_ref().ok_or_else(|| CliError::config("cuts: block (or --init) required"))?;
    let r = optimize_cutpoints_1d(model, &block.init, &block.search, &cfg.integration)?;
    let mut text = String::new();
    let _ = writeln!(text, "cuts = {}", human_vec(&r.cuts));
    text += "P:\n";
    text += &matrix_text(r.p.entries());
    let _ = writeln!(text, "rho_max = {}, trace = {}", human(r.rho_max), human(r.trace));
    if let Some(alt) = &r.constant_diagonal_alternative {
        let _ = writeln!(text, "tied constant-diagonal cuts = {}", human_vec(alt));
    }
    let csv = table(&["index", "cut"], r.cuts.iter().enumerate().map(|(i, c)| vec![i.to_string(), c.to_string()]));
    Ok(Outcome { text, csv, json: json!({ "cuts": r }), code: EXIT_OK })
}

fn cmd_validate(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let p = config_matrix(cfg)?;
    let r = validate(&p);
    let rows = [
        ("p1_left_stochastic", r.p1_left_stochastic),
        ("p2_zero_column_sums", r.p2_zero_column_sums),
        ("p3_diagonally_dominant", r.p3_diagonally_dominant),
        ("p4_positive_real_spectrum", r.p4_positive_real_spectrum),
        ("p5_spectral_radius_bound", r.p5_spectral_radius_bound),
        ("p6_min_eigenvalue_bound", r.p6_min_eigenvalue_bound),
        ("inverse_norm_bound", r.inverse_norm_bound),
    ];
    let mut text = String::new();
    let csv = table(&["property", "holds"], rows.iter().map(|(k, v)| vec![k.to_string(), v.to_string()]));
    for (k, v) in rows {
        let _ = writeln!(text, "{k}: {}", if v { "holds" } else { "FAILS" });
    }
    let _ = writeln!(text, "rho_max = {}", human(r.gershgorin.rho_max));
    Ok(Outcome {
        code: if r.all_hold() { EXIT_OK } else { EXIT_VIOLATION },
        json: json!({ "properties": r }),
        text,
        csv,
    })
}

fn write_artifact(path: &Path, outcome: &Outcome) -> Result<(), CliError> {
    let body = match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => outcome.csv.clone(),
        Some("json") => serde_json::to_string_pretty(&outcome.json).expect("results serialize") + "\n",
        _ => return Err(CliError::config(format!("out: `{}` must end in .csv or .json", path.display()))),
    };
    std::fs::write(path, body).map_err(|e| CliError::config(format!("out `{}`: {e}", path.display())))
}

fn execute(cmd: &Command, out: &mut dyn Write) -> Result<i32, CliError> {
    let common = cmd.common();
    let mut cfg = ExperimentConfig::load(&common.config)?;
    apply_overrides(cmd, &mut cfg)?;
    if common.dump_config {
        writeln!(out, "{}", cfg.to_json()).map_err(|e| CliError::config(format!("stdout: {e}")))?;
        return Ok(EXIT_OK);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::config(format!("threads: {e}")))?;
    let outcome = pool.install(|| match cmd {
        Command::Confusion { .. } => cmd_confusion(&cfg),
        Command::Bounds { .. } => cmd_bounds(&cfg),
        Command::Waterlevel { .. } => cmd_waterlevel(&cfg),
        Command::Simulate { .. } => cmd_simulate(&cfg),
        Command::NoiseSweep { .. } => cmd_noise_sweep(&cfg),
        Command::Balance { .. } => cmd_balance(&cfg),
        Command::Cuts1d { .. } => cmd_cuts1d(&cfg),
        Command::Validate { .. } => cmd_validate(&cfg),
    })?;
    if let Some(path) = &common.out {
        write_artifact(path, &outcome)?;
    }
    write!(out, "{}", outcome.text).map_err(|e| CliError::config(format!("stdout: {e}")))?;
    Ok(outcome.code)
}

/// Parses `args` (including the program name) and runs one subcommand,
/// writing the report to `out` and errors to `err`. Returns the exit code.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            if e.use_stderr() {
                let _ = write!(err, "{e}");
            } else {
                let _ = write!(out, "{e}");
            }
            return code;
        }
    };
    match execute(&cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}

/// Entry point for the binary.
pub fn run() -> i32 {
    run_with(std::env::args_os(), &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}

#[cfg(test)]
mod tests {
    use super::*;

    const UNIFORMS: &str = r#"{
        "version": 1,
        "classes": [
            {"label": "A", "density": {"kind": "uniform", "lo": 0.0, "hi": 1.0}},
            {"label": "B", "density": {"kind": "uniform", "lo": 0.9, "hi": 1.9}},
            {"label": "C", "density": {"kind": "uniform", "lo": 1.5, "hi": 2.5}}
        ],
        "partition": {"kind": "cut_points", "cuts": [0.9, 1.7]},
        "cuts": {"init": [1.2, 1.6]}
    }"#;

    fn run_cfg(text: &str, args: &[&str]) -> (i32, String, String) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, text).unwrap();
        let mut argv = vec!["assay-bounds".to_string(), args[0].to_string(), "--config".into()];
        argv.push(path.to_str().unwrap().into());
        argv.extend(args[1..].iter().map(|s| s.to_string()));
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run_with(argv, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn confusion_prints_rho() {
        let (code, out, _) = run_cfg(UNIFORMS, &["confusion"]);
        assert_eq!(code, 0);
        assert!(out.contains("rho_max = 0.2"), "{out}");
    }

    #[test]
    fn bad_prevalence_is_config_error() {
        let (code, _, err) = run_cfg(UNIFORMS, &["bounds", "--q", "0.6,0.6,0.0", "--s", "10"]);
        assert_eq!(code, 4);
        assert!(err.contains("prevalence does not sum to 1"), "{err}");
    }

    #[test]
    fn unknown_field_names_it() {
        let text = UNIFORMS.replace("\"cuts\": {", "\"cutz\": {");
        let (code, _, err) = run_cfg(&text, &["confusion"]);
        assert_eq!(code, 4);
        assert!(err.contains("cutz"), "{err}");
    }

    #[test]
    fn wrong_version() {
        let text = UNIFORMS.replace("\"version\": 1", "\"version\": 7");
        let (code, _, err) = run_cfg(&text, &["confusion"]);
        assert_eq!(code, 4);
        assert!(err.contains("version"));
    }

    #[test]
    fn dump_config_round_trips() {
        let (code, dumped, _) = run_cfg(UNIFORMS, &["cuts1d", "--dump-config", "--init", "1.1,1.5", "--seed", "9"]);
        assert_eq!(code, 0);
        let cfg = ExperimentConfig::from_json(&dumped).unwrap();
        assert_eq!(cfg.cuts.as_ref().unwrap().init, vec![1.1, 1.5]);
        assert_eq!(cfg.integration.seed, 9);
        assert_eq!(cfg.to_json() + "\n", dumped);
    }

    #[test]
    fn cuts1d_converges() {
        let (code, out, _) = run_cfg(UNIFORMS, &["cuts1d"]);
        assert_eq!(code, 0);
        assert!(out.contains("cuts = [0.9, 1.7]"), "{out}");
    }

    #[test]
    fn validate_flags_violation() {
        let text = r#"{"version": 1, "matrix": [[0.4, 0.1], [0.6, 0.9]]}"#;
        let (code, out, _) = run_cfg(text, &["validate"]);
        assert_eq!(code, 2);
        assert!(out.contains("p3_diagonally_dominant: FAILS"));
    }

    #[test]
    fn exit_codes_follow_wrapped_errors() {
        let inner = Error::NoWaterLevel { t_lo: 1.0, t_hi: 2.0, sign: 1.0 };
        let e = Error::AtNoiseLevel { varsigma2: 0.5, source: Box::new(inner) };
        assert_eq!(exit_code(&e), EXIT_NONCONVERGENCE);
        assert_eq!(exit_code(&Error::BoundDiverges { rho_max: 0.6 }), EXIT_VIOLATION);
    }

    #[test]
    fn human_format() {
        assert_eq!(human(0.19999999999999996), "0.2");
        assert_eq!(human(1.5211102763904567), "1.5211102764");
        assert_eq!(human(0.0), "0");
        assert_eq!(human(1e-9), "1.000000e-9");
    }
}
