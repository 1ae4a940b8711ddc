use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use assay_bounds::cli::ExperimentConfig;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_assay-bounds"));
    c.env_remove("ASSAY_THREADS");
    c
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn confusion_on_uniforms() {
    let o = run(&["confusion", "--config", config("uniforms.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("rho_max = 0.2"));
}

#[test]
fn waterlevel_on_weibull() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let o = run(&["waterlevel", "--config", config("weibull.json").to_str().unwrap(), "--out", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("t* = 1.5211"), "{text}");
    assert!(text.contains("rho* = 0.275508"), "{text}");
    let body = std::fs::read_to_string(&csv).unwrap();
    assert!(body.starts_with("t,mu1,mu2,delta"));
    assert_eq!(body.lines().count(), 201);
}

#[test]
fn bounds_rejects_bad_prevalence() {
    let o = run(&["bounds", "--config", config("assay.json").to_str().unwrap(), "--q", "0.6,0.6"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("prevalence does not sum to 1"));
}

#[test]
fn missing_config_is_config_error() {
    let o = run(&["confusion", "--config", "/nonexistent/cfg.json"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn non_dominant_matrix_is_violation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    std::fs::write(&path, r#"{"version": 1, "matrix": [[0.4, 0.3], [0.6, 0.7]], "bounds": {"q": [0.5, 0.5], "s": 10}}"#).unwrap();
    let o = run(&["bounds", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["validate", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unconverged_balance_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.json");
    let base = std::fs::read_to_string(config("gaussian3.json")).unwrap();
    let cfg = base.replace("\"max_iters\": 500", "\"max_iters\": 1");
    std::fs::write(&path, cfg).unwrap();
    let o = run(&["balance", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn every_subcommand_exists() {
    for sub in ["confusion", "bounds", "waterlevel", "simulate", "noise-sweep", "balance", "cuts1d", "validate"] {
        let o = run(&[sub, "--help"]);
        assert_eq!(o.status.code(), Some(0), "{sub}");
    }
}

#[test]
fn dumped_configs_round_trip() {
    let cases: &[(&str, &[&str])] = &[
        ("uniforms.json", &["cuts1d", "--init", "1.1,1.5"]),
        ("weibull.json", &["waterlevel", "--sweep", "0.1:10:50"]),
        ("gaussian2d.json", &["waterlevel"]),
        ("assay.json", &["simulate", "--seed", "99", "--replicates", "50"]),
        ("noise_fixed.json", &["noise-sweep", "--grid", "0:0.01:5"]),
        ("gaussian3.json", &["balance", "--trials", "3"]),
    ];
    let dir = tempfile::tempdir().unwrap();
    for (name, args) in cases {
        let path = config(name);
        let mut argv: Vec<&str> = args.to_vec();
        argv.extend(["--config", path.to_str().unwrap(), "--dump-config"]);
        let first = run(&argv);
        assert_eq!(first.status.code(), Some(0), "{name}");
        let dumped = stdout(&first);
        let parsed = ExperimentConfig::from_json(&dumped).unwrap();
        let again = dir.path().join(name);
        std::fs::write(&again, &dumped).unwrap();
        let second = run(&[args[0], "--config", again.to_str().unwrap(), "--dump-config"]);
        assert_eq!(stdout(&second), dumped, "{name}");
        assert_eq!(ExperimentConfig::from_json(&stdout(&second)).unwrap(), parsed);
    }
}

#[test]
fn csv_output_is_deterministic_across_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cases: &[(&str, &[&str])] = &[
        ("assay.json", &["simulate", "--replicates", "400", "--seed", "5"]),
        ("assay.json", &["noise-sweep"]),
        ("weibull.json", &["waterlevel"]),
        ("gaussian3.json", &["balance", "--trials", "8"]),
    ];
    for (i, (name, args)) in cases.iter().enumerate() {
        let mut outputs = Vec::new();
        for threads in ["1", "3", "1"] {
            let out = dir.path().join(format!("{i}-{threads}-{}.csv", outputs.len()));
            let path = config(name);
            let mut argv: Vec<&str> = args.to_vec();
            argv.extend(["--config", path.to_str().unwrap(), "--threads", threads, "--out", out.to_str().unwrap()]);
            let o = run(&argv);
            assert_eq!(o.status.code(), Some(0), "{name} {args:?}: {}", String::from_utf8_lossy(&o.stderr));
            outputs.push(std::fs::read(&out).unwrap());
        }
        assert!(outputs.windows(2).all(|w| w[0] == w[1]), "{name} {args:?}");
    }
}

#[test]
fn thread_env_var_is_honored_and_overridden() {
    let path = config("assay.json");
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let common = ["simulate", "--config", path.to_str().unwrap(), "--replicates", "200"];
    let o = bin().args(common).args(["--out", a.to_str().unwrap()]).env("ASSAY_THREADS", "2").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let o = bin()
        .args(common)
        .args(["--out", b.to_str().unwrap(), "--threads", "1"])
        .env("ASSAY_THREADS", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn json_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let o = run(&["cuts1d", "--config", config("uniforms.json").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    let cuts = v["cuts"]["cuts"].as_array().unwrap();
    assert!((cuts[1].as_f64().unwrap() - 1.7).abs() < 1e-3);
}

#[test]
fn bad_out_extension() {
    let o = run(&["confusion", "--config", config("uniforms.json").to_str().unwrap(), "--out", "/tmp/x.txt"]);
    assert_eq!(o.status.code(), Some(4));
}
