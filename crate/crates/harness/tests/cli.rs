use std::path::Path;
use std::process::Command;

use pfg_harness::manifest::read_stamp;
use pfg_harness::presets::load_preset;
use pfg_harness::{run_scenario, HarnessError, RunOptions, ScenarioConfig};

const SMALL: &str = r#"
scenario = "ill-conditioned"
seed = 4

[target]
mean = [1.0, 1.0]
cov_diag = [100.0, 1.0]

[init]
n = 60

[analytic]
fields = ["l2", "mahalanobis"]
eta = 0.01
horizon = 5.0
record_every = 50

[[samplers]]
kind = "svgd"
name = "svgd_rbf"
eta = 0.01
steps = 40

[[samplers]]
kind = "pfg"
name = "pfg_mlp"
hidden = 32
inner_steps = 2
eta = 0.01
steps = 40

[metrics]
record_every = 10
"#;

fn pfg() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pfg"))
}

fn run_small(out: &Path) {
    let cfg = ScenarioConfig::from_toml(SMALL).unwrap();
    cfg.validate().unwrap();
    let opts = RunOptions { out: Some(out.to_path_buf()), ..RunOptions::default() };
    run_scenario(&cfg, &opts).unwrap();
}

fn csv_files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    v.sort();
    v
}

#[test]
fn fig2_preset_echoes_target() {
    let cfg = load_preset("fig2").unwrap();
    assert_eq!(cfg.target.mean.as_deref(), Some(&[20.0, 20.0][..]));
    assert_eq!(cfg.target.cov_diag.as_deref(), Some(&[100.0, 1.0][..]));
}

#[test]
fn misspelled_key_is_a_parse_error_naming_it() {
    let text = SMALL.replace("eta = 0.01\nsteps = 40\n\n[[samplers]]", "learning_rte = 0.01\nsteps = 40\n\n[[samplers]]");
    let err = ScenarioConfig::from_toml(&text).unwrap_err();
    assert!(matches!(err, HarnessError::Parse(_)));
    assert!(err.to_string().contains("learning_rte"), "{err}");
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn missing_dataset_exits_with_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("lr.toml");
    std::fs::write(
        &cfg,
        "scenario = \"logistic\"\n[target]\ndataset = \"nope.csv\"\n[init]\nn = 10\n[[samplers]]\nkind = \"svgd\"\neta = 0.01\nsteps = 1\n",
    )
    .unwrap();
    let out = pfg().arg("run").arg(&cfg).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("dataset"), "{stderr}");
    assert!(!dir.path().join("o").exists());
}

#[test]
fn fixed_seed_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_small(&a);
    run_small(&b);
    let files = csv_files(&a);
    assert!(files.len() >= 6, "{files:?}");
    assert_eq!(files, csv_files(&b));
    for f in files {
        assert_eq!(std::fs::read(a.join(&f)).unwrap(), std::fs::read(b.join(&f)).unwrap(), "{f}");
    }
}

#[test]
fn artifacts_are_stamped_and_stay_in_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    run_small(&out);
    let cfg = ScenarioConfig::from_toml(SMALL).unwrap();
    let hash = pfg_harness::manifest::config_sha256(&cfg);
    for f in csv_files(&out) {
        let text = std::fs::read_to_string(out.join(&f)).unwrap();
        let (seed, h) = read_stamp(&text).unwrap_or_else(|| panic!("{f} has no stamp"));
        assert_eq!(seed, 4);
        assert_eq!(h, hash);
    }
    let top: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(top.len(), 1);
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 4);
    assert!(manifest["defaults_used"].as_array().is_some_and(|d| !d.is_empty()));
    assert!(manifest["wall_clock_s"].as_f64().is_some());
}

#[test]
fn ill_conditioned_trace_columns_and_oracle_ordering() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    run_small(&out);
    let trace = std::fs::read_to_string(out.join("trace_pfg_mlp.csv")).unwrap();
    let header = trace.lines().nth(1).unwrap();
    assert_eq!(header, "step,t,kl,mean_err_sq");

    let last_kl = |name: &str| -> f64 {
        let text = std::fs::read_to_string(out.join(name)).unwrap();
        let row = text.lines().last().unwrap();
        let cols: Vec<&str> = row.split(',').collect();
        assert!((cols[0].parse::<f64>().unwrap() - 5.0).abs() < 1e-9);
        cols[1].parse().unwrap()
    };
    let m = last_kl("oracle_mahalanobis.csv");
    let l = last_kl("oracle_l2.csv");
    assert!(m < l, "{m} vs {l}");
}

#[test]
fn presets_command_lists_every_preset() {
    let out = pfg().arg("presets").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for p in ["fig2", "fig3", "fig4", "table4", "table6", "table8", "logistic"] {
        assert!(text.contains(p), "{text}");
    }
}

#[test]
fn acceptance_command_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = pfg().args(["acceptance", "--only", "2,7"]).arg("--out").arg(dir.path()).output().unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS criterion")).count(), 2, "{stdout}");
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let results = report["results"].as_array().unwrap();
    assert_eq!(results.len(), 2);
    assert!(results.iter().all(|r| r["runtime_s"].as_f64().is_some() && r["budget_s"].as_f64().is_some()));
}
