use std::path::{Path, PathBuf};
use std::process::Command;

use ivspectral::cli::ingest::write_dataset;
use ivspectral::dgp::{simulate_dataset, DgpConfig, InstrumentDesign, PiScheme};
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ivspectral"))
}

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn run(args: &[&str]) -> Run {
    let out = bin().args(args).output().expect("binary runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn estimate(dir: &Path, csv: &str, config: &str) -> Run {
    let data = write(dir, "data.csv", csv);
    let cfg = write(dir, "run.toml", config);
    run(&["estimate", "--config", s(&cfg), "--data", s(&data)])
}

fn delta(report: &Value, label: &str) -> f64 {
    report["results"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["label"] == label)
        .unwrap_or_else(|| panic!("no result {label}"))["delta_hat"][0]
        .as_f64()
        .unwrap()
}

fn error_kind(run: &Run) -> String {
    let v: Value = serde_json::from_str(run.stderr.trim()).expect("stderr is a JSON record");
    v["error"]["kind"].as_str().unwrap().to_string()
}

#[test]
fn estimate_trivial_three_rows() {
    let dir = TempDir::new().unwrap();
    let r = estimate(dir.path(), "y,x1,z1\n2,1,1\n4,2,2\n6,3,3\n", "");
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v: Value = serde_json::from_str(&r.stdout).unwrap();
    assert!((delta(&v, "tsls") - 2.0).abs() < 1e-12);
    for key in ["config", "results", "diagnostics", "version", "seed"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn estimate_square_instruments_matches_ols() {
    let dir = TempDir::new().unwrap();
    let csv = "y,x1,z1,z2,z3\n1,0.5,2,1,0\n-2,1.5,0,1,3\n4,-1,1,0,1\n";
    let r = estimate(dir.path(), csv, "");
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v: Value = serde_json::from_str(&r.stdout).unwrap();
    assert!((delta(&v, "ols") - delta(&v, "tsls")).abs() < 1e-10);
}

#[test]
fn estimate_group_dummies_by_hand() {
    let dir = TempDir::new().unwrap();
    let csv = "y,x1,z1,z2\n2,1,1,0\n4,2,1,0\n6,3,0,1\n10,5,0,1\n";
    let r = estimate(dir.path(), csv, "");
    let v: Value = serde_json::from_str(&r.stdout).unwrap();
    assert!((delta(&v, "tsls") - 2.0).abs() < 1e-12);
}

#[test]
fn estimate_csv_output() {
    let dir = TempDir::new().unwrap();
    let data = write(dir.path(), "data.csv", "y,x1,z1\n2,1,1\n4,2,2\n6,3,3\n");
    let cfg = write(
        dir.path(),
        "run.toml",
        "[[estimators]]\nmethod = \"tsls_regularized\"\nlabel = \"ridge\"\nscheme = { kind = \"tikhonov\", alpha = 1.0 }\n",
    );
    let out = dir.path().join("nested/report.csv");
    let r = run(&[
        "estimate", "--config", s(&cfg), "--data", s(&data), "--out", s(&out), "--format", "csv",
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# version="));
    assert!(lines[1].starts_with("# seed="));
    assert!(lines[2].starts_with("# config={"));
    assert_eq!(lines[3], "estimator,method,coordinate,delta_hat,condition_number,effective_df");
    assert!(lines[4].starts_with("ridge,tsls_tikhonov,0,2.0,"), "{}", lines[4]);
}

#[test]
fn estimate_error_exit_codes() {
    let dir = TempDir::new().unwrap();
    let missing = estimate(dir.path(), "y,x1\n1,2\n", "");
    assert_eq!(missing.code, 3);
    assert_eq!(error_kind(&missing), "data");

    let non_numeric = estimate(dir.path(), "y,x1,z1\n1,two,3\n", "");
    assert_eq!(non_numeric.code, 3);

    let rank = estimate(dir.path(), "y,x1,z1,z2,z3\n1,2,1,0,1\n2,1,0,1,1\n", "");
    assert_eq!(rank.code, 4, "{}", rank.stderr);
    assert_eq!(error_kind(&rank), "rank");

    let bad_key = estimate(dir.path(), "y,x1,z1\n1,2,3\n", "alpha = 1\n");
    assert_eq!(bad_key.code, 2);
    assert_eq!(error_kind(&bad_key), "config");
}

#[test]
fn config_error_names_field() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "run.toml",
        "[scenario.dgp]\nn = 100\nk = 10\npi = { kind = \"fixed_support\", support_size = 3, value = 1.0 }\ndesign = { kind = \"ar1\", rho = 1.2 }\n",
    );
    let r = run(&["simulate", "--config", s(&cfg)]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("design.rho"), "{}", r.stderr);
}

const NOISELESS: &str = r#"
[scenario]
replications = 1
master_seed = 3

[scenario.dgp]
n = 50
k = 4
sigma_u = 1e-12
sigma_v = 1e-12
pi = { kind = "fixed_support", support_size = 2, value = 1.0 }
"#;

#[test]
fn simulate_noiseless_has_zero_bias() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "run.toml", NOISELESS);
    let r = run(&["simulate", "--config", s(&cfg)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v: Value = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(v["seed"], 3);
    for cell in v["results"]["cells"].as_array().unwrap() {
        let bias = cell["coordinates"][0]["mean_bias"].as_f64().unwrap();
        assert!(bias.abs() < 1e-8, "{cell}");
    }
}

#[test]
fn simulate_is_byte_identical_across_runs_and_workers() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "run.toml",
        &NOISELESS
            .replace("replications = 1", "replications = 16")
            .replace("sigma_u = 1e-12\nsigma_v = 1e-12\n", "sigma_vu = [0.3]\n"),
    );
    for format in ["json", "csv"] {
        let mut reports = Vec::new();
        for workers in ["1", "1", "8"] {
            let out = dir.path().join(format!("r{}.{format}", reports.len()));
            let r = run(&[
                "simulate", "--config", s(&cfg), "--out", s(&out), "--format", format, "--workers", workers,
            ]);
            assert_eq!(r.code, 0, "{}", r.stderr);
            reports.push(std::fs::read(&out).unwrap());
        }
        assert_eq!(reports[0], reports[1]);
        assert_eq!(reports[0], reports[2]);
    }
    // A different seed changes the report.
    let a = run(&["simulate", "--config", s(&cfg), "--seed", "1"]).stdout;
    let b = run(&["simulate", "--config", s(&cfg), "--seed", "2"]).stdout;
    assert_ne!(a, b);
}

fn dataset_csv(dir: &Path, config: &DgpConfig, seed: u64) -> PathBuf {
    let mut c = config.clone();
    c.resolve_defaults();
    let data = simulate_dataset(&c, seed).unwrap();
    let path = dir.join("data.csv");
    let mut file = std::fs::File::create(&path).unwrap();
    write_dataset(&data, &mut file).unwrap();
    path
}

fn orthonormal(pi: PiScheme) -> DgpConfig {
    DgpConfig {
        n: 800,
        k: 80,
        g: 1,
        pi,
        design: InstrumentDesign::Orthonormalized,
        delta_true: vec![],
        sigma_u: 1.0,
        sigma_vu: vec![],
        sigma_v: 1.0,
    }
}

fn diagnose(dir: &Path, data: &Path, config: &str) -> Run {
    let cfg = write(dir, "diag.toml", config);
    run(&["diagnose", "--config", s(&cfg), "--data", s(data)])
}

#[test]
fn diagnose_constant_pi_diverges() {
    let dir = TempDir::new().unwrap();
    let data = dataset_csv(dir.path(), &orthonormal(PiScheme::FixedSupport { support_size: 80, value: 1.0 }), 5);
    let r = diagnose(
        dir.path(),
        &data,
        "[scenario.dgp]\nn = 800\nk = 80\ndesign = { kind = \"orthonormalized\" }\npi = { kind = \"fixed_support\", support_size = 80, value = 1.0 }\n",
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v: Value = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(v["diagnostics"]["cauchy_gap"]["verdict"], "diverging");
    assert_eq!(v["diagnostics"]["cauchy_gap"]["k_grid"], serde_json::json!([10, 20, 40, 80]));
    assert!(v["results"].is_null());
}

#[test]
fn diagnose_geometric_pi_is_cauchy_like() {
    let dir = TempDir::new().unwrap();
    let scheme = PiScheme::GeometricDecay { base: 1.0, ratio: 0.5 };
    let data = dataset_csv(dir.path(), &orthonormal(scheme), 6);
    let r = diagnose(
        dir.path(),
        &data,
        "[scenario.dgp]\nn = 800\nk = 80\ndesign = { kind = \"orthonormalized\" }\npi = { kind = \"geometric_decay\", base = 1.0, ratio = 0.5 }\n",
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v: Value = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(v["diagnostics"]["cauchy_gap"]["verdict"], "cauchy_like");
}

#[test]
fn diagnose_zero_pi_file() {
    let dir = TempDir::new().unwrap();
    let data = dataset_csv(dir.path(), &orthonormal(PiScheme::Weak { scale: 1.0 }), 7);
    let mut pi = String::from("pi1\n");
    for _ in 0..80 {
        pi.push_str("0\n");
    }
    let pi_path = write(dir.path(), "pi.csv", &pi);
    let r = diagnose(dir.path(), &data, &format!("[diagnose]\npi_path = {:?}\n", s(&pi_path)));
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v: Value = serde_json::from_str(&r.stdout).unwrap();
    let d = &v["diagnostics"];
    assert_eq!(d["effective_count"][0]["count_effective"], 0);
    assert_eq!(d["assumption3"]["q_hat"].as_f64(), Some(0.0));
}

#[test]
fn diagnose_without_pi_explains_both_modes() {
    let dir = TempDir::new().unwrap();
    let data = write(dir.path(), "data.csv", "y,x1,z1,z2\n1,2,3,4\n2,1,0,1\n0,1,1,1\n");
    let r = diagnose(dir.path(), &data, "");
    assert_eq!(r.code, 2);
    assert_eq!(error_kind(&r), "parameter");
    assert!(r.stderr.contains("pi_path") && r.stderr.contains("scenario.dgp"), "{}", r.stderr);
}

#[test]
fn diagnose_is_byte_identical_across_workers() {
    let dir = TempDir::new().unwrap();
    let scheme = PiScheme::GeometricDecay { base: 1.0, ratio: 0.5 };
    let data = dataset_csv(dir.path(), &orthonormal(scheme), 8);
    let cfg = write(
        dir.path(),
        "diag.toml",
        "[scenario]\nmaster_seed = 8\n[scenario.dgp]\nn = 800\nk = 80\ndesign = { kind = \"orthonormalized\" }\npi = { kind = \"geometric_decay\", base = 1.0, ratio = 0.5 }\n",
    );
    for format in ["json", "csv"] {
        let outputs: Vec<String> = ["1", "1", "8"]
            .iter()
            .map(|w| {
                let r = run(&[
                    "diagnose", "--config", s(&cfg), "--data", s(&data), "--format", format, "--workers", w,
                ]);
                assert_eq!(r.code, 0, "{}", r.stderr);
                r.stdout
            })
            .collect();
        assert_eq!(outputs[0], outputs[1]);
        assert_eq!(outputs[0], outputs[2]);
    }
}

#[test]
fn help_lists_subcommands() {
    let r = run(&["--help"]);
    assert_eq!(r.code, 0);
    for cmd in ["simulate", "estimate", "diagnose"] {
        assert!(r.stdout.contains(cmd));
    }
}
