use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn specden(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_specden"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("SPECDEN_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], out: &Path) {
    let o = specden(args, out);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn csv(path: &Path) -> Vec<Vec<f64>> {
    read(path)
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

#[test]
fn solve_recovers_the_square_marchenko_pastur_value() {
    let dir = TempDir::new().unwrap();
    ok(&["solve", "--preset", "mp", "--p", "100", "--n", "100", "--re", "-1"], dir.path());
    let v = json(&dir.path().join("solve.json"));
    let m = v["m_n"][0].as_f64().unwrap();
    assert!((m - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-6, "{m}");
    assert_eq!(v["m_n"][1].as_f64().unwrap(), 0.0);
    assert!(v.get("delta").is_none());
    let manifest = json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["outputs"], serde_json::json!(["solve.json"]));
    assert_eq!(manifest["config"]["task"]["command"], "solve");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let args = ["solve", "--preset", "fig2", "--p", "20", "--n", "40", "--re", "1.5", "--im", "0.05", "--include-deltas"];
    ok(&args, a.path());
    ok(&args, b.path());
    assert_eq!(read(&a.path().join("solve.json")), read(&b.path().join("solve.json")));
    let mut ma = json(&a.path().join("manifest.json"));
    let mut mb = json(&b.path().join("manifest.json"));
    for m in [&mut ma, &mut mb] {
        m.as_object_mut().unwrap().remove("timestamp");
        m["config"].as_object_mut().unwrap().remove("out");
    }
    assert_eq!(ma, mb);
}

#[test]
fn manifests_replay_to_the_same_artifacts() {
    let dir = TempDir::new().unwrap();
    let first = dir.path().join("first");
    ok(
        &["density", "--preset", "fig3", "--points", "120", "--measures", "0,5", "--samples", "2", "--seed", "9"],
        &first,
    );
    let again = dir.path().join("again");
    let manifest = first.join("manifest.json");
    ok(&["--config", manifest.to_str().unwrap()], &again);
    for name in ["density.csv", "eigenvalues.csv"] {
        assert_eq!(read(&first.join(name)), read(&again.join(name)), "{name}");
    }
    assert_eq!(json(&again.join("manifest.json"))["config"]["seed"], 9);
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = TempDir::new().unwrap();
    let args = ["density", "--preset", "fig2", "--p", "30", "--n", "60", "--points", "100"];
    ok(&[&args[..], &["--threads", "1"]].concat(), &dir.path().join("one"));
    let o = Command::new(env!("CARGO_BIN_EXE_specden"))
        .args(args)
        .arg("--out")
        .arg(dir.path().join("three"))
        .env("SPECDEN_THREADS", "3")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(json(&dir.path().join("three/manifest.json"))["config"]["threads"], 3);
    for name in ["density.csv", "eigenvalues.csv"] {
        assert_eq!(read(&dir.path().join("one").join(name)), read(&dir.path().join("three").join(name)));
    }
}

#[test]
fn malformed_model_file_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let model = dir.path().join("model.json");
    std::fs::write(&model, "{ \"p\": 2,\n  \"n\": 1,\n  \"colour\": 3 }").unwrap();
    let o = specden(&["solve", "--model", model.to_str().unwrap(), "--re", "-1"], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3") && err.contains("colour"), "{err}");
    assert!(!dir.path().join("out/manifest.json").exists());
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = TempDir::new().unwrap();
    ok(&["solve", "--preset", "fig3", "--re", "-2"], dir.path());
    let mut manifest = json(&dir.path().join("manifest.json"));
    manifest["config"]["task"]["params"]["solver"]["relaxation"] = 0.3.into();
    let path = dir.path().join("edited.json");
    std::fs::write(&path, manifest.to_string()).unwrap();
    let o = specden(&["--config", path.to_str().unwrap()], &dir.path().join("replay"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("relaxation"));
}

#[test]
fn numerical_failure_exits_three_and_leaves_no_files() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let o = specden(&["solve", "--preset", "fig3", "--re", "1", "--im", "0.01", "--max-iter", "2"], &out);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(std::fs::read_dir(&out).map_or(0, |d| d.count()), 0);
}

#[test]
fn input_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let cases: &[&[&str]] = &[
        &["solve", "--preset", "fig3", "--re", "1"],
        &["solve", "--preset", "fig5", "--re", "-1"],
        &["solve", "--preset", "mp", "--p", "10", "--re", "-1"],
        &["noeig", "--preset", "fig3", "--interval", "1,2"],
        &["zf", "--p", "40", "--n", "40"],
        &["density", "--preset", "fig3", "--distribution", "student-t:3"],
        &["sinr", "--snr", "0:4:20"],
        &["--config", "missing.json", "solve", "--preset", "fig3", "--re", "-1"],
    ];
    for args in cases {
        let o = specden(args, &dir.path().join("out"));
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert!(!dir.path().join("out/manifest.json").exists());
}

#[test]
fn validate_flags_degenerate_models() {
    let dir = TempDir::new().unwrap();
    ok(&["validate", "--preset", "fig4"], &dir.path().join("good"));
    assert!(json(&dir.path().join("good/validate.json"))["violations"].as_array().unwrap().is_empty());
    let model = dir.path().join("zero.json");
    std::fs::write(&model, r#"{ "p": 2, "n": 2, "correlations": [{ "diag": [0, 0] }, { "diag": [0, 0] }] }"#).unwrap();
    let o = specden(&["validate", "--model", model.to_str().unwrap()], &dir.path().join("bad"));
    assert_eq!(o.status.code(), Some(2));
}

/// Kolmogorov distance between the eigenvalues of trial 0 and the CDF of
/// the density (trapezoidal rule, normalised to one).
fn ks_from_files(density: &Path, eigenvalues: &Path) -> f64 {
    let rows = csv(density);
    let mut cdf = vec![0.0];
    for w in rows.windows(2) {
        let last = *cdf.last().unwrap();
        cdf.push(last + 0.5 * (w[0][1] + w[1][1]) * (w[1][0] - w[0][0]));
    }
    let total = *cdf.last().unwrap();
    let mut eig: Vec<f64> = csv(eigenvalues).into_iter().filter(|r| r[0] == 0.0).map(|r| r[2]).collect();
    eig.sort_by(f64::total_cmp);
    let p = eig.len() as f64;
    let mut ks: f64 = 0.0;
    for (k, row) in rows.iter().enumerate() {
        let below = eig.partition_point(|&l| l <= row[0]) as f64 / p;
        ks = ks.max((below - cdf[k] / total).abs());
    }
    ks
}

#[test]
fn fig2_density_matches_one_draw() {
    let dir = TempDir::new().unwrap();
    ok(&["density", "--preset", "fig2"], dir.path());
    let ks = ks_from_files(&dir.path().join("density.csv"), &dir.path().join("eigenvalues.csv"));
    assert!(ks <= 0.05, "KS = {ks}");
    let eig = csv(&dir.path().join("eigenvalues.csv"));
    assert_eq!(eig.len(), 200);
}

#[test]
fn fig4_gap_holds_no_eigenvalues() {
    let dir = TempDir::new().unwrap();
    ok(&["noeig", "--preset", "fig4", "--trials", "100"], dir.path());
    let v = json(&dir.path().join("noeig.json"));
    assert_eq!(v["trials"]["trials"], 100);
    assert_eq!(v["trials"]["escapes"], 0);
    let manifest = json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["config"]["task"]["params"]["distribution"]["kind"], "uniform-real");
}

#[test]
fn fig5_sinr_sweep_agrees_with_simulation() {
    let dir = TempDir::new().unwrap();
    ok(&["sinr", "--preset", "fig5", "--snr", "0:4:20"], dir.path());
    let rows = csv(&dir.path().join("sinr.csv"));
    assert_eq!(rows.len(), 6);
    for r in &rows {
        assert!((r[1] - r[2]).abs() <= 3.0 * r[3], "{r:?}");
    }
    assert!(rows.windows(2).all(|w| w[1][1] > w[0][1]));
}

#[test]
fn explicit_flags_win_over_preset_defaults() {
    let dir = TempDir::new().unwrap();
    ok(
        &["sinr", "--preset", "fig5", "--antennas", "16", "--snr", "5", "--trials", "20"],
        dir.path(),
    );
    let params = &json(&dir.path().join("manifest.json"))["config"]["task"]["params"];
    assert_eq!(params["antennas"], 16);
    assert_eq!(params["interferers"], 32);
    ok(
        &["noeig", "--preset", "fig3", "--trials", "5", "--distribution", "rademacher", "--samples", "0"],
        &dir.path().join("n"),
    );
    let params = &json(&dir.path().join("n/manifest.json"))["config"]["task"]["params"];
    assert_eq!(params["distribution"]["kind"], "rademacher-complex");
    assert!(!dir.path().join("n/eigenvalues.csv").exists());
}
