use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn pmler() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pmler"));
    // Keep the caller's environment from leaking flag overrides in.
    for (key, _) in std::env::vars_os() {
        if key.to_string_lossy().starts_with("PMLER_") {
            cmd.env_remove(key);
        }
    }
    cmd
}

fn run(args: &[&str]) -> Output {
    pmler().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "pmler {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// 48 instances in four well-separated clusters, one or two labels each.
fn write_dataset(dir: &TempDir) -> PathBuf {
    let (n, d, l) = (48, 4, 5);
    let mut text = format!("#{n} {d} {l}\n");
    for i in 0..n {
        let cluster = i % 4;
        let labels = match cluster {
            0 => "0",
            1 => "1,2",
            2 => "3",
            _ => "0,4",
        };
        let feats: Vec<String> = (0..d)
            .map(|f| {
                let centre = if f == cluster { 3.0 } else { 0.0 };
                let jitter = ((i * 7 + f * 13) % 11) as f64 / 20.0;
                format!("{f}:{}", centre + jitter)
            })
            .collect();
        text.push_str(&format!("{labels} {}\n", feats.join(" ")));
    }
    let path = dir.path().join("toy.txt");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn full_workflow() {
    let dir = TempDir::new().unwrap();
    let data = write_dataset(&dir);
    let noisy = dir.path().join("noisy.txt");
    let enriched = dir.path().join("yhat.csv");
    let model = dir.path().join("model.csv");
    let trace = dir.path().join("trace.csv");
    let scores = dir.path().join("scores.csv");
    let labels = dir.path().join("labels.csv");
    let report = dir.path().join("report.json");

    ok(&["inject-noise", path_str(&data), "--noise", "100", "--seed", "3", "--out", path_str(&noisy)]);
    let noisy_text = std::fs::read_to_string(&noisy).unwrap();
    assert!(noisy_text.lines().nth(1).unwrap().contains('|'), "truth block kept: {noisy_text}");

    ok(&["enrich", path_str(&noisy), "--k", "5", "--out", path_str(&enriched)]);
    assert!(std::fs::read_to_string(&enriched).unwrap().starts_with("#48 5\n"));

    ok(&[
        "train", path_str(&noisy), "--k", "5", "--cv-folds", "3", "--seed", "1",
        "--out", path_str(&model), "--trace", path_str(&trace),
    ]);
    let model_text = std::fs::read_to_string(&model).unwrap();
    let header: Vec<&str> = model_text.lines().next().unwrap().split_whitespace().collect();
    assert_eq!(header[0], "#4");
    assert_eq!(header[1], "5");
    assert!(header[3] == "10" || header[3] == "100", "{header:?}");
    assert!(std::fs::read_to_string(&trace).unwrap().starts_with("iter,objective\n0,"));

    ok(&["predict", path_str(&model), path_str(&data), "--out", path_str(&scores), "--labels-out", path_str(&labels)]);
    ok(&["evaluate", path_str(&data), "--scores", path_str(&scores), "--out", path_str(&report)]);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let ap = json["ap"].as_f64().unwrap();
    assert!(ap > 0.8, "training-set AP {ap}");
    assert_eq!(json["skipped_instances"], 0);
}

#[test]
fn standardized_bias_model_roundtrip() {
    let dir = TempDir::new().unwrap();
    let data = write_dataset(&dir);
    let model = dir.path().join("m.csv");
    ok(&[
        "train", path_str(&data), "--k", "4", "--lambda2", "10",
        "--standardize-features", "--add-bias", "--out", path_str(&model),
    ]);
    assert!(dir.path().join("m.csv.scaler").exists());
    let header = std::fs::read_to_string(&model).unwrap();
    assert!(header.starts_with("#5 5 1 10\n"), "{header}");
    let out = ok(&["predict", path_str(&model), path_str(&data), "--standardize-features", "--add-bias"]);
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("#48 5\n"));
    // Forgetting the bias flag is a shape mismatch in the data.
    let out = run(&["predict", path_str(&model), path_str(&data), "--standardize-features"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_file_is_a_data_error() {
    let out = run(&["enrich", "/nonexistent/pmler/data.txt"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("loading"), "{err}");
}

#[test]
fn usage_and_config_errors_exit_one() {
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(run(&["benchmark"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));

    let dir = TempDir::new().unwrap();
    let data = write_dataset(&dir);
    let out = run(&["enrich", path_str(&data), "--alpha", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["benchmark", path_str(&data), "--splits", "0"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn environment_overrides_flags() {
    let dir = TempDir::new().unwrap();
    let data = write_dataset(&dir);
    // k >= n is a configuration error, so the variable must have been read.
    let out = pmler().args(["enrich", path_str(&data)]).env("PMLER_K", "48").output().unwrap();
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    // An explicit flag wins over the environment.
    let out = pmler().args(["enrich", path_str(&data), "--k", "3"]).env("PMLER_K", "48").output().unwrap();
    assert!(out.status.success());
}

fn benchmark(data: &Path, format: &str, out: &Path) {
    ok(&[
        "benchmark", path_str(data), "--k", "5", "--noise", "100", "--splits", "3",
        "--cv-folds", "3", "--seed", "11", "--format", format, "--out", path_str(out),
    ]);
}

#[test]
fn json_and_csv_reports_match_and_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let data = write_dataset(&dir);
    let (json_path, csv_path, again) =
        (dir.path().join("r.json"), dir.path().join("r.csv"), dir.path().join("r2.json"));
    benchmark(&data, "json", &json_path);
    benchmark(&data, "csv", &csv_path);
    benchmark(&data, "json", &again);
    let json_text = std::fs::read_to_string(&json_path).unwrap();
    assert_eq!(json_text, std::fs::read_to_string(&again).unwrap());

    let json: serde_json::Value = serde_json::from_str(&json_text).unwrap();
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
    let header = &rows[0];
    for (c, name) in header.iter().enumerate().skip(1) {
        if *name == "skipped_instances" {
            continue;
        }
        for s in 0..3 {
            let v: f64 = rows[s + 1][c].parse().unwrap();
            assert_eq!(v, json["splits"][s][*name].as_f64().unwrap(), "{name} split {s}");
        }
        let mean: f64 = rows[4][c].parse().unwrap();
        let std: f64 = rows[5][c].parse().unwrap();
        assert_eq!(mean, json["mean"][*name].as_f64().unwrap());
        assert_eq!(std, json["std"][*name].as_f64().unwrap());
    }
}

#[test]
fn benchmark_prints_summary() {
    let dir = TempDir::new().unwrap();
    let data = write_dataset(&dir);
    let out = ok(&["benchmark", path_str(&data), "--k", "5", "--noise", "50", "--splits", "1", "--cv-folds", "2"]);
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.lines().any(|l| l.starts_with("ap ") && l.contains(" ± .000")), "{table}");
}
