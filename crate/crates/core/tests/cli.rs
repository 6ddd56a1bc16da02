use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
[synth]
n_participants = 3
nb_duration_s = 110.0
b_duration_s = 110.0

[featurize]
fit_gp = false

[mlp]
hidden_layers = 1
units = 8
epochs = 40
"#;

fn movseq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_movseq")).args(args).output().unwrap()
}

fn run(dir: &Path, config: &Path) {
    let out = movseq(&[
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
        "--jobs",
        "2",
        "run",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn data_lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

#[test]
fn end_to_end_run_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("small.toml");
    std::fs::write(&config, CONFIG).unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run(&a, &config);
    run(&b, &config);

    for f in [
        "features.csv",
        "wilcoxon_pvalues.csv",
        "pca_reports.json",
        "accuracy_grid.csv",
        "report.md",
    ] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f} differs between runs"
        );
    }

    // 3 participants × 2 conditions × 2 slices.
    let features = data_lines(&a.join("features.csv"));
    assert_eq!(features.len(), 1 + 12);
    assert_eq!(features[0].split(',').count(), 2 + 132);

    // One row per feature, one column per scope (population and 3 participants).
    let grid = data_lines(&a.join("wilcoxon_pvalues.csv"));
    assert_eq!(grid.len(), 1 + 132);
    assert!(grid.iter().all(|l| l.split(',').count() == 1 + 4));
    assert!(grid[1].starts_with("AccelX.M0,"));

    // Two slices per condition are too few to split per participant.
    let acc = std::fs::read_to_string(a.join("accuracy_grid.csv")).unwrap();
    assert!(acc.contains("# skipped P01,AccelX,TooFewRows"));
    assert!(data_lines(&a.join("accuracy_grid.csv"))[1].starts_with("population,"));

    let report = std::fs::read_to_string(a.join("report.md")).unwrap();
    assert!(report.starts_with("# Movement sequencing report"));
    assert!(a.join("cohort").join("manifest.json").exists());
}

#[test]
fn unknown_config_key_fails_with_json_error() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("bad.toml");
    std::fs::write(&config, "[mlp]\nneurons = 3\n").unwrap();
    let out = movseq(&[
        "--config",
        config.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
        "synth",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
    assert_eq!(err["error"], "ConfigError");
    assert!(err["message"].as_str().unwrap().contains("neurons"));
}

#[test]
fn bad_direction_flag_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = movseq(&[
        "--out",
        tmp.path().to_str().unwrap(),
        "--directions",
        "accel_x,mag_q",
        "synth",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
    assert_eq!(err["error"], "ConfigError");
}

#[test]
fn featurize_without_input_reports_missing_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = movseq(&["--out", tmp.path().join("none").to_str().unwrap(), "wilcoxon"]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
    assert_eq!(err["error"], "Io");
}
