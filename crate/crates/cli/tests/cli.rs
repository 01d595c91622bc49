use std::fs;
use std::path::{Path, PathBuf};

use assert_cmd::Command;
use facehmax::experiments::{REPORT_COLUMNS, TRIAL_COLUMNS};

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("config.toml");
    let text = format!(
        r#"seed = 3

[paths]
out = "{}"

[faces]
count = 12

[learn]
n_templates = 20

[experiment]
cfe_faces = 4
wpe_faces = 3
fie_faces = 6
cfe_bootstrap_runs = 50
wpe_bootstrap_runs = 50
fie_bootstrap_runs = 50
neural_band = [0.0, 1.0]
{extra}"#,
        dir.join("out").display()
    );
    fs::write(&path, text).unwrap();
    path
}

fn cli(config: &Path) -> Command {
    let mut c = Command::cargo_bin("facehmax").unwrap();
    c.arg("--config").arg(config);
    c
}

fn csv_header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn zero_count_is_a_usage_error() {
    Command::cargo_bin("facehmax").unwrap().args(["gen-faces", "--count", "0"]).assert().code(2);
}

#[test]
fn unknown_config_keys_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bootstrap = 5\n");
    cli(&cfg).arg("gen-faces").assert().code(2);
}

#[test]
fn gen_faces_is_bit_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        Command::cargo_bin("facehmax")
            .unwrap()
            .args(["gen-faces", "--count", "5", "--seed", "7", "--out"])
            .arg(out)
            .assert()
            .success();
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("faces/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["faces"].as_array().unwrap().len(), 5);
    assert_eq!(manifest["seed"], 7);
    for i in 1..=5 {
        let name = format!("faces/face{i:03}.pgm");
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap());
    }
}

#[test]
fn learn_rejects_faces_too_small_for_the_template() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    fs::write(&cfg, fs::read_to_string(&cfg).unwrap().replace("count = 12", "count = 4\ncanvas = [60, 60]")).unwrap();
    cli(&cfg).arg("gen-faces").assert().success();
    cli(&cfg).args(["learn", "--size", "small", "--n", "10"]).assert().code(1);
}

#[test]
fn run_without_banks_lists_them() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    cli(&cfg).arg("gen-faces").assert().success();
    let out = cli(&cfg).args(["run", "cfe"]).assert().code(1).get_output().stderr.clone();
    let msg = String::from_utf8(out).unwrap();
    assert!(msg.contains("large.bank") && msg.contains("small.bank"), "{msg}");
}

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("out");
    cli(&cfg).arg("gen-faces").assert().success();
    cli(&cfg).arg("prep").assert().success();
    assert!(out.join("prep/examples/composite_misaligned.pgm").is_file());
    cli(&cfg).arg("learn").assert().success();
    let side: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("banks/large.bank.json")).unwrap()).unwrap();
    assert_eq!(side["header"]["k"], 12);
    assert_eq!(side["header"]["n_templates"], 20);
    cli(&cfg).arg("extract").assert().success();
    assert!(out.join("c2/small.c2").is_file());

    let summary = cli(&cfg).args(["run", "all", "--emit-plot"]).assert().success().get_output().stdout.clone();
    let summary = String::from_utf8(summary).unwrap();
    assert!(summary.contains("coverage control") && summary.contains("large 100, medium 150"), "{summary}");
    let reports = out.join("reports");
    assert_eq!(csv_header(&reports.join("report.csv")), REPORT_COLUMNS.join(","));
    assert_eq!(csv_header(&reports.join("trials.csv")), TRIAL_COLUMNS.join(","));
    for exp in ["cfe", "fie", "fie-neural", "wpe"] {
        assert!(reports.join(format!("{exp}.svg")).is_file(), "{exp}");
    }
    let first = fs::read(reports.join("report.json")).unwrap();
    cli(&cfg).args(["run", "all"]).assert().success();
    assert_eq!(first, fs::read(reports.join("report.json")).unwrap());
    cli(&cfg).arg("verify").assert().success();

    cli(&cfg).args(["run", "cfe", "--sizes", "large,small"]).assert().success();
    let rows = facehmax::experiments::read_report_csv(&reports.join("report.csv")).unwrap();
    let mut sizes: Vec<&str> = rows.iter().map(|r| r.size.as_str()).filter(|s| !s.contains('-')).collect();
    sizes.sort();
    sizes.dedup();
    assert_eq!(sizes, ["large", "small"]);
    for size in ["large", "small"] {
        for o in ["upright", "inverted"] {
            for c in ["aligned", "misaligned"] {
                assert!(rows.iter().any(|r| r.size == size && r.orientation == o && r.condition == c));
            }
        }
    }

    cli(&cfg).args(["calibrate-sigma", "--size", "large"]).assert().success();
    assert!(out.join("sigma.json").is_file());

    // tampering is detected
    let bank = out.join("banks/medium.bank");
    let mut bytes = fs::read(&bank).unwrap();
    let last = bytes.len() - 20;
    bytes[last] ^= 0x40;
    fs::write(&bank, bytes).unwrap();
    cli(&cfg).arg("verify").assert().code(1);
}
