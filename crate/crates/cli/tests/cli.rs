use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn antires(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_antires")).args(args).output().expect("binary runs")
}

fn recipe(name: &str) -> String {
    format!("{}/recipes/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn summary(dir: &Path, stem: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(format!("{stem}_summary.json"))).unwrap()).unwrap()
}

#[test]
fn fig1_summary_reports_closed_form_depth() {
    let dir = tempfile::tempdir().unwrap();
    let out = antires(&["--out", dir.path().to_str().unwrap(), "run", &recipe("fig1.json")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(dir.path(), "fig1");
    let c: f64 = 0.1 * 0.1 / 0.05;
    let depth = c * (c + 2.0) / ((c + 1.0) * (c + 1.0));
    assert!((s["dip"]["depth"].as_f64().unwrap() - depth).abs() < 1e-9);
    assert!((s["dip"]["depth"].as_f64().unwrap() - 0.30556).abs() < 5e-6);
    assert!((s["c_independent"].as_f64().unwrap() - 0.2).abs() < 1e-12);
    assert!(dir.path().join("fig1_T.dat").exists());
    assert!(dir.path().join("fig1_phase.dat").exists());
}

#[test]
fn fig2cd_reports_tuned_offset() {
    let dir = tempfile::tempdir().unwrap();
    let out = antires(&["--out", dir.path().to_str().unwrap(), "spectrum", "--config", &recipe("fig2cd.json")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let delta = summary(dir.path(), "fig2cd")["delta_tuned"].as_f64().unwrap();
    assert!((delta.abs() / 0.234 - 1.0).abs() < 0.02, "{delta}");
}

#[test]
fn fit_round_trip_matches_in_process_fit() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert!(antires(&["--out", d, "spectrum", &recipe("fig1.json")]).status.success());
    let in_process = summary(dir.path(), "fig1")["fit"].clone();
    let csv = dir.path().join("fig1.csv");
    let out = antires(&["--out", d, "fit", csv.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let refit: Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["s", "beta", "center"] {
        let a = in_process[key].as_f64().unwrap();
        let b = refit[key].as_f64().unwrap();
        assert!((a - b).abs() < 1e-9, "{key}: {a} vs {b}");
    }
    assert!(dir.path().join("fig1_fit.json").exists());
}

#[test]
fn identical_config_gives_identical_csv() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = antires(&["--out", dir.path().to_str().unwrap(), "spectrum", &recipe("fig2ab.json")]);
        assert!(out.status.success());
    }
    let x = fs::read(a.path().join("fig2ab.csv")).unwrap();
    let y = fs::read(b.path().join("fig2ab.csv")).unwrap();
    assert_eq!(x, y);
    let text = String::from_utf8(x).unwrap();
    assert!(text.starts_with("# antires spectrum\n# config_sha256 = "));
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "delta_over_kappa,re_t,im_t,T,phase,phase_rel,delta_eff,gamma_eff,c_eff,condition_flag");
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 4002);
}

#[test]
fn thread_count_does_not_change_output() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = recipe("fig1.json");
    assert!(antires(&["--out", a.path().to_str().unwrap(), "--threads", "1", "spectrum", &cfg]).status.success());
    assert!(antires(&["--out", b.path().to_str().unwrap(), "--threads", "3", "spectrum", &cfg]).status.success());
    assert_eq!(fs::read(a.path().join("fig1.csv")).unwrap(), fs::read(b.path().join("fig1.csv")).unwrap());
}

#[test]
fn schema_violation_exits_with_2_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    let text = fs::read_to_string(recipe("fig1.json")).unwrap().replace("\"points\": 2001", "\"points\": -4");
    fs::write(&cfg, text).unwrap();
    let out = antires(&["--out", dir.path().to_str().unwrap(), "spectrum", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("scan.points") && err.contains("line"), "{err}");
}

#[test]
fn physics_error_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("coincident.json");
    let text = fs::read_to_string(recipe("fig2ab.json")).unwrap().replace("\"spacing\": 0.08", "\"spacing\": 1e-9");
    fs::write(&cfg, text).unwrap();
    let out = antires(&["--out", dir.path().to_str().unwrap(), "spectrum", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn tune_without_auto_tune_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = antires(&["--out", dir.path().to_str().unwrap(), "tune", &recipe("fig1.json")]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn tem_order_sweep_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = antires(&["--out", dir.path().to_str().unwrap(), "figure", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("fig4_cooperativity.csv")).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|f| f.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 26);
    assert!(rows[25][1] > 10.0 * rows[0][1]);
}

#[test]
fn unknown_figure_is_rejected() {
    let out = antires(&["--out", std::env::temp_dir().to_str().unwrap(), "figure", "9"]);
    assert_eq!(out.status.code(), Some(2));
}
