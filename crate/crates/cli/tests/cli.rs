use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use serde_json::Value;
use tempfile::TempDir;

fn declab(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_declab"));
    cmd.args(args);
    cmd.env_remove("DECLAB_THREADS");
    if let Some(t) = threads {
        cmd.env("DECLAB_THREADS", t);
    }
    cmd.output().unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn measure(dir: &TempDir, config: &str, tag: &str, threads: Option<&str>) -> (Output, String, String) {
    let out = dir.path().join(format!("{tag}.json"));
    let csv = dir.path().join(format!("{tag}.csv"));
    let o = declab(
        &["measure", "--config", config, "--out", out.to_str().unwrap(), "--csv", csv.to_str().unwrap()],
        threads,
    );
    let read = |p: &Path| std::fs::read_to_string(p).unwrap_or_default();
    (o, read(&out), read(&csv))
}

fn stdout_json(o: &Output) -> Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

const MINIMAL: &str =
    r#"{"v": 1, "seed": 11, "budget": 10000, "scenarios": [{"kind": "indicator", "N": [16], "p": [6]}]}"#;

#[test]
fn minimal_config_is_quick_and_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "run.json", MINIMAL);
    let start = Instant::now();
    let (o, report, csv) = measure(&dir, &cfg, "a", None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(start.elapsed().as_secs() < 60);
    let (_, report_b, csv_b) = measure(&dir, &cfg, "b", Some("1"));
    assert_eq!(csv, csv_b);
    assert_eq!(report, report_b);

    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "kind,N,p,lhs,lhs_se,rhs_lp,rhs_l2,ratio_lp,ratio_l2,caps,budget,seed,runtime_ms"
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!((row[0], row[1], row[2], row[10], row[11]), ("indicator", "16", "6", "10000", "11"));
    assert!(dir.path().join("slopes.json").exists());

    let v: Value = serde_json::from_str(&report).unwrap();
    assert_eq!(v["v"], 1);
    assert_eq!(v["config"]["seed"], 11);
    assert_eq!(v["reports"].as_array().unwrap().len(), 1);
}

#[test]
fn changing_the_seed_changes_the_rows() {
    let dir = TempDir::new().unwrap();
    let a = write(&dir, "a.json", MINIMAL);
    let b = write(&dir, "b.json", &MINIMAL.replace("\"seed\": 11", "\"seed\": 12"));
    assert_ne!(measure(&dir, &a, "a", None).2, measure(&dir, &b, "b", None).2);
}

#[test]
fn schema_violations_exit_with_two() {
    let dir = TempDir::new().unwrap();
    for (k, bad) in [
        r#"{"v": 1, "scenarios": [{"kind": "indicator"}]}"#,
        r#"{"v": 2, "seed": 1, "scenarios": [{"kind": "indicator"}]}"#,
        r#"{"v": 1, "seed": 1, "extra": 0, "scenarios": [{"kind": "indicator"}]}"#,
        r#"{"v": 1, "seed": 1, "scenarios": [{"kind": "indicator", "color": 3}]}"#,
        r#"{"v": 1, "seed": 1, "scenarios": [{"kind": "hyperbolic"}]}"#,
        r#"{"v": 1, "seed": 1, "scenarios": []}"#,
        r#"{"v": 1, "seed": 1, "budget": 10, "scenarios": [{"kind": "indicator"}]}"#,
        r#"{"v": 1, "seed": 1, "scenarios": [{"kind": "strip", "N": [12]}]}"#,
        r#"{"v": 1, "seed": 1, "scenarios": [{"kind": "indicator", "p": [0.5]}]}"#,
        "not json",
    ]
    .iter()
    .enumerate()
    {
        let cfg = write(&dir, &format!("bad{k}.json"), bad);
        let o = declab(&["measure", "--config", &cfg], None);
        assert_eq!(o.status.code(), Some(2), "{bad}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let cfg = write(&dir, "ok.json", MINIMAL);
    assert_eq!(declab(&["measure", "--config", &cfg], Some("zero")).status.code(), Some(2));
    assert_eq!(declab(&["transversality", "--A", "1,0", "--K", "8"], None).status.code(), Some(2));
    assert_eq!(declab(&["transversality", "--A", "1,0,0,0,0,1", "--K", "6"], None).status.code(), Some(2));
}

#[test]
fn l2_ratios_of_random_phase_fields_are_near_one() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "p2.json",
        r#"{"v": 1, "seed": 4, "budget": 20000, "scenarios": [{"kind": "random-phase", "N": [16, 64], "p": [2]}]}"#,
    );
    let (o, report, _) = measure(&dir, &cfg, "p2", None);
    assert!(o.status.success());
    let v: Value = serde_json::from_str(&report).unwrap();
    for r in v["reports"].as_array().unwrap() {
        let ratio = r["ratio_l2"].as_f64().unwrap();
        assert!((0.8..1.25).contains(&ratio), "{ratio}");
        assert_eq!(r["ratio_lp"], r["ratio_l2"]);
    }
}

#[test]
fn study_emits_slopes_and_plot_series() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "study.json",
        r#"{"v": 1, "seed": 3, "budget": 5000,
            "scenarios": [{"kind": "strip", "N": [4, 8, 16], "p": [6]}],
            "outputs": {"slopes": "fits.json", "plotdata": "plot.json"}}"#,
    );
    let o = declab(&["measure", "--config", &cfg], None);
    let report = stdout_json(&o);
    assert_eq!(report["reports"].as_array().unwrap().len(), 3);
    let fits: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("fits.json")).unwrap()).unwrap();
    let raw = fits["fits"].as_array().unwrap().iter().find(|f| f["metric"] == "raw_ratio").unwrap();
    assert!((raw["slope"].as_f64().unwrap() - 2.0 / 3.0).abs() < 0.2);
    let plot: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("plot.json")).unwrap()).unwrap();
    let series = &plot["series"][0];
    assert_eq!(series["points"].as_array().unwrap().len(), 3);
    assert_eq!(series["slope"], raw["slope"]);
}

#[test]
fn diagnostic_commands() {
    let v = stdout_json(&declab(&["exponents", "--p", "6.01", "--s", "12", "--eps", "1e-3", "--bigO", "10"], None));
    for key in ["kappa", "gamma_candidate", "gamma_iter", "closes", "witness"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert_eq!(v["closes"], true);
    assert_eq!(declab(&["exponents", "--p", "6", "--s", "12", "--eps", "1e-3"], None).status.code(), Some(2));

    let v = stdout_json(&declab(
        &["rescale-check", "--A", "1,0,0,0,0.5,0", "--R", "0.25,0.5,0.25", "--trials", "200", "--seed", "42"],
        None,
    ));
    assert!(v["max_residual"].as_f64().unwrap() < 1e-9);
    assert_eq!(v["trials"], 200);

    let dir = TempDir::new().unwrap();
    let out = dir.path().join("graph.json");
    let o = declab(&["transversality", "--A", "1,0,0,0,0.5,0", "--K", "8", "--out", out.to_str().unwrap()], None);
    assert!(o.status.success());
    let g: Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(g["K"], 8);
    assert_eq!(g["counts"].as_array().unwrap().len(), 64);
    assert!(g["strips"]["kind"].is_string());
    assert!(!g["pairs_sample"].as_array().unwrap().is_empty());

    let v =
        stdout_json(&declab(&["example", "--kind", "flat-line", "--N", "64", "--p", "6", "--budget", "5000"], None));
    assert_eq!(v["kind"], "flat-line");
    assert!(v["ratio_l2"].as_f64().unwrap() > 1.0);
}

#[test]
fn smoke_passes_quickly() {
    let start = Instant::now();
    let o = declab(&["smoke"], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(start.elapsed().as_secs() < 10);
    assert_eq!(String::from_utf8_lossy(&o.stdout).matches("[PASS]").count(), 5);
}
