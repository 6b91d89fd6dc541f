use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use delayfit::data::{load_csv, write_csv};
use delayfit_core::calibrate::FitProblem;
use delayfit_core::dde::SolverConfig;
use delayfit_core::model::{uniform_lag_grid, BetaSchedule, ModelParams, TransmissionMode};
use delayfit_core::series::{DataWindow, EpidemicSeries};
use tempfile::TempDir;

const N0: f64 = 60_244_639.0;

fn snapshot_path() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/data/italy_2020-08-07_2021-02-07.csv"))
}

fn toml_path(p: &Path) -> String {
    format!("{:?}", p.to_str().unwrap())
}

struct Case {
    dir: TempDir,
}

impl Case {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("run.toml"), config).unwrap();
        Case { dir }
    }

    fn with_snapshot(extra: &str) -> Self {
        Case::new(&format!("data = {}\n{extra}", toml_path(&snapshot_path())))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_delayfit"))
            .arg("--config")
            .arg(self.path("run.toml"))
            .args(args)
            .output()
            .unwrap()
    }

    fn read(&self, rel: &str) -> String {
        fs::read_to_string(self.path(rel)).unwrap()
    }
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn csv_column(text: &str, name: &str) -> Vec<f64> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let j = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(j).unwrap().parse().unwrap()).collect()
}

#[test]
fn simulate_dirac_kernel_on_snapshot() {
    let case = Case::with_snapshot(
        "weights = [0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0]\nout_dir = \"sim\"\n",
    );
    let out = case.run(&["simulate"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = case.read("sim/trajectory.csv");
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "day,date,s,i,r,d,data_s,data_i,data_r,data_d,res_s,res_i,res_r,res_d"
    );
    assert_eq!(lines.count(), 150);
    assert!(text.contains("\n0,2020-09-11,"));
    assert!(text.contains("\n149,2021-02-07,"));
    assert!(case.path("sim/config.resolved.toml").exists());
}

#[test]
fn simulate_disease_free_state_is_constant() {
    let case = Case::new(
        "sigmas = [2, 5]\nweights = [0.5, 0.5]\ninitial_state = [1000, 0, 30, 4]\nn0 = 1034\ndays = 40\nout_dir = \"sim\"\n",
    );
    let out = case.run(&["simulate"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = case.read("sim/trajectory.csv");
    for (name, value) in [("s", 1000.0), ("i", 0.0), ("r", 30.0), ("d", 4.0)] {
        let col = csv_column(&text, name);
        assert_eq!(col.len(), 40);
        assert!(col.iter().all(|v| *v == value), "{name} not constant");
    }
}

#[test]
fn missing_data_file_is_a_data_error() {
    let case = Case::new("data = \"nowhere.csv\"\nweights = [0,0,0,1,0,0,0,0,0,0,0,0]\n");
    let out = case.run(&["simulate"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("nowhere.csv"));
}

#[test]
fn zero_runs_is_a_usage_error() {
    let case = Case::with_snapshot("");
    let out = case.run(&["ensemble", "--n-runs", "0"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("n_runs"));
}

#[test]
fn invalid_keys_name_the_field() {
    let case = Case::with_snapshot("rel_std = -1\n");
    let out = case.run(&["fit"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("config.rel_std"), "{}", stderr(&out));
    let case = Case::with_snapshot("colour = 3\n");
    assert_eq!(code(&case.run(&["fit"])), 2);
    let case = Case::new("");
    assert_eq!(code(&case.run(&["simulate"])), 2);
}

#[test]
fn single_lag_fit_writes_unit_weight() {
    let case = Case::with_snapshot("sigmas = [11]\nout_dir = \"fit\"\n");
    let out = case.run(&["fit"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(case.read("fit/weights.csv"), "sigma,weight\n11,1\n");
    let doc: serde_json::Value = serde_json::from_str(&case.read("fit/fit.json")).unwrap();
    assert_eq!(doc["fit"]["converged"], true);
    assert!(doc["errors"]["i"].as_f64().unwrap() > 0.0);
    assert_eq!(doc["stability_margins"].as_array().unwrap().len(), 1);
}

/// Snapshot history followed by the model's own output under `weights`.
fn planted_csv(dir: &Path, weights: &[f64]) -> PathBuf {
    let series = load_csv(snapshot_path(), N0).unwrap();
    let window = DataWindow {
        start: chrono::NaiveDate::from_ymd_opt(2020, 9, 11).unwrap(),
        end: chrono::NaiveDate::from_ymd_opt(2021, 2, 7).unwrap(),
        history_days: 35,
    };
    let sigmas = uniform_lag_grid(2.0, 35.0, 12).unwrap();
    let pb = FitProblem::new(&series, &window, sigmas, SolverConfig::default()).unwrap();
    let params = ModelParams::new(
        BetaSchedule::new(0.1131, vec![(73.0, 1.0 / 3.0)]).unwrap(),
        1.0 / 24.0,
        1.0 / 940.0,
        N0,
        TransmissionMode::Frequency,
    )
    .unwrap();
    let sim = pb.simulate(&params, weights).unwrap();
    let t0 = series.index_of(window.start).unwrap();
    let mut cols = [Vec::new(), Vec::new(), Vec::new()];
    for k in t0 - 35..t0 {
        let st = series.state(k);
        cols[0].push(st.i);
        cols[1].push(st.r);
        cols[2].push(st.d);
    }
    for day in &sim[1..] {
        cols[0].push(day[1]);
        cols[1].push(day[2]);
        cols[2].push(day[3]);
    }
    let [i, r, d] = cols;
    let mut full_i = i;
    full_i.insert(35, series.state(t0).i);
    let mut full_r = r;
    full_r.insert(35, series.state(t0).r);
    let mut full_d = d;
    full_d.insert(35, series.state(t0).d);
    let planted = EpidemicSeries::new(series.date(t0 - 35), full_i, full_r, full_d, N0).unwrap();
    let path = dir.join("planted.csv");
    write_csv(&planted, &path).unwrap();
    path
}

#[test]
fn fit_recovers_planted_kernel() {
    let dir = tempfile::tempdir().unwrap();
    let mut plant = vec![0.0; 12];
    plant[3] = 1.0;
    let data = planted_csv(dir.path(), &plant);
    let case = Case::new(&format!("data = {}\nout_dir = \"fit\"\n", toml_path(&data)));
    let out = case.run(&["fit"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let w = csv_column(&case.read("fit/weights.csv"), "weight");
    let l1: f64 = w.iter().zip(&plant).map(|(a, b)| (a - b).abs()).sum();
    assert!(l1 < 0.1, "{w:?}");
}

const SMALL: &str = "sigmas = [5, 11, 20]\nn_runs = 6\nseed = 4\n";

#[test]
fn report_regenerates_and_detects_tampering() {
    let case = Case::with_snapshot(&format!("{SMALL}out_dir = \"ens\"\n"));
    let out = case.run(&["ensemble"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let printed = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(printed.contains("relative L2 errors"));
    for name in ["report.json", "weights_mean.csv", "weights_frequency.csv", "weights_argmax.csv", "error_table.csv", "summary.txt"] {
        assert!(case.path("ens").join(name).exists(), "{name}");
    }
    let summary = case.read("ens/summary.txt");

    let regen = case.path("regen");
    let report = case.path("ens/report.json");
    let out = case.run(&["report", report.to_str().unwrap(), "--out-dir", regen.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(case.read("regen/summary.txt"), summary);
    assert!(summary.contains("dominant sigma:"));
    assert_eq!(case.read("regen/weights_mean.csv"), case.read("ens/weights_mean.csv"));

    let mut doc: serde_json::Value = serde_json::from_str(&case.read("ens/report.json")).unwrap();
    let w0 = doc["weight_mean"][0].as_f64().unwrap();
    doc["weight_mean"][0] = serde_json::json!(w0 + 0.01);
    let tampered = case.path("tampered.json");
    fs::write(&tampered, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
    let out = case.run(&["report", tampered.to_str().unwrap()]);
    assert_eq!(code(&out), 6);
    assert!(stderr(&out).contains("weight_mean"));
}

#[test]
fn single_run_report_shows_its_weights() {
    let case = Case::with_snapshot("sigmas = [5, 11, 20]\nn_runs = 1\nout_dir = \"ens\"\n");
    assert_eq!(code(&case.run(&["ensemble"])), 0);
    let doc: serde_json::Value = serde_json::from_str(&case.read("ens/report.json")).unwrap();
    let fitted: Vec<f64> = doc["runs"][0]["outcome"]["fit"]["weights"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(csv_column(&case.read("ens/weights_mean.csv"), "mean_weight"), fitted);
}

#[test]
fn worker_count_does_not_change_reports() {
    let case = Case::with_snapshot(&format!("{SMALL}n_runs = 12\n").replace("n_runs = 6\n", ""));
    let a = case.run(&["ensemble", "--workers", "1", "--out-dir", case.path("w1").to_str().unwrap()]);
    let b = case.run(&["ensemble", "--workers", "8", "--out-dir", case.path("w8").to_str().unwrap()]);
    assert_eq!((code(&a), code(&b)), (0, 0), "{}", stderr(&b));
    assert_eq!(fs::read(case.path("w1/report.json")).unwrap(), fs::read(case.path("w8/report.json")).unwrap());
}

#[test]
fn resolved_config_reproduces_outputs() {
    let case = Case::with_snapshot(&format!("{SMALL}out_dir = \"first\"\n"));
    assert_eq!(code(&case.run(&["ensemble"])), 0);
    let first = case.path("first");
    let before: Vec<(String, Vec<u8>)> = ["report.json", "weights_mean.csv", "error_table.csv", "summary.txt", "config.resolved.toml"]
        .iter()
        .map(|n| (n.to_string(), fs::read(first.join(n)).unwrap()))
        .collect();
    let resolved = first.join("config.resolved.toml");
    let text = fs::read_to_string(&resolved).unwrap();
    assert!(text.contains("seed = 4"));
    let out = Command::new(env!("CARGO_BIN_EXE_delayfit"))
        .arg("--config")
        .arg(&resolved)
        .arg("ensemble")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for (name, bytes) in before {
        assert_eq!(fs::read(first.join(&name)).unwrap(), bytes, "{name} changed");
    }
}

#[test]
fn unconverged_fit_exits_with_its_own_code() {
    let case = Case::with_snapshot("max_iter = 1\nfit_tol = 1e-12\nout_dir = \"fit\"\n");
    let out = case.run(&["fit"]);
    assert_eq!(code(&out), 5, "{}", stderr(&out));
    let doc: serde_json::Value = serde_json::from_str(&case.read("fit/fit.json")).unwrap();
    assert_eq!(doc["fit"]["converged"], false);
}
