use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nowcast_core::EpiWeek;
use serde_json::Value;
use tempfile::TempDir;

fn nowcast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nowcast"))
        .args(args)
        .env_remove("NOWCAST_SEED")
        .env_remove("NOWCAST_CONFIG")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Simulated world of 130 weeks with a twitter signal, written to `dir/world`.
fn world(dir: &TempDir, scenario: &str) -> PathBuf {
    let scen = dir.path().join("scenario.json");
    fs::write(&scen, scenario).unwrap();
    let out = dir.path().join("world");
    let o = nowcast(&["simulate", "--scenario", s(&scen), "--seed", "11", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out
}

const SCENARIO: &str = r#"{"n_weeks": 130, "signals": [{"name": "twitter", "coefficient": 0.8, "noise_sd": 0.1}]}"#;

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn baseline_nowcast_writes_csv_and_diagnostics() {
    let dir = TempDir::new().unwrap();
    let w = world(&dir, SCENARIO);
    let out = dir.path().join("nc");
    let ll = w.join("linelist.csv");
    let o = nowcast(&["nowcast", "--linelist", s(&ll), "--as-of", "2011-W40", "--samples", "300", "--seed", "4", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("nowcast.csv")).unwrap();
    assert!(csv.starts_with("year,week,observed_partial,point,lo80,hi80,lo95,hi95\n"));
    assert!(csv.lines().last().unwrap().starts_with("2011,40,"));
    let d = json(out.join("diagnostics.json"));
    assert_eq!(d["variant"], "baseline");
    assert_eq!(d["as_of"], "2011-W40");
    assert_eq!(d["fit"]["seed"], 4);
    assert_eq!(d["fit"]["n_samples"], 300);
    assert_eq!(csv.lines().count() - 1, d["d_max"].as_u64().unwrap() as usize);
}

#[test]
fn nowcast_is_byte_identical_for_a_seed() {
    let dir = TempDir::new().unwrap();
    let w = world(&dir, SCENARIO);
    let ll = w.join("linelist.csv");
    let tw = format!("twitter={}", s(&w.join("twitter.csv")));
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = nowcast(&[
            "nowcast", "--model", "twitter", "--signal", &tw, "--linelist", s(&ll), "--as-of", "2011-W20",
            "--samples", "200", "--seed", seed, "--out", s(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        (fs::read(out.join("nowcast.csv")).unwrap(), fs::read(out.join("diagnostics.json")).unwrap())
    };
    let a = run("a", "8");
    assert_eq!(a, run("b", "8"));
    assert_ne!(a.0, run("c", "9").0);
}

#[test]
fn missing_signal_exits_2_naming_requirements() {
    let dir = TempDir::new().unwrap();
    let w = world(&dir, SCENARIO);
    let ll = w.join("linelist.csv");
    let o = nowcast(&["nowcast", "--model", "google-dengue-twitter", "--linelist", s(&ll), "--seed", "1", "--out", s(dir.path())]);
    assert_eq!(code(&o), 2);
    let msg = stderr(&o);
    assert!(msg.contains("google-dengue") && msg.contains("twitter"), "{msg}");
}

#[test]
fn usage_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let w = world(&dir, SCENARIO);
    let ll = w.join("linelist.csv");
    let o = nowcast(&["nowcast", "--model", "arima", "--linelist", s(&ll), "--seed", "1"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("baseline | google-dengue | twitter"), "{}", stderr(&o));
    let o = nowcast(&["nowcast", "--linelist", s(&ll)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("--seed"));
    let o = nowcast(&["nowcast", "--linelist", "/nonexistent/ll.csv", "--seed", "1"]);
    assert_eq!(code(&o), 2);
    let o = nowcast(&["nowcast", "--linelist", s(&ll), "--seed", "1", "--window", "3y"]);
    assert_eq!(code(&o), 2);
    let o = nowcast(&["simulate", "--out", s(dir.path())]);
    assert_eq!(code(&o), 2);
    let o = nowcast(&["frobnicate"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn evaluate_reports_relative_metrics_and_window() {
    let dir = TempDir::new().unwrap();
    let w = world(&dir, SCENARIO);
    let ll = w.join("linelist.csv");
    let out = dir.path().join("ev");
    let o = nowcast(&[
        "evaluate", "--model", "baseline,naive", "--linelist", s(&ll), "--start", "2011-W30", "--end", "2011-W35",
        "--window", "2y", "--samples", "200", "--seed", "3", "--out", s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = json(out.join("report.json"));
    assert_eq!(r["reference"], "baseline");
    assert_eq!(r["models"]["baseline"]["rmae"], 1.0);
    assert!(r["models"]["naive"]["rmae"].as_f64().unwrap() > 1.0);
    assert_eq!(r["models"]["baseline"]["window"], "2y");
    assert_eq!(r["models"]["baseline"]["n_weeks"], 6);
    let errors = fs::read_to_string(out.join("errors.csv")).unwrap();
    assert_eq!(errors.lines().count(), 1 + 12);
    let waic = fs::read_to_string(out.join("waic.csv")).unwrap();
    assert_eq!(waic.lines().count(), 1 + 6);
}

#[test]
fn evaluate_past_reported_data_exits_2() {
    let dir = TempDir::new().unwrap();
    let w = world(&dir, SCENARIO);
    let ll = w.join("linelist.csv");
    let o = nowcast(&[
        "evaluate", "--linelist", s(&ll), "--start", "2011-W30", "--end", "2013-W40", "--seed", "3", "--out", s(dir.path()),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("past the end of the data"));
}

#[test]
fn config_file_and_environment_supply_flags() {
    let dir = TempDir::new().unwrap();
    let w = world(&dir, SCENARIO);
    let cfg = dir.path().join("run.json");
    let body = serde_json::json!({
        "model": "twitter",
        "signal": {"twitter": w.join("twitter.csv")},
        "linelist": w.join("linelist.csv"),
        "as-of": "2011-W25",
        "samples": 150,
        "seed": 5,
        "max-delay-cap": 20,
        "out": dir.path().join("from-file"),
    });
    fs::write(&cfg, body.to_string()).unwrap();
    let o = nowcast(&["nowcast", "--config", s(&cfg)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let d = json(dir.path().join("from-file/diagnostics.json"));
    assert_eq!(d["variant"], "twitter");
    assert_eq!(d["fit"]["seed"], 5);

    // Environment beats the file, flags beat the environment.
    let out = dir.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_nowcast"))
        .args(["nowcast", "--samples", "120", "--out", s(&out)])
        .env("NOWCAST_CONFIG", &cfg)
        .env("NOWCAST_SEED", "6")
        .env("NOWCAST_SAMPLES", "999")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let d = json(out.join("diagnostics.json"));
    assert_eq!(d["fit"]["seed"], 6);
    assert_eq!(d["fit"]["n_samples"], 120);

    fs::write(&cfg, r#"{"sed": 3}"#).unwrap();
    assert_eq!(code(&nowcast(&["nowcast", "--config", s(&cfg)])), 2);
}

#[test]
fn point_mass_delays_report_zero_weeks() {
    let dir = TempDir::new().unwrap();
    let w = world(&dir, r#"{"n_weeks": 60, "delay_regimes": [{"start": 0, "probabilities": [1.0]}]}"#);
    let out = dir.path().join("delays");
    let o = nowcast(&["delays", "--linelist", s(&w.join("linelist.csv")), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let d = json(out.join("delays.json"));
    assert_eq!(d["completeness"][1]["fraction"], 0.95);
    assert_eq!(d["completeness"][1]["mean"], 0.0);
    assert!(fs::read_to_string(out.join("delays.csv")).unwrap().starts_with("delay,mean,lo80,hi80,lo95,hi95\n0,1,"));
}

#[test]
fn identical_seasons_give_plateau_threshold() {
    let dir = TempDir::new().unwrap();
    let mut ll = String::from("notification_date,entry_date\n");
    for year in [2015, 2016] {
        for wk in 1..=52 {
            let n = if (20..30).contains(&wk) { 400 } else { 10 };
            let d = EpiWeek::new(year, wk).unwrap().start_date();
            for _ in 0..n {
                ll.push_str(&format!("{d},{d}\n"));
            }
        }
    }
    let path = dir.path().join("ll.csv");
    fs::write(&path, &ll).unwrap();
    let out = dir.path().join("thr");
    let o = nowcast(&["threshold", "--linelist", s(&path), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let t = json(out.join("threshold.json"));
    assert!((t["threshold"].as_f64().unwrap() - 10.0).abs() < 1e-9, "{t}");
    assert_eq!(t["seasons"].as_array().unwrap().len(), 2);
    assert_eq!(t["seasons"][0]["epidemic_start"], "2015-W20");
    // Input is left untouched.
    assert_eq!(fs::read_to_string(&path).unwrap(), ll);
}

#[test]
fn simulate_then_evaluate_round_trip_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let w = world(&dir, SCENARIO);
    let again = dir.path().join("again");
    let o = nowcast(&["simulate", "--scenario", s(&dir.path().join("scenario.json")), "--seed", "11", "--out", s(&again)]);
    assert_eq!(code(&o), 0);
    for f in ["linelist.csv", "truth.csv", "twitter.csv", "config.json"] {
        assert_eq!(fs::read(w.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
    let ll = w.join("linelist.csv");
    let before = fs::read(&ll).unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = nowcast(&[
            "evaluate", "--model", "baseline,naive", "--linelist", s(&ll), "--start", "2011-W10", "--end", "2011-W12",
            "--samples", "150", "--seed", "2", "--out", s(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        ["report.json", "errors.csv", "waic.csv"].map(|f| fs::read(out.join(f)).unwrap())
    };
    assert_eq!(run("e1"), run("e2"));
    for cmd in ["threshold", "delays"] {
        let a = nowcast(&[cmd, "--linelist", s(&ll), "--out", s(&dir.path().join(format!("{cmd}1")))]);
        let b = nowcast(&[cmd, "--linelist", s(&ll), "--out", s(&dir.path().join(format!("{cmd}2")))]);
        assert_eq!(code(&a), 0, "{}", stderr(&a));
        assert_eq!(a.stdout, b.stdout);
        let file = format!("{cmd}.json");
        assert_eq!(
            fs::read(dir.path().join(format!("{cmd}1")).join(&file)).unwrap(),
            fs::read(dir.path().join(format!("{cmd}2")).join(&file)).unwrap()
        );
    }
    assert_eq!(fs::read(&ll).unwrap(), before);
}
