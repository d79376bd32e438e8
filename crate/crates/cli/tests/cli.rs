use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use payload_cli::commands::{configured_reference, parse_grid};
use payload_cli::format::{fmt_num, log_header};
use payload_cli::{cmd_plan, cmd_simulate, cmd_sweep, CliError, CommonOptions, RepoConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_payload-sim")).args(args).output().expect("binary runs")
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

fn with_config(path: PathBuf) -> CommonOptions {
    CommonOptions { config: Some(path), ..CommonOptions::default() }
}

fn report_value(text: &str, key: &str) -> Option<f64> {
    text.lines().find_map(|l| l.strip_prefix(&format!("{key} = ")).and_then(|v| v.parse().ok()))
}

#[test]
fn number_format_cases() {
    assert_eq!(fmt_num(0.0), "0");
    assert_eq!(fmt_num(49.05), "49.05");
    assert_eq!(fmt_num(-2.0), "-2");
    assert_eq!(fmt_num(0.05), "0.05");
    assert_eq!(fmt_num(1.0 / 3.0), "0.333333333");
    assert_eq!(fmt_num(123456789012.0), "1.23456789e11");
    assert_eq!(fmt_num(1.5e-7), "1.5e-7");
    assert_eq!(fmt_num(9.9999999999), "10");
    assert_eq!(fmt_num(f64::NAN), "nan");
}

#[test]
fn number_format_keeps_nine_significant_digits() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10_000 {
        let v: f64 = rng.random_range(-1.0..1.0) * 10f64.powi(rng.random_range(-12..14));
        let s = fmt_num(v);
        let back: f64 = s.parse().unwrap();
        assert!((back - v).abs() <= 5e-9 * v.abs(), "{v} -> {s}");
        let mantissa = s.split('e').next().unwrap();
        let digits = mantissa.chars().filter(char::is_ascii_digit).collect::<String>();
        assert!(digits.trim_start_matches('0').len() <= 9, "{v} -> {s}");
    }
}

#[test]
fn config_round_trips_to_normalized_form() {
    let partial = RepoConfig::parse("[model]\nm_l = 0.5\n[plant]\nl = 3.0\n[scenario]\nreference = \"hover\"\n").unwrap();
    let text = partial.to_toml();
    let again = RepoConfig::parse(&text).unwrap();
    assert_eq!(again.to_toml(), text);
    assert_eq!(again, partial.normalized());
    assert_eq!(partial.nominal_params().m_l, 0.5);
    assert_eq!(partial.true_params().m_l, 0.5);
    assert_eq!(partial.true_params().l, 3.0);
    assert_eq!(partial.nominal_params().l, 2.0);
}

#[test]
fn missing_keys_take_defaults() {
    let empty = RepoConfig::parse("").unwrap();
    assert_eq!(empty, RepoConfig::default());
    let shipped = RepoConfig::load(&configs_dir().join("default.toml")).unwrap();
    assert_eq!(shipped.to_toml(), RepoConfig::default().to_toml());
}

#[test]
fn unknown_key_is_rejected_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[controller]\nhorizon = 40\nmystery_gain = 3.0\n");
    let out = bin(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("run").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mystery_gain"));
    assert!(!dir.path().join("run").exists());
}

#[test]
fn hover_simulation_writes_log_with_header() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let out = bin(&["simulate", "--config", configs_dir().join("hover.toml").to_str().unwrap(), "--out", run.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let log = fs::read_to_string(run.join("log.csv")).unwrap();
    let mut lines = log.lines();
    assert_eq!(lines.next().unwrap(), log_header());
    let columns = log_header().split(',').count();
    assert_eq!(columns, 1 + 13 + 3 + 13 + 3 + 5);
    let rows: Vec<_> = lines.collect();
    assert_eq!(rows.len(), 801);
    assert!(rows.iter().all(|r| r.split(',').count() == columns));
    let report = fs::read_to_string(run.join("report.txt")).unwrap();
    assert!(report_value(&report, "rmse_exec").unwrap() < 0.05);
    assert!(report.contains("delta_rmse = \n"));
}

#[test]
fn square_report_has_relative_degradation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[scenario]\nreference = \"square\"\nreference_dt = 2.0\n");
    cmd_simulate(&with_config(cfg), &dir.path().join("run")).unwrap();
    let report = fs::read_to_string(dir.path().join("run/report.txt")).unwrap();
    let ol = report_value(&report, "rmse_ol").unwrap();
    let exec = report_value(&report, "rmse_exec").unwrap();
    let delta = report_value(&report, "delta_rmse").unwrap();
    assert!(ol > 0.1 && exec > 0.1);
    assert!((delta - (exec - ol) / ol * 100.0).abs() < 1e-5);
    let csv = fs::read_to_string(dir.path().join("run/report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().nth(1).unwrap().starts_with("square,"));
}

fn plan_rows(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn square_plan_rows_are_evenly_spaced() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[scenario]\nreference = \"square\"\nreference_dt = 2.5\n");
    let out = dir.path().join("plan.csv");
    cmd_plan(&with_config(cfg), &out).unwrap();
    let rows = plan_rows(&out);
    for w in rows.windows(2) {
        assert!((w[1][0] - w[0][0] - 0.05).abs() < 1e-7, "spacing {}", w[1][0] - w[0][0]);
    }
    assert!(rows.iter().all(|r| r.len() == 7));
    // Settling before the first waypoint at 0, four sides of 2.5 s, tail.
    assert!((rows[0][0] + 5.0).abs() < 1e-9);
    assert!(rows.last().unwrap()[0] >= 13.0 - 1e-9);
}

#[test]
fn stationary_reference_gives_constant_plan() {
    let dir = tempfile::tempdir().unwrap();
    let reference = dir.path().join("still.csv");
    fs::write(&reference, "t,x,y,z\n0,1,2,3\n2,1,2,3\n4,1,2,3\n").unwrap();
    let out = dir.path().join("plan.csv");
    let opts = CommonOptions { reference: Some(reference), ..CommonOptions::default() };
    cmd_plan(&opts, &out).unwrap();
    for r in plan_rows(&out) {
        assert!((r[1] - 1.0).abs() < 1e-6 && (r[2] - 2.0).abs() < 1e-6 && (r[3] - 3.0).abs() < 1e-6, "{r:?}");
    }
}

#[test]
fn missing_reference_file_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = bin(&["plan", "--reference", missing.to_str().unwrap(), "--out", dir.path().join("p.csv").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let opts = CommonOptions { reference: Some(missing), ..CommonOptions::default() };
    assert!(matches!(cmd_plan(&opts, &dir.path().join("p.csv")), Err(CliError::Input(_))));
}

#[test]
fn grid_spec_parsing() {
    let cfg = RepoConfig::default();
    let g = parse_grid("m_l=0.5,1.0,1.5; l=1,2,3", &cfg).unwrap();
    assert_eq!(g.m_l, vec![0.5, 1.0, 1.5]);
    assert_eq!(g.l, vec![1.0, 2.0, 3.0]);
    assert_eq!(g.dt, vec![2.0]);
    assert_eq!(g.cells().len(), 9);
    for bad in ["", "  ", "m_l=", "m_l=abc", "mass=1", "l=-1", "dt"] {
        let err = parse_grid(bad, &cfg).unwrap_err();
        assert_eq!(err.exit_code(), 1, "{bad}");
    }
}

#[test]
fn empty_grid_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["sweep", "--grid", "", "--out", dir.path().join("s").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sweep_writes_one_row_per_cell_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let grid = "m_l=0.5,1.0,1.5;l=1,2,3;dt=2";
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    cmd_sweep(&CommonOptions::default(), grid, &a).unwrap();
    cmd_sweep(&CommonOptions::default(), grid, &b).unwrap();
    let text = fs::read_to_string(a.join("sweep.csv")).unwrap();
    assert_eq!(text, fs::read_to_string(b.join("sweep.csv")).unwrap());
    let rows: Vec<_> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 9);
    assert!(rows[0].starts_with("0.5,1,2,ok,"));
    assert!(rows[8].starts_with("1.5,3,2,ok,"));
    for (i, row) in rows.iter().enumerate() {
        let log = row.split(',').nth(4).unwrap();
        assert_eq!(log, format!("cells/cell_{i:03}.csv"));
        assert_eq!(fs::read(a.join(log)).unwrap(), fs::read(b.join(log)).unwrap());
    }
}

#[test]
fn failing_cells_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    // A near-massless payload leaves the planning problem numerically
    // indefinite; only that cell fails.
    let cfg = write_config(dir.path(), "[scenario]\nreference = \"hover\"\n");
    let err = cmd_sweep(&with_config(cfg), "m_l=1,0.0001", &dir.path().join("s")).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    let text = fs::read_to_string(dir.path().join("s/sweep.csv")).unwrap();
    let rows: Vec<_> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].contains(",ok,"));
    assert!(rows[1].contains("error:"));
}

#[test]
fn configured_references() {
    let mut cfg = RepoConfig::default();
    for (name, len) in [("hover", 1), ("square", 5), ("complex", 12)] {
        cfg.scenario.reference = name.into();
        assert_eq!(configured_reference(&cfg).unwrap().len(), len, "{name}");
    }
    cfg.scenario.reference = "absent.csv".into();
    assert_eq!(configured_reference(&cfg).unwrap_err().exit_code(), 1);
}

#[test]
fn seed_flag_changes_the_noise() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[scenario]\nreference = \"hover\"\n");
    let run = |seed: u64, name: &str| {
        let opts = CommonOptions { seed: Some(seed), ..with_config(cfg.clone()) };
        cmd_simulate(&opts, &dir.path().join(name)).unwrap();
        fs::read(dir.path().join(name).join("log.csv")).unwrap()
    };
    assert_ne!(run(1, "a"), run(2, "b"));
}
