//! Subcommand implementations; each returns `Ok` or an error carrying its
//! exit code.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use payload_core::eval::{
    complex_trajectory, evaluate, parse_reference_csv, prepare_scenario, square_trajectory, sweep, SweepGrid, SQUARE_ALTITUDE,
    SETTLE_TIME,
};
use payload_core::model::{linearize_hover, FullState};
use payload_core::planner::Planner;
use payload_core::reference::SparseReference;
use payload_core::sim::ScenarioConfig;

use crate::config::RepoConfig;
use crate::error::CliError;
use crate::format;

/// Options shared by every subcommand.
#[derive(Clone, Debug, Default)]
pub struct CommonOptions {
    pub config: Option<PathBuf>,
    /// Reference CSV overriding the configured reference.
    pub reference: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jitter_dt: bool,
}

impl CommonOptions {
    pub fn load_config(&self) -> Result<RepoConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RepoConfig::load(path)?,
            None => RepoConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.sensor.seed = seed;
        }
        if self.jitter_dt {
            cfg.scenario.jitter_dt = true;
        }
        Ok(cfg)
    }

    pub fn reference(&self, cfg: &RepoConfig) -> Result<SparseReference, CliError> {
        match &self.reference {
            Some(path) => read_reference(path),
            None => configured_reference(cfg),
        }
    }
}

pub fn read_reference(path: &Path) -> Result<SparseReference, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    parse_reference_csv(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Reference named by `[scenario].reference`.
pub fn configured_reference(cfg: &RepoConfig) -> Result<SparseReference, CliError> {
    let s = &cfg.scenario;
    let built = match s.reference.as_str() {
        "hover" => SparseReference::new(vec![0.0], vec![Vector3::new(0.0, 0.0, SQUARE_ALTITUDE)]),
        "square" => square_trajectory(s.reference_dt, s.side, s.laps),
        "complex" => complex_trajectory(s.reference_dt),
        path => return read_reference(&cfg.base_dir.join(path)),
    };
    built.map_err(|e| CliError::Config(format!("scenario.reference: {e}")))
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Output { path: path.display().to_string(), message: e.to_string() })
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::Output { path: path.display().to_string(), message: e.to_string() })
}

fn scenario_name(cfg: &RepoConfig, opts: &CommonOptions) -> String {
    match &opts.reference {
        Some(p) => p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        None => Path::new(&cfg.scenario.reference).file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
    }
}

fn checked_scenario(cfg: &RepoConfig, reference: &SparseReference) -> Result<ScenarioConfig, CliError> {
    let scenario = prepare_scenario(&cfg.scenario(reference.clone()), reference);
    scenario.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(scenario)
}

/// Closed-loop run written to `out/`: `log.csv`, `plans.csv`,
/// `open_loop.csv`, `report.csv`, `report.txt`, `plot.svg` and the
/// normalized `config.toml`.
pub fn cmd_simulate(opts: &CommonOptions, out: &Path) -> Result<(), CliError> {
    let cfg = opts.load_config()?;
    let reference = opts.reference(&cfg)?;
    let scenario = checked_scenario(&cfg, &reference)?;
    let eval = evaluate(&scenario, &scenario_name(&cfg, opts))?;
    create_dir(out)?;
    write(&out.join("config.toml"), &cfg.to_toml())?;
    write(&out.join("log.csv"), &format::log_csv(&eval.log))?;
    write(&out.join("plans.csv"), &format::plans_csv(&eval.log))?;
    write(&out.join("open_loop.csv"), &format::dense_csv(&eval.open_loop))?;
    write(&out.join("report.csv"), &format::report_csv(&eval.report))?;
    write(&out.join("report.txt"), &format::report_text(&eval.report))?;
    write(&out.join("plot.svg"), &format::xy_plot_svg(&eval.log, scenario.reference.points()))
}

/// Open-loop plan of the reference from hover at its first waypoint,
/// starting the settling time before that waypoint, written as a dense CSV.
pub fn cmd_plan(opts: &CommonOptions, out: &Path) -> Result<(), CliError> {
    let cfg = opts.load_config()?;
    let reference = opts.reference(&cfg)?;
    checked_scenario(&cfg, &reference)?;
    let nominal = cfg.nominal_params();
    let model = linearize_hover(&nominal);
    let mut planner = Planner::new(cfg.planner.config(), cfg.controller.config(), nominal.clone(), &model)?;
    let initial = FullState::hover_with_payload_at(&nominal, reference.points()[0]);
    let plan = planner.plan_open_loop(&initial, &nominal.hover_input(), reference.start() - SETTLE_TIME, &reference)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write(out, &format::dense_csv(&plan))
}

/// Parses `m_l=0.5,1;l=1,2,3;dt=2`. Omitted axes take the configured
/// payload mass, cable length and reference spacing.
pub fn parse_grid(spec: &str, cfg: &RepoConfig) -> Result<SweepGrid, CliError> {
    if spec.trim().is_empty() {
        return Err(CliError::Config("sweep grid is empty".into()));
    }
    let plant = cfg.true_params();
    let mut grid = SweepGrid { m_l: vec![plant.m_l], l: vec![plant.l], dt: vec![cfg.scenario.reference_dt] };
    for part in spec.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, values) = part.split_once('=').ok_or_else(|| CliError::Config(format!("grid entry '{part}' lacks '='")))?;
        let values = values
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| CliError::Config(format!("grid value '{v}' in '{key}' is not a number"))))
            .collect::<Result<Vec<_>, _>>()?;
        match key.trim() {
            "m_l" => grid.m_l = values,
            "l" => grid.l = values,
            "dt" => grid.dt = values,
            other => return Err(CliError::Config(format!("unknown grid axis '{other}'"))),
        }
    }
    grid.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(grid)
}

/// Evaluates every grid cell and writes `sweep.csv` plus one log per
/// successful cell under `out/cells/`.
pub fn cmd_sweep(opts: &CommonOptions, grid_spec: &str, out: &Path) -> Result<(), CliError> {
    let cfg = opts.load_config()?;
    let grid = parse_grid(grid_spec, &cfg)?;
    let reference = opts.reference(&cfg)?;
    let base = cfg.scenario(reference.clone());
    checked_scenario(&cfg, &reference)?;
    let results = sweep(&grid, &base, &reference)?;
    let cells_dir = out.join("cells");
    create_dir(&cells_dir)?;
    let mut aggregate = format::sweep_header();
    aggregate.push('\n');
    let mut failed = 0;
    for (i, (cell, result)) in results.iter().enumerate() {
        let name = format!("cells/cell_{i:03}.csv");
        match result {
            Ok(eval) => {
                write(&out.join(&name), &format::log_csv(&eval.log))?;
                aggregate.push_str(&format::sweep_row(cell, Ok(&eval.report), &name));
            }
            Err(e) => {
                failed += 1;
                eprintln!("cell {}: {e}", cell.id());
                aggregate.push_str(&format::sweep_row(cell, Err(e.to_string()), ""));
            }
        }
        aggregate.push('\n');
    }
    write(&out.join("sweep.csv"), &aggregate)?;
    if failed > 0 {
        return Err(CliError::SweepCells { failed, total: results.len() });
    }
    Ok(())
}
