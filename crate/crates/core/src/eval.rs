//! Tracking and estimation metrics, evaluation scenarios and parameter sweeps.

use nalgebra::{Vector3, Vector4};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{idx, linearize_hover, FullState, SystemParams};
use crate::planner::Planner;
use crate::reference::{DenseReference, SparseReference};
use crate::sim::{run_closed_loop, RunLog, ScenarioConfig};

/// Hover period before the first waypoint, excluded from the metrics [s].
pub const SETTLE_TIME: f64 = 5.0;
/// Time after the last waypoint included in the metrics [s].
pub const TAIL: f64 = 3.0;
/// Open-loop RMSE below which the relative degradation is undefined [m].
pub const MIN_OL_RMSE: f64 = 1e-9;
/// Altitude of the square reference [m].
pub const SQUARE_ALTITUDE: f64 = 3.0;

const COMPLEX_CSV: &str = include_str!("../data/complex.csv");

/// Root-mean-square Euclidean distance to the zero-order-hold reference.
pub fn rmse(times: &[f64], positions: &[Vector3<f64>], reference: &SparseReference) -> Result<f64> {
    if times.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    if times.len() != positions.len() {
        return Err(Error::DimensionMismatch(format!("{} times for {} positions", times.len(), positions.len())));
    }
    let sum: f64 = times.iter().zip(positions).map(|(t, p)| (p - reference.zoh(*t)).norm_squared()).sum();
    Ok((sum / times.len() as f64).sqrt())
}

/// Relative degradation of the executed trajectory in percent.
pub fn delta_rmse(rmse_exec: f64, rmse_ol: f64) -> Result<f64> {
    if rmse_ol == 0.0 {
        return Err(Error::DivisionByZero("open-loop RMSE is zero"));
    }
    Ok((rmse_exec - rmse_ol) / rmse_ol * 100.0)
}

/// Square of `side` metre steps alternating along x and y, starting at
/// `start` at time 0.
pub fn square_trajectory_from(start: Vector3<f64>, dt: f64, side: f64, laps: usize) -> Result<SparseReference> {
    let steps = [Vector3::x(), Vector3::y(), -Vector3::x(), -Vector3::y()];
    let mut points = vec![start];
    for k in 0..4 * laps {
        let last = points[points.len() - 1];
        points.push(last + steps[k % 4] * side);
    }
    SparseReference::uniform(0.0, dt, points)
}

pub fn square_trajectory(dt: f64, side: f64, laps: usize) -> Result<SparseReference> {
    square_trajectory_from(Vector3::new(0.0, 0.0, SQUARE_ALTITUDE), dt, side, laps)
}

/// Parses `t,x,y,z` rows with a header line.
pub fn parse_reference_csv(text: &str) -> Result<SparseReference> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or(Error::EmptyTrajectory)?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols != ["t", "x", "y", "z"] {
        return Err(Error::InvalidConfig(format!("reference header must be t,x,y,z, got {header}")));
    }
    let (mut times, mut points) = (Vec::new(), Vec::new());
    for (n, line) in lines.enumerate() {
        let vals: Vec<f64> = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidConfig(format!("reference row {}: {e}", n + 2)))?;
        if vals.len() != 4 {
            return Err(Error::InvalidConfig(format!("reference row {} has {} fields", n + 2, vals.len())));
        }
        times.push(vals[0]);
        points.push(Vector3::new(vals[1], vals[2], vals[3]));
    }
    SparseReference::new(times, points)
}

/// Waypoints with altitude, heading and spacing changes, at spacing `dt`.
pub fn complex_trajectory(dt: f64) -> Result<SparseReference> {
    parse_reference_csv(COMPLEX_CSV)?.retimed(dt)
}

/// Error statistics of the cable angles and rates
/// `(theta_l, phi_l, theta_l', phi_l')`; `std` is the population deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimationMetrics {
    pub rmse: Vector4<f64>,
    pub std: Vector4<f64>,
    pub bias: Vector4<f64>,
}

const ANGLE_STATES: [usize; 4] = [idx::TH_L, idx::PHI_L, idx::THD_L, idx::PHID_L];

pub fn estimation_metrics(log: &RunLog) -> Result<EstimationMetrics> {
    estimation_metrics_between(log, f64::NEG_INFINITY, f64::INFINITY)
}

/// Metrics over records with `t0 <= t <= t1`.
pub fn estimation_metrics_between(log: &RunLog, t0: f64, t1: f64) -> Result<EstimationMetrics> {
    let errors: Vec<Vector4<f64>> = log
        .records
        .iter()
        .filter(|r| r.t >= t0 && r.t <= t1)
        .map(|r| Vector4::from_fn(|i, _| r.estimate.0[ANGLE_STATES[i]] - r.state.0[ANGLE_STATES[i]]))
        .collect();
    if errors.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let n = errors.len() as f64;
    let bias = errors.iter().sum::<Vector4<f64>>() / n;
    let var = errors.iter().map(|e| (e - bias).component_mul(&(e - bias))).sum::<Vector4<f64>>() / n;
    let ms = errors.iter().map(|e| e.component_mul(e)).sum::<Vector4<f64>>() / n;
    Ok(EstimationMetrics { rmse: ms.map(f64::sqrt), std: var.map(f64::sqrt), bias })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub scenario: String,
    pub rmse_ol: f64,
    pub rmse_exec: f64,
    /// Percent; `None` when the open-loop RMSE is below `MIN_OL_RMSE`.
    pub delta_rmse: Option<f64>,
    pub estimation: EstimationMetrics,
}

/// Closed-loop run, open-loop baseline and their metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub log: RunLog,
    pub open_loop: DenseReference,
}

/// Scenario for `reference`: its first waypoint is moved to `SETTLE_TIME`,
/// the run lasts until `TAIL` after the last one, and the plant starts
/// hovering with the payload at the first waypoint.
pub fn prepare_scenario(base: &ScenarioConfig, reference: &SparseReference) -> ScenarioConfig {
    let reference = reference.shifted(SETTLE_TIME - reference.start());
    let mut s = base.clone();
    s.initial_state = FullState::hover_with_payload_at(&s.true_params, reference.points()[0]);
    s.duration = ((reference.end() + TAIL) * s.control_rate).ceil() / s.control_rate;
    s.reference = reference;
    s
}

/// Metric window `[first waypoint, last waypoint + TAIL]`.
pub fn metric_window(reference: &SparseReference) -> (f64, f64) {
    (reference.start(), reference.end() + TAIL)
}

/// Runs a prepared scenario and scores it against its open-loop plan.
pub fn evaluate(scenario: &ScenarioConfig, id: &str) -> Result<Evaluation> {
    let log = run_closed_loop(scenario)?;
    let nominal = &scenario.nominal_params;
    let model = linearize_hover(nominal);
    let mut planner = Planner::new(scenario.planner.clone(), scenario.controller.clone(), nominal.clone(), &model)?;
    let initial = FullState::hover_with_payload_at(nominal, scenario.reference.points()[0]);
    let open_loop = planner.plan_open_loop(&initial, &nominal.hover_input(), 0.0, &scenario.reference)?;

    let (t0, t1) = metric_window(&scenario.reference);
    let window: Vec<_> = log.records.iter().filter(|r| r.t >= t0 - 1e-9 && r.t <= t1 + 1e-9).collect();
    let times: Vec<f64> = window.iter().map(|r| r.t).collect();
    let exec: Vec<Vector3<f64>> = window.iter().map(|r| r.payload).collect();
    let ol: Vec<Vector3<f64>> = times.iter().map(|t| open_loop.sample(*t).fixed_rows::<3>(0).into_owned()).collect();
    let rmse_exec = rmse(&times, &exec, &scenario.reference)?;
    let rmse_ol = rmse(&times, &ol, &scenario.reference)?;
    let report = MetricsReport {
        scenario: id.to_string(),
        rmse_ol,
        rmse_exec,
        delta_rmse: if rmse_ol < MIN_OL_RMSE { None } else { Some(delta_rmse(rmse_exec, rmse_ol)?) },
        estimation: estimation_metrics_between(&log, t0 - 1e-9, t1 + 1e-9)?,
    };
    Ok(Evaluation { report, log, open_loop })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepCell {
    pub m_l: f64,
    pub l: f64,
    /// Waypoint spacing [s].
    pub dt: f64,
}

impl SweepCell {
    pub fn id(&self) -> String {
        format!("m_l={},l={},dt={}", self.m_l, self.l, self.dt)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepGrid {
    pub m_l: Vec<f64>,
    pub l: Vec<f64>,
    pub dt: Vec<f64>,
}

impl SweepGrid {
    /// Cells ordered by payload mass, then cable length, then spacing.
    pub fn cells(&self) -> Vec<SweepCell> {
        let mut cells = Vec::with_capacity(self.m_l.len() * self.l.len() * self.dt.len());
        for &m_l in &self.m_l {
            for &l in &self.l {
                for &dt in &self.dt {
                    cells.push(SweepCell { m_l, l, dt });
                }
            }
        }
        cells
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_l.is_empty() || self.l.is_empty() || self.dt.is_empty() {
            return Err(Error::InvalidConfig("every sweep axis needs at least one value".into()));
        }
        if self.m_l.iter().chain(&self.l).chain(&self.dt).any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidConfig("sweep values must be positive".into()));
        }
        Ok(())
    }
}

/// Scenario of one cell: plant and model share the cell's payload mass and
/// cable length; the reference is retimed to the cell's spacing.
pub fn cell_scenario(base: &ScenarioConfig, reference: &SparseReference, cell: &SweepCell) -> Result<ScenarioConfig> {
    let params = SystemParams { m_l: cell.m_l, l: cell.l, ..base.true_params.clone() };
    params.validate()?;
    let nominal = SystemParams { m_l: cell.m_l, l: cell.l, ..base.nominal_params.clone() };
    let mut s = base.clone();
    s.true_params = params;
    s.nominal_params = nominal;
    Ok(prepare_scenario(&s, &reference.retimed(cell.dt)?))
}

/// Evaluates every cell, in parallel; results keep grid order and a failing
/// cell does not stop the others.
pub fn sweep(grid: &SweepGrid, base: &ScenarioConfig, reference: &SparseReference) -> Result<Vec<(SweepCell, Result<Evaluation>)>> {
    grid.validate()?;
    Ok(grid
        .cells()
        .into_par_iter()
        .map(|cell| {
            let result = cell_scenario(base, reference, &cell).and_then(|s| evaluate(&s, &cell.id()));
            (cell, result)
        })
        .collect())
}
