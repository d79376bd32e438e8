//! Ground-truth plant integration and the closed-loop scenario clock.

use nalgebra::{Vector3, Vector5};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::controller::{ControllerConfig, MpcController};
use crate::error::{Error, Result};
use crate::estimator::{self, Estimate, NoiseConfig};
use crate::model::{linearize_hover, nonlinear_dynamics, ControlInput, FullState, StateMatrix, SystemParams};
use crate::planner::{replan_tick, PlanSchedule, Planner, PlannerConfig};
use crate::reference::{DenseReference, OutputVector, SparseReference};
use crate::sensor::{measure, SensorConfig};

/// Classical fourth-order Runge-Kutta step with `u` held constant.
pub fn rk4_step(x: &FullState, u: &ControlInput, dt: f64, params: &SystemParams) -> Result<FullState> {
    let k1 = nonlinear_dynamics(x, u, params)?;
    let k2 = nonlinear_dynamics(&FullState(x.0 + k1 * (0.5 * dt)), u, params)?;
    let k3 = nonlinear_dynamics(&FullState(x.0 + k2 * (0.5 * dt)), u, params)?;
    let k4 = nonlinear_dynamics(&FullState(x.0 + k3 * dt), u, params)?;
    Ok(FullState(x.0 + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0)))
}

/// State handed to the controller.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Feedback {
    /// Kalman filter mean.
    #[default]
    Estimated,
    /// Plant state, for isolating the estimation error.
    GroundTruth,
}

/// Relative half-width of the optional control period jitter.
pub const JITTER_FRACTION: f64 = 0.2;

const JITTER_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    /// Plant parameters.
    pub true_params: SystemParams,
    /// Parameters assumed by the estimator, controller and planner.
    pub nominal_params: SystemParams,
    pub sensor: SensorConfig,
    pub noise: NoiseConfig,
    pub controller: ControllerConfig,
    pub planner: PlannerConfig,
    pub reference: SparseReference,
    pub initial_state: FullState,
    /// Diagonal of the initial estimate covariance.
    pub initial_cov: f64,
    pub duration: f64,
    pub control_rate: f64,
    pub planner_rate: f64,
    pub integrator_rate: f64,
    pub feedback: Feedback,
    /// Jitter each control period uniformly by up to `JITTER_FRACTION`.
    pub jitter_dt: bool,
}

impl ScenarioConfig {
    /// Default scenario hovering with the payload at the first waypoint.
    pub fn new(reference: SparseReference, duration: f64) -> Self {
        let params = SystemParams::default();
        let initial_state = FullState::hover_with_payload_at(&params, reference.points()[0]);
        Self {
            true_params: params.clone(),
            nominal_params: params,
            sensor: SensorConfig::default(),
            noise: NoiseConfig::default(),
            controller: ControllerConfig::default(),
            planner: PlannerConfig::default(),
            reference,
            initial_state,
            initial_cov: 1e-4,
            duration,
            control_rate: 100.0,
            planner_rate: 1.0,
            integrator_rate: 1000.0,
            feedback: Feedback::Estimated,
            jitter_dt: false,
        }
    }

    /// Sets both plant and nominal parameters and re-hovers the initial state.
    pub fn with_params(mut self, params: SystemParams) -> Self {
        self.initial_state = FullState::hover_with_payload_at(&params, self.reference.points()[0]);
        self.true_params = params.clone();
        self.nominal_params = params;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.true_params.validate()?;
        self.nominal_params.validate()?;
        self.sensor.validate()?;
        self.controller.validate()?;
        self.planner.validate()?;
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::InvalidConfig("duration must be positive".into()));
        }
        if !(self.initial_cov.is_finite() && self.initial_cov >= 0.0) {
            return Err(Error::InvalidConfig("initial covariance must be non-negative".into()));
        }
        if !(self.integrator_rate >= self.control_rate && self.control_rate >= self.planner_rate && self.planner_rate > 0.0) {
            return Err(Error::InvalidConfig("rates must satisfy integrator >= control >= planner > 0".into()));
        }
        if self.sensor.measurement_rate > self.control_rate {
            return Err(Error::InvalidConfig("measurement rate must not exceed the control rate".into()));
        }
        self.clock()?;
        if !self.initial_state.0.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig("initial state must be finite".into()));
        }
        Ok(())
    }

    fn clock(&self) -> Result<Clock> {
        Ok(Clock {
            substeps: ratio(self.integrator_rate, self.control_rate, "integrator", "control")?,
            per_plan: ratio(self.control_rate, self.planner_rate, "control", "planner")?,
            per_meas: ratio(self.control_rate, self.sensor.measurement_rate, "control", "measurement")?,
            ticks: ratio(self.duration * self.control_rate, 1.0, "duration x control", "unit")?,
        })
    }
}

struct Clock {
    substeps: usize,
    per_plan: usize,
    per_meas: usize,
    ticks: usize,
}

fn ratio(a: f64, b: f64, na: &str, nb: &str) -> Result<usize> {
    let r = a / b;
    let n = r.round();
    if n < 1.0 || (r - n).abs() > 1e-9 * r.max(1.0) {
        return Err(Error::InvalidConfig(format!("{na} rate must be an integer multiple of the {nb} rate")));
    }
    Ok(n as usize)
}

/// One control tick.
#[derive(Clone, Debug, PartialEq)]
pub struct TickRecord {
    pub t: f64,
    pub state: FullState,
    pub payload: Vector3<f64>,
    /// Latest sensor reading.
    pub measurement: Vector5<f64>,
    /// Filter mean in absolute coordinates.
    pub estimate: FullState,
    pub input: ControlInput,
    /// Planned payload position and input in effect at `t`.
    pub plan: OutputVector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanRecord {
    /// Time the plan was issued.
    pub issued: f64,
    pub plan: DenseReference,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunLog {
    pub records: Vec<TickRecord>,
    pub plans: Vec<PlanRecord>,
}

impl RunLog {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn payload_positions(&self) -> Vec<Vector3<f64>> {
        self.records.iter().map(|r| r.payload).collect()
    }
}

fn at_tick(tick: usize, time: f64) -> impl FnOnce(Error) -> Error {
    move |e| Error::AtTick { tick, time, source: Box::new(e) }
}

/// Runs plant, sensor, filter, controller and planner in lockstep.
pub fn run_closed_loop(scenario: &ScenarioConfig) -> Result<RunLog> {
    scenario.validate()?;
    let clock = scenario.clock()?;
    let nominal = &scenario.nominal_params;
    let plant = &scenario.true_params;
    let model = linearize_hover(nominal);
    let mut controller = MpcController::new(scenario.controller.clone(), nominal.clone(), &model)?;
    let mut planner = Planner::new(scenario.planner.clone(), scenario.controller.clone(), nominal.clone(), &model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.sensor.seed);
    let mut jitter_rng = ChaCha8Rng::seed_from_u64(scenario.sensor.seed ^ JITTER_STREAM);

    let h = 1.0 / scenario.integrator_rate;
    let mut x = scenario.initial_state;
    let mut u = nominal.hover_input();
    let mut est = Estimate::new(x.to_deviation(nominal), StateMatrix::identity() * scenario.initial_cov);
    let mut y = measure(&x, &scenario.sensor, &mut rng);

    let first = planner.plan(&x, &u, 0.0, &scenario.reference).map_err(at_tick(0, 0.0))?;
    let mut schedule = PlanSchedule::new(first.clone());
    let mut log = RunLog { records: Vec::with_capacity(clock.ticks + 1), plans: vec![PlanRecord { issued: 0.0, plan: first }] };

    let (n, dt) = (scenario.controller.horizon, scenario.controller.dt);
    let mut t = 0.0;
    let mut elapsed = 0.0;
    let mut tick = 0;
    while tick <= clock.ticks && t <= scenario.duration + 1e-9 {
        let wrap = at_tick(tick, t);
        if tick > 0 {
            est = estimator::predict(&est, &u.to_deviation(nominal), elapsed, &model, &scenario.noise);
        }
        if tick % clock.per_meas == 0 {
            if tick > 0 {
                y = measure(&x, &scenario.sensor, &mut rng);
            }
            est = estimator::update(&est, &y, &scenario.noise).map_err(wrap)?;
        }
        let feedback = match scenario.feedback {
            Feedback::Estimated => est.mean,
            Feedback::GroundTruth => x.to_deviation(nominal),
        };
        schedule.advance(t);
        let window = schedule.window(t, n, dt);
        let out = controller.step(&feedback, &u, &window).map_err(at_tick(tick, t))?;
        if tick > 0 && tick % clock.per_plan == 0 {
            let j = ((scenario.planner.t_plan / dt).round() as usize).min(out.predicted.len() - 1);
            // A failed replan leaves the previous plan in force.
            match replan_tick(&mut planner, &out.predicted[j], &out.predicted_inputs[j], t, &scenario.reference) {
                Ok(plan) => {
                    schedule.push(plan.clone());
                    log.plans.push(PlanRecord { issued: t, plan });
                }
                Err(Error::SolverFailed(_)) => {}
                Err(e) => return Err(at_tick(tick, t)(e)),
            }
        }
        u = out.u;
        log.records.push(TickRecord {
            t,
            state: x,
            payload: x.payload_position(plant.l),
            measurement: y,
            estimate: FullState::from_deviation(&est.mean, nominal),
            input: u,
            plan: schedule.sample(t),
        });
        if tick == clock.ticks {
            break;
        }
        let steps = if scenario.jitter_dt {
            let f: f64 = jitter_rng.random_range(-JITTER_FRACTION..=JITTER_FRACTION);
            ((clock.substeps as f64 * (1.0 + f)).round() as usize).max(1)
        } else {
            clock.substeps
        };
        for _ in 0..steps {
            x = rk4_step(&x, &u, h, plant).map_err(at_tick(tick, t))?;
        }
        tick += 1;
        elapsed = steps as f64 * h;
        t = tick as f64 / scenario.control_rate;
        if scenario.jitter_dt {
            t = log.records.last().map_or(0.0, |r| r.t) + elapsed;
        }
    }
    Ok(log)
}
