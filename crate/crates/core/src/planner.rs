//! Contouring planner: tracks sparse timestamped waypoints with output
//! weights that peak at the waypoint times and relax in between.

use nalgebra::Vector3;
use payload_ocp::{OcpSolver, SolveStatus, SolverSettings};

use crate::controller::{augment, incremental_model, output_map, unpack, ControllerConfig, IncrementalModel, OutputMap, TrackingSpec};
use crate::error::{Error, Result};
use crate::model::{ControlInput, FullState, LinearModel, SystemParams};
use crate::reference::{DenseReference, OutputVector, SparseReference};

#[derive(Clone, Debug, PartialEq)]
pub struct PlannerConfig {
    pub horizon: usize,
    /// Variance of the Gaussian time kernels [s^2].
    pub kernel_variance: f64,
    pub p_du: Vector3<f64>,
    pub tilt_bound: f64,
    /// Replanning rate [Hz].
    pub replanning_rate: f64,
    /// Look-ahead between issuing a plan and its start time [s].
    pub t_plan: f64,
    /// Time the open-loop plan extends past the last waypoint [s].
    pub ol_tail: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            horizon: 300,
            kernel_variance: 0.25,
            p_du: Vector3::new(500.0, 500.0, 5.0),
            tilt_bound: 0.5,
            replanning_rate: 1.0,
            t_plan: 1.0,
            ol_tail: 3.0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("planner horizon must be at least 1".into()));
        }
        if !(self.kernel_variance.is_finite() && self.kernel_variance > 0.0) {
            return Err(Error::InvalidConfig("planner kernel variance must be positive".into()));
        }
        if self.p_du.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidConfig("planner rate weights must be positive".into()));
        }
        if !(self.tilt_bound > 0.0 && self.replanning_rate > 0.0) {
            return Err(Error::InvalidConfig("planner tilt bound and rate must be positive".into()));
        }
        if !(self.t_plan >= 0.0 && self.ol_tail >= 0.0) {
            return Err(Error::InvalidConfig("planner t_plan and ol_tail must be non-negative".into()));
        }
        Ok(())
    }

    /// Kernel standard deviation [s].
    pub fn sigma(&self) -> f64 {
        self.kernel_variance.sqrt()
    }

    pub fn with_sigma(self, sigma: f64) -> Self {
        Self { kernel_variance: sigma * sigma, ..self }
    }
}

/// `w_i = max_k exp(-(t_k - t_i)^2 / (2 sigma^2))`.
pub fn contouring_weights(ref_times: &[f64], horizon_times: &[f64], sigma: f64) -> Vec<f64> {
    let denom = 2.0 * sigma * sigma;
    horizon_times
        .iter()
        .map(|ti| {
            ref_times
                .iter()
                .map(|tk| (-(tk - ti).powi(2) / denom).exp())
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Stage weights used by the planner: the kernel weights inside the
/// reference time span and full weight outside it, where the zero-order hold
/// keeps the first or last waypoint as target.
pub fn stage_weights(reference: &SparseReference, horizon_times: &[f64], sigma: f64) -> Vec<f64> {
    let (start, end) = (reference.start(), reference.end());
    contouring_weights(reference.times(), horizon_times, sigma)
        .into_iter()
        .zip(horizon_times)
        .map(|(w, t)| if *t < start || *t > end { 1.0 } else { w })
        .collect()
}

/// Planner instance; stage weights and bounds other than the rate weights
/// and the tilt bound are inherited from the controller configuration.
#[derive(Clone, Debug)]
pub struct Planner {
    cfg: PlannerConfig,
    ctrl: ControllerConfig,
    params: SystemParams,
    inc: IncrementalModel,
    out: OutputMap,
    solver: OcpSolver,
}

impl Planner {
    pub fn new(cfg: PlannerConfig, ctrl: ControllerConfig, params: SystemParams, model: &LinearModel) -> Result<Self> {
        cfg.validate()?;
        ctrl.validate()?;
        params.validate()?;
        let inc = incremental_model(model, ctrl.dt);
        let out = output_map(params.l);
        let settings = SolverSettings { warm_start: false, ..SolverSettings::default() };
        Ok(Self { cfg, ctrl, params, inc, out, solver: OcpSolver::new(settings) })
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.cfg
    }

    pub fn stage_dt(&self) -> f64 {
        self.ctrl.dt
    }

    /// Plan over the configured horizon starting at absolute time `t0`.
    pub fn plan(&mut self, x_init: &FullState, u_init: &ControlInput, t0: f64, reference: &SparseReference) -> Result<DenseReference> {
        self.plan_horizon(x_init, u_init, t0, reference, self.cfg.horizon, None)
    }

    /// Plan with explicit per-stage weight scales instead of the kernels.
    pub fn plan_with_weights(
        &mut self,
        x_init: &FullState,
        u_init: &ControlInput,
        t0: f64,
        reference: &SparseReference,
        weights: &[f64],
    ) -> Result<DenseReference> {
        if weights.is_empty() {
            return Err(Error::DimensionMismatch("weight vector is empty".into()));
        }
        self.plan_horizon(x_init, u_init, t0, reference, weights.len() - 1, Some(weights))
    }

    /// One solve spanning the whole reference plus the settling tail.
    pub fn plan_open_loop(&mut self, x0: &FullState, u0: &ControlInput, t0: f64, reference: &SparseReference) -> Result<DenseReference> {
        let span = (reference.end() + self.cfg.ol_tail - t0).max(self.ctrl.dt);
        let n = (span / self.ctrl.dt - 1e-9).ceil().max(1.0) as usize;
        self.plan_horizon(x0, u0, t0, reference, n, None)
    }

    /// Stage times of a plan starting at `t0`.
    pub fn stage_times(&self, t0: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|k| t0 + k as f64 * self.ctrl.dt).collect()
    }

    fn plan_horizon(
        &mut self,
        x_init: &FullState,
        u_init: &ControlInput,
        t0: f64,
        reference: &SparseReference,
        n: usize,
        weights: Option<&[f64]>,
    ) -> Result<DenseReference> {
        let times = self.stage_times(t0, n);
        let scales = match weights {
            Some(w) => w.to_vec(),
            None => stage_weights(reference, &times, self.cfg.sigma()),
        };
        let targets: Vec<OutputVector> = times
            .iter()
            .map(|&t| {
                let p = reference.zoh(t);
                OutputVector::new(p[0], p[1], p[2], 0.0, 0.0, 0.0)
            })
            .collect();
        let spec = TrackingSpec {
            inc: &self.inc,
            out: &self.out,
            weights: self.ctrl.output_weights(),
            p_du: self.cfg.p_du,
            slack_weight: self.ctrl.slack_weight,
            v_bound: self.ctrl.v_bound,
            tilt_bound: self.cfg.tilt_bound,
        };
        let z0 = augment(&x_init.to_deviation(&self.params), &u_init.to_deviation(&self.params));
        let qp = spec.build(&z0, &targets, &scales);
        let sol = self.solver.solve(&qp)?;
        if sol.status == SolveStatus::Infeasible {
            return Err(Error::SolverFailed("planning QP is not convex".into()));
        }
        let (states, inputs) = unpack(&sol.xs, &self.params);
        let outputs = states
            .iter()
            .zip(&inputs)
            .map(|(x, u)| {
                let z = augment(&x.to_deviation(&self.params), &u.to_deviation(&self.params));
                let mut y = self.out.apply(&z);
                for i in 0..3 {
                    y[3 + i] = u.0[i];
                }
                y
            })
            .collect();
        Ok(DenseReference { t0, dt: self.ctrl.dt, outputs })
    }
}

/// Replanning from the state predicted for `t + t_plan`; the returned plan
/// starts at that time.
pub fn replan_tick(
    planner: &mut Planner,
    predicted_state: &FullState,
    predicted_input: &ControlInput,
    t: f64,
    reference: &SparseReference,
) -> Result<DenseReference> {
    let start = t + planner.config().t_plan;
    planner.plan(predicted_state, predicted_input, start, reference)
}

/// Plans in force during a run, newest last. Each reference sample is taken
/// from the newest plan that has already started at the sample time.
#[derive(Clone, Debug, Default)]
pub struct PlanSchedule {
    plans: Vec<DenseReference>,
}

impl PlanSchedule {
    pub fn new(first: DenseReference) -> Self {
        Self { plans: vec![first] }
    }

    pub fn push(&mut self, plan: DenseReference) {
        self.plans.push(plan);
    }

    /// Drops plans superseded before time `t`.
    pub fn advance(&mut self, t: f64) {
        while self.plans.len() > 1 && self.plans[1].t0 <= t + 1e-9 {
            self.plans.remove(0);
        }
    }

    pub fn sample(&self, t: f64) -> OutputVector {
        let plan = self
            .plans
            .iter()
            .rev()
            .find(|p| p.t0 <= t + 1e-9)
            .unwrap_or(&self.plans[0]);
        plan.sample(t)
    }

    /// `n + 1` samples at spacing `dt` starting at `t`.
    pub fn window(&self, t: f64, n: usize, dt: f64) -> DenseReference {
        DenseReference { t0: t, dt, outputs: (0..=n).map(|k| self.sample(t + k as f64 * dt)).collect() }
    }
}
