//! Incremental MPC tracking the linearized payload position.
//!
//! The augmented state is `z = [x; u - u_eq]` with the input increment as
//! decision variable, so the previous command is carried through the
//! prediction and only its change is penalized.

use nalgebra::{DMatrix, DVector, SMatrix, SVector, Vector3};
use payload_ocp::{OcpQp, OcpSolver, OcpStage, SoftBounds, SolveStatus, SolverSettings, TerminalStage};

use crate::error::{Error, Result};
use crate::model::{discretize, idx, ControlInput, FullState, LinearModel, StateVector, SystemParams, NU, NX};
use crate::reference::{DenseReference, OutputVector};

/// Augmented state dimension.
pub const NZ: usize = NX + NU;
pub const NOUT: usize = 6;

/// Consecutive failed solves tolerated before the run is aborted.
pub const MAX_HELD_TICKS: usize = 5;

pub type AugVector = SVector<f64, NZ>;

#[derive(Clone, Debug, PartialEq)]
pub struct ControllerConfig {
    pub horizon: usize,
    /// Stage sampling time [s].
    pub dt: f64,
    pub p_sl: Vector3<f64>,
    pub p_u: Vector3<f64>,
    pub p_du: Vector3<f64>,
    pub slack_weight: f64,
    /// Per-axis UAV velocity bound [m/s].
    pub v_bound: f64,
    /// FCU tilt bound [rad].
    pub tilt_bound: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            horizon: 50,
            dt: 0.05,
            p_sl: Vector3::new(10.0, 10.0, 10000.0),
            p_u: Vector3::new(0.0, 0.0, 0.05),
            p_du: Vector3::new(100.0, 100.0, 5.0),
            slack_weight: 10.0,
            v_bound: 10.0,
            tilt_bound: 0.75,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("controller horizon must be at least 1".into()));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidConfig("controller dt must be positive".into()));
        }
        let weights = self.p_sl.iter().chain(self.p_u.iter()).chain(self.p_du.iter());
        if weights.chain(std::iter::once(&self.slack_weight)).any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidConfig("controller weights must be non-negative".into()));
        }
        if self.p_du.iter().any(|w| *w <= 0.0) {
            return Err(Error::InvalidConfig("input rate weights must be positive".into()));
        }
        if !(self.v_bound > 0.0 && self.tilt_bound > 0.0) {
            return Err(Error::InvalidConfig("controller bounds must be positive".into()));
        }
        Ok(())
    }

    /// Output weight `diag(p_sl, p_u)`.
    pub fn output_weights(&self) -> OutputVector {
        OutputVector::new(self.p_sl[0], self.p_sl[1], self.p_sl[2], self.p_u[0], self.p_u[1], self.p_u[2])
    }
}

/// Discrete augmented model `z+ = A z + B du`.
#[derive(Clone, Debug, PartialEq)]
pub struct IncrementalModel {
    pub a: SMatrix<f64, NZ, NZ>,
    pub b: SMatrix<f64, NZ, NU>,
}

pub fn incremental_model(model: &LinearModel, dt: f64) -> IncrementalModel {
    let (ad, bd) = discretize(model, dt);
    let mut a = SMatrix::<f64, NZ, NZ>::zeros();
    a.fixed_view_mut::<NX, NX>(0, 0).copy_from(&ad);
    a.fixed_view_mut::<NX, NU>(0, NX).copy_from(&bd);
    a.fixed_view_mut::<NU, NU>(NX, NX).copy_from(&SMatrix::<f64, NU, NU>::identity());
    let mut b = SMatrix::<f64, NZ, NU>::zeros();
    b.fixed_view_mut::<NX, NU>(0, 0).copy_from(&bd);
    b.fixed_view_mut::<NU, NU>(NX, 0).copy_from(&SMatrix::<f64, NU, NU>::identity());
    IncrementalModel { a, b }
}

/// Affine output `y = C z + c`: the linearized payload position followed by
/// the input deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputMap {
    pub c: SMatrix<f64, NOUT, NZ>,
    pub offset: OutputVector,
}

impl OutputMap {
    pub fn apply(&self, z: &AugVector) -> OutputVector {
        self.c * z + self.offset
    }
}

pub fn output_map(l: f64) -> OutputMap {
    let mut c = SMatrix::<f64, NOUT, NZ>::zeros();
    for i in 0..3 {
        c[(i, i)] = 1.0;
        c[(3 + i, NX + i)] = 1.0;
    }
    c[(0, idx::TH_L)] = -l;
    c[(1, idx::PHI_L)] = l;
    let mut offset = OutputVector::zeros();
    offset[2] = -l;
    OutputMap { c, offset }
}

pub fn augment(x_dev: &StateVector, u_dev: &Vector3<f64>) -> AugVector {
    let mut z = AugVector::zeros();
    z.fixed_rows_mut::<NX>(0).copy_from(x_dev);
    z.fixed_rows_mut::<NU>(NX).copy_from(u_dev);
    z
}

/// Weights and bounds of one tracking problem, shared by the controller and
/// the planner.
#[derive(Clone, Debug)]
pub(crate) struct TrackingSpec<'a> {
    pub inc: &'a IncrementalModel,
    pub out: &'a OutputMap,
    pub weights: OutputVector,
    pub p_du: Vector3<f64>,
    pub slack_weight: f64,
    pub v_bound: f64,
    pub tilt_bound: f64,
}

fn to_dmatrix<const R: usize, const C: usize>(m: &SMatrix<f64, R, C>) -> DMatrix<f64> {
    DMatrix::from_column_slice(R, C, m.as_slice())
}

fn to_dvector<const R: usize>(v: &SVector<f64, R>) -> DVector<f64> {
    DVector::from_column_slice(v.as_slice())
}

impl TrackingSpec<'_> {
    fn box_bounds(&self, nu: usize) -> SoftBounds {
        let len = nu + NZ;
        let mut lower = vec![f64::NEG_INFINITY; len];
        let mut upper = vec![f64::INFINITY; len];
        for i in [idx::VX, idx::VY, idx::VZ] {
            lower[nu + i] = -self.v_bound;
            upper[nu + i] = self.v_bound;
        }
        for i in [idx::TH, idx::PHI] {
            lower[nu + i] = -self.tilt_bound;
            upper[nu + i] = self.tilt_bound;
        }
        let z = vec![self.slack_weight; len];
        SoftBounds::boxed(NZ, nu, &lower, &upper, &z, &z).expect("bound vectors have matching lengths")
    }

    /// Builds the QP with stage targets `targets[k]` (output space, input
    /// rows as deviations) and stage weight scales `scales[k]`, `k = 0..=N`.
    pub fn build(&self, z0: &AugVector, targets: &[OutputVector], scales: &[f64]) -> OcpQp {
        let n = targets.len() - 1;
        let w = SMatrix::<f64, NOUT, NOUT>::from_diagonal(&self.weights);
        let ctw = self.out.c.transpose() * w;
        let q_full = ctw * self.out.c;
        let a = to_dmatrix(&self.inc.a);
        let b = to_dmatrix(&self.inc.b);
        let r = DMatrix::from_diagonal(&to_dvector(&self.p_du));
        let stage_bounds = self.box_bounds(NU);

        let cost = |k: usize| {
            let q = to_dmatrix(&(q_full * scales[k]));
            let lin = to_dvector(&(ctw * (self.out.offset - targets[k]) * scales[k]));
            (q, lin)
        };
        let stages = (0..n)
            .map(|k| {
                let (q, lin) = cost(k);
                OcpStage::new(q, r.clone(), lin, a.clone(), b.clone()).with_bounds(stage_bounds.clone())
            })
            .collect();
        let (qn, linn) = cost(n);
        let terminal = TerminalStage::new(qn, linn).with_bounds(self.box_bounds(0));
        OcpQp { x0: to_dvector(z0), stages, terminal }
    }
}

/// Stage targets in output space from a dense reference of absolute inputs.
fn targets_from(reference: &DenseReference, params: &SystemParams) -> Vec<OutputVector> {
    let u_eq = params.hover_input().0;
    reference
        .outputs
        .iter()
        .map(|y| {
            let mut t = *y;
            for i in 0..3 {
                t[3 + i] -= u_eq[i];
            }
            t
        })
        .collect()
}

/// Tracking QP for estimate `x_hat` (deviation coordinates) and the command
/// currently applied.
pub fn build_tracking_ocp(
    x_hat: &StateVector,
    u_prev: &ControlInput,
    reference: &DenseReference,
    cfg: &ControllerConfig,
    params: &SystemParams,
    model: &LinearModel,
) -> Result<OcpQp> {
    if reference.len() != cfg.horizon + 1 {
        return Err(Error::DimensionMismatch(format!(
            "reference has {} stages, horizon needs {}",
            reference.len(),
            cfg.horizon + 1
        )));
    }
    let inc = incremental_model(model, cfg.dt);
    let out = output_map(params.l);
    let spec = controller_spec(cfg, &inc, &out);
    let z0 = augment(x_hat, &u_prev.to_deviation(params));
    Ok(spec.build(&z0, &targets_from(reference, params), &vec![1.0; cfg.horizon + 1]))
}

fn controller_spec<'a>(cfg: &ControllerConfig, inc: &'a IncrementalModel, out: &'a OutputMap) -> TrackingSpec<'a> {
    TrackingSpec {
        inc,
        out,
        weights: cfg.output_weights(),
        p_du: cfg.p_du,
        slack_weight: cfg.slack_weight,
        v_bound: cfg.v_bound,
        tilt_bound: cfg.tilt_bound,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControlOutput {
    pub u: ControlInput,
    /// Predicted states at the stage times, starting with the current one.
    pub predicted: Vec<FullState>,
    /// Input in effect at each predicted stage (the augmented input part).
    pub predicted_inputs: Vec<ControlInput>,
    pub status: SolveStatus,
    pub iterations: usize,
    /// True when the previous command was held after a failed solve.
    pub held: bool,
}

/// Splits a predicted augmented trajectory into absolute states and inputs.
pub(crate) fn unpack(xs: &[DVector<f64>], params: &SystemParams) -> (Vec<FullState>, Vec<ControlInput>) {
    xs.iter()
        .map(|z| {
            let x = StateVector::from_fn(|i, _| z[i]);
            let u = Vector3::new(z[NX], z[NX + 1], z[NX + 2]);
            (FullState::from_deviation(&x, params), ControlInput::from_deviation(&u, params))
        })
        .unzip()
}

fn clamp_command(u: Vector3<f64>, tilt_bound: f64) -> ControlInput {
    ControlInput::new(
        u[0].clamp(-tilt_bound, tilt_bound),
        u[1].clamp(-tilt_bound, tilt_bound),
        u[2].max(0.0),
    )
}

/// One receding-horizon step: solves the tracking QP and applies the first
/// increment, clamped to the tilt bound.
pub fn control_step(
    x_hat: &StateVector,
    u_prev: &ControlInput,
    plan: &DenseReference,
    cfg: &ControllerConfig,
    params: &SystemParams,
    model: &LinearModel,
    solver: &mut OcpSolver,
) -> Result<ControlOutput> {
    let qp = build_tracking_ocp(x_hat, u_prev, plan, cfg, params, model)?;
    solve_tracking(&qp, u_prev, cfg, params, solver)
}

fn solve_tracking(
    qp: &OcpQp,
    u_prev: &ControlInput,
    cfg: &ControllerConfig,
    params: &SystemParams,
    solver: &mut OcpSolver,
) -> Result<ControlOutput> {
    let sol = solver.solve(qp)?;
    if sol.status == SolveStatus::Infeasible {
        return Err(Error::SolverFailed("tracking QP is not convex".into()));
    }
    let du = Vector3::new(sol.us[0][0], sol.us[0][1], sol.us[0][2]);
    if !du.iter().all(|v| v.is_finite()) {
        return Err(Error::SolverFailed("non-finite input increment".into()));
    }
    let (predicted, predicted_inputs) = unpack(&sol.xs, params);
    Ok(ControlOutput {
        u: clamp_command(u_prev.0 + du, cfg.tilt_bound),
        predicted,
        predicted_inputs,
        status: sol.status,
        iterations: sol.iterations,
        held: false,
    })
}

/// Stateful controller owning the solver workspace and the failure policy.
#[derive(Clone, Debug)]
pub struct MpcController {
    cfg: ControllerConfig,
    params: SystemParams,
    inc: IncrementalModel,
    out: OutputMap,
    solver: OcpSolver,
    held: usize,
    last: Option<ControlOutput>,
}

impl MpcController {
    /// The solver is warm-started from the previous active set without
    /// shifting, since consecutive ticks are closer than one stage.
    pub fn new(cfg: ControllerConfig, params: SystemParams, model: &LinearModel) -> Result<Self> {
        let settings = SolverSettings { warm_shift: 0, ..SolverSettings::default() };
        Self::with_solver(cfg, params, model, settings)
    }

    pub fn with_solver(
        cfg: ControllerConfig,
        params: SystemParams,
        model: &LinearModel,
        settings: SolverSettings,
    ) -> Result<Self> {
        cfg.validate()?;
        params.validate()?;
        let inc = incremental_model(model, cfg.dt);
        let out = output_map(params.l);
        Ok(Self { cfg, params, inc, out, solver: OcpSolver::new(settings), held: 0, last: None })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn step(&mut self, x_hat: &StateVector, u_prev: &ControlInput, reference: &DenseReference) -> Result<ControlOutput> {
        if reference.len() != self.cfg.horizon + 1 {
            return Err(Error::DimensionMismatch(format!(
                "reference has {} stages, horizon needs {}",
                reference.len(),
                self.cfg.horizon + 1
            )));
        }
        let spec = controller_spec(&self.cfg, &self.inc, &self.out);
        let z0 = augment(x_hat, &u_prev.to_deviation(&self.params));
        let qp = spec.build(&z0, &targets_from(reference, &self.params), &vec![1.0; self.cfg.horizon + 1]);
        match solve_tracking(&qp, u_prev, &self.cfg, &self.params, &mut self.solver) {
            Ok(out) => {
                self.held = 0;
                self.last = Some(out.clone());
                Ok(out)
            }
            Err(e @ Error::SolverFailed(_)) => {
                self.held += 1;
                self.solver.reset();
                if self.held > MAX_HELD_TICKS {
                    return Err(e);
                }
                let mut out = self.last.clone().ok_or(e)?;
                out.u = *u_prev;
                out.held = true;
                Ok(out)
            }
            Err(e) => Err(e),
        }
    }
}
