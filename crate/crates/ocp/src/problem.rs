use nalgebra::{DMatrix, DVector};

use crate::OcpError;

/// Soft two-sided constraints `lower - s_l <= C x + D u <= upper + s_u` with
/// quadratic slack penalties `0.5 * z_l * s_l^2` and `0.5 * z_u * s_u^2`.
///
/// Non-finite bounds mean "unbounded" on that side and are skipped.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftBounds {
    pub cx: DMatrix<f64>,
    pub du: DMatrix<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    pub z_lower: DVector<f64>,
    pub z_upper: DVector<f64>,
}

impl SoftBounds {
    pub fn none(nx: usize, nu: usize) -> Self {
        Self {
            cx: DMatrix::zeros(0, nx),
            du: DMatrix::zeros(0, nu),
            lower: DVector::zeros(0),
            upper: DVector::zeros(0),
            z_lower: DVector::zeros(0),
            z_upper: DVector::zeros(0),
        }
    }

    /// Box bounds on the stacked vector `[u; x]`.
    ///
    /// Entries whose lower and upper bound are both infinite produce no
    /// constraint row.
    pub fn boxed(
        nx: usize,
        nu: usize,
        lower: &[f64],
        upper: &[f64],
        z_lower: &[f64],
        z_upper: &[f64],
    ) -> Result<Self, OcpError> {
        let len = nx + nu;
        for (what, v) in [("lower", lower), ("upper", upper), ("z_lower", z_lower), ("z_upper", z_upper)] {
            if v.len() != len {
                return Err(OcpError::DimensionMismatch(format!(
                    "box {what} has length {}, expected {len}",
                    v.len()
                )));
            }
        }
        let rows: Vec<usize> = (0..len)
            .filter(|&i| lower[i].is_finite() || upper[i].is_finite())
            .collect();
        let mut out = Self {
            cx: DMatrix::zeros(rows.len(), nx),
            du: DMatrix::zeros(rows.len(), nu),
            lower: DVector::zeros(rows.len()),
            upper: DVector::zeros(rows.len()),
            z_lower: DVector::zeros(rows.len()),
            z_upper: DVector::zeros(rows.len()),
        };
        for (r, &i) in rows.iter().enumerate() {
            if i < nu {
                out.du[(r, i)] = 1.0;
            } else {
                out.cx[(r, i - nu)] = 1.0;
            }
            out.lower[r] = lower[i];
            out.upper[r] = upper[i];
            out.z_lower[r] = z_lower[i];
            out.z_upper[r] = z_upper[i];
        }
        Ok(out)
    }

    pub fn rows(&self) -> usize {
        self.lower.len()
    }

    /// Constraint values `C x + D u`.
    pub fn eval(&self, x: &DVector<f64>, u: Option<&DVector<f64>>) -> DVector<f64> {
        let mut g = &self.cx * x;
        if let Some(u) = u {
            if self.du.ncols() > 0 {
                g += &self.du * u;
            }
        }
        g
    }

    fn validate(&self, nx: usize, nu: usize, at: &str) -> Result<(), OcpError> {
        let nc = self.rows();
        let dims_ok = self.cx.nrows() == nc
            && self.cx.ncols() == nx
            && self.du.nrows() == nc
            && self.du.ncols() == nu
            && self.upper.len() == nc
            && self.z_lower.len() == nc
            && self.z_upper.len() == nc;
        if !dims_ok {
            return Err(OcpError::DimensionMismatch(format!("{at}: constraint block")));
        }
        for i in 0..nc {
            let (lo, hi) = (self.lower[i], self.upper[i]);
            if lo.is_finite() && hi.is_finite() && lo > hi {
                return Err(OcpError::InvalidData(format!("{at}: row {i} has lower {lo} > upper {hi}")));
            }
            if lo.is_nan() || hi.is_nan() {
                return Err(OcpError::InvalidData(format!("{at}: row {i} has a NaN bound")));
            }
            if !(self.z_lower[i] >= 0.0) || !(self.z_upper[i] >= 0.0) {
                return Err(OcpError::InvalidData(format!("{at}: row {i} has a negative slack penalty")));
            }
        }
        Ok(())
    }
}

/// One stage `n < N` of the optimal control problem.
///
/// Cost `0.5 x'Qx + u'Sx + 0.5 u'Ru + q'x + r'u`, dynamics
/// `x+ = A x + B u + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct OcpStage {
    pub q: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub q_lin: DVector<f64>,
    pub r_lin: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub b_aff: DVector<f64>,
    pub bounds: SoftBounds,
}

impl OcpStage {
    /// Stage with the given cost and linear dynamics, no cross term, no
    /// affine dynamics term and no bounds.
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>, q_lin: DVector<f64>, a: DMatrix<f64>, b: DMatrix<f64>) -> Self {
        let (nx, nu) = (q.nrows(), r.nrows());
        let nx_next = a.nrows();
        Self {
            s: DMatrix::zeros(nu, nx),
            r_lin: DVector::zeros(nu),
            b_aff: DVector::zeros(nx_next),
            bounds: SoftBounds::none(nx, nu),
            q,
            r,
            q_lin,
            a,
            b,
        }
    }

    pub fn with_bounds(mut self, bounds: SoftBounds) -> Self {
        self.bounds = bounds;
        self
    }

    pub fn nx(&self) -> usize {
        self.q.nrows()
    }

    pub fn nu(&self) -> usize {
        self.r.nrows()
    }

    pub fn nx_next(&self) -> usize {
        self.a.nrows()
    }

    /// Quadratic cost without slack penalties.
    pub fn cost(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.q * x))
            + u.dot(&(&self.s * x))
            + 0.5 * u.dot(&(&self.r * u))
            + self.q_lin.dot(x)
            + self.r_lin.dot(u)
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u + &self.b_aff
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TerminalStage {
    pub q: DMatrix<f64>,
    pub q_lin: DVector<f64>,
    pub bounds: SoftBounds,
}

impl TerminalStage {
    pub fn new(q: DMatrix<f64>, q_lin: DVector<f64>) -> Self {
        let nx = q.nrows();
        Self { q, q_lin, bounds: SoftBounds::none(nx, 0) }
    }

    pub fn with_bounds(mut self, bounds: SoftBounds) -> Self {
        self.bounds = bounds;
        self
    }

    pub fn nx(&self) -> usize {
        self.q.nrows()
    }

    pub fn cost(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.q * x)) + self.q_lin.dot(x)
    }
}

/// Optimal control problem with fixed initial state.
#[derive(Clone, Debug, PartialEq)]
pub struct OcpQp {
    pub x0: DVector<f64>,
    pub stages: Vec<OcpStage>,
    pub terminal: TerminalStage,
}

impl OcpQp {
    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    pub fn validate(&self) -> Result<(), OcpError> {
        if self.stages.is_empty() {
            return Err(OcpError::DimensionMismatch("horizon must be at least 1".into()));
        }
        let mut nx = self.x0.len();
        for (k, st) in self.stages.iter().enumerate() {
            let at = format!("stage {k}");
            let nu = st.nu();
            let ok = st.q.nrows() == nx
                && st.q.ncols() == nx
                && st.r.ncols() == nu
                && st.s.nrows() == nu
                && st.s.ncols() == nx
                && st.q_lin.len() == nx
                && st.r_lin.len() == nu
                && st.a.ncols() == nx
                && st.b.nrows() == st.a.nrows()
                && st.b.ncols() == nu
                && st.b_aff.len() == st.a.nrows();
            if !ok {
                return Err(OcpError::DimensionMismatch(at));
            }
            st.bounds.validate(nx, nu, &at)?;
            nx = st.nx_next();
        }
        let t = &self.terminal;
        if t.q.nrows() != nx || t.q.ncols() != nx || t.q_lin.len() != nx {
            return Err(OcpError::DimensionMismatch("terminal stage".into()));
        }
        t.bounds.validate(nx, 0, "terminal stage")?;
        Ok(())
    }

    /// Objective including slack penalties, for a dynamics-consistent
    /// trajectory with slacks set to their optimal values given `(xs, us)`.
    pub fn objective(&self, xs: &[DVector<f64>], us: &[DVector<f64>]) -> f64 {
        let mut total = 0.0;
        for (k, st) in self.stages.iter().enumerate() {
            total += st.cost(&xs[k], &us[k]);
            total += penalty(&st.bounds, &st.bounds.eval(&xs[k], Some(&us[k])));
        }
        let t = &self.terminal;
        let x_n = &xs[self.horizon()];
        total + t.cost(x_n) + penalty(&t.bounds, &t.bounds.eval(x_n, None))
    }

    /// Multiplies every cost term (including slack penalties) by `factor`.
    pub fn scale_costs(&mut self, factor: f64) {
        let scale_bounds = |b: &mut SoftBounds| {
            b.z_lower *= factor;
            b.z_upper *= factor;
        };
        for st in &mut self.stages {
            st.q *= factor;
            st.s *= factor;
            st.r *= factor;
            st.q_lin *= factor;
            st.r_lin *= factor;
            scale_bounds(&mut st.bounds);
        }
        self.terminal.q *= factor;
        self.terminal.q_lin *= factor;
        scale_bounds(&mut self.terminal.bounds);
    }
}

/// Optimal slack penalty for given constraint values.
pub(crate) fn penalty(bounds: &SoftBounds, g: &DVector<f64>) -> f64 {
    let mut total = 0.0;
    for i in 0..bounds.rows() {
        let over = g[i] - bounds.upper[i];
        if over > 0.0 {
            total += 0.5 * bounds.z_upper[i] * over * over;
        }
        let under = bounds.lower[i] - g[i];
        if under > 0.0 {
            total += 0.5 * bounds.z_lower[i] * under * under;
        }
    }
    total
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIterations,
    /// The input Hessian lost positive definiteness during the backward pass.
    Infeasible,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OcpSolution {
    pub xs: Vec<DVector<f64>>,
    pub us: Vec<DVector<f64>>,
    /// Per stage (including terminal) lower slacks, one entry per constraint row.
    pub slack_lower: Vec<DVector<f64>>,
    pub slack_upper: Vec<DVector<f64>>,
    pub status: SolveStatus,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub objective: f64,
    /// Objective after each accepted iterate.
    pub objective_history: Vec<f64>,
}

impl OcpSolution {
    /// Fills in slacks `max(0, g - ub)` / `max(0, lb - g)` for a trajectory.
    pub(crate) fn slacks_for(qp: &OcpQp, xs: &[DVector<f64>], us: &[DVector<f64>]) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
        let n = qp.horizon();
        let mut lower = Vec::with_capacity(n + 1);
        let mut upper = Vec::with_capacity(n + 1);
        let mut push = |b: &SoftBounds, g: DVector<f64>| {
            lower.push(DVector::from_fn(b.rows(), |i, _| (b.lower[i] - g[i]).max(0.0)));
            upper.push(DVector::from_fn(b.rows(), |i, _| (g[i] - b.upper[i]).max(0.0)));
        };
        for (k, st) in qp.stages.iter().enumerate() {
            push(&st.bounds, st.bounds.eval(&xs[k], Some(&us[k])));
        }
        push(&qp.terminal.bounds, qp.terminal.bounds.eval(&xs[n], None));
        (lower, upper)
    }
}
