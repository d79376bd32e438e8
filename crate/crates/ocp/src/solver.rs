//! Active-set Newton solver for soft-constrained OCPs.
//!
//! With quadratic slack penalties the slacks can be eliminated, leaving a
//! convex, continuously differentiable, piecewise-quadratic objective in
//! `(x, u)` subject only to the dynamics. Each iteration fixes the set of
//! violated bounds, minimizes the resulting LQ model with one Riccati pass,
//! and moves towards that minimizer with an exact line search. The iteration
//! stops when the minimizer of the model violates exactly the bounds the
//! model was built from, which makes it the exact optimum.

use nalgebra::DVector;

use crate::condense::{condense, expand, CondensedMap};
use crate::kkt::kkt_residual;
use crate::problem::{OcpQp, OcpSolution, SoftBounds, SolveStatus};
use crate::riccati::{active_set, inactive, solve_lq, ActiveSet, Side};
use crate::OcpError;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverSettings {
    /// KKT residual tolerance reported as optimal.
    pub tol: f64,
    pub max_iter: usize,
    pub warm_start: bool,
    /// Number of stages the stored active set is shifted by before reuse.
    pub warm_shift: usize,
    /// Partial condensing block size; `None` solves the sparse problem.
    pub condensing_block: Option<usize>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 200, warm_start: true, warm_shift: 1, condensing_block: None }
    }
}

/// Solver instance owning the warm-start state of a receding-horizon loop.
#[derive(Clone, Debug, Default)]
pub struct OcpSolver {
    pub settings: SolverSettings,
    warm: Option<ActiveSet>,
}

impl OcpSolver {
    pub fn new(settings: SolverSettings) -> Self {
        Self { settings, warm: None }
    }

    pub fn reset(&mut self) {
        self.warm = None;
    }

    pub fn solve(&mut self, qp: &OcpQp) -> Result<OcpSolution, OcpError> {
        qp.validate()?;
        let guess = if self.settings.warm_start { self.shifted_warm(qp) } else { None };

        let (xs, us, status, iterations, history, final_active) = match self.settings.condensing_block {
            Some(block) if block > 1 => {
                let (cqp, map) = condense(qp, block);
                let cguess = guess.map(|a| map.condense_active(&a));
                let run = newton(&cqp, cguess, &self.settings);
                let (xs, us) = expand(qp, &map, &run.us);
                let active = active_set(qp, &xs, &us);
                (xs, us, run.status, run.iterations, run.history, active)
            }
            _ => {
                let run = newton(qp, guess, &self.settings);
                let active = active_set(qp, &run.xs, &run.us);
                (run.xs, run.us, run.status, run.iterations, run.history, active)
            }
        };

        let (slack_lower, slack_upper) = OcpSolution::slacks_for(qp, &xs, &us);
        let objective = qp.objective(&xs, &us);
        let mut sol = OcpSolution {
            xs,
            us,
            slack_lower,
            slack_upper,
            status,
            kkt_residual: 0.0,
            iterations,
            objective,
            objective_history: history,
        };
        sol.kkt_residual = kkt_residual(qp, &sol)?;
        if sol.status == SolveStatus::Optimal && sol.kkt_residual > self.settings.tol {
            // Roundoff on badly scaled data; the active set is still exact.
            sol.status = SolveStatus::MaxIterations;
        }
        if sol.status != SolveStatus::Infeasible {
            self.warm = Some(final_active);
        }
        Ok(sol)
    }

    fn shifted_warm(&self, qp: &OcpQp) -> Option<ActiveSet> {
        let prev = self.warm.as_ref()?;
        let n = qp.horizon();
        if prev.len() != n + 1 {
            return None;
        }
        let shift = self.settings.warm_shift.min(n);
        let mut out: ActiveSet = Vec::with_capacity(n + 1);
        for k in 0..n {
            let src = (k + shift).min(n - 1);
            out.push(prev[src].clone());
        }
        out.push(prev[n].clone());
        let rows_match = out
            .iter()
            .zip(qp.stages.iter().map(|s| s.bounds.rows()).chain(std::iter::once(qp.terminal.bounds.rows())))
            .all(|(a, r)| a.len() == r);
        rows_match.then_some(out)
    }
}

/// Cold-start convenience wrapper.
pub fn solve(qp: &OcpQp, settings: &SolverSettings) -> Result<OcpSolution, OcpError> {
    let mut settings = settings.clone();
    settings.warm_start = false;
    OcpSolver::new(settings).solve(qp)
}

struct NewtonRun {
    xs: Vec<DVector<f64>>,
    us: Vec<DVector<f64>>,
    status: SolveStatus,
    iterations: usize,
    history: Vec<f64>,
}

fn zero_input_rollout(qp: &OcpQp) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let mut xs = vec![qp.x0.clone()];
    let mut us = Vec::with_capacity(qp.horizon());
    for st in &qp.stages {
        let u = DVector::zeros(st.nu());
        xs.push(st.step(xs.last().unwrap(), &u));
        us.push(u);
    }
    (xs, us)
}

fn newton(qp: &OcpQp, guess: Option<ActiveSet>, settings: &SolverSettings) -> NewtonRun {
    let mut active = guess.unwrap_or_else(|| inactive(qp));
    let mut current: Option<(Vec<DVector<f64>>, Vec<DVector<f64>>)> = None;
    let mut history = Vec::new();

    for iter in 1..=settings.max_iter.max(1) {
        let (xs_new, us_new) = match solve_lq(qp, &active) {
            Ok(t) => t,
            Err(_) => {
                let (xs, us) = current.unwrap_or_else(|| zero_input_rollout(qp));
                return NewtonRun { xs, us, status: SolveStatus::Infeasible, iterations: iter, history };
            }
        };
        let new_active = active_set(qp, &xs_new, &us_new);
        if new_active == active {
            history.push(qp.objective(&xs_new, &us_new));
            return NewtonRun { xs: xs_new, us: us_new, status: SolveStatus::Optimal, iterations: iter, history };
        }

        let (xs, us) = match current.take() {
            None => (xs_new, us_new),
            Some((xs, us)) => {
                let dx: Vec<_> = xs_new.iter().zip(&xs).map(|(a, b)| a - b).collect();
                let du: Vec<_> = us_new.iter().zip(&us).map(|(a, b)| a - b).collect();
                let alpha = exact_line_search(qp, &xs, &us, &dx, &du);
                if alpha <= 0.0 {
                    // The model minimizer gives no descent: `xs` is already optimal.
                    history.push(qp.objective(&xs, &us));
                    return NewtonRun { xs, us, status: SolveStatus::Optimal, iterations: iter, history };
                }
                let xs = xs.iter().zip(&dx).map(|(x, d)| x + alpha * d).collect();
                let us = us.iter().zip(&du).map(|(u, d)| u + alpha * d).collect();
                (xs, us)
            }
        };
        history.push(qp.objective(&xs, &us));
        active = active_set(qp, &xs, &us);
        current = Some((xs, us));
    }

    let (xs, us) = current.unwrap_or_else(|| zero_input_rollout(qp));
    NewtonRun { xs, us, status: SolveStatus::MaxIterations, iterations: settings.max_iter, history }
}

/// Derivative of the objective along `z + alpha d` split into the quadratic
/// part `a + b alpha` and the piecewise-linear penalty rows.
struct Ray {
    a: f64,
    b: f64,
    rows: Vec<RayRow>,
}

struct RayRow {
    g: f64,
    dg: f64,
    lower: f64,
    upper: f64,
    z_lower: f64,
    z_upper: f64,
}

impl Ray {
    fn slope(&self, alpha: f64) -> f64 {
        let mut v = self.a + self.b * alpha;
        for r in &self.rows {
            let g = r.g + alpha * r.dg;
            if g > r.upper {
                v += r.z_upper * (g - r.upper) * r.dg;
            } else if g < r.lower {
                v -= r.z_lower * (r.lower - g) * r.dg;
            }
        }
        v
    }
}

fn push_rows(rows: &mut Vec<RayRow>, bounds: &SoftBounds, g: &DVector<f64>, dg: &DVector<f64>) {
    for i in 0..bounds.rows() {
        if dg[i] == 0.0 {
            continue;
        }
        rows.push(RayRow {
            g: g[i],
            dg: dg[i],
            lower: bounds.lower[i],
            upper: bounds.upper[i],
            z_lower: bounds.z_lower[i],
            z_upper: bounds.z_upper[i],
        });
    }
}

fn exact_line_search(
    qp: &OcpQp,
    xs: &[DVector<f64>],
    us: &[DVector<f64>],
    dx: &[DVector<f64>],
    du: &[DVector<f64>],
) -> f64 {
    let n = qp.horizon();
    let mut ray = Ray { a: 0.0, b: 0.0, rows: Vec::new() };
    for (k, st) in qp.stages.iter().enumerate() {
        let hx = &st.q * &dx[k] + st.s.transpose() * &du[k];
        let hu = &st.s * &dx[k] + &st.r * &du[k];
        ray.b += dx[k].dot(&hx) + du[k].dot(&hu);
        let gx = &st.q * &xs[k] + st.s.transpose() * &us[k] + &st.q_lin;
        let gu = &st.s * &xs[k] + &st.r * &us[k] + &st.r_lin;
        ray.a += gx.dot(&dx[k]) + gu.dot(&du[k]);
        let b = &st.bounds;
        push_rows(&mut ray.rows, b, &b.eval(&xs[k], Some(&us[k])), &b.eval(&dx[k], Some(&du[k])));
    }
    let t = &qp.terminal;
    ray.b += dx[n].dot(&(&t.q * &dx[n]));
    ray.a += (&t.q * &xs[n] + &t.q_lin).dot(&dx[n]);
    push_rows(&mut ray.rows, &t.bounds, &t.bounds.eval(&xs[n], None), &t.bounds.eval(&dx[n], None));

    let mut breaks: Vec<f64> = Vec::new();
    for r in &ray.rows {
        for bound in [r.lower, r.upper] {
            if bound.is_finite() {
                let alpha = (bound - r.g) / r.dg;
                if alpha > 0.0 && alpha.is_finite() {
                    breaks.push(alpha);
                }
            }
        }
    }
    breaks.sort_by(|a, b| a.total_cmp(b));
    breaks.dedup();

    let s0 = ray.slope(0.0);
    if s0 >= 0.0 {
        return 0.0;
    }
    // First breakpoint with non-negative slope (slope is non-decreasing).
    let idx = breaks.partition_point(|&al| ray.slope(al) < 0.0);
    let lo = if idx == 0 { 0.0 } else { breaks[idx - 1] };
    let s_lo = if idx == 0 { s0 } else { ray.slope(lo) };
    let (hi, s_hi) = if idx < breaks.len() {
        (breaks[idx], ray.slope(breaks[idx]))
    } else {
        (lo + 1.0, ray.slope(lo + 1.0))
    };
    if s_hi <= s_lo {
        return 1.0;
    }
    lo - s_lo * (hi - lo) / (s_hi - s_lo)
}

impl CondensedMap {
    fn condense_active(&self, active: &ActiveSet) -> ActiveSet {
        let mut out: ActiveSet = self
            .blocks
            .iter()
            .map(|range| range.clone().flat_map(|k| active[k].iter().copied()).collect::<Vec<Side>>())
            .collect();
        out.push(active[active.len() - 1].clone());
        out
    }
}
