use nalgebra::DVector;

use crate::problem::{OcpQp, OcpSolution, SoftBounds};
use crate::OcpError;

/// Max-norm KKT residual of a candidate solution, slacks included.
///
/// For quadratic slack penalties the bound multipliers are `z * s`, so the
/// only free multipliers are the costates. They are recovered backwards from
/// stationarity in the states, which leaves stationarity in the inputs,
/// primal feasibility (initial state, dynamics, relaxed bounds, `s >= 0`) and
/// complementarity to be checked.
pub fn kkt_residual(qp: &OcpQp, sol: &OcpSolution) -> Result<f64, OcpError> {
    let n = qp.horizon();
    let dims_ok = sol.xs.len() == n + 1
        && sol.us.len() == n
        && sol.slack_lower.len() == n + 1
        && sol.slack_upper.len() == n + 1
        && sol.xs[0].len() == qp.x0.len()
        && qp.stages.iter().enumerate().all(|(k, st)| {
            sol.us[k].len() == st.nu()
                && sol.xs[k + 1].len() == st.nx_next()
                && sol.slack_lower[k].len() == st.bounds.rows()
                && sol.slack_upper[k].len() == st.bounds.rows()
        })
        && sol.slack_lower[n].len() == qp.terminal.bounds.rows()
        && sol.slack_upper[n].len() == qp.terminal.bounds.rows();
    if !dims_ok {
        return Err(OcpError::DimensionMismatch("solution does not match problem".into()));
    }

    let mut res: f64 = (&sol.xs[0] - &qp.x0).amax();

    // Returns the net bound multiplier `mu_u - mu_l` and accumulates the
    // feasibility and complementarity residuals of one block of rows.
    let bound_terms = |b: &SoftBounds, g: DVector<f64>, sl: &DVector<f64>, su: &DVector<f64>, res: &mut f64| {
        let mut net = DVector::zeros(b.rows());
        for i in 0..b.rows() {
            let (mu_l, mu_u) = (b.z_lower[i] * sl[i], b.z_upper[i] * su[i]);
            *res = res.max((-sl[i]).max(0.0)).max((-su[i]).max(0.0));
            if b.upper[i].is_finite() {
                let gap = b.upper[i] + su[i] - g[i];
                *res = res.max((-gap).max(0.0)).max((mu_u * gap).abs());
            } else {
                *res = res.max(mu_u.abs());
            }
            if b.lower[i].is_finite() {
                let gap = g[i] - b.lower[i] + sl[i];
                *res = res.max((-gap).max(0.0)).max((mu_l * gap).abs());
            } else {
                *res = res.max(mu_l.abs());
            }
            net[i] = mu_u - mu_l;
        }
        net
    };

    let t = &qp.terminal;
    let x_n = &sol.xs[n];
    let net = bound_terms(&t.bounds, t.bounds.eval(x_n, None), &sol.slack_lower[n], &sol.slack_upper[n], &mut res);
    let mut costate = &t.q * x_n + &t.q_lin + t.bounds.cx.transpose() * &net;

    for k in (0..n).rev() {
        let st = &qp.stages[k];
        let (x, u) = (&sol.xs[k], &sol.us[k]);
        res = res.max((&sol.xs[k + 1] - st.step(x, u)).amax());
        let g = st.bounds.eval(x, Some(u));
        let net = bound_terms(&st.bounds, g, &sol.slack_lower[k], &sol.slack_upper[k], &mut res);

        let grad_u = &st.s * x + &st.r * u + &st.r_lin + st.bounds.du.transpose() * &net + st.b.transpose() * &costate;
        if !grad_u.is_empty() {
            res = res.max(grad_u.amax());
        }
        costate = &st.q * x + st.s.transpose() * u + &st.q_lin + st.bounds.cx.transpose() * &net + st.a.transpose() * &costate;
    }
    Ok(res)
}
