//! Backward Riccati recursion for the equality-constrained LQ subproblem
//! obtained by fixing which soft bounds are violated.

use nalgebra::{DMatrix, DVector};

use crate::problem::{OcpQp, SoftBounds};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Side {
    Inactive,
    Lower,
    Upper,
}

pub(crate) type ActiveSet = Vec<Vec<Side>>;

pub(crate) fn inactive(qp: &OcpQp) -> ActiveSet {
    qp.stages
        .iter()
        .map(|st| vec![Side::Inactive; st.bounds.rows()])
        .chain(std::iter::once(vec![Side::Inactive; qp.terminal.bounds.rows()]))
        .collect()
}

pub(crate) fn classify(bounds: &SoftBounds, g: &DVector<f64>) -> Vec<Side> {
    (0..bounds.rows())
        .map(|i| {
            if g[i] > bounds.upper[i] && bounds.z_upper[i] > 0.0 {
                Side::Upper
            } else if g[i] < bounds.lower[i] && bounds.z_lower[i] > 0.0 {
                Side::Lower
            } else {
                Side::Inactive
            }
        })
        .collect()
}

pub(crate) fn active_set(qp: &OcpQp, xs: &[DVector<f64>], us: &[DVector<f64>]) -> ActiveSet {
    let n = qp.horizon();
    let mut out: ActiveSet = qp
        .stages
        .iter()
        .enumerate()
        .map(|(k, st)| classify(&st.bounds, &st.bounds.eval(&xs[k], Some(&us[k]))))
        .collect();
    out.push(classify(&qp.terminal.bounds, &qp.terminal.bounds.eval(&xs[n], None)));
    out
}

/// Adds the quadratic penalties of the active rows to a stage Hessian
/// `[[Hxx, Hux'], [Hux, Huu]]` and gradient `(gx, gu)`.
fn add_active(
    bounds: &SoftBounds,
    sides: &[Side],
    hxx: &mut DMatrix<f64>,
    hux: &mut DMatrix<f64>,
    huu: &mut DMatrix<f64>,
    gx: &mut DVector<f64>,
    gu: &mut DVector<f64>,
) {
    for (i, side) in sides.iter().enumerate() {
        let (z, target) = match side {
            Side::Inactive => continue,
            Side::Upper => (bounds.z_upper[i], bounds.upper[i]),
            Side::Lower => (bounds.z_lower[i], bounds.lower[i]),
        };
        let c = bounds.cx.row(i).transpose();
        let d = bounds.du.row(i).transpose();
        hxx.ger(z, &c, &c, 1.0);
        if !d.is_empty() {
            hux.ger(z, &d, &c, 1.0);
            huu.ger(z, &d, &d, 1.0);
            gu.axpy(-z * target, &d, 1.0);
        }
        gx.axpy(-z * target, &c, 1.0);
    }
}

/// Stage `k` of the expanded quadratic model: returns `(Hxx, Hux, Huu, gx, gu)`.
pub(crate) fn stage_model(
    qp: &OcpQp,
    k: usize,
    sides: &[Side],
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DVector<f64>, DVector<f64>) {
    let st = &qp.stages[k];
    let mut hxx = st.q.clone();
    let mut hux = st.s.clone();
    let mut huu = st.r.clone();
    let mut gx = st.q_lin.clone();
    let mut gu = st.r_lin.clone();
    add_active(&st.bounds, sides, &mut hxx, &mut hux, &mut huu, &mut gx, &mut gu);
    (hxx, hux, huu, gx, gu)
}

pub(crate) fn terminal_model(qp: &OcpQp, sides: &[Side]) -> (DMatrix<f64>, DVector<f64>) {
    let t = &qp.terminal;
    let mut hxx = t.q.clone();
    let mut gx = t.q_lin.clone();
    let mut hux = DMatrix::zeros(0, hxx.nrows());
    let mut huu = DMatrix::zeros(0, 0);
    let mut gu = DVector::zeros(0);
    add_active(&t.bounds, sides, &mut hxx, &mut hux, &mut huu, &mut gx, &mut gu);
    (hxx, gx)
}

/// Minimizes the quadratic model defined by `active`. Fails with the index of
/// the first stage whose reduced input Hessian is not positive definite.
pub(crate) fn solve_lq(qp: &OcpQp, active: &ActiveSet) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>), usize> {
    let n = qp.horizon();
    let (mut p_mat, mut p_vec) = terminal_model(qp, &active[n]);
    let mut gains: Vec<(DMatrix<f64>, DVector<f64>)> = Vec::with_capacity(n);

    for k in (0..n).rev() {
        let st = &qp.stages[k];
        let (hxx, hux, huu, gx, gu) = stage_model(qp, k, &active[k]);
        let pa = &p_mat * &st.a;
        let pb = &p_mat * &st.b;
        let p_next = &p_mat * &st.b_aff + &p_vec;

        let h = huu + st.b.transpose() * &pb;
        let g = hux + st.b.transpose() * &pa;
        let hv = gu + st.b.transpose() * &p_next;

        let chol = h.cholesky().ok_or(k)?;
        let gain = -chol.solve(&g);
        let ff = -chol.solve(&hv);

        let mut p_new = hxx + st.a.transpose() * &pa + g.transpose() * &gain;
        p_new = 0.5 * (&p_new + p_new.transpose());
        p_vec = gx + st.a.transpose() * &p_next + g.transpose() * &ff;
        p_mat = p_new;
        gains.push((gain, ff));
    }
    gains.reverse();

    let mut xs = Vec::with_capacity(n + 1);
    let mut us = Vec::with_capacity(n);
    xs.push(qp.x0.clone());
    for (k, (gain, ff)) in gains.iter().enumerate() {
        let u = gain * &xs[k] + ff;
        let x_next = qp.stages[k].step(&xs[k], &u);
        us.push(u);
        xs.push(x_next);
    }
    Ok((xs, us))
}
