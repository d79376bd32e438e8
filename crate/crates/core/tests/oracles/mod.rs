//! Test-side reference computations that share no code with the library.
#![allow(dead_code)]

use nalgebra::{DMatrix, Matrix3, Matrix5, SMatrix, Vector3, Vector5};
use payload_core::model::SystemParams;

fn rx(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn ry(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

/// Skew generators: `d/da Rx(a) = Rx(a) gx`, `d/da Ry(a) = Ry(a) gy`.
fn gx() -> Matrix3<f64> {
    Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0)
}

fn gy() -> Matrix3<f64> {
    Matrix3::new(0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0)
}

/// Payload offset, its velocity and acceleration from rotation kinematics.
pub fn offset_kinematics(q: &Vector5<f64>, qd: &Vector5<f64>, qdd: &Vector5<f64>, l: f64) -> [Vector3<f64>; 3] {
    let e = Vector3::new(0.0, 0.0, -l);
    let (th, ph) = (q[3], q[4]);
    let (thd, phd) = (qd[3], qd[4]);
    let (thdd, phdd) = (qdd[3], qdd[4]);
    let (a, b) = (rx(ph), ry(th));
    let (gx, gy) = (gx(), gy());
    let pos = a * b * e;
    let vel = (a * gx * b * phd + a * b * gy * thd) * e;
    let acc = (a * (gx * gx * phd * phd + gx * phdd) * b
        + a * gx * b * gy * (2.0 * phd * thd)
        + a * b * (gy * gy * thd * thd + gy * thdd))
        * e;
    [pos, vel, acc]
}

fn velocities(q: &Vector5<f64>, qd: &Vector5<f64>, l: f64) -> (Vector3<f64>, Vector3<f64>) {
    let v_u = Vector3::new(qd[0], qd[1], qd[2]);
    let [_, v_o, _] = offset_kinematics(q, qd, &Vector5::zeros(), l);
    (v_u, v_u + v_o)
}

pub fn kinetic(q: &Vector5<f64>, qd: &Vector5<f64>, p: &SystemParams) -> f64 {
    let (v_u, v_l) = velocities(q, qd, p.l);
    0.5 * (p.m_uav * v_u.norm_squared() + p.m_l * v_l.norm_squared())
}

pub fn potential(q: &Vector5<f64>, p: &SystemParams) -> f64 {
    let [o, _, _] = offset_kinematics(q, &Vector5::zeros(), &Vector5::zeros(), p.l);
    p.g * (p.m_uav * q[2] + p.m_l * (q[2] + o[2]))
}

/// Rayleigh dissipation function of the linear drag on both bodies.
pub fn rayleigh(q: &Vector5<f64>, qd: &Vector5<f64>, p: &SystemParams) -> f64 {
    let (v_u, v_l) = velocities(q, qd, p.l);
    0.5 * (p.d_uav * v_u.norm_squared() + p.d_l * v_l.norm_squared())
}

/// Hessian of a form that is homogeneous quadratic in `qd`, by polarization.
fn polarize(f: impl Fn(&Vector5<f64>) -> f64) -> Matrix5<f64> {
    let e = |i: usize| Vector5::from_fn(|k, _| if k == i { 1.0 } else { 0.0 });
    Matrix5::from_fn(|i, j| {
        if i == j {
            2.0 * f(&e(i))
        } else {
            f(&(e(i) + e(j))) - f(&e(i)) - f(&e(j))
        }
    })
}

pub fn mass_matrix(q: &Vector5<f64>, p: &SystemParams) -> Matrix5<f64> {
    polarize(|v| kinetic(q, v, p))
}

/// Euler-Lagrange residual of a candidate acceleration under thrust `force`
/// applied at the UAV:
/// `d/dt dL/dqd - dL/dq + dR/dqd - Q_thrust`.
pub fn euler_lagrange_residual(
    q: &Vector5<f64>,
    qd: &Vector5<f64>,
    qdd: &Vector5<f64>,
    force: &Vector3<f64>,
    p: &SystemParams,
    h: f64,
) -> Vector5<f64> {
    let m = mass_matrix(q, p);
    let dis = polarize(|v| rayleigh(q, v, p));
    let shift = |k: usize, s: f64| {
        let mut qq = *q;
        qq[k] += s;
        qq
    };
    // Time derivative of the momentum M(q) qd.
    let mut dmom = m * qdd;
    let mut grad_t = Vector5::zeros();
    let mut grad_v = Vector5::zeros();
    for k in 0..5 {
        let (qp, qm) = (shift(k, h), shift(k, -h));
        let dm = (mass_matrix(&qp, p) - mass_matrix(&qm, p)) / (2.0 * h);
        dmom += dm * qd * qd[k];
        grad_t[k] = (kinetic(&qp, qd, p) - kinetic(&qm, qd, p)) / (2.0 * h);
        grad_v[k] = (potential(&qp, p) - potential(&qm, p)) / (2.0 * h);
    }
    let generalized = Vector5::new(force[0], force[1], force[2], 0.0, 0.0);
    dmom - grad_t + grad_v + dis * qd - generalized
}

/// Thrust direction from the third column of `Ry(theta) Rx(phi)`.
pub fn thrust_vector(theta: f64, phi: f64, f: f64) -> Vector3<f64> {
    f * Vector3::new(theta.sin() * phi.cos(), -phi.sin(), theta.cos() * phi.cos())
}

/// Central-difference Jacobian.
pub fn fd_jacobian(f: impl Fn(&DMatrix<f64>) -> DMatrix<f64>, x: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    let n = x.nrows();
    let m = f(x).nrows();
    let mut jac = DMatrix::zeros(m, n);
    for j in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let col = (f(&xp) - f(&xm)) / (2.0 * h);
        jac.column_mut(j).copy_from(&col.column(0));
    }
    jac
}

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = a.abs().row_sum().max();
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a / 2f64.powi(squarings);
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..=24 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Induced infinity norm (largest absolute row sum).
pub fn inf_norm(a: &DMatrix<f64>) -> f64 {
    a.abs().column_sum().max()
}

/// Dimension of the observable subspace, grown by repeated multiplication of
/// an orthonormal row basis with `A` and projection.
pub fn observability_rank(a: &DMatrix<f64>, c: &DMatrix<f64>, tol: f64) -> usize {
    let n = a.nrows();
    let mut basis: Vec<nalgebra::DVector<f64>> = Vec::new();
    let add = |basis: &mut Vec<nalgebra::DVector<f64>>, v: nalgebra::DVector<f64>| -> bool {
        let mut w = v.clone();
        for _ in 0..2 {
            for b in basis.iter() {
                let proj = b.dot(&w);
                w -= b * proj;
            }
        }
        let norm = w.norm();
        if norm > tol * v.norm().max(1e-300) {
            basis.push(w / norm);
            true
        } else {
            false
        }
    };
    let mut frontier: Vec<nalgebra::DVector<f64>> = Vec::new();
    for i in 0..c.nrows() {
        let row = c.row(i).transpose();
        if add(&mut basis, row.clone()) {
            frontier.push(basis.last().unwrap().clone());
        }
    }
    while !frontier.is_empty() && basis.len() < n {
        let mut next = Vec::new();
        for v in frontier {
            // Row vector v' A, as a column: A' v.
            let w = a.transpose() * v;
            if add(&mut basis, w) {
                next.push(basis.last().unwrap().clone());
            }
        }
        frontier = next;
    }
    basis.len()
}

pub fn to_dyn<const R: usize, const C: usize>(m: &SMatrix<f64, R, C>) -> DMatrix<f64> {
    DMatrix::from_column_slice(R, C, m.as_slice())
}
