//! Rigid-pendulum model of a multirotor with a cable-suspended payload.
//!
//! Generalized coordinates are `q = [x, y, z, theta_l, phi_l]`: the UAV
//! position followed by the cable angles. The full state appends the rates
//! and the three flight-controller channels `(theta, phi, F)`. Heading is
//! fixed at zero.

use nalgebra::{Matrix3, Matrix3x2, Matrix5, SMatrix, SVector, Vector3, Vector5};

use crate::error::{Error, Result};

pub const NX: usize = 13;
pub const NU: usize = 3;

/// Margin to the `|theta_l| = pi/2` singularity of the mass matrix.
pub const EPS_SING: f64 = 0.1;

pub type StateVector = SVector<f64, NX>;
pub type StateMatrix = SMatrix<f64, NX, NX>;
pub type InputMatrix = SMatrix<f64, NX, NU>;

/// Indices into the 13-dimensional state.
pub mod idx {
    pub const X: usize = 0;
    pub const Y: usize = 1;
    pub const Z: usize = 2;
    pub const TH_L: usize = 3;
    pub const PHI_L: usize = 4;
    pub const VX: usize = 5;
    pub const VY: usize = 6;
    pub const VZ: usize = 7;
    pub const THD_L: usize = 8;
    pub const PHID_L: usize = 9;
    pub const TH: usize = 10;
    pub const PHI: usize = 11;
    pub const F: usize = 12;
}

#[derive(Clone, Debug, PartialEq)]
pub struct SystemParams {
    pub m_uav: f64,
    pub m_l: f64,
    pub l: f64,
    /// Linear drag on the UAV [N s/m].
    pub d_uav: f64,
    /// Linear drag on the payload [N s/m].
    pub d_l: f64,
    pub g: f64,
    /// FCU gains for the `(theta, phi, F)` channels.
    pub fcu_gains: Vector3<f64>,
    /// FCU time constants for the `(theta, phi, F)` channels [s].
    pub fcu_taus: Vector3<f64>,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            m_uav: 3.5,
            m_l: 1.5,
            l: 2.0,
            d_uav: 0.1,
            d_l: 0.1,
            g: 9.81,
            fcu_gains: Vector3::new(1.0, 1.0, 1.0),
            fcu_taus: Vector3::new(0.2, 0.2, 0.05),
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [("m_uav", self.m_uav), ("m_l", self.m_l), ("l", self.l), ("g", self.g)];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("d_uav", self.d_uav), ("d_l", self.d_l)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be non-negative, got {v}")));
            }
        }
        for i in 0..3 {
            if !(self.fcu_taus[i].is_finite() && self.fcu_taus[i] > 0.0) {
                return Err(Error::InvalidConfig(format!("fcu_taus[{i}] must be positive")));
            }
            if !(self.fcu_gains[i].is_finite() && self.fcu_gains[i] != 0.0) {
                return Err(Error::InvalidConfig(format!("fcu_gains[{i}] must be finite and non-zero")));
            }
        }
        Ok(())
    }

    pub fn total_mass(&self) -> f64 {
        self.m_uav + self.m_l
    }

    /// Collective thrust balancing the total weight.
    pub fn hover_thrust(&self) -> f64 {
        self.total_mass() * self.g
    }

    /// Input that holds the FCU at the hover thrust with zero tilt.
    pub fn hover_input(&self) -> ControlInput {
        ControlInput::new(0.0, 0.0, self.hover_thrust() / self.fcu_gains[2])
    }
}

/// Full 13-dimensional state in absolute coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FullState(pub StateVector);

impl FullState {
    /// Motionless hover with the UAV at `uav_position`.
    pub fn hover(params: &SystemParams, uav_position: Vector3<f64>) -> Self {
        let mut v = StateVector::zeros();
        v.fixed_rows_mut::<3>(idx::X).copy_from(&uav_position);
        v[idx::F] = params.hover_thrust();
        Self(v)
    }

    /// Motionless hover with the payload at `payload`.
    pub fn hover_with_payload_at(params: &SystemParams, payload: Vector3<f64>) -> Self {
        Self::hover(params, payload + Vector3::new(0.0, 0.0, params.l))
    }

    pub fn uav_position(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(idx::X).into_owned()
    }

    pub fn uav_velocity(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(idx::VX).into_owned()
    }

    pub fn q(&self) -> Vector5<f64> {
        self.0.fixed_rows::<5>(0).into_owned()
    }

    pub fn q_dot(&self) -> Vector5<f64> {
        self.0.fixed_rows::<5>(5).into_owned()
    }

    /// FCU channel states `(theta, phi, F)`.
    pub fn fcu(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(idx::TH).into_owned()
    }

    pub fn payload_position(&self, l: f64) -> Vector3<f64> {
        payload_position(&self.uav_position(), self.0[idx::TH_L], self.0[idx::PHI_L], l)
    }

    /// State relative to hover: identical except that the thrust channel is
    /// measured from the hover thrust.
    pub fn to_deviation(&self, params: &SystemParams) -> StateVector {
        let mut v = self.0;
        v[idx::F] -= params.hover_thrust();
        v
    }

    pub fn from_deviation(dev: &StateVector, params: &SystemParams) -> Self {
        let mut v = *dev;
        v[idx::F] += params.hover_thrust();
        Self(v)
    }
}

/// FCU reference `(theta_ref, phi_ref, F_ref)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlInput(pub Vector3<f64>);

impl ControlInput {
    pub fn new(theta: f64, phi: f64, thrust: f64) -> Self {
        Self(Vector3::new(theta, phi, thrust))
    }

    pub fn theta(&self) -> f64 {
        self.0[0]
    }

    pub fn phi(&self) -> f64 {
        self.0[1]
    }

    pub fn thrust(&self) -> f64 {
        self.0[2]
    }

    pub fn to_deviation(&self, params: &SystemParams) -> Vector3<f64> {
        self.0 - params.hover_input().0
    }

    pub fn from_deviation(dev: &Vector3<f64>, params: &SystemParams) -> Self {
        Self(dev + params.hover_input().0)
    }
}

/// Continuous-time model `x' = A x + B u` in deviation coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub a: StateMatrix,
    pub b: InputMatrix,
}

/// `Rz(psi) Ry(theta) Rx(phi)`.
pub fn rot_body_to_world(phi: f64, theta: f64, psi: f64) -> Matrix3<f64> {
    rot_z(psi) * rot_y(theta) * rot_x(phi)
}

/// `Rx(phi_l) Ry(theta_l)`.
pub fn rot_load_to_world(phi_l: f64, theta_l: f64) -> Matrix3<f64> {
    rot_x(phi_l) * rot_y(theta_l)
}

fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

pub fn payload_position(s_uav: &Vector3<f64>, theta_l: f64, phi_l: f64, l: f64) -> Vector3<f64> {
    s_uav + rot_load_to_world(phi_l, theta_l) * Vector3::new(0.0, 0.0, -l)
}

pub fn check_guard(theta_l: f64) -> Result<()> {
    if theta_l.is_finite() && theta_l.abs() < std::f64::consts::FRAC_PI_2 - EPS_SING {
        Ok(())
    } else {
        Err(Error::SingularConfiguration { theta_l })
    }
}

/// Jacobian of the payload offset with respect to `(theta_l, phi_l)`.
fn offset_jacobian(theta_l: f64, phi_l: f64, l: f64) -> Matrix3x2<f64> {
    let (st, ct) = theta_l.sin_cos();
    let (sp, cp) = phi_l.sin_cos();
    l * Matrix3x2::new(-ct, 0.0, -sp * st, cp * ct, cp * st, sp * ct)
}

/// Payload velocity for the given generalized coordinates and rates.
pub fn payload_velocity(q: &Vector5<f64>, q_dot: &Vector5<f64>, l: f64) -> Vector3<f64> {
    let j = offset_jacobian(q[3], q[4], l);
    q_dot.fixed_rows::<3>(0) + j * q_dot.fixed_rows::<2>(3)
}

/// Mass matrix `M(q)` and lumped term `h = C(q, q') q' + D q' + g(q)`.
///
/// The drag term applies `-d_uav * v_uav` to the UAV and `-d_l * v_l` to the
/// payload, mapped to generalized forces through the payload Jacobian.
pub fn eom_terms(q: &Vector5<f64>, q_dot: &Vector5<f64>, params: &SystemParams) -> Result<(Matrix5<f64>, Vector5<f64>)> {
    let (th, ph) = (q[3], q[4]);
    check_guard(th)?;
    let (m_u, m_l, l, g) = (params.m_uav, params.m_l, params.l, params.g);
    let (st, ct) = th.sin_cos();
    let (sp, cp) = ph.sin_cos();
    let j = offset_jacobian(th, ph, l);

    let mut m = Matrix5::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&(Matrix3::identity() * (m_u + m_l)));
    m.fixed_view_mut::<3, 2>(0, 3).copy_from(&(j * m_l));
    m.fixed_view_mut::<2, 3>(3, 0).copy_from(&(j.transpose() * m_l));
    m[(3, 3)] = m_l * l * l;
    m[(4, 4)] = m_l * l * l * ct * ct;

    // Second derivatives of the payload offset.
    let p_tt = l * Vector3::new(st, -sp * ct, cp * ct);
    let p_tp = l * Vector3::new(0.0, -cp * st, -sp * st);
    let p_pp = l * Vector3::new(0.0, -sp * ct, cp * ct);
    let (thd, phd) = (q_dot[3], q_dot[4]);
    let a_q = p_tt * (thd * thd) + p_tp * (2.0 * thd * phd) + p_pp * (phd * phd);

    let v_uav: Vector3<f64> = q_dot.fixed_rows::<3>(0).into_owned();
    let v_l = payload_velocity(q, q_dot, l);
    let drag_lin = v_uav * params.d_uav + v_l * params.d_l;
    let drag_ang = j.transpose() * v_l * params.d_l;

    let mut h = Vector5::zeros();
    h.fixed_rows_mut::<3>(0).copy_from(&(a_q * m_l + drag_lin));
    h.fixed_rows_mut::<2>(3).copy_from(&(j.transpose() * a_q * m_l + drag_ang));
    h[2] += (m_u + m_l) * g;
    h[3] += m_l * g * l * cp * st;
    h[4] += m_l * g * l * sp * ct;
    Ok((m, h))
}

/// Thrust vector in the world frame for FCU tilt `(theta, phi)` and zero heading.
pub fn thrust_force(theta: f64, phi: f64, thrust: f64) -> Vector3<f64> {
    rot_body_to_world(phi, theta, 0.0) * Vector3::new(0.0, 0.0, thrust)
}

/// Decoupled first-order FCU channels `x' = (K u - x) / tau`.
pub fn fcu_dynamics(x_a: &Vector3<f64>, u: &ControlInput, params: &SystemParams) -> Vector3<f64> {
    (params.fcu_gains.component_mul(&u.0) - x_a).component_div(&params.fcu_taus)
}

pub fn nonlinear_dynamics(x: &FullState, u: &ControlInput, params: &SystemParams) -> Result<StateVector> {
    let q = x.q();
    let q_dot = x.q_dot();
    let (m, h) = eom_terms(&q, &q_dot, params)?;
    let mut f = Vector5::zeros();
    f.fixed_rows_mut::<3>(0)
        .copy_from(&thrust_force(x.0[idx::TH], x.0[idx::PHI], x.0[idx::F]));
    let rhs = f - h;
    let q_ddot = match m.cholesky() {
        Some(c) => c.solve(&rhs),
        None => m.lu().solve(&rhs).ok_or(Error::SingularConfiguration { theta_l: q[3] })?,
    };

    let mut out = StateVector::zeros();
    out.fixed_rows_mut::<5>(0).copy_from(&q_dot);
    out.fixed_rows_mut::<5>(5).copy_from(&q_ddot);
    out.fixed_rows_mut::<3>(idx::TH).copy_from(&fcu_dynamics(&x.fcu(), u, params));
    Ok(out)
}

pub fn kinetic_energy(x: &FullState, params: &SystemParams) -> f64 {
    let v_uav = x.uav_velocity();
    let v_l = payload_velocity(&x.q(), &x.q_dot(), params.l);
    0.5 * (params.m_uav * v_uav.norm_squared() + params.m_l * v_l.norm_squared())
}

pub fn potential_energy(x: &FullState, params: &SystemParams) -> f64 {
    let z_l = x.payload_position(params.l)[2];
    params.g * (params.m_uav * x.0[idx::Z] + params.m_l * z_l)
}

pub fn mechanical_energy(x: &FullState, params: &SystemParams) -> f64 {
    kinetic_energy(x, params) + potential_energy(x, params)
}

/// Jacobian of `nonlinear_dynamics` at the motionless hover, in deviation
/// coordinates.
pub fn linearize_hover(params: &SystemParams) -> LinearModel {
    let (m_u, m_l, l, g) = (params.m_uav, params.m_l, params.l, params.g);
    let f0 = params.hover_thrust();
    let j0 = offset_jacobian(0.0, 0.0, l);

    let mut m0 = Matrix5::zeros();
    m0.fixed_view_mut::<3, 3>(0, 0).copy_from(&(Matrix3::identity() * (m_u + m_l)));
    m0.fixed_view_mut::<3, 2>(0, 3).copy_from(&(j0 * m_l));
    m0.fixed_view_mut::<2, 3>(3, 0).copy_from(&(j0.transpose() * m_l));
    m0[(3, 3)] = m_l * l * l;
    m0[(4, 4)] = m_l * l * l;

    // Damping: d_uav on the UAV block plus d_l G'G with G = [I, J0].
    let mut gmat = SMatrix::<f64, 3, 5>::zeros();
    gmat.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
    gmat.fixed_view_mut::<3, 2>(0, 3).copy_from(&j0);
    let mut d0 = gmat.transpose() * gmat * params.d_l;
    for i in 0..3 {
        d0[(i, i)] += params.d_uav;
    }

    let mut k0 = Matrix5::zeros();
    k0[(3, 3)] = m_l * g * l;
    k0[(4, 4)] = m_l * g * l;

    // Thrust sensitivity to (theta, phi, F).
    let mut bf = SMatrix::<f64, 5, 3>::zeros();
    bf[(0, 0)] = f0;
    bf[(1, 1)] = -f0;
    bf[(2, 2)] = 1.0;

    let chol = m0.cholesky().expect("hover mass matrix is positive definite");
    let acc_q = -chol.solve(&k0);
    let acc_v = -chol.solve(&d0);
    let acc_a = chol.solve(&bf);

    let mut a = StateMatrix::zeros();
    a.fixed_view_mut::<5, 5>(0, 5).copy_from(&Matrix5::identity());
    a.fixed_view_mut::<5, 5>(5, 0).copy_from(&acc_q);
    a.fixed_view_mut::<5, 5>(5, 5).copy_from(&acc_v);
    a.fixed_view_mut::<5, 3>(5, 10).copy_from(&acc_a);
    let mut b = InputMatrix::zeros();
    for i in 0..3 {
        a[(10 + i, 10 + i)] = -1.0 / params.fcu_taus[i];
        b[(10 + i, i)] = params.fcu_gains[i] / params.fcu_taus[i];
    }
    LinearModel { a, b }
}

/// Forward-Euler discretization `(I + dt A, dt B)`.
pub fn discretize(model: &LinearModel, dt: f64) -> (StateMatrix, InputMatrix) {
    (StateMatrix::identity() + model.a * dt, model.b * dt)
}
