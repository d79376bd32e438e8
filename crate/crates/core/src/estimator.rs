//! Linear Kalman filter on the hover-linearized model.

use nalgebra::{DMatrix, Matrix5, SMatrix, SVector, Vector3, Vector4, Vector5};

use crate::error::{Error, Result};
use crate::model::{discretize, idx, LinearModel, StateMatrix, StateVector, NX};

pub const NY: usize = 5;

/// Largest accepted condition number of the innovation covariance.
pub const MAX_INNOVATION_COND: f64 = 1e12;

pub type MeasurementMatrix = SMatrix<f64, NY, NX>;

/// Mean and covariance of the filter, in deviation coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Estimate {
    pub mean: StateVector,
    pub cov: StateMatrix,
}

impl Estimate {
    pub fn new(mean: StateVector, cov: StateMatrix) -> Self {
        Self { mean, cov }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseConfig {
    pub q: StateMatrix,
    pub r: Matrix5<f64>,
}

impl NoiseConfig {
    /// Diagonal process noise over the state layout
    /// `(s_uav, q_l, s_uav', q_l', theta, phi, F)`.
    pub const DEFAULT_Q_DIAG: [f64; NX] = [1.0, 1.0, 1.0, 30.0, 30.0, 100.0, 100.0, 100000.0, 0.1, 0.1, 1.0, 1.0, 1.0];
    pub const DEFAULT_R_DIAG: [f64; NY] = [10.0; NY];

    pub fn diagonal(q: &[f64; NX], r: &[f64; NY]) -> Self {
        Self {
            q: StateMatrix::from_diagonal(&StateVector::from_column_slice(q)),
            r: Matrix5::from_diagonal(&Vector5::from_column_slice(r)),
        }
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::diagonal(&Self::DEFAULT_Q_DIAG, &Self::DEFAULT_R_DIAG)
    }
}

/// Selects the UAV position and the FCU tilt angles.
pub fn measurement_matrix() -> MeasurementMatrix {
    let mut c = MeasurementMatrix::zeros();
    for (row, col) in [idx::X, idx::Y, idx::Z, idx::TH, idx::PHI].into_iter().enumerate() {
        c[(row, col)] = 1.0;
    }
    c
}

/// Time update with the forward-Euler model for the elapsed `dt`. `u` is the
/// input deviation from hover. Process noise is scaled by `dt`.
pub fn predict(est: &Estimate, u: &Vector3<f64>, dt: f64, model: &LinearModel, noise: &NoiseConfig) -> Estimate {
    let (a, b) = discretize(model, dt);
    let mean = a * est.mean + b * u;
    let cov = a * est.cov * a.transpose() + noise.q * dt;
    Estimate { mean, cov: symmetrize(&cov) }
}

pub fn update(est: &Estimate, y: &Vector5<f64>, noise: &NoiseConfig) -> Result<Estimate> {
    let (mean, cov) = kalman_update(&est.mean, &est.cov, &measurement_matrix(), &noise.r, y)?;
    Ok(Estimate { mean, cov })
}

/// Joseph-form measurement update for any state and measurement size.
pub fn kalman_update<const N: usize, const M: usize>(
    mean: &SVector<f64, N>,
    cov: &SMatrix<f64, N, N>,
    h: &SMatrix<f64, M, N>,
    r: &SMatrix<f64, M, M>,
    y: &SVector<f64, M>,
) -> Result<(SVector<f64, N>, SMatrix<f64, N, N>)> {
    let s = symmetrize(&(h * cov * h.transpose() + r));
    let s_dyn = DMatrix::from_column_slice(M, M, s.as_slice());
    let eig = s_dyn.clone().symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(cond <= MAX_INNOVATION_COND) {
        return Err(Error::IllConditionedInnovation { cond });
    }
    // K = P H' S^-1, computed as (S^-1 H P)'.
    let hp = h * cov;
    let sol = s_dyn
        .lu()
        .solve(&DMatrix::from_column_slice(M, N, hp.as_slice()))
        .ok_or(Error::IllConditionedInnovation { cond })?;
    let gain = SMatrix::<f64, M, N>::from_column_slice(sol.as_slice()).transpose();
    let mean = mean + gain * (y - h * mean);
    let i_kh = SMatrix::<f64, N, N>::identity() - gain * h;
    let cov = i_kh * cov * i_kh.transpose() + gain * r * gain.transpose();
    Ok((mean, symmetrize(&cov)))
}

fn symmetrize<const N: usize>(m: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    (m + m.transpose()) * 0.5
}

/// Cable angles and rates `(theta_l, phi_l, theta_l', phi_l')`.
pub fn estimate_payload_state(est: &Estimate) -> Vector4<f64> {
    Vector4::new(est.mean[idx::TH_L], est.mean[idx::PHI_L], est.mean[idx::THD_L], est.mean[idx::PHID_L])
}
