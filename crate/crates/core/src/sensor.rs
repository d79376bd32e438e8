use nalgebra::{Vector2, Vector3, Vector5};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{idx, FullState};

/// Gaussian sensor noise on the UAV position and the FCU tilt angles.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorConfig {
    pub pos_noise_std: Vector3<f64>,
    pub att_noise_std: Vector2<f64>,
    /// Measurement rate [Hz].
    pub measurement_rate: f64,
    pub seed: u64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            pos_noise_std: Vector3::repeat(0.02),
            att_noise_std: Vector2::repeat(0.01),
            measurement_rate: 100.0,
            seed: 0,
        }
    }
}

impl SensorConfig {
    pub fn noiseless() -> Self {
        Self { pos_noise_std: Vector3::zeros(), att_noise_std: Vector2::zeros(), ..Self::default() }
    }

    pub fn stds(&self) -> Vector5<f64> {
        Vector5::new(
            self.pos_noise_std[0],
            self.pos_noise_std[1],
            self.pos_noise_std[2],
            self.att_noise_std[0],
            self.att_noise_std[1],
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.stds().iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidConfig("sensor noise stds must be non-negative".into()));
        }
        if !(self.measurement_rate.is_finite() && self.measurement_rate > 0.0) {
            return Err(Error::InvalidConfig("measurement rate must be positive".into()));
        }
        Ok(())
    }
}

/// Noisy `(x, y, z, theta, phi)` reading of the true state.
pub fn measure<R: Rng + ?Sized>(x: &FullState, cfg: &SensorConfig, rng: &mut R) -> Vector5<f64> {
    let exact = Vector5::new(x.0[idx::X], x.0[idx::Y], x.0[idx::Z], x.0[idx::TH], x.0[idx::PHI]);
    let stds = cfg.stds();
    exact + Vector5::from_fn(|i, _| {
        let n: f64 = rng.sample(StandardNormal);
        stds[i] * n
    })
}
