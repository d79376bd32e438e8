use nalgebra::{SVector, Vector3};

use crate::error::{Error, Result};

/// Six stage outputs: payload position followed by the absolute FCU input.
pub type OutputVector = SVector<f64, 6>;

const SPACING_TOL: f64 = 1e-9;

/// Timestamped payload waypoints with uniform spacing.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseReference {
    times: Vec<f64>,
    points: Vec<Vector3<f64>>,
}

impl SparseReference {
    pub fn new(times: Vec<f64>, points: Vec<Vector3<f64>>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::EmptyTrajectory);
        }
        if times.len() != points.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} waypoint times for {} positions",
                times.len(),
                points.len()
            )));
        }
        if times.iter().chain(points.iter().flat_map(|p| p.iter())).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("reference contains non-finite values".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig("reference times must be strictly increasing".into()));
        }
        if times.len() > 2 {
            let dt = times[1] - times[0];
            if times.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > SPACING_TOL * dt.max(1.0)) {
                return Err(Error::InvalidConfig("reference spacing must be uniform".into()));
            }
        }
        Ok(Self { times, points })
    }

    /// Waypoints at `t0, t0 + dt, ...`.
    pub fn uniform(t0: f64, dt: f64, points: Vec<Vector3<f64>>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidConfig(format!("reference dt must be positive, got {dt}")));
        }
        let times = (0..points.len()).map(|k| t0 + k as f64 * dt).collect();
        Self::new(times, points)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// Waypoint spacing; `None` for a single waypoint.
    pub fn dt(&self) -> Option<f64> {
        (self.times.len() > 1).then(|| self.times[1] - self.times[0])
    }

    /// Zero-order hold of the most recent waypoint. Times before the first
    /// waypoint hold the first one.
    pub fn zoh(&self, t: f64) -> Vector3<f64> {
        let k = self.times.partition_point(|&tk| tk <= t);
        self.points[k.saturating_sub(1)]
    }

    pub fn shifted(&self, dt: f64) -> Self {
        Self { times: self.times.iter().map(|t| t + dt).collect(), points: self.points.clone() }
    }

    /// Rebuilds the waypoint times with spacing `dt`, keeping the first time.
    pub fn retimed(&self, dt: f64) -> Result<Self> {
        Self::uniform(self.start(), dt, self.points.clone())
    }
}

/// Stage-aligned outputs `[payload position; input]` starting at `t0`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseReference {
    pub t0: f64,
    pub dt: f64,
    pub outputs: Vec<OutputVector>,
}

impl DenseReference {
    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn end(&self) -> f64 {
        self.time(self.outputs.len().saturating_sub(1))
    }

    /// Linear interpolation in time, holding the end values outside the span.
    pub fn sample(&self, t: f64) -> OutputVector {
        let n = self.outputs.len();
        if n == 1 || t <= self.t0 {
            return self.outputs[0];
        }
        let s = (t - self.t0) / self.dt;
        let k = s.floor() as usize;
        if k + 1 >= n {
            return self.outputs[n - 1];
        }
        let w = s - k as f64;
        self.outputs[k] * (1.0 - w) + self.outputs[k + 1] * w
    }

    pub fn position(&self, k: usize) -> Vector3<f64> {
        self.outputs[k].fixed_rows::<3>(0).into_owned()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> SparseReference {
        let pts = (0..4).map(|k| Vector3::new(k as f64, 0.0, 1.0)).collect();
        SparseReference::uniform(1.0, 2.0, pts).unwrap()
    }

    #[test]
    fn zoh_holds_previous_waypoint() {
        let r = line();
        assert_eq!(r.zoh(0.0), Vector3::new(0.0, 0.0, 1.0));
        assert_eq!(r.zoh(1.0), Vector3::new(0.0, 0.0, 1.0));
        assert_eq!(r.zoh(2.999), Vector3::new(0.0, 0.0, 1.0));
        assert_eq!(r.zoh(3.0), Vector3::new(1.0, 0.0, 1.0));
        assert_eq!(r.zoh(100.0), Vector3::new(3.0, 0.0, 1.0));
        assert_eq!(r.dt(), Some(2.0));
        assert_eq!(r.end(), 7.0);
    }

    #[test]
    fn rejects_bad_timing() {
        let p = vec![Vector3::zeros(); 3];
        assert!(SparseReference::new(vec![0.0, 1.0, 1.0], p.clone()).is_err());
        assert!(SparseReference::new(vec![0.0, 1.0, 2.5], p.clone()).is_err());
        assert!(SparseReference::new(vec![0.0, 1.0], p).is_err());
        assert_eq!(SparseReference::new(vec![], vec![]), Err(Error::EmptyTrajectory));
    }

    #[test]
    fn dense_sampling_interpolates_and_clamps() {
        let mut a = OutputVector::zeros();
        let mut b = OutputVector::zeros();
        a[0] = 1.0;
        b[0] = 3.0;
        let d = DenseReference { t0: 2.0, dt: 0.5, outputs: vec![a, b] };
        assert_eq!(d.sample(0.0)[0], 1.0);
        assert!((d.sample(2.25)[0] - 2.0).abs() < 1e-15);
        assert_eq!(d.sample(9.0)[0], 3.0);
        assert_eq!(d.end(), 2.5);
    }
}
