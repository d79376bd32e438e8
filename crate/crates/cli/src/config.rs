//! Sectioned TOML configuration mirroring the core parameter structs.

use std::path::{Path, PathBuf};

use nalgebra::{Vector2, Vector3};
use payload_core::controller::ControllerConfig;
use payload_core::estimator::NoiseConfig;
use payload_core::model::SystemParams;
use payload_core::planner::PlannerConfig;
use payload_core::sensor::SensorConfig;
use payload_core::sim::{Feedback, ScenarioConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub m_uav: f64,
    pub m_l: f64,
    pub l: f64,
    pub d_uav: f64,
    pub d_l: f64,
    pub g: f64,
    pub fcu_gains: [f64; 3],
    pub fcu_time_constants: [f64; 3],
}

impl Default for ModelSection {
    fn default() -> Self {
        Self::from_params(&SystemParams::default())
    }
}

impl ModelSection {
    fn from_params(p: &SystemParams) -> Self {
        Self {
            m_uav: p.m_uav,
            m_l: p.m_l,
            l: p.l,
            d_uav: p.d_uav,
            d_l: p.d_l,
            g: p.g,
            fcu_gains: p.fcu_gains.into(),
            fcu_time_constants: p.fcu_taus.into(),
        }
    }

    pub fn params(&self) -> SystemParams {
        SystemParams {
            m_uav: self.m_uav,
            m_l: self.m_l,
            l: self.l,
            d_uav: self.d_uav,
            d_l: self.d_l,
            g: self.g,
            fcu_gains: Vector3::from(self.fcu_gains),
            fcu_taus: Vector3::from(self.fcu_time_constants),
        }
    }
}

/// Plant parameters; unset keys take the `[model]` value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantSection {
    pub m_uav: Option<f64>,
    pub m_l: Option<f64>,
    pub l: Option<f64>,
    pub d_uav: Option<f64>,
    pub d_l: Option<f64>,
    pub g: Option<f64>,
    pub fcu_gains: Option<[f64; 3]>,
    pub fcu_time_constants: Option<[f64; 3]>,
}

impl PlantSection {
    fn resolve(&self, m: &ModelSection) -> ModelSection {
        ModelSection {
            m_uav: self.m_uav.unwrap_or(m.m_uav),
            m_l: self.m_l.unwrap_or(m.m_l),
            l: self.l.unwrap_or(m.l),
            d_uav: self.d_uav.unwrap_or(m.d_uav),
            d_l: self.d_l.unwrap_or(m.d_l),
            g: self.g.unwrap_or(m.g),
            fcu_gains: self.fcu_gains.unwrap_or(m.fcu_gains),
            fcu_time_constants: self.fcu_time_constants.unwrap_or(m.fcu_time_constants),
        }
    }

    fn filled(m: &ModelSection) -> Self {
        Self {
            m_uav: Some(m.m_uav),
            m_l: Some(m.m_l),
            l: Some(m.l),
            d_uav: Some(m.d_uav),
            d_l: Some(m.d_l),
            g: Some(m.g),
            fcu_gains: Some(m.fcu_gains),
            fcu_time_constants: Some(m.fcu_time_constants),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSection {
    pub q_diag: [f64; 13],
    pub r_diag: [f64; 5],
    pub initial_cov: f64,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        Self { q_diag: NoiseConfig::DEFAULT_Q_DIAG, r_diag: NoiseConfig::DEFAULT_R_DIAG, initial_cov: 1e-4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSection {
    pub horizon: usize,
    pub dt: f64,
    pub p_sl: [f64; 3],
    pub p_u: [f64; 3],
    pub p_du: [f64; 3],
    pub slack_weight: f64,
    pub v_bound: f64,
    pub tilt_bound: f64,
}

impl Default for ControllerSection {
    fn default() -> Self {
        let c = ControllerConfig::default();
        Self {
            horizon: c.horizon,
            dt: c.dt,
            p_sl: c.p_sl.into(),
            p_u: c.p_u.into(),
            p_du: c.p_du.into(),
            slack_weight: c.slack_weight,
            v_bound: c.v_bound,
            tilt_bound: c.tilt_bound,
        }
    }
}

impl ControllerSection {
    pub fn config(&self) -> ControllerConfig {
        ControllerConfig {
            horizon: self.horizon,
            dt: self.dt,
            p_sl: Vector3::from(self.p_sl),
            p_u: Vector3::from(self.p_u),
            p_du: Vector3::from(self.p_du),
            slack_weight: self.slack_weight,
            v_bound: self.v_bound,
            tilt_bound: self.tilt_bound,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerSection {
    pub horizon: usize,
    pub kernel_variance: f64,
    pub p_du: [f64; 3],
    pub tilt_bound: f64,
    pub replanning_rate: f64,
    pub t_plan: f64,
    pub ol_tail: f64,
}

impl Default for PlannerSection {
    fn default() -> Self {
        let p = PlannerConfig::default();
        Self {
            horizon: p.horizon,
            kernel_variance: p.kernel_variance,
            p_du: p.p_du.into(),
            tilt_bound: p.tilt_bound,
            replanning_rate: p.replanning_rate,
            t_plan: p.t_plan,
            ol_tail: p.ol_tail,
        }
    }
}

impl PlannerSection {
    pub fn config(&self) -> PlannerConfig {
        PlannerConfig {
            horizon: self.horizon,
            kernel_variance: self.kernel_variance,
            p_du: Vector3::from(self.p_du),
            tilt_bound: self.tilt_bound,
            replanning_rate: self.replanning_rate,
            t_plan: self.t_plan,
            ol_tail: self.ol_tail,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorSection {
    pub pos_noise_std: [f64; 3],
    pub att_noise_std: [f64; 2],
    pub measurement_rate: f64,
    pub seed: u64,
}

impl Default for SensorSection {
    fn default() -> Self {
        let s = SensorConfig::default();
        Self {
            pos_noise_std: s.pos_noise_std.into(),
            att_noise_std: s.att_noise_std.into(),
            measurement_rate: s.measurement_rate,
            seed: s.seed,
        }
    }
}

impl SensorSection {
    pub fn config(&self) -> SensorConfig {
        SensorConfig {
            pos_noise_std: Vector3::from(self.pos_noise_std),
            att_noise_std: Vector2::from(self.att_noise_std),
            measurement_rate: self.measurement_rate,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackKey {
    #[default]
    Estimated,
    GroundTruth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    /// `hover`, `square`, `complex`, or a `t,x,y,z` CSV path relative to the
    /// configuration file.
    pub reference: String,
    /// Waypoint spacing of the built-in references [s].
    pub reference_dt: f64,
    /// Square side [m].
    pub side: f64,
    pub laps: usize,
    pub control_rate: f64,
    pub integrator_rate: f64,
    pub feedback: FeedbackKey,
    pub jitter_dt: bool,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            reference: "square".into(),
            reference_dt: 2.0,
            side: 5.0,
            laps: 1,
            control_rate: 100.0,
            integrator_rate: 1000.0,
            feedback: FeedbackKey::Estimated,
            jitter_dt: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepoConfig {
    pub model: ModelSection,
    pub plant: PlantSection,
    pub estimator: EstimatorSection,
    pub controller: ControllerSection,
    pub planner: PlannerSection,
    pub sensor: SensorSection,
    pub scenario: ScenarioSection,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RepoConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string().trim_end().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.to_string().trim_end())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    /// Same configuration with every optional key spelled out.
    pub fn normalized(&self) -> Self {
        let mut n = self.clone();
        n.plant = PlantSection::filled(&self.plant.resolve(&self.model));
        n
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.normalized()).expect("configuration serializes")
    }

    pub fn nominal_params(&self) -> SystemParams {
        self.model.params()
    }

    pub fn true_params(&self) -> SystemParams {
        self.plant.resolve(&self.model).params()
    }

    pub fn noise(&self) -> NoiseConfig {
        NoiseConfig::diagonal(&self.estimator.q_diag, &self.estimator.r_diag)
    }

    /// Scenario for `reference` before settling-time preparation.
    pub fn scenario(&self, reference: payload_core::reference::SparseReference) -> ScenarioConfig {
        let mut s = ScenarioConfig::new(reference, 1.0);
        s.nominal_params = self.nominal_params();
        s.true_params = self.true_params();
        s.sensor = self.sensor.config();
        s.noise = self.noise();
        s.controller = self.controller.config();
        s.planner = self.planner.config();
        s.initial_cov = self.estimator.initial_cov;
        s.control_rate = self.scenario.control_rate;
        s.planner_rate = self.planner.replanning_rate;
        s.integrator_rate = self.scenario.integrator_rate;
        s.feedback = match self.scenario.feedback {
            FeedbackKey::Estimated => Feedback::Estimated,
            FeedbackKey::GroundTruth => Feedback::GroundTruth,
        };
        s.jitter_dt = self.scenario.jitter_dt;
        s
    }
}
