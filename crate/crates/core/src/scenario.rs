//! Declarative benchmark scenarios: vehicle model, controller choice,
//! trajectory, wind, model mismatch and noise, all serializable so runs can
//! be reproduced from a single JSON file.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dynamics::{InputLimits, ModelParams};
use crate::error::{Error, Result};
use crate::ocp::{OcpConfig, TerminalWeight};
use crate::trajectory::Trajectory;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Lmpc,
    Nmpc,
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Lmpc => write!(f, "lmpc"),
            Self::Nmpc => write!(f, "nmpc"),
        }
    }
}

/// Physical vehicle parameters (plain numbers for serialization).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub mass: f64,
    pub tau_phi: f64,
    pub tau_theta: f64,
    pub k_phi: f64,
    pub k_theta: f64,
    pub k_drag: f64,
    /// Symmetric tilt limit [rad].
    pub tilt_limit: f64,
    /// Collective thrust limits [N] (converted to mass-normalized units).
    pub thrust_min_n: f64,
    pub thrust_max_n: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let d = ModelParams::<f64>::default();
        Self {
            mass: d.mass,
            tau_phi: d.tau_phi,
            tau_theta: d.tau_theta,
            k_phi: d.k_phi,
            k_theta: d.k_theta,
            k_drag: d.k_drag,
            tilt_limit: d.limits.phi_max,
            thrust_min_n: d.limits.thrust_min * d.mass,
            thrust_max_n: d.limits.thrust_max * d.mass,
        }
    }
}

impl ModelConfig {
    pub fn to_params(&self) -> Result<ModelParams<f64>> {
        let params = ModelParams {
            mass: self.mass,
            g: 9.81,
            tau_phi: self.tau_phi,
            tau_theta: self.tau_theta,
            k_phi: self.k_phi,
            k_theta: self.k_theta,
            k_drag: self.k_drag,
            limits: InputLimits {
                phi_min: -self.tilt_limit,
                phi_max: self.tilt_limit,
                theta_min: -self.tilt_limit,
                theta_max: self.tilt_limit,
                thrust_min: self.thrust_min_n / self.mass,
                thrust_max: self.thrust_max_n / self.mass,
            },
        };
        params.validate()?;
        Ok(params)
    }
}

/// Multiplicative plant-vs-model mismatch applied to the simulated plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MismatchConfig {
    pub mass_scale: f64,
    pub drag_scale: f64,
    pub tau_scale: f64,
}

impl Default for MismatchConfig {
    fn default() -> Self {
        Self { mass_scale: 1.0, drag_scale: 1.0, tau_scale: 1.0 }
    }
}

/// Wind acting on the plant as an external force.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "kind")]
pub enum WindConfig {
    Off,
    /// Constant force [N].
    Constant { force: [f64; 3] },
    /// Low-pass-filtered random gusts around a mean wind speed [m/s]; force
    /// is `drag_coefficient * wind_velocity` [N].
    Gusty {
        mean_speed: [f64; 3],
        gust_std: f64,
        /// Filter cutoff [Hz].
        cutoff: f64,
        drag_coefficient: f64,
    },
}

impl Default for WindConfig {
    fn default() -> Self {
        Self::Off
    }
}

/// Measurement noise fed to the estimator (standard deviations).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasurementNoiseConfig {
    pub sigma_p: f64,
    pub sigma_v: f64,
    pub sigma_att: f64,
}

impl Default for MeasurementNoiseConfig {
    fn default() -> Self {
        Self { sigma_p: 1e-3, sigma_v: 1e-2, sigma_att: 0.2_f64.to_radians() }
    }
}

/// Reference trajectory selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "kind")]
pub enum TrajectoryConfig {
    Hover { position: [f64; 3], yaw: f64 },
    Step { from: [f64; 3], to: [f64; 3], t_step: f64, hold: f64 },
    FigureEight {
        amplitude_x: f64,
        amplitude_y: f64,
        period: f64,
        height: f64,
        laps: usize,
    },
}

impl TrajectoryConfig {
    pub fn build(&self) -> Result<Trajectory> {
        match self {
            Self::Hover { position, yaw } => {
                Ok(Trajectory::hover(Vector3::from_column_slice(position), *yaw))
            }
            Self::Step { from, to, t_step, hold } => Trajectory::step(
                Vector3::from_column_slice(from),
                Vector3::from_column_slice(to),
                *t_step,
                *hold,
            ),
            Self::FigureEight { amplitude_x, amplitude_y, period, height, laps } => {
                Trajectory::figure_eight(
                    Vector3::new(0.0, 0.0, *height),
                    *amplitude_x,
                    *amplitude_y,
                    *period,
                    *laps,
                )
            }
        }
    }
}

/// Diagonal cost weights and horizon settings (shared by both controllers).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightsConfig {
    pub q_pos: f64,
    pub q_vel: f64,
    pub q_att: f64,
    pub r_tilt: f64,
    pub r_thrust: f64,
    pub horizon: usize,
    pub dt_pred: f64,
}

impl Default for WeightsConfig {
    fn default() -> Self {
        Self { q_pos: 40.0, q_vel: 8.0, q_att: 2.0, r_tilt: 8.0, r_thrust: 2.0, horizon: 20, dt_pred: 0.1 }
    }
}

impl WeightsConfig {
    pub fn to_ocp(&self) -> Result<OcpConfig> {
        let mut q = nalgebra::SMatrix::<f64, 8, 8>::zeros();
        for i in 0..3 {
            q[(i, i)] = self.q_pos;
            q[(i + 3, i + 3)] = self.q_vel;
        }
        q[(6, 6)] = self.q_att;
        q[(7, 7)] = self.q_att;
        let r = nalgebra::SMatrix::<f64, 3, 3>::from_diagonal(&Vector3::new(
            self.r_tilt,
            self.r_tilt,
            self.r_thrust,
        ));
        let cfg = OcpConfig {
            horizon: self.horizon,
            dt_pred: self.dt_pred,
            q,
            r,
            terminal: TerminalWeight::Riccati,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// A complete, reproducible benchmark scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub name: String,
    pub controller: ControllerKind,
    pub trajectory: TrajectoryConfig,
    /// Simulated duration [s].
    pub duration: f64,
    /// Controller rate [Hz].
    #[serde(default = "default_control_rate")]
    pub control_rate: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub use_ekf: bool,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub weights: WeightsConfig,
    #[serde(default)]
    pub mismatch: MismatchConfig,
    #[serde(default)]
    pub wind: WindConfig,
    /// Measurement noise; omit for noiseless (deterministic) measurements.
    #[serde(default)]
    pub noise: Option<MeasurementNoiseConfig>,
}

fn default_control_rate() -> f64 {
    100.0
}

fn default_true() -> bool {
    true
}

impl ScenarioConfig {
    /// Hover scenario with all defaults; useful as a starting point.
    pub fn hover_default(controller: ControllerKind) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name: format!("hover-{controller}"),
            controller,
            trajectory: TrajectoryConfig::Hover { position: [0.0, 0.0, 1.0], yaw: 0.0 },
            duration: 5.0,
            control_rate: default_control_rate(),
            seed: 0,
            use_ekf: true,
            model: ModelConfig::default(),
            weights: WeightsConfig::default(),
            mismatch: MismatchConfig::default(),
            wind: WindConfig::default(),
            noise: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::Config("duration must be positive".into()));
        }
        if !(self.control_rate > 0.0 && self.control_rate.is_finite()) {
            return Err(Error::Config("control rate must be positive".into()));
        }
        if self.mismatch.mass_scale <= 0.0
            || self.mismatch.drag_scale < 0.0
            || self.mismatch.tau_scale <= 0.0
        {
            return Err(Error::Config("mismatch scales must be positive".into()));
        }
        self.model.to_params().map_err(|e| Error::Config(e.to_string()))?;
        self.weights.to_ocp().map_err(|e| Error::Config(e.to_string()))?;
        self.trajectory.build().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_json() {
        let mut cfg = ScenarioConfig::hover_default(ControllerKind::Nmpc);
        cfg.wind = WindConfig::Gusty {
            mean_speed: [3.0, 0.0, 0.0],
            gust_std: 1.0,
            cutoff: 0.5,
            drag_coefficient: 0.3,
        };
        cfg.noise = Some(MeasurementNoiseConfig::default());
        let json = cfg.to_json().unwrap();
        let back = ScenarioConfig::from_json(&json).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut value: serde_json::Value =
            serde_json::from_str(&ScenarioConfig::hover_default(ControllerKind::Lmpc).to_json().unwrap())
                .unwrap();
        value["typo_field"] = serde_json::json!(1);
        let s = value.to_string();
        assert!(ScenarioConfig::from_json(&s).is_err());
    }

    #[test]
    fn wrong_schema_version_is_rejected() {
        let mut cfg = ScenarioConfig::hover_default(ControllerKind::Lmpc);
        cfg.schema_version = 99;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn default_model_matches_built_in_parameters() {
        let params = ModelConfig::default().to_params().unwrap();
        assert_eq!(params, ModelParams::<f64>::default());
    }

    #[test]
    fn omitted_optional_sections_take_defaults() {
        let s = r#"{
            "schema_version": 1,
            "name": "minimal",
            "controller": "lmpc",
            "trajectory": {"kind": "hover", "position": [0, 0, 1], "yaw": 0.0},
            "duration": 2.0
        }"#;
        let cfg = ScenarioConfig::from_json(s).unwrap();
        assert_eq!(cfg.control_rate, 100.0);
        assert!(cfg.use_ekf);
        assert_eq!(cfg.wind, WindConfig::Off);
        assert_eq!(cfg.mismatch, MismatchConfig::default());
        assert!(cfg.noise.is_none());
    }

    #[test]
    fn invalid_durations_and_scales_are_rejected() {
        let mut cfg = ScenarioConfig::hover_default(ControllerKind::Lmpc);
        cfg.duration = -1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::hover_default(ControllerKind::Lmpc);
        cfg.mismatch.mass_scale = 0.0;
        assert!(cfg.validate().is_err());
    }
}
