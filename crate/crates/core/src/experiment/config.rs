use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::control::VaicamParams;
use crate::data::{ForceRanges, LoopConfig, Range};
use crate::model::NetworkConfig;
use crate::plant::{EnvironmentModel, ImpedanceGains, Plant};

/// Impedance controller and integration settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantConfig {
    /// Translational stiffness, N/m.
    pub translational_stiffness: f64,
    /// Rotational stiffness, N m/rad (stored, unused by the surrogate).
    pub rotational_stiffness: f64,
    pub damping_ratio: f64,
    /// Virtual task-space mass, kg.
    pub virtual_mass: f64,
    /// RK4 step, s.
    pub integrator_dt: f64,
    /// Controller period, s; a whole multiple of `integrator_dt`.
    pub control_period: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            translational_stiffness: 1700.0,
            rotational_stiffness: 300.0,
            damping_ratio: 1.0,
            virtual_mass: 1.0,
            integrator_dt: 1e-3,
            control_period: 1e-2,
        }
    }
}

/// Training-corpus generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Standard deviation of the Gaussian force noise on training data, N.
    pub noise_sigma: f64,
    /// Static-waypoint rollouts used for training / validation.
    pub static_train: usize,
    pub static_validation: usize,
    /// Sine-position rollouts used for training / validation.
    pub dynamic_train: usize,
    pub dynamic_validation: usize,
    /// Length of every training rollout, s.
    pub rollout_duration: f64,
    /// Randomised sinusoidal force references.
    pub force: ForceRanges,
    /// Highest peak tangential speed among training sine-position rollouts, m/s.
    pub max_peak_speed: f64,
    /// Frequency range of the sine-position references, Hz.
    pub position_frequency: Range,
    /// Setpoint dither half-width applied while collecting training data, m.
    pub exploration: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            noise_sigma: 0.1,
            static_train: 9,
            static_validation: 1,
            dynamic_train: 20,
            dynamic_validation: 11,
            rollout_duration: 8.0,
            force: ForceRanges::default(),
            max_peak_speed: 0.55,
            position_frequency: Range::new(0.1, 0.3),
            exploration: 0.003,
        }
    }
}

/// Test grid shared by both comparisons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    /// Line velocities, m/s.
    pub velocities: Vec<f64>,
    pub trajectories_per_velocity: usize,
    /// Line length, m.
    pub line_length: f64,
    /// Upper bound on a test line's duration, s (slow lines are truncated).
    pub max_duration: f64,
    /// Sinusoidal force reference of the test lines; the phase is drawn per
    /// trajectory.
    pub force_mean: f64,
    pub force_amplitude: f64,
    pub force_frequency: f64,
    /// Steps ahead for the model comparison (1 = one-step-ahead replay).
    pub prediction_horizon: usize,
    /// Master seed used when none is given on the command line.
    pub seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            velocities: vec![
                0.01, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50,
            ],
            trajectories_per_velocity: 10,
            line_length: 1.2,
            max_duration: 6.0,
            force_mean: 15.0,
            force_amplitude: 5.0,
            force_frequency: 0.5,
            prediction_horizon: 1,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub plant: PlantConfig,
    pub environment: EnvironmentModel,
    #[serde(rename = "loop")]
    pub control: LoopConfig,
    pub vaicam: VaicamParams,
    pub network: NetworkConfig,
    pub data: DataConfig,
    pub experiment: ProtocolConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            ExperimentError::Config(m) => {
                ExperimentError::Config(format!("{}: {m}", path.display()))
            }
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    pub fn plant(&self) -> Result<Plant, ExperimentError> {
        let p = &self.plant;
        let gains = ImpedanceGains::new(
            p.translational_stiffness,
            p.rotational_stiffness,
            p.damping_ratio,
            p.virtual_mass,
        )?;
        Ok(Plant::new(
            gains,
            self.environment,
            p.integrator_dt,
            p.control_period,
        )?)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let fail = |m: String| Err(ExperimentError::Config(m));
        self.plant()?;
        self.control
            .dfc()
            .validate()
            .map_err(ExperimentError::Config)?;
        if self.control.contact_steps == 0 || !(self.control.contact_threshold >= 0.0) {
            return fail("contact detection needs steps >= 1 and threshold >= 0".into());
        }
        self.vaicam.validate()?;
        self.network.validate()?;

        let d = &self.data;
        if !(d.noise_sigma >= 0.0 && d.noise_sigma.is_finite()) {
            return fail(format!("noise sigma must be >= 0, got {}", d.noise_sigma));
        }
        if d.static_train == 0
            || d.static_validation == 0
            || d.dynamic_train == 0
            || d.dynamic_validation == 0
        {
            return fail(
                "every training corpus needs at least one training and one validation rollout"
                    .into(),
            );
        }
        if !(d.exploration >= 0.0 && d.exploration.is_finite()) {
            return fail(format!("exploration must be >= 0, got {}", d.exploration));
        }
        if !(d.rollout_duration > 0.0 && d.max_peak_speed > 0.0) {
            return fail("rollout duration and peak speed must be positive".into());
        }
        if !(d.position_frequency.min > 0.0 && d.position_frequency.max >= d.position_frequency.min)
        {
            return fail("position frequency range must be positive and ordered".into());
        }
        let f = &d.force;
        for (name, r) in [
            ("amplitude", f.amplitude),
            ("mean", f.mean),
            ("frequency", f.frequency),
        ] {
            if !(r.max >= r.min && r.min.is_finite() && r.max.is_finite()) {
                return fail(format!("force {name} range is not ordered"));
            }
        }
        if !(f.frequency.min > 0.0) {
            return fail("force frequencies must be positive".into());
        }

        let e = &self.experiment;
        if e.velocities.is_empty() {
            return fail("velocity grid is empty".into());
        }
        if e.velocities.iter().any(|&v| !(v > 0.0 && v <= 1.0)) {
            return fail(format!(
                "velocities must lie in (0, 1] m/s, got {:?}",
                e.velocities
            ));
        }
        if e.velocities.windows(2).any(|w| w[1] <= w[0]) {
            return fail(format!(
                "velocity grid must be strictly increasing, got {:?}",
                e.velocities
            ));
        }
        if e.trajectories_per_velocity == 0 || e.prediction_horizon == 0 {
            return fail("trajectories per velocity and prediction horizon must be >= 1".into());
        }
        if !(e.line_length > 0.0 && e.max_duration > 0.0 && e.force_frequency > 0.0) {
            return fail("line length, duration cap and force frequency must be positive".into());
        }
        Ok(())
    }
}
