//! Delta-state model approximator: an ensemble of feed-forward ReLU networks
//! predicting `s_{k+1} - s_k` from the current state and the commanded
//! setpoint, fused by arithmetic averaging.

mod adam;
mod ensemble;
mod mlp;
mod norm;
mod persist;
mod train;

pub use adam::{adam_step, AdamState};
pub use ensemble::{forward, EnsembleModel, ModelNorm};
pub use mlp::{Dense, Mlp};
pub use norm::NormStats;
pub use persist::{load_model, read_model, save_model, write_model, MODEL_FORMAT_VERSION};
pub use train::{train, MemberHistory, NetworkConfig, TrainingLog};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model is not trained (no members or normalization statistics)")]
    NotReady,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("invalid network configuration: {0}")]
    Config(String),
    #[error("model file format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which state layout the approximator consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateMode {
    /// `(z, z_dot, f_z)`
    Static,
    /// `(z, z_dot, v, f_z)`
    Dynamic,
}

impl StateMode {
    pub fn state_dim(self) -> usize {
        match self {
            StateMode::Static => 3,
            StateMode::Dynamic => 4,
        }
    }

    /// State features plus the commanded setpoint.
    pub fn input_dim(self) -> usize {
        self.state_dim() + 1
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StateMode::Static => "static",
            StateMode::Dynamic => "dynamic",
        }
    }

    /// Column names of the state features, in feature order.
    pub fn state_names(self) -> &'static [&'static str] {
        match self {
            StateMode::Static => &["z", "z_dot", "f_z"],
            StateMode::Dynamic => &["z", "z_dot", "v", "f_z"],
        }
    }

    pub fn features(self, s: &StateSample) -> Vec<f64> {
        match self {
            StateMode::Static => vec![s.z, s.z_dot, s.f_z],
            StateMode::Dynamic => vec![s.z, s.z_dot, s.v, s.f_z],
        }
    }

    /// Applies a feature-ordered delta to a state. Fields outside the mode are
    /// carried over unchanged.
    pub fn apply_delta(self, s: &StateSample, delta: &[f64]) -> StateSample {
        let mut next = *s;
        match self {
            StateMode::Static => {
                next.z = s.z + delta[0];
                next.z_dot = s.z_dot + delta[1];
                next.f_z = s.f_z + delta[2];
            }
            StateMode::Dynamic => {
                next.z = s.z + delta[0];
                next.z_dot = s.z_dot + delta[1];
                next.v = s.v + delta[2];
                next.f_z = s.f_z + delta[3];
            }
        }
        next
    }

    /// Feature-ordered `b - a`.
    pub fn delta(self, a: &StateSample, b: &StateSample) -> Vec<f64> {
        self.features(b)
            .iter()
            .zip(self.features(a))
            .map(|(y, x)| y - x)
            .collect()
    }
}

impl std::str::FromStr for StateMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "static" => Ok(StateMode::Static),
            "dynamic" => Ok(StateMode::Dynamic),
            other => Err(format!("unknown state mode `{other}`")),
        }
    }
}

/// Approximator state at one control step together with the setpoint that was
/// applied during that step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateSample {
    /// Normal position, m.
    pub z: f64,
    /// Normal velocity, m/s.
    pub z_dot: f64,
    /// Tangential speed, m/s. Ignored in static mode.
    pub v: f64,
    /// Normal contact force, N.
    pub f_z: f64,
    /// Setpoint on `z`, m.
    pub x_f_z: f64,
}

impl StateSample {
    pub fn is_finite(&self) -> bool {
        [self.z, self.z_dot, self.v, self.f_z, self.x_f_z]
            .iter()
            .all(|x| x.is_finite())
    }
}

/// One-step transition model queried by the residual-action optimizer.
pub trait TransitionModel {
    fn state_mode(&self) -> StateMode;

    fn is_ready(&self) -> bool;

    /// Predicted next state for each candidate setpoint.
    fn predict_candidates(
        &self,
        s: &StateSample,
        candidates: &[f64],
    ) -> Result<Vec<StateSample>, ModelError>;

    fn predict_next(&self, s: &StateSample, x_c: f64) -> Result<StateSample, ModelError> {
        Ok(self.predict_candidates(s, &[x_c])?[0])
    }
}
