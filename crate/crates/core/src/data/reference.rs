use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::control::Vector6f;

/// Sinusoidal normal-force reference `mean + amplitude sin(2 pi f t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceProfile {
    pub mean: f64,
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
}

impl ForceProfile {
    pub fn constant(force: f64) -> Self {
        Self {
            mean: force,
            amplitude: 0.0,
            frequency: 1.0,
            phase: 0.0,
        }
    }

    pub fn at(&self, t: f64) -> f64 {
        self.mean + self.amplitude * (TAU * self.frequency * t + self.phase).sin()
    }
}

/// Tangential motion of the position reference along `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PathProfile {
    /// Fixed waypoint.
    StaticPoint,
    /// `x(t) = A (1 - cos(2 pi f t))`, so the commanded speed starts at zero
    /// and peaks at `2 pi f A`.
    SinePosition { amplitude: f64, frequency: f64 },
    /// Constant speed along a straight line.
    Line { velocity: f64, length: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceKind {
    StaticPoint,
    SineForce,
    SinePosition,
    LineConstantVelocity,
}

impl ReferenceKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ReferenceKind::StaticPoint => "static-point",
            ReferenceKind::SineForce => "sine-force",
            ReferenceKind::SinePosition => "sine-position",
            ReferenceKind::LineConstantVelocity => "line-constant-velocity",
        }
    }
}

impl std::str::FromStr for ReferenceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            ReferenceKind::StaticPoint,
            ReferenceKind::SineForce,
            ReferenceKind::SinePosition,
            ReferenceKind::LineConstantVelocity,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
        .ok_or_else(|| format!("unknown reference kind `{s}`"))
    }
}

/// Position and force references for one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceProfile {
    pub path: PathProfile,
    pub force: ForceProfile,
    /// Trajectory length in time, s.
    pub duration: f64,
    /// Commanded height on `z`, m (below the surface to establish contact).
    pub z_ref: f64,
}

impl ReferenceProfile {
    /// Line at constant `velocity`, lasting `length / velocity`.
    pub fn line(velocity: f64, length: f64, force: ForceProfile, z_ref: f64) -> Self {
        Self {
            path: PathProfile::Line { velocity, length },
            force,
            duration: length / velocity,
            z_ref,
        }
    }

    pub fn kind(&self) -> ReferenceKind {
        match self.path {
            PathProfile::StaticPoint if self.force.amplitude != 0.0 => ReferenceKind::SineForce,
            PathProfile::StaticPoint => ReferenceKind::StaticPoint,
            PathProfile::SinePosition { .. } => ReferenceKind::SinePosition,
            PathProfile::Line { .. } => ReferenceKind::LineConstantVelocity,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(format!("duration must be positive, got {}", self.duration));
        }
        if !(self.force.frequency > 0.0) {
            return Err(format!(
                "force frequency must be positive, got {}",
                self.force.frequency
            ));
        }
        match self.path {
            PathProfile::StaticPoint => {}
            PathProfile::SinePosition {
                frequency,
                amplitude,
            } => {
                if !(frequency > 0.0 && amplitude.is_finite()) {
                    return Err(format!(
                        "sine position needs frequency > 0, got {frequency}"
                    ));
                }
            }
            PathProfile::Line { velocity, length } => {
                if !(velocity > 0.0 && length > 0.0) {
                    return Err(format!(
                        "line needs velocity > 0 and length > 0, got {velocity}, {length}"
                    ));
                }
            }
        }
        Ok(())
    }

    /// Tangential offset along `x` at time `t`.
    pub fn path_at(&self, t: f64) -> f64 {
        match self.path {
            PathProfile::StaticPoint => 0.0,
            PathProfile::SinePosition {
                amplitude,
                frequency,
            } => amplitude * (1.0 - (TAU * frequency * t).cos()),
            PathProfile::Line { velocity, length } => (velocity * t).min(length),
        }
    }

    /// Commanded tangential speed at time `t`.
    pub fn path_speed_at(&self, t: f64) -> f64 {
        match self.path {
            PathProfile::StaticPoint => 0.0,
            PathProfile::SinePosition {
                amplitude,
                frequency,
            } => (TAU * frequency * amplitude * (TAU * frequency * t).sin()).abs(),
            PathProfile::Line { velocity, length } => {
                if velocity * t < length {
                    velocity
                } else {
                    0.0
                }
            }
        }
    }
}

/// Reference sample at one control step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferencePoint {
    pub t: f64,
    /// Reference pose.
    pub x_r: Vector6f,
    /// Reference normal force, N.
    pub f_ref: f64,
}

/// Number of control steps covering `duration`.
pub fn step_count(duration: f64, dt: f64) -> usize {
    ((duration / dt).round() as usize).max(1)
}

/// Precomputes the reference at every control step `t_k = k dt`.
pub fn gen_reference(profile: &ReferenceProfile, dt: f64) -> Vec<ReferencePoint> {
    (0..step_count(profile.duration, dt))
        .map(|k| {
            let t = k as f64 * dt;
            let mut x_r = Vector6f::zeros();
            x_r[0] = profile.path_at(t);
            x_r[2] = profile.z_ref;
            ReferencePoint {
                t,
                x_r,
                f_ref: profile.force.at(t),
            }
        })
        .collect()
}

/// Closed interval used for randomised reference parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.max > self.min {
            rng.random_range(self.min..=self.max)
        } else {
            self.min
        }
    }

    /// Point `u in [0, 1]` of the way through the range.
    pub fn lerp(&self, u: f64) -> f64 {
        self.min + (self.max - self.min) * u
    }
}

/// Ranges for randomised sinusoidal force references.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceRanges {
    pub amplitude: Range,
    pub mean: Range,
    pub frequency: Range,
}

impl Default for ForceRanges {
    fn default() -> Self {
        Self {
            amplitude: Range::new(5.0, 20.0),
            mean: Range::new(10.0, 25.0),
            frequency: Range::new(0.2, 2.0),
        }
    }
}

impl ForceRanges {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ForceProfile {
        ForceProfile {
            amplitude: self.amplitude.sample(rng),
            mean: self.mean.sample(rng),
            frequency: self.frequency.sample(rng),
            phase: rng.random_range(0.0..std::f64::consts::TAU),
        }
    }
}
