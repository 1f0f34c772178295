//! Closed-loop trajectory execution and recording.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::reference::{gen_reference, ReferenceKind, ReferenceProfile};
use super::DataError;
use crate::control::{
    dfc_step, vaicam_select, wrench_z, ContactDetector, ControllerKind, DfcConfig, DfcState,
    VaicamParams, Vector6f, Z,
};
use crate::model::{StateMode, StateSample, TransitionModel};
use crate::plant::{Plant, PlantState};

/// Controller settings shared by every closed-loop run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopConfig {
    /// Proportional DFC gain, m/N.
    pub k_p: f64,
    /// Integral DFC gain, m/(N s).
    pub k_i: f64,
    /// Anti-windup clamp, N s.
    pub integrator_limit: f64,
    /// Normal force above which contact is counted, N.
    pub contact_threshold: f64,
    /// Consecutive control steps above threshold to activate the DFC.
    pub contact_steps: usize,
    /// Initial end-effector height above the surface, m.
    pub initial_height: f64,
    /// Depth below the surface of the nominal `z` reference, m.
    pub approach_depth: f64,
    /// Half-width of a uniform random offset added to the force-controller
    /// setpoint at every active step, m. Used only to excite the plant while
    /// collecting training data; 0 disables it.
    pub exploration: f64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            k_p: 1e-6,
            k_i: 2e-3,
            integrator_limit: 5e4,
            contact_threshold: 0.5,
            contact_steps: 5,
            initial_height: 0.002,
            approach_depth: 0.002,
            exploration: 0.0,
        }
    }
}

impl LoopConfig {
    pub fn dfc(&self) -> DfcConfig {
        DfcConfig::z_only(self.k_p, self.k_i, self.integrator_limit)
    }
}

/// One recorded control step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutSample {
    pub t: f64,
    /// Measured state; `x_f_z` is the force-controller setpoint.
    pub state: StateSample,
    /// Setpoint actually applied on `z`.
    pub x_c_z: f64,
    /// Reference wrench on `z` (exerted-on-environment sign).
    pub h_r_z: f64,
    /// Optimizer cost of the applied action (0 when not optimised).
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutMeta {
    pub kind: ReferenceKind,
    pub seed: u64,
    pub controller: ControllerKind,
    /// Nominal tangential velocity tag, m/s (0 when not applicable).
    pub velocity: f64,
    pub mode: StateMode,
    /// Control period, s.
    pub dt: f64,
    /// First step at which the force controller was active.
    pub activation: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub meta: RolloutMeta,
    pub samples: Vec<RolloutSample>,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples from controller activation onward (empty if never active).
    pub fn active(&self) -> &[RolloutSample] {
        match self.meta.activation {
            Some(i) => &self.samples[i..],
            None => &[],
        }
    }

    /// Reference normal force per sample.
    pub fn force_reference(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| -s.h_r_z)
    }
}

/// Identification attached to a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunTag {
    pub seed: u64,
    pub velocity: f64,
    pub mode: StateMode,
}

fn measure(state: &PlantState, x_f_z: f64) -> StateSample {
    StateSample {
        z: state.x.z,
        z_dot: state.x_dot.z,
        v: state.tangential_speed(),
        f_z: state.f_z,
        x_f_z,
    }
}

/// Runs `profile` in closed loop under `controller` and records every control
/// step. Model-based controllers require `model`.
pub fn collect_rollout<M: TransitionModel + ?Sized>(
    profile: &ReferenceProfile,
    controller: ControllerKind,
    plant: &Plant,
    loop_cfg: &LoopConfig,
    vaicam: &VaicamParams,
    model: Option<&M>,
    tag: RunTag,
) -> Result<Rollout, DataError> {
    profile.validate().map_err(DataError::Profile)?;
    let model = match (controller, model) {
        (ControllerKind::Dfc, _) => None,
        (_, Some(m)) if m.is_ready() => Some(m),
        (_, _) => {
            return Err(DataError::Control(crate::control::ControlError::Model(
                crate::model::ModelError::NotReady,
            )))
        }
    };

    let dt = plant.control_period();
    let reference = gen_reference(profile, dt);
    let mut dfc = loop_cfg.dfc();
    dfc.validate().map_err(DataError::Profile)?;

    let start = reference[0].x_r;
    let mut state = plant.settle_force(PlantState::at_rest(Vector3::new(
        start[0],
        start[1],
        plant.env.z_surface + loop_cfg.initial_height,
    )))?;
    if !(loop_cfg.exploration >= 0.0 && loop_cfg.exploration.is_finite()) {
        return Err(DataError::Profile(format!(
            "exploration must be >= 0, got {}",
            loop_cfg.exploration
        )));
    }
    let mut dither = ChaCha8Rng::seed_from_u64(tag.seed);
    let mut detector = ContactDetector::new(loop_cfg.contact_threshold, loop_cfg.contact_steps);
    let mut dfc_state: Option<DfcState> = None;
    let mut activation = None;
    let mut samples = Vec::with_capacity(reference.len());

    for (k, r) in reference.iter().enumerate() {
        let h_r_z = wrench_z(r.f_ref);
        if dfc_state.is_none() && detector.update(state.f_z) {
            dfc_state = Some(DfcState::reset());
            activation = Some(k);
        }

        let (x_f, x_c, cost) = match dfc_state.as_mut() {
            None => (r.x_r, r.x_r, 0.0),
            Some(st) => {
                dfc.x_r = r.x_r;
                let mut h_r = Vector6f::zeros();
                h_r[Z] = h_r_z;
                let mut h_e = Vector6f::zeros();
                h_e[Z] = wrench_z(state.f_z);
                let (x_f, next) = dfc_step(&h_r, &h_e, &dfc, st, dt);
                let mut x_c = x_f;
                let mut cost = 0.0;
                if loop_cfg.exploration > 0.0 {
                    x_c[Z] += dither.random_range(-loop_cfg.exploration..=loop_cfg.exploration);
                }
                if let Some(m) = model {
                    let s = measure(&state, x_f[Z]);
                    let sel = vaicam_select(x_f[Z], &s, h_r_z, &next, vaicam, m).map_err(|e| {
                        DataError::Step {
                            step: k,
                            t: r.t,
                            source: Box::new(e.into()),
                        }
                    })?;
                    x_c[Z] = sel.x_c;
                    cost = sel.cost;
                }
                *st = DfcState {
                    residual_prev: x_c - x_f,
                    ..next
                };
                (x_f, x_c, cost)
            }
        };

        samples.push(RolloutSample {
            t: r.t,
            state: measure(&state, x_f[Z]),
            x_c_z: x_c[Z],
            h_r_z,
            cost,
        });
        state = plant
            .advance(&state, &Vector3::new(x_c[0], x_c[1], x_c[2]))
            .map_err(|e| DataError::Step {
                step: k,
                t: r.t,
                source: Box::new(e.into()),
            })?;
    }

    Ok(Rollout {
        meta: RolloutMeta {
            kind: profile.kind(),
            seed: tag.seed,
            controller,
            velocity: tag.velocity,
            mode: tag.mode,
            dt,
            activation,
        },
        samples,
    })
}
