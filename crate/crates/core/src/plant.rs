//! Task-space surrogate of an impedance-controlled manipulator pressing on a
//! compliant, frictional surface.
//!
//! Under perfect dynamics compensation the closed loop reduces to a virtual
//! mass-spring-damper per translational axis:
//!
//! ```text
//! M_v * xdd = K_d (x_c - x) - D_d * xd - h_e
//! ```
//!
//! where `h_e` is the wrench the end-effector exerts on the environment. The
//! environment reacts with a unilateral spring-damper along `z` whose
//! stiffness grows with tangential speed, plus regularised Coulomb friction in
//! the contact plane. Rotational axes are held at their reference.

use nalgebra::{Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Below this tangential speed (m/s) Coulomb friction is ramped linearly.
const FRICTION_REGULARIZATION_SPEED: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("plant configuration error: {0}")]
    Config(String),
    #[error("integration fault at t = {t:.6} s: {what}")]
    IntegrationFault { t: f64, what: String },
}

/// Full simulated task-space state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantState {
    pub x: Vector3<f64>,
    pub x_dot: Vector3<f64>,
    /// Normal contact force (compression positive), N.
    pub f_z: f64,
    pub t: f64,
}

impl PlantState {
    pub fn at_rest(x: Vector3<f64>) -> Self {
        Self {
            x,
            x_dot: Vector3::zeros(),
            f_z: 0.0,
            t: 0.0,
        }
    }

    pub fn tangential_speed(&self) -> f64 {
        tangential_speed(&self.x_dot)
    }

    fn is_finite(&self) -> bool {
        self.x
            .iter()
            .chain(self.x_dot.iter())
            .all(|c| c.is_finite())
            && self.f_z.is_finite()
            && self.t.is_finite()
    }
}

/// Compliant surface parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvironmentModel {
    /// Surface height, m. Penetration is `z_surface - z`.
    pub z_surface: f64,
    /// Contact stiffness, N/m.
    pub k_e: f64,
    /// Contact damping, N s/m.
    pub d_e: f64,
    /// Tangential-velocity coupling of the stiffness, s/m.
    pub c_v: f64,
    /// Coulomb friction coefficient.
    pub mu: f64,
}

impl Default for EnvironmentModel {
    fn default() -> Self {
        Self {
            z_surface: 0.0,
            k_e: 10_000.0,
            d_e: 50.0,
            c_v: 0.5,
            mu: 0.2,
        }
    }
}

impl EnvironmentModel {
    pub fn validate(&self) -> Result<(), PlantError> {
        let ok = self.z_surface.is_finite()
            && self.k_e.is_finite()
            && self.k_e > 0.0
            && self.d_e >= 0.0
            && self.c_v >= 0.0
            && self.mu >= 0.0
            && self.d_e.is_finite()
            && self.c_v.is_finite()
            && self.mu.is_finite();
        if ok {
            Ok(())
        } else {
            Err(PlantError::Config(format!(
                "environment requires k_e > 0 and d_e, c_v, mu >= 0 (got {self:?})"
            )))
        }
    }
}

/// Diagonal Cartesian impedance: `x, y, z` translational then three
/// rotational entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpedanceGains {
    pub k_d: Vector6<f64>,
    pub d_d: Vector6<f64>,
    pub xi: f64,
    /// Virtual task-space mass, kg.
    pub m_v: f64,
}

impl ImpedanceGains {
    /// Builds `K_d = diag(k_t, k_t, k_t, k_r, k_r, k_r)` and
    /// `D_d = diag(xi * sqrt(K_d,i))`.
    pub fn new(
        k_translational: f64,
        k_rotational: f64,
        xi: f64,
        m_v: f64,
    ) -> Result<Self, PlantError> {
        if !(k_translational > 0.0 && k_rotational > 0.0 && xi > 0.0 && m_v > 0.0) {
            return Err(PlantError::Config(format!(
                "impedance gains must be positive (k_t={k_translational}, k_r={k_rotational}, xi={xi}, m_v={m_v})"
            )));
        }
        let k_d = Vector6::new(
            k_translational,
            k_translational,
            k_translational,
            k_rotational,
            k_rotational,
            k_rotational,
        );
        let d_d = k_d.map(|k| xi * k.sqrt());
        Ok(Self { k_d, d_d, xi, m_v })
    }

    /// Largest undamped natural frequency of the free impedance, rad/s.
    pub fn natural_frequency(&self) -> f64 {
        (self.k_d.max() / self.m_v).sqrt()
    }

    pub fn max_stable_dt(&self) -> f64 {
        2.0 / self.natural_frequency()
    }
}

/// Tangential speed `sqrt(xd^2 + yd^2)` in the contact plane.
pub fn tangential_speed(x_dot: &Vector3<f64>) -> f64 {
    x_dot.x.hypot(x_dot.y)
}

/// Normal contact force for an end-effector at height `z` moving with normal
/// velocity `z_dot` and tangential speed `v`.
pub fn contact_force(
    z: f64,
    z_dot: f64,
    v: f64,
    env: &EnvironmentModel,
) -> Result<f64, PlantError> {
    if !(z.is_finite() && z_dot.is_finite() && v.is_finite()) {
        return Err(PlantError::IntegrationFault {
            t: f64::NAN,
            what: format!("non-finite contact query (z={z}, z_dot={z_dot}, v={v})"),
        });
    }
    let penetration = env.z_surface - z;
    if penetration <= 0.0 {
        return Ok(0.0);
    }
    let spring = env.k_e * penetration * (1.0 + env.c_v * v);
    let damper = env.d_e * -z_dot;
    Ok((spring + damper).max(0.0))
}

/// Translational acceleration of the closed loop.
fn acceleration(
    x: &Vector3<f64>,
    x_dot: &Vector3<f64>,
    x_c: &Vector3<f64>,
    gains: &ImpedanceGains,
    env: &EnvironmentModel,
) -> Vector3<f64> {
    let k = gains.k_d.fixed_rows::<3>(0);
    let d = gains.d_d.fixed_rows::<3>(0);
    let mut force = k.component_mul(&(x_c - x)) - d.component_mul(x_dot);

    let v = tangential_speed(x_dot);
    // Non-finite values propagate and are caught after the step.
    let f_n = contact_force(x.z, x_dot.z, v, env).unwrap_or(f64::NAN);
    if f_n > 0.0 {
        force.z += f_n;
        let friction = env.mu * f_n / v.max(FRICTION_REGULARIZATION_SPEED);
        force.x -= friction * x_dot.x;
        force.y -= friction * x_dot.y;
    }
    force / gains.m_v
}

/// Advances the plant by one fixed RK4 step of length `dt` holding the
/// commanded translational setpoint `x_c`.
pub fn step(
    state: &PlantState,
    x_c: &Vector3<f64>,
    dt: f64,
    gains: &ImpedanceGains,
    env: &EnvironmentModel,
) -> Result<PlantState, PlantError> {
    if !(dt > 0.0 && dt <= gains.max_stable_dt()) {
        return Err(PlantError::Config(format!(
            "dt = {dt} outside (0, {}] for natural frequency {:.3} rad/s",
            gains.max_stable_dt(),
            gains.natural_frequency()
        )));
    }

    let (x0, v0) = (state.x, state.x_dot);
    let a1 = acceleration(&x0, &v0, x_c, gains, env);
    let (x1, v1) = (x0 + v0 * (dt / 2.0), v0 + a1 * (dt / 2.0));
    let a2 = acceleration(&x1, &v1, x_c, gains, env);
    let (x2, v2) = (x0 + v1 * (dt / 2.0), v0 + a2 * (dt / 2.0));
    let a3 = acceleration(&x2, &v2, x_c, gains, env);
    let (x3, v3) = (x0 + v2 * dt, v0 + a3 * dt);
    let a4 = acceleration(&x3, &v3, x_c, gains, env);

    let x = x0 + (v0 + v1 * 2.0 + v2 * 2.0 + v3) * (dt / 6.0);
    let x_dot = v0 + (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (dt / 6.0);
    let t = state.t + dt;

    let mut next = PlantState {
        x,
        x_dot,
        f_z: 0.0,
        t,
    };
    if !next.is_finite() {
        return Err(PlantError::IntegrationFault {
            t,
            what: "state diverged".into(),
        });
    }
    next.f_z = contact_force(x.z, x_dot.z, tangential_speed(&x_dot), env).map_err(|e| match e {
        PlantError::IntegrationFault { what, .. } => PlantError::IntegrationFault { t, what },
        other => other,
    })?;
    Ok(next)
}

/// Kinetic plus elastic energy of the free impedance about `x_c`, J.
pub fn free_energy(state: &PlantState, x_c: &Vector3<f64>, gains: &ImpedanceGains) -> f64 {
    let k = gains.k_d.fixed_rows::<3>(0);
    let dx = x_c - state.x;
    0.5 * gains.m_v * state.x_dot.norm_squared() + 0.5 * k.dot(&dx.component_mul(&dx))
}

/// A plant instance that sub-steps the integrator over one control period.
#[derive(Debug, Clone)]
pub struct Plant {
    pub gains: ImpedanceGains,
    pub env: EnvironmentModel,
    /// Integrator step, s.
    pub dt: f64,
    /// Integrator steps per control period.
    pub substeps: usize,
}

impl Plant {
    pub fn new(
        gains: ImpedanceGains,
        env: EnvironmentModel,
        dt: f64,
        control_period: f64,
    ) -> Result<Self, PlantError> {
        env.validate()?;
        if !(dt > 0.0 && dt <= gains.max_stable_dt()) {
            return Err(PlantError::Config(format!(
                "integrator dt = {dt} outside (0, {}]",
                gains.max_stable_dt()
            )));
        }
        let ratio = control_period / dt;
        let substeps = ratio.round();
        if !(substeps >= 1.0 && (ratio - substeps).abs() < 1e-9) {
            return Err(PlantError::Config(format!(
                "control period {control_period} is not a whole multiple of dt {dt}"
            )));
        }
        Ok(Self {
            gains,
            env,
            dt,
            substeps: substeps as usize,
        })
    }

    pub fn control_period(&self) -> f64 {
        self.dt * self.substeps as f64
    }

    /// Holds `x_c` for one control period.
    pub fn advance(
        &self,
        state: &PlantState,
        x_c: &Vector3<f64>,
    ) -> Result<PlantState, PlantError> {
        let mut s = *state;
        for _ in 0..self.substeps {
            s = step(&s, x_c, self.dt, &self.gains, &self.env)?;
        }
        Ok(s)
    }

    /// State with the contact force evaluated at `x`, `x_dot`.
    pub fn settle_force(&self, mut state: PlantState) -> Result<PlantState, PlantError> {
        state.f_z = contact_force(
            state.x.z,
            state.x_dot.z,
            state.tangential_speed(),
            &self.env,
        )?;
        Ok(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn env(c_v: f64) -> EnvironmentModel {
        EnvironmentModel {
            c_v,
            ..Default::default()
        }
    }

    #[test]
    fn no_contact_above_surface() {
        let e = env(0.5);
        assert_eq!(contact_force(0.01, -1.0, 0.3, &e).unwrap(), 0.0);
    }

    #[test]
    fn static_penetration_force() {
        let e = env(0.0);
        assert_abs_diff_eq!(
            contact_force(-0.001, 0.0, 0.0, &e).unwrap(),
            10.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn velocity_coupled_stiffness() {
        let e = env(0.5);
        assert_abs_diff_eq!(
            contact_force(-0.001, 0.0, 0.5, &e).unwrap(),
            12.5,
            epsilon = 1e-12
        );
    }

    #[test]
    fn contact_never_pulls() {
        let e = env(0.5);
        // Fast separation would make the damper term dominate.
        assert_eq!(contact_force(-1e-4, 10.0, 0.0, &e).unwrap(), 0.0);
    }

    #[test]
    fn non_finite_contact_query_is_a_fault() {
        let e = env(0.5);
        assert!(matches!(
            contact_force(f64::NAN, 0.0, 0.0, &e),
            Err(PlantError::IntegrationFault { .. })
        ));
    }

    #[test]
    fn tangential_speed_cases() {
        assert_eq!(tangential_speed(&Vector3::new(0.0, 0.0, -0.1)), 0.0);
        assert_abs_diff_eq!(
            tangential_speed(&Vector3::new(0.3, 0.4, 0.0)),
            0.5,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            tangential_speed(&Vector3::new(0.2, 0.0, -0.05)),
            0.2,
            epsilon = 1e-15
        );
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let gains = ImpedanceGains::new(1700.0, 300.0, 1.0, 1.0).unwrap();
        let s = PlantState::at_rest(Vector3::new(0.1, -0.2, 0.05));
        let next = step(&s, &s.x, 1e-3, &gains, &env(0.5)).unwrap();
        assert_eq!(next.x, s.x);
        assert_eq!(next.x_dot, s.x_dot);
        assert_eq!(next.f_z, 0.0);
    }

    #[test]
    fn stability_guard_rejects_large_dt() {
        let gains = ImpedanceGains::new(1700.0, 300.0, 1.0, 1.0).unwrap();
        let s = PlantState::at_rest(Vector3::new(0.0, 0.0, 0.05));
        let dt = 1.01 * gains.max_stable_dt();
        assert!(matches!(
            step(&s, &s.x, dt, &gains, &env(0.5)),
            Err(PlantError::Config(_))
        ));
        assert!(matches!(
            step(&s, &s.x, 0.0, &gains, &env(0.5)),
            Err(PlantError::Config(_))
        ));
    }

    #[test]
    fn divergence_is_reported() {
        let gains = ImpedanceGains::new(1700.0, 300.0, 1.0, 1.0).unwrap();
        let mut s = PlantState::at_rest(Vector3::new(0.0, 0.0, 0.05));
        s.x_dot.x = f64::INFINITY;
        assert!(matches!(
            step(&s, &s.x, 1e-3, &gains, &env(0.5)),
            Err(PlantError::IntegrationFault { .. })
        ));
    }

    #[test]
    fn damping_follows_ratio() {
        let gains = ImpedanceGains::new(1700.0, 300.0, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(gains.d_d[2], 1700f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(gains.d_d[4], 300f64.sqrt(), epsilon = 1e-12);
        assert!(ImpedanceGains::new(-1.0, 300.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn environment_validation() {
        assert!(EnvironmentModel::default().validate().is_ok());
        let bad = EnvironmentModel {
            k_e: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = EnvironmentModel {
            mu: -0.1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn control_period_must_be_whole_multiple() {
        let gains = ImpedanceGains::new(1700.0, 300.0, 1.0, 1.0).unwrap();
        assert!(Plant::new(gains, env(0.5), 1e-3, 1e-2).is_ok());
        assert!(Plant::new(gains, env(0.5), 1e-3, 1.5e-3).is_err());
    }
}
