//! Force-tracking control stack: impedance wrench, direct force controller
//! (DFC) and the model-based residual-action optimizer.
//!
//! Wrenches follow the "exerted on the environment" convention: pressing down
//! on a surface below the end-effector gives `h_e,z = -f_z`. With that sign
//! the PI law `x_f = x_r + Gamma (K_P dh + K_I int dh)` lowers the setpoint
//! when the exerted force is short of the reference.

mod dfc;
mod vaicam;

pub use dfc::{dfc_step, ContactDetector, DfcConfig, DfcState};
pub use vaicam::{
    candidate_grid, regularizer, tracking_cost, vaicam_select, ControlError, Selection,
    VaicamParams,
};

use nalgebra::Vector6;

use crate::plant::ImpedanceGains;

/// Six-entry pose or wrench `(x, y, z, phi, theta, psi)`.
pub type Vector6f = Vector6<f64>;

/// Index of the force-controlled axis.
pub const Z: usize = 2;

/// Wrench component along `z` exerted on the environment by a normal force.
pub fn wrench_z(normal_force: f64) -> f64 {
    -normal_force
}

/// Compliant wrench `K_d dx - D_d xd`.
///
/// The surrogate plant applies this law internally; the function exists for
/// diagnostics and logging.
pub fn impedance_wrench(delta_x: &Vector6f, x_dot: &Vector6f, gains: &ImpedanceGains) -> Vector6f {
    gains.k_d.component_mul(delta_x) - gains.d_d.component_mul(x_dot)
}

/// Which controller closes the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ControllerKind {
    Dfc,
    Oracle,
    Vaicam,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 3] = [
        ControllerKind::Dfc,
        ControllerKind::Oracle,
        ControllerKind::Vaicam,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ControllerKind::Dfc => "dfc",
            ControllerKind::Oracle => "oracle",
            ControllerKind::Vaicam => "vaicam",
        }
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dfc" => Ok(ControllerKind::Dfc),
            "oracle" => Ok(ControllerKind::Oracle),
            "vaicam" => Ok(ControllerKind::Vaicam),
            other => Err(format!("unknown controller `{other}`")),
        }
    }
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn gains() -> ImpedanceGains {
        ImpedanceGains::new(1700.0, 300.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn zero_error_zero_wrench() {
        let w = impedance_wrench(&Vector6f::zeros(), &Vector6f::zeros(), &gains());
        assert_eq!(w, Vector6f::zeros());
    }

    #[test]
    fn stiffness_term() {
        let mut dx = Vector6f::zeros();
        dx[Z] = 0.01;
        let w = impedance_wrench(&dx, &Vector6f::zeros(), &gains());
        assert_abs_diff_eq!(w[Z], 17.0, epsilon = 1e-12);
    }

    #[test]
    fn damping_opposes_velocity() {
        let mut xd = Vector6f::zeros();
        xd[Z] = 0.1;
        let w = impedance_wrench(&Vector6f::zeros(), &xd, &gains());
        assert_abs_diff_eq!(w[Z], -4.123105625617661, epsilon = 1e-12);
    }

    #[test]
    fn controller_names_round_trip() {
        for c in ControllerKind::ALL {
            assert_eq!(c.as_str().parse::<ControllerKind>().unwrap(), c);
        }
        assert!("pid".parse::<ControllerKind>().is_err());
    }
}
