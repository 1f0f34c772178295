use serde::{Deserialize, Serialize};

use super::Vector6f;

/// PI direct force controller parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DfcConfig {
    /// Proportional gain, m/N.
    pub k_p: f64,
    /// Integral gain, m/(N s).
    pub k_i: f64,
    /// Task specification mask: 1 for force-controlled axes.
    pub gamma: [u8; 6],
    /// Reference pose tracked on position-controlled axes.
    pub x_r: Vector6f,
    /// Symmetric anti-windup clamp on the integral, N s.
    pub integrator_limit: f64,
}

impl DfcConfig {
    /// Force control along `z` only.
    pub fn z_only(k_p: f64, k_i: f64, integrator_limit: f64) -> Self {
        Self {
            k_p,
            k_i,
            gamma: [0, 0, 1, 0, 0, 0],
            x_r: Vector6f::zeros(),
            integrator_limit,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.gamma.iter().any(|&g| g > 1) {
            return Err(format!(
                "task specification entries must be 0 or 1, got {:?}",
                self.gamma
            ));
        }
        if !(self.k_p >= 0.0 && self.k_i >= 0.0) {
            return Err(format!(
                "DFC gains must be non-negative (k_p={}, k_i={})",
                self.k_p, self.k_i
            ));
        }
        if !(self.integrator_limit > 0.0) {
            return Err(format!(
                "integrator limit must be positive, got {}",
                self.integrator_limit
            ));
        }
        Ok(())
    }
}

/// Integrator and memory threaded through successive control steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DfcState {
    /// Accumulated wrench error, N s.
    pub integral: Vector6f,
    /// Wrench error of the previous step, used by the trapezoid rule.
    pub prev_error: Option<Vector6f>,
    /// Residual `x_c - x_f` applied at the previous step.
    pub residual_prev: Vector6f,
}

impl DfcState {
    /// Fresh state at controller activation: empty integrator, no residual.
    pub fn reset() -> Self {
        Self {
            integral: Vector6f::zeros(),
            prev_error: None,
            residual_prev: Vector6f::zeros(),
        }
    }
}

/// One PI step. Returns the force-controller setpoint `x_f` and the updated
/// state (`residual_prev` is left for the caller to set once the applied
/// setpoint is known).
pub fn dfc_step(
    h_r: &Vector6f,
    h_e: &Vector6f,
    cfg: &DfcConfig,
    st: &DfcState,
    dt: f64,
) -> (Vector6f, DfcState) {
    debug_assert!(dt > 0.0);
    let error = h_r - h_e;
    let prev = st.prev_error.unwrap_or(error);
    let limit = cfg.integrator_limit;
    let integral = (st.integral + (error + prev) * (0.5 * dt)).map(|i| i.clamp(-limit, limit));

    let mut x_f = cfg.x_r;
    for i in 0..6 {
        if cfg.gamma[i] == 1 {
            x_f[i] += cfg.k_p * error[i] + cfg.k_i * integral[i];
        }
    }
    let next = DfcState {
        integral,
        prev_error: Some(error),
        residual_prev: st.residual_prev,
    };
    (x_f, next)
}

/// Declares contact once the normal force stays above a threshold for a
/// number of consecutive control steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactDetector {
    pub threshold: f64,
    pub required_steps: usize,
    #[serde(skip)]
    count: usize,
}

impl ContactDetector {
    pub fn new(threshold: f64, required_steps: usize) -> Self {
        Self {
            threshold,
            required_steps: required_steps.max(1),
            count: 0,
        }
    }

    /// Feeds one force sample; returns true once contact is established.
    pub fn update(&mut self, f_z: f64) -> bool {
        if f_z > self.threshold {
            self.count += 1;
        } else {
            self.count = 0;
        }
        self.count >= self.required_steps
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::Z;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn table_gains() -> DfcConfig {
        let mut cfg = DfcConfig::z_only(1e-6, 2e-3, 5e4);
        cfg.x_r = Vector6f::new(0.1, 0.2, -0.002, 0.0, 0.0, 0.0);
        cfg
    }

    fn wrench(z: f64) -> Vector6f {
        let mut h = Vector6f::zeros();
        h[Z] = z;
        h
    }

    #[test]
    fn zero_error_is_identity() {
        let cfg = table_gains();
        let st = DfcState::reset();
        let (x_f, _) = dfc_step(&wrench(-5.0), &wrench(-5.0), &cfg, &st, 0.01);
        assert_eq!(x_f, cfg.x_r);
    }

    #[test]
    fn proportional_term() {
        let mut cfg = table_gains();
        cfg.k_i = 0.0;
        let st = DfcState::reset();
        let (x_f, _) = dfc_step(&wrench(10.0), &wrench(0.0), &cfg, &st, 1e-3);
        assert_abs_diff_eq!(x_f[Z], cfg.x_r[Z] + 1e-5, epsilon = 1e-15);
    }

    #[test]
    fn first_step_with_integral() {
        // Trapezoid with the first error repeated: integral = 10 N * 1 ms.
        let cfg = table_gains();
        let st = DfcState::reset();
        let (x_f, st) = dfc_step(&wrench(10.0), &wrench(0.0), &cfg, &st, 1e-3);
        assert_abs_diff_eq!(st.integral[Z], 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(x_f[Z], cfg.x_r[Z] + 1e-5 + 2e-5, epsilon = 1e-15);
    }

    #[test]
    fn trapezoidal_accumulation() {
        let cfg = table_gains();
        let st = DfcState::reset();
        let (_, st) = dfc_step(&wrench(2.0), &wrench(0.0), &cfg, &st, 0.1);
        let (_, st) = dfc_step(&wrench(4.0), &wrench(0.0), &cfg, &st, 0.1);
        assert_abs_diff_eq!(st.integral[Z], 0.2 + 0.3, epsilon = 1e-12);
    }

    #[test]
    fn empty_mask_tracks_reference() {
        let mut cfg = table_gains();
        cfg.gamma = [0; 6];
        let st = DfcState::reset();
        let (x_f, _) = dfc_step(&wrench(123.0), &wrench(-7.0), &cfg, &st, 1e-3);
        assert_eq!(x_f, cfg.x_r);
    }

    #[test]
    fn config_validation() {
        assert!(table_gains().validate().is_ok());
        let mut bad = table_gains();
        bad.gamma[0] = 2;
        assert!(bad.validate().is_err());
        let mut bad = table_gains();
        bad.integrator_limit = 0.0;
        assert!(bad.validate().is_err());
        let mut bad = table_gains();
        bad.k_i = -1.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn contact_debounce() {
        let mut det = ContactDetector::new(0.5, 3);
        assert!(!det.update(1.0));
        assert!(!det.update(1.0));
        assert!(!det.update(0.4));
        assert!(!det.update(1.0));
        assert!(!det.update(1.0));
        assert!(det.update(1.0));
    }

    proptest! {
        #[test]
        fn masked_axes_follow_reference(
            errs in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..50),
            mask in proptest::array::uniform6(0u8..2),
        ) {
            let mut cfg = table_gains();
            cfg.gamma = mask;
            let mut st = DfcState::reset();
            for (r, e) in errs {
                let h_r = Vector6f::repeat(r);
                let h_e = Vector6f::repeat(e);
                let (x_f, next) = dfc_step(&h_r, &h_e, &cfg, &st, 1e-2);
                for i in 0..6 {
                    if mask[i] == 0 {
                        prop_assert_eq!(x_f[i], cfg.x_r[i]);
                    }
                }
                st = next;
            }
        }

        #[test]
        fn integral_respects_clamp(
            errs in proptest::collection::vec(-1e4f64..1e4, 1..200),
            limit in 1e-3f64..10.0,
            dt in 1e-4f64..0.5,
        ) {
            let mut cfg = table_gains();
            cfg.integrator_limit = limit;
            let mut st = DfcState::reset();
            for e in errs {
                let (_, next) = dfc_step(&wrench(e), &wrench(0.0), &cfg, &st, dt);
                prop_assert!(next.integral.iter().all(|i| i.abs() <= limit));
                st = next;
            }
        }
    }
}
