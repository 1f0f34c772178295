//! Residual-action selection around the DFC setpoint.
//!
//! At each control step the setpoint on the force-controlled axis is chosen
//! from a uniform grid `[x_f - rho, x_f + rho]` by exhaustively minimising
//!
//! ```text
//! L(x_c) = |h_r - h_e_hat(s, x_c)| + sum_i alpha_i r_i^2 + sum_i beta_i |r_i - r_i(k-1)|,   r = x_c - x_f
//! ```
//!
//! where `h_e_hat` is the next-step wrench predicted by a transition model and
//! `r` is the residual added on top of the force controller's setpoint.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{wrench_z, DfcState, Z};
use crate::model::{ModelError, StateSample, TransitionModel};

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("invalid optimizer parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Optimizer weights and search neighbourhood for the controlled axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VaicamParams {
    /// Action-magnitude weight, 1/m^2 in cost units.
    pub alpha: f64,
    /// Action-variation weight, 1/m in cost units.
    pub beta: f64,
    /// Search radius, m.
    pub rho: f64,
    /// Grid points per controlled axis (odd).
    pub n_candidates: usize,
}

impl Default for VaicamParams {
    fn default() -> Self {
        Self {
            alpha: 25.0,
            beta: 200.0,
            rho: 0.003,
            n_candidates: 21,
        }
    }
}

impl VaicamParams {
    pub fn validate(&self) -> Result<(), ControlError> {
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(ControlError::Params(format!(
                "rho must be finite and >= 0, got {}",
                self.rho
            )));
        }
        if self.n_candidates == 0 || self.n_candidates.is_multiple_of(2) {
            return Err(ControlError::Params(format!(
                "n_candidates must be odd and >= 1, got {}",
                self.n_candidates
            )));
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(ControlError::Params(format!(
                "alpha and beta must be >= 0 (alpha={}, beta={})",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

/// `sum alpha_i r_i^2 + sum beta_i |r_i - prev_i|` over residual actions.
pub fn regularizer(residual: &[f64], residual_prev: &[f64], alpha: &[f64], beta: &[f64]) -> f64 {
    let magnitude: f64 = residual.iter().zip(alpha).map(|(x, a)| a * x * x).sum();
    let variation: f64 = residual
        .iter()
        .zip(residual_prev)
        .zip(beta)
        .map(|((x, p), b)| b * (x - p).abs())
        .sum();
    magnitude + variation
}

/// Expected force-tracking error term.
pub fn tracking_cost(h_r: f64, h_e_hat: f64) -> f64 {
    (h_r - h_e_hat).abs()
}

/// Uniform grid of `n` points over `[x_f - rho, x_f + rho]`; the middle point
/// is exactly `x_f`.
pub fn candidate_grid(x_f: f64, rho: f64, n: usize) -> Vec<f64> {
    if n <= 1 || rho == 0.0 {
        return vec![x_f];
    }
    let half = (n - 1) / 2;
    (0..n)
        .map(|i| {
            if i == half {
                x_f
            } else {
                let u = (i as f64 - half as f64) / half as f64;
                x_f + rho * u
            }
        })
        .collect()
}

/// Outcome of one optimizer call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub x_c: f64,
    /// Cost of the chosen candidate (0 when the neighbourhood is degenerate).
    pub cost: f64,
    /// Predicted next normal force for the chosen candidate, if queried.
    pub predicted_force: Option<f64>,
}

/// Chooses the setpoint on `z` minimising the predicted tracking cost plus
/// regulariser. Ties go to the candidate nearest `x_f`, then the lower one.
pub fn vaicam_select<M: TransitionModel + ?Sized>(
    x_f: f64,
    s: &StateSample,
    h_r: f64,
    st: &DfcState,
    params: &VaicamParams,
    model: &M,
) -> Result<Selection, ControlError> {
    params.validate()?;
    let grid = candidate_grid(x_f, params.rho, params.n_candidates);
    if grid.len() == 1 {
        return Ok(Selection {
            x_c: x_f,
            cost: 0.0,
            predicted_force: None,
        });
    }
    if !model.is_ready() {
        return Err(ModelError::NotReady.into());
    }
    let predictions = model.predict_candidates(s, &grid)?;
    let prev = [st.residual_prev[Z]];
    let (alpha, beta) = ([params.alpha], [params.beta]);

    let mut best: Option<(usize, f64)> = None;
    for (i, (&x_c, pred)) in grid.iter().zip(&predictions).enumerate() {
        let cost = tracking_cost(h_r, wrench_z(pred.f_z))
            + regularizer(&[x_c - x_f], &prev, &alpha, &beta);
        let better = match best {
            None => true,
            Some((j, c)) => {
                cost < c
                    || (cost == c && {
                        let (di, dj) = ((x_c - x_f).abs(), (grid[j] - x_f).abs());
                        di < dj || (di == dj && x_c < grid[j])
                    })
            }
        };
        if better {
            best = Some((i, cost));
        }
    }
    let (i, cost) = best.expect("grid is non-empty");
    Ok(Selection {
        x_c: grid[i],
        cost,
        predicted_force: Some(predictions[i].f_z),
    })
}
