//! Force-tracking laboratory: an impedance-controlled plant with a compliant
//! contact surface, a PI direct force controller, a learned delta-state
//! ensemble, and a residual-action optimizer that corrects the force
//! controller's setpoint using that ensemble.

pub mod control;
pub mod data;
pub mod experiment;
pub mod model;
pub mod plant;
