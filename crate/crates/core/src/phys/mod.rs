//! Optimal Velocity Relative Velocity (OVRV) car-following model and its
//! calibration.

pub mod nelder_mead;
mod ovrv;

pub use ovrv::{calibrate_ovrv, ovrv_accel, ovrv_rdc_derivatives, Calibration, OvrvParams};
