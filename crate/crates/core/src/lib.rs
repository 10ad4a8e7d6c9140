//! Car-following models for adaptive-cruise-control data: the OVRV physics
//! model, LSTM-based neural models, a physics-informed variant and networks
//! trained under rational driving constraints (RDCs), together with
//! calibration, closed-loop rollout, constraint auditing and synthetic data
//! generation.

// Range checks are written as negated comparisons so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audit;
pub mod autodiff;
pub mod domain;
pub mod error;
pub mod io;
pub mod losses;
pub mod phys;
pub mod sim;
pub mod datagen;
pub mod neural;
pub mod train;

pub use error::{Error, Result};

/// Version of this library, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
