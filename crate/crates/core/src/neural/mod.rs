//! Neural car-following models recorded on the autodiff tape: LSTM cells,
//! dense layers and the dual-branch network whose physics branch receives
//! the current state `[s, Δv, v]` directly, so that input-gradients of the
//! predicted acceleration can be penalized during training.

mod checkpoint;
mod layers;
mod racer;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest, MANIFEST_FILE, PARAMS_FILE};
pub use layers::{lstm_step, Activation, Dense, LstmCell, Mlp};
pub use racer::{BoundNet, InputGradients, NetConfig, Prediction, RacerNet, FEATURES};

#[cfg(test)]
mod tests;
