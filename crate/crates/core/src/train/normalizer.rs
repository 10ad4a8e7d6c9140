use serde::{Deserialize, Serialize};

use crate::domain::Sample;
use crate::error::{Error, Result};

/// Relative spread below which a feature counts as constant.
const CONSTANT_REL_TOL: f64 = 1e-12;

/// Z-score statistics for one scalar quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    pub std: f64,
    /// Set when the fitted spread was zero; the quantity then passes through
    /// unchanged (`mean = 0`, `std = 1`).
    pub constant: bool,
}

impl Standardizer {
    pub const IDENTITY: Standardizer = Standardizer { mean: 0.0, std: 1.0, constant: false };

    pub fn fit(values: impl Iterator<Item = f64> + Clone) -> Result<Self> {
        let n = values.clone().count();
        if n == 0 {
            return Err(Error::invalid("cannot fit normalization statistics on an empty set"));
        }
        let mean = values.clone().sum::<f64>() / n as f64;
        let var = values.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        if !mean.is_finite() || !std.is_finite() {
            return Err(Error::invalid("normalization statistics are not finite"));
        }
        if std <= CONSTANT_REL_TOL * mean.abs().max(1.0) {
            return Ok(Self { mean: 0.0, std: 1.0, constant: true });
        }
        Ok(Self { mean, std, constant: false })
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) * (1.0 / self.std)
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// Training-split statistics for the three state features `(s, Δv, v)` and
/// the acceleration target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub features: [Standardizer; 3],
    pub target: Standardizer,
}

impl Normalizer {
    /// Leaves every quantity in physical units.
    pub const IDENTITY: Normalizer = Normalizer { features: [Standardizer::IDENTITY; 3], target: Standardizer::IDENTITY };

    /// Fits on the final state of each training window and its target.
    pub fn fit(train: &[Sample]) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::invalid("cannot fit a normalizer on an empty training set"));
        }
        let feature = |k: usize| Standardizer::fit(train.iter().map(move |s| s.phy_state.features()[k]));
        Ok(Self {
            features: [feature(0)?, feature(1)?, feature(2)?],
            target: Standardizer::fit(train.iter().map(|s| s.target_accel))?,
        })
    }

    pub fn apply_features(&self, x: [f64; 3]) -> [f64; 3] {
        [self.features[0].apply(x[0]), self.features[1].apply(x[1]), self.features[2].apply(x[2])]
    }

    pub fn invert_features(&self, z: [f64; 3]) -> [f64; 3] {
        [self.features[0].invert(z[0]), self.features[1].invert(z[1]), self.features[2].invert(z[2])]
    }

    pub fn apply_target(&self, a: f64) -> f64 {
        self.target.apply(a)
    }

    pub fn invert_target(&self, z: f64) -> f64 {
        self.target.invert(z)
    }
}
