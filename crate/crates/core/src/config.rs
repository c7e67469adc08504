//! Calibration settings. Defaults are the published implementation constants.

use crate::geometry::Extrinsics;
use crate::model::{Encoding, ModelError, PositionalEncoding};

/// Outer weights combine the three objectives; `range`/`azimuth` weight the
/// two halves of the reprojection term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub rep: f64,
    pub mlp: f64,
    pub ray: f64,
    pub range: f64,
    pub azimuth: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { rep: 1000.0, mlp: 1000.0, ray: 100.0, range: 1.0, azimuth: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (key, v) in [
            ("weights.rep", self.rep),
            ("weights.mlp", self.mlp),
            ("weights.ray", self.ray),
            ("weights.range", self.range),
            ("weights.azimuth", self.azimuth),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(ConfigError::OutOfRange { key, value: v });
            }
        }
        if self.rep == 0.0 && self.mlp == 0.0 && self.ray == 0.0 {
            return Err(ConfigError::AllWeightsZero);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningRates {
    pub mlp: f64,
    pub rotation: f64,
    pub translation: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self { mlp: 0.005, rotation: 0.005, translation: 0.001 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibConfig {
    pub weights: LossWeights,
    pub learning_rates: LearningRates,
    pub pe_enabled: bool,
    pub pe_depth: usize,
    pub pe_include_input: bool,
    /// Circumscribed-sphere radius of the reflector, meters.
    pub target_radius: f64,
    /// Samples farther than this from the RADAR detection are ignored, meters.
    pub sampling_radius: f64,
    pub iterations: usize,
    /// Stop once the best total loss improved by less than
    /// `plateau_tolerance` (relative) over this many steps; 0 disables.
    pub plateau_window: usize,
    pub plateau_tolerance: f64,
    /// Leading steps during which only the network is trained.
    pub warmup_steps: usize,
    pub seed: u64,
    pub initial: Extrinsics,
}

impl Default for CalibConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            learning_rates: LearningRates::default(),
            pe_enabled: true,
            pe_depth: 6,
            pe_include_input: false,
            target_radius: 0.3,
            sampling_radius: 0.6,
            iterations: 2000,
            plateau_window: 50,
            plateau_tolerance: 1e-7,
            warmup_steps: 0,
            seed: 0,
            initial: Extrinsics::IDENTITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("`{key}` out of range: {value}")]
    OutOfRange { key: &'static str, value: f64 },
    #[error("all outer loss weights are zero")]
    AllWeightsZero,
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl CalibConfig {
    pub fn encoding(&self) -> Result<Encoding, ConfigError> {
        if self.pe_enabled {
            Ok(Encoding::Sinusoidal(PositionalEncoding::new(self.pe_depth, self.pe_include_input)?))
        } else {
            Ok(Encoding::Raw)
        }
    }

    /// Checks what an optimization run needs; zero learning rates are
    /// accepted (they freeze the corresponding group).
    pub fn validate_for_run(&self) -> Result<(), ConfigError> {
        self.weights.validate()?;
        for (key, v) in [
            ("learning_rates.mlp", self.learning_rates.mlp),
            ("learning_rates.rotation", self.learning_rates.rotation),
            ("learning_rates.translation", self.learning_rates.translation),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(ConfigError::OutOfRange { key, value: v });
            }
        }
        for (key, v) in [("target_radius", self.target_radius), ("sampling_radius", self.sampling_radius)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ConfigError::OutOfRange { key, value: v });
            }
        }
        if !(self.plateau_tolerance >= 0.0) {
            return Err(ConfigError::OutOfRange { key: "plateau_tolerance", value: self.plateau_tolerance });
        }
        self.encoding()?;
        Ok(())
    }

    /// Full check applied to user-supplied configuration: learning rates
    /// must be strictly positive.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.validate_for_run()?;
        for (key, v) in [
            ("learning_rates.mlp", self.learning_rates.mlp),
            ("learning_rates.rotation", self.learning_rates.rotation),
            ("learning_rates.translation", self.learning_rates.translation),
        ] {
            if v <= 0.0 {
                return Err(ConfigError::OutOfRange { key, value: v });
            }
        }
        Ok(())
    }
}
