//! Training configuration as `key=value` text.

use crate::loss::DEFAULT_LAMBDA;
use crate::tensor::CganError;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Weight of the L1 term.
    pub lambda: f64,
    pub lr_g: f64,
    pub lr_d: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Share of pairs, taken from the end of the dataset, kept out of training.
    pub holdout_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: DEFAULT_LAMBDA,
            lr_g: 5e-3,
            lr_d: 5e-3,
            momentum: 0.9,
            epochs: 50,
            batch_size: 8,
            seed: 0,
            holdout_fraction: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), CganError> {
        let bad = |m: &str| Err(CganError::Config(m.to_string()));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be finite and >= 0");
        }
        if !(self.lr_g > 0.0 && self.lr_d > 0.0 && self.lr_g.is_finite() && self.lr_d.is_finite()) {
            return bad("learning rates must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return bad("holdout_fraction must lie in [0, 1)");
        }
        Ok(())
    }

    /// Applies `key=value` lines over `self`; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CganError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CganError::Config(format!("line {}: expected key=value", i + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CganError> {
        let num = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| CganError::Config(format!("{key}: not a number: {v:?}")))
        };
        let int = |v: &str| {
            v.parse::<u64>()
                .map_err(|_| CganError::Config(format!("{key}: not an integer: {v:?}")))
        };
        match key {
            "lambda" => self.lambda = num(value)?,
            "lr_g" => self.lr_g = num(value)?,
            "lr_d" => self.lr_d = num(value)?,
            "momentum" => self.momentum = num(value)?,
            "epochs" => self.epochs = int(value)? as usize,
            "batch_size" => self.batch_size = int(value)? as usize,
            "seed" => self.seed = int(value)?,
            "holdout_fraction" => self.holdout_fraction = num(value)?,
            _ => return Err(CganError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        format!(
            "lambda={}\nlr_g={}\nlr_d={}\nmomentum={}\nepochs={}\nbatch_size={}\nseed={}\nholdout_fraction={}\n",
            self.lambda,
            self.lr_g,
            self.lr_d,
            self.momentum,
            self.epochs,
            self.batch_size,
            self.seed,
            self.holdout_fraction
        )
    }
}
