use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Which KL value the controller observes after each update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerSignal {
    /// Unweighted sum of the KL terms active in the current mode.
    Sum,
    /// The anchor term only.
    Anchor,
    /// The previous-policy term only.
    Stepwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KlControllerConfig {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Warm-up length `K`.
    pub warmup_steps: usize,
    /// Ring-buffer length `H`.
    pub history: usize,
    pub d_target: f64,
    /// Relative half-width of the dead band around `d_target`.
    pub band: f64,
    pub signal: ControllerSignal,
}

impl Default for KlControllerConfig {
    fn default() -> Self {
        Self {
            lambda_min: 1e-7,
            lambda_max: 1e-5,
            warmup_steps: 100,
            history: 10,
            d_target: 1e-2,
            band: 0.5,
            signal: ControllerSignal::Sum,
        }
    }
}

impl KlControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_min > 0.0 && self.lambda_min <= self.lambda_max)
            || !self.lambda_max.is_finite()
        {
            return Err(invalid(
                "lambda bounds must satisfy 0 < lambda_min <= lambda_max",
            ));
        }
        if self.warmup_steps == 0 || self.history == 0 {
            return Err(invalid("warmup_steps and history must be positive"));
        }
        if !(self.d_target > 0.0 && self.d_target.is_finite()) {
            return Err(invalid("d_target must be positive"));
        }
        if !(self.band > 0.0 && self.band < 1.0) {
            return Err(invalid("band must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Linear warm-up followed by a multiplicative dead-band controller.
#[derive(Debug, Clone, PartialEq)]
pub struct KlController {
    config: KlControllerConfig,
    lambda: f64,
    history: VecDeque<f64>,
}

impl KlController {
    pub fn new(config: KlControllerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            lambda: config.lambda_min,
            history: VecDeque::with_capacity(config.history),
            config,
        })
    }

    pub fn config(&self) -> &KlControllerConfig {
        &self.config
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn history(&self) -> impl Iterator<Item = &f64> {
        self.history.iter()
    }

    /// `λ_min + (λ_max - λ_min)·k/K` for `k ≤ K`; afterwards the current
    /// controller value. The returned value becomes the current one.
    pub fn warmup_lambda(&mut self, k: usize) -> f64 {
        let c = &self.config;
        if k <= c.warmup_steps {
            let frac = k as f64 / c.warmup_steps as f64;
            self.lambda = c.lambda_min + (c.lambda_max - c.lambda_min) * frac;
        }
        self.lambda
    }

    /// Record an observed KL and adjust `λ` against the mean of the last
    /// `H` observations: shrink by 0.9 above the band, grow by 1.1 below it,
    /// then clip to the bounds.
    pub fn controller_update(&mut self, observed_kl: f64) -> f64 {
        let c = self.config;
        if self.history.len() == c.history {
            self.history.pop_front();
        }
        self.history.push_back(observed_kl);
        let mean = self.history.iter().sum::<f64>() / self.history.len() as f64;
        if mean > (1.0 + c.band) * c.d_target {
            self.lambda *= 0.9;
        } else if mean < (1.0 - c.band) * c.d_target {
            self.lambda *= 1.1;
        }
        self.lambda = self.lambda.clamp(c.lambda_min, c.lambda_max);
        self.lambda
    }
}
