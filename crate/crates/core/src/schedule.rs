//! Noise-level grids `σ_0 > σ_1 > ... > σ_T` driving every sampler.
//!
//! A schedule holds `T + 1` levels including the terminal one; step `t`
//! moves from `sigmas[t]` to `sigmas[t + 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Default number of sampling steps for the toy experiments.
pub const DEFAULT_STEPS: usize = 10;

/// Default lower bound on `1 - σ`.
pub const DEFAULT_FLOOR: f64 = 3e-3;

/// How a schedule was produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Regime {
    /// Equally spaced levels down to zero.
    Default,
    /// The first level is repeated, producing a zero-width first interval.
    FlowGrpoStyle,
    /// Every level bounded by `1 - floor`.
    Clamped { floor: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    sigmas: Vec<f64>,
    regime: Regime,
}

fn check_sigma_max(sigma_max: f64) -> Result<()> {
    if !(sigma_max > 0.0 && sigma_max <= 1.0) {
        return Err(invalid(format!(
            "sigma_max must lie in (0, 1], got {sigma_max}"
        )));
    }
    Ok(())
}

/// `sigma_max · k / n`, exact at both ends.
fn level(sigma_max: f64, k: usize, n: usize) -> f64 {
    if k == n {
        sigma_max
    } else {
        sigma_max * k as f64 / n as f64
    }
}

impl NoiseSchedule {
    /// `steps + 1` equally spaced levels from `sigma_max` down to 0.
    pub fn linear(steps: usize, sigma_max: f64) -> Result<Self> {
        if steps == 0 {
            return Err(invalid("schedule needs at least one step"));
        }
        check_sigma_max(sigma_max)?;
        let sigmas = (0..=steps)
            .map(|i| level(sigma_max, steps - i, steps))
            .collect();
        Ok(Self {
            sigmas,
            regime: Regime::Default,
        })
    }

    /// Schedule whose first two entries both equal `sigma_max`, followed by a
    /// linear descent to 0 over the remaining `steps - 1` intervals.
    pub fn flowgrpo_style(steps: usize, sigma_max: f64) -> Result<Self> {
        if steps < 2 {
            return Err(invalid(format!(
                "repeated-head schedule needs at least two steps, got {steps}"
            )));
        }
        check_sigma_max(sigma_max)?;
        let tail = steps - 1;
        let mut sigmas = Vec::with_capacity(steps + 1);
        sigmas.push(sigma_max);
        sigmas.extend((0..=tail).map(|i| level(sigma_max, tail - i, tail)));
        Ok(Self {
            sigmas,
            regime: Regime::FlowGrpoStyle,
        })
    }

    /// Replace every level by `min(σ, 1 - floor)`.
    pub fn clamped(&self, floor: f64) -> Result<Self> {
        if !(floor > 0.0 && floor < 1.0) {
            return Err(invalid(format!(
                "clamp floor must lie in (0, 1), got {floor}"
            )));
        }
        let cap = 1.0 - floor;
        Ok(Self {
            sigmas: self.sigmas.iter().map(|&s| s.min(cap)).collect(),
            regime: Regime::Clamped { floor },
        })
    }

    /// Build from explicit levels. Levels must be finite, inside `[0, 1]`,
    /// non-increasing, and at least two long.
    pub fn from_sigmas(sigmas: Vec<f64>, regime: Regime) -> Result<Self> {
        if sigmas.len() < 2 {
            return Err(invalid("schedule needs at least two levels"));
        }
        if sigmas
            .iter()
            .any(|s| !s.is_finite() || *s < 0.0 || *s > 1.0)
        {
            return Err(invalid("noise levels must lie in [0, 1]"));
        }
        if sigmas.windows(2).any(|w| w[1] > w[0]) {
            return Err(invalid("noise levels must be non-increasing"));
        }
        Ok(Self { sigmas, regime })
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    /// Lower bound on `1 - σ` enforced by this schedule (0 when unclamped).
    pub fn floor_one_minus_sigma(&self) -> f64 {
        match self.regime {
            Regime::Clamped { floor } => floor,
            _ => 0.0,
        }
    }

    /// Number of sampling steps `T`.
    pub fn steps(&self) -> usize {
        self.sigmas.len() - 1
    }

    /// `(σ_t, σ_{t+1})` for step `t`.
    pub fn interval(&self, t: usize) -> (f64, f64) {
        (self.sigmas[t], self.sigmas[t + 1])
    }

    pub fn intervals(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.sigmas.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigmas[0]
    }
}
