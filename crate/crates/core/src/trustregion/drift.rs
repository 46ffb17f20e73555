use serde::{Deserialize, Serialize};

use super::kl::KlMode;
use crate::error::{invalid, Result};

/// Scalar-policy drift experiment. Each step proposes `μ' = μ + drift` and
/// then takes one gradient step of the weighted KL penalty at `μ'`:
/// `μ ← μ' - lr·Σ_terms β·(μ' - μ_ref)/variance`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftConfig {
    pub steps: usize,
    pub drift: f64,
    pub variance: f64,
    pub lr: f64,
    pub beta_pos: f64,
    pub beta_vel: f64,
    pub anchor_interval: usize,
    pub mode: KlMode,
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            drift: 0.01,
            variance: 1.0,
            lr: 0.1,
            beta_pos: 0.5,
            beta_vel: 0.5,
            anchor_interval: 20,
            mode: KlMode::Dual,
        }
    }
}

/// `D_KL(π_k ‖ π_0) = μ_k²/(2·variance)` after each step `k = 1..=steps`.
///
/// Stepwise mode applies the whole budget `beta_pos + beta_vel` to the
/// previous-policy term; Moving applies it to the anchor term.
pub fn simulate_drift(cfg: &DriftConfig) -> Result<Vec<f64>> {
    if !(cfg.variance > 0.0) || cfg.anchor_interval == 0 {
        return Err(invalid(
            "drift simulation needs variance > 0 and anchor_interval >= 1",
        ));
    }
    let budget = cfg.beta_pos + cfg.beta_vel;
    let (bp, bv) = match cfg.mode {
        KlMode::NoKl => (0.0, 0.0),
        KlMode::Stepwise => (0.0, budget),
        KlMode::Moving => (budget, 0.0),
        KlMode::Dual => (cfg.beta_pos, cfg.beta_vel),
        KlMode::Fixed => (budget, 0.0),
    };
    let mut mu = 0.0f64;
    let mut anchor = 0.0f64;
    let mut out = Vec::with_capacity(cfg.steps);
    for k in 1..=cfg.steps {
        let prev = mu;
        let proposed = mu + cfg.drift;
        let pull = bp * (proposed - anchor) + bv * (proposed - prev);
        mu = proposed - cfg.lr * pull / cfg.variance;
        if cfg.mode != KlMode::Fixed && k % cfg.anchor_interval == 0 {
            anchor = mu;
        }
        out.push(mu * mu / (2.0 * cfg.variance));
    }
    Ok(out)
}
