use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::flownet::{transition_means, StepInput, VelocityNet};
use crate::rlcore::RolloutGroup;

/// Which reference policies the penalty pulls towards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlMode {
    /// No penalty.
    NoKl,
    /// KL to the initial policy.
    Fixed,
    /// KL to the policy before the current update.
    Stepwise,
    /// KL to the periodically refreshed anchor.
    Moving,
    /// `β_pos` · anchor term + `β_vel` · stepwise term.
    Dual,
}

impl KlMode {
    pub const ALL: [KlMode; 5] = [
        KlMode::NoKl,
        KlMode::Fixed,
        KlMode::Stepwise,
        KlMode::Moving,
        KlMode::Dual,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KlMode::NoKl => "no_kl",
            KlMode::Fixed => "fixed",
            KlMode::Stepwise => "stepwise",
            KlMode::Moving => "moving",
            KlMode::Dual => "dual",
        }
    }
}

/// `‖μ_θ - μ_ref‖² / (2Σ)`: KL between isotropic Gaussians sharing the
/// variance `Σ`.
pub fn gaussian_kl(mu_theta: &[f64], mu_ref: &[f64], variance: f64) -> Result<f64> {
    if !(variance > 0.0) {
        return Err(Error::Degenerate(format!("KL with variance {variance}")));
    }
    if mu_theta.len() != mu_ref.len() {
        return Err(invalid("mean dimensions differ"));
    }
    let sq: f64 = mu_theta
        .iter()
        .zip(mu_ref)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sq / (2.0 * variance))
}

/// Mean of `logp_old - logp_new` over every recorded entry.
pub fn stepwise_kl_estimate(logp_old: &[f64], logp_new: &[f64]) -> Result<f64> {
    if logp_old.len() != logp_new.len() {
        return Err(invalid(format!(
            "log-prob lists differ in length ({} vs {})",
            logp_old.len(),
            logp_new.len()
        )));
    }
    if logp_old.is_empty() {
        return Err(invalid("no log-probabilities to compare"));
    }
    Ok(logp_old
        .iter()
        .zip(logp_new)
        .map(|(a, b)| a - b)
        .sum::<f64>()
        / logp_old.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrustRegionConfig {
    pub mode: KlMode,
    pub anchor_interval: usize,
    pub beta_pos: f64,
    pub beta_vel: f64,
}

impl Default for TrustRegionConfig {
    fn default() -> Self {
        Self {
            mode: KlMode::Dual,
            anchor_interval: 20,
            beta_pos: 1.0,
            beta_vel: 0.5,
        }
    }
}

impl TrustRegionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.anchor_interval == 0 {
            return Err(invalid("anchor_interval must be at least 1"));
        }
        if !(self.beta_pos >= 0.0 && self.beta_vel >= 0.0)
            || !self.beta_pos.is_finite()
            || !self.beta_vel.is_finite()
        {
            return Err(invalid("beta weights must be finite and non-negative"));
        }
        if self.mode == KlMode::Dual && !(self.beta_pos > 0.0 && self.beta_vel > 0.0) {
            return Err(invalid("dual mode needs positive beta_pos and beta_vel"));
        }
        Ok(())
    }
}

/// Reference snapshots and the update counter. Snapshots are deep copies.
#[derive(Debug, Clone)]
pub struct TrustRegionState {
    pub config: TrustRegionConfig,
    pub anchor: Option<VelocityNet>,
    pub prev: Option<VelocityNet>,
    pub init: Option<VelocityNet>,
    /// Optimizer steps taken so far.
    pub step: usize,
}

impl TrustRegionState {
    /// All three snapshots set to `initial`.
    pub fn new(config: TrustRegionConfig, initial: &VelocityNet) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            anchor: Some(initial.clone()),
            prev: Some(initial.clone()),
            init: Some(initial.clone()),
            step: 0,
        })
    }

    /// State without snapshots; they must be filled before use.
    pub fn detached(config: TrustRegionConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            anchor: None,
            prev: None,
            init: None,
            step: 0,
        })
    }

    /// `π_{k-1} ← π_θ`.
    pub fn refresh_prev(&mut self, current: &VelocityNet) {
        self.prev = Some(current.clone());
    }

    fn snapshot<'a>(
        &'a self,
        which: &'a Option<VelocityNet>,
        name: &str,
    ) -> Result<&'a VelocityNet> {
        which.as_ref().ok_or_else(|| {
            Error::Config(format!(
                "{} mode needs the {name} snapshot, which is not set",
                self.config.mode.name()
            ))
        })
    }

    /// `(reference, weight)` pairs making up the penalty of the active mode.
    fn terms(&self) -> Result<Vec<(&VelocityNet, f64)>> {
        let c = &self.config;
        Ok(match c.mode {
            KlMode::NoKl => vec![],
            KlMode::Fixed => vec![(self.snapshot(&self.init, "initial")?, 1.0)],
            KlMode::Stepwise => vec![(self.snapshot(&self.prev, "previous")?, 1.0)],
            KlMode::Moving => vec![(self.snapshot(&self.anchor, "anchor")?, 1.0)],
            KlMode::Dual => vec![
                (self.snapshot(&self.anchor, "anchor")?, c.beta_pos),
                (self.snapshot(&self.prev, "previous")?, c.beta_vel),
            ],
        })
    }
}

fn stochastic_rows(group: &RolloutGroup) -> Vec<StepInput<'_>> {
    group
        .members
        .iter()
        .flat_map(|m| {
            m.steps
                .iter()
                .filter(|s| s.is_stochastic())
                .map(|s| s.input())
        })
        .collect()
}

/// Mean per-step `D_KL(π_net ‖ π_reference)` over the group's recorded
/// stochastic transitions.
pub fn policy_kl(net: &VelocityNet, reference: &VelocityNet, group: &RolloutGroup) -> Result<f64> {
    let rows = stochastic_rows(group);
    if rows.is_empty() {
        return Ok(0.0);
    }
    let a = transition_means(net, &rows, group.condition)?;
    let b = transition_means(reference, &rows, group.condition)?;
    let mut total = 0.0;
    for (i, r) in rows.iter().enumerate() {
        total += gaussian_kl(
            a.means.row(i).as_slice().expect("standard layout"),
            b.means.row(i).as_slice().expect("standard layout"),
            r.variance,
        )?;
    }
    Ok(total / rows.len() as f64)
}

/// Mode-dependent KL penalty and its gradient with respect to `current`.
/// Reference means are held fixed.
pub fn kl_penalty(
    state: &TrustRegionState,
    group: &RolloutGroup,
    current: &VelocityNet,
) -> Result<(f64, Vec<f64>)> {
    let terms = state.terms()?;
    let rows = stochastic_rows(group);
    if terms.is_empty() || rows.is_empty() {
        return Ok((0.0, vec![0.0; current.num_params()]));
    }
    let cur = transition_means(current, &rows, group.condition)?;
    let d = current.config().state_dim;
    let n = rows.len() as f64;
    let mut d_mean = Array2::zeros((rows.len(), d));
    let mut penalty = 0.0;
    for (reference, weight) in terms {
        let refm = transition_means(reference, &rows, group.condition)?;
        for (i, r) in rows.iter().enumerate() {
            let mut sq = 0.0;
            for j in 0..d {
                let diff = cur.means[[i, j]] - refm.means[[i, j]];
                sq += diff * diff;
                d_mean[[i, j]] += weight * diff / (r.variance * n);
            }
            penalty += weight * sq / (2.0 * r.variance * n);
        }
    }
    Ok((penalty, cur.backward(current, &d_mean)))
}

/// Refresh the anchor when `step > 0` and `step` is a multiple of the
/// anchor interval. Returns whether a refresh happened.
pub fn maybe_refresh_anchor(state: &mut TrustRegionState, current: &VelocityNet) -> bool {
    let k = state.step;
    if k > 0 && k.is_multiple_of(state.config.anchor_interval) {
        state.anchor = Some(current.clone());
        true
    } else {
        false
    }
}
