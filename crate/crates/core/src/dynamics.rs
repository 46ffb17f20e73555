//! Stochastic and deterministic transitions along the rectified-flow path
//! `x_σ = (1 - σ) x_0 + σ z`.
//!
//! Velocities follow the path derivative `v = dx/dσ = z - x_0`. Sampling runs
//! towards decreasing σ, so the signed step is `dt = σ_{t+1} - σ_t ≤ 0`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Per-coordinate bound on score magnitudes.
pub const SCORE_CLIP: f64 = 1e3;

/// Default exploration scale η.
pub const DEFAULT_ETA: f64 = 0.7;

/// Noise injection rule for one sampling interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// `η² Δσ`.
    DanceStyle,
    /// `η² σ_t/(1-σ_t) Δσ`, a first-order approximation of the integral.
    FlowStyle,
    /// `η² ∫ s/(1-s) ds` over the interval, evaluated in closed form.
    Precise,
}

impl StrategyKind {
    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::DanceStyle => "dance_style",
            StrategyKind::FlowStyle => "flow_style",
            StrategyKind::Precise => "precise",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceStrategy {
    kind: StrategyKind,
    eta: f64,
}

impl VarianceStrategy {
    /// `eta = 0` is accepted and yields a fully deterministic sampler.
    pub fn new(kind: StrategyKind, eta: f64) -> Result<Self> {
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(invalid(format!(
                "eta must be finite and non-negative, got {eta}"
            )));
        }
        Ok(Self { kind, eta })
    }

    pub fn precise(eta: f64) -> Result<Self> {
        Self::new(StrategyKind::Precise, eta)
    }

    pub fn kind(&self) -> StrategyKind {
        self.kind
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Integrated noise variance `Σ_t` injected over `[sigma_next, sigma_t]`.
    pub fn step_variance(&self, sigma_t: f64, sigma_next: f64) -> Result<f64> {
        if !(sigma_t.is_finite() && sigma_next.is_finite()) || sigma_next < 0.0 {
            return Err(invalid(format!(
                "noise levels must be finite and non-negative, got ({sigma_t}, {sigma_next})"
            )));
        }
        if sigma_next > sigma_t {
            return Err(invalid(format!(
                "sigma_next ({sigma_next}) exceeds sigma_t ({sigma_t})"
            )));
        }
        let width = sigma_t - sigma_next;
        let eta2 = self.eta * self.eta;
        match self.kind {
            StrategyKind::DanceStyle => Ok(eta2 * width),
            StrategyKind::FlowStyle | StrategyKind::Precise if sigma_t >= 1.0 => {
                Err(Error::Domain(format!(
                    "{} variance is undefined at sigma_t = {sigma_t} (needs sigma_t < 1)",
                    self.kind.name()
                )))
            }
            StrategyKind::FlowStyle => Ok(eta2 * sigma_t / (1.0 - sigma_t) * width),
            StrategyKind::Precise => {
                // ln((1-σ_{t+1})/(1-σ_t)) = ln(1 + Δσ/(1-σ_t)); ln_1p keeps small
                // intervals accurate.
                let v = (width / (1.0 - sigma_t)).ln_1p() - width;
                Ok(eta2 * v.max(0.0))
            }
        }
    }

    /// `Σ_t^{1/2}`.
    pub fn step_std(&self, sigma_t: f64, sigma_next: f64) -> Result<f64> {
        self.step_variance(sigma_t, sigma_next).map(f64::sqrt)
    }
}

/// Sign applied to the `Σ_t/2 · score` drift correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ItoSign {
    Plus,
    Minus,
}

impl ItoSign {
    pub(crate) fn factor(self) -> f64 {
        match self {
            ItoSign::Plus => 1.0,
            ItoSign::Minus => -1.0,
        }
    }
}

/// Sign that preserves the rectified-flow marginals when stepping towards
/// decreasing σ. Guarded by the Gaussian marginal regression tests.
pub const ITO_SIGN: ItoSign = ItoSign::Plus;

/// Score estimate from a velocity prediction.
///
/// With `x̂_0 = x - σ v` and `ẑ = x + (1 - σ) v`, the score of the noisy
/// marginal is `-ẑ/σ = -(x - (1-σ) x̂_0)/σ²`. Coordinates are clipped to
/// `±SCORE_CLIP`.
pub fn score_estimate(x_t: &[f64], v_pred: &[f64], sigma_t: f64) -> Result<Vec<f64>> {
    score_with_slope(x_t, v_pred, sigma_t).map(|(s, _)| s)
}

/// Score plus its per-coordinate derivative with respect to the velocity
/// (zero where clipping is active).
pub(crate) fn score_with_slope(
    x_t: &[f64],
    v_pred: &[f64],
    sigma_t: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if x_t.len() != v_pred.len() {
        return Err(invalid(format!(
            "state has dimension {}, velocity has {}",
            x_t.len(),
            v_pred.len()
        )));
    }
    if !(sigma_t > 0.0) {
        return Err(Error::Singularity(format!(
            "score requested at sigma = {sigma_t}"
        )));
    }
    let slope = -(1.0 - sigma_t) / sigma_t;
    let mut score = Vec::with_capacity(x_t.len());
    let mut dscore = Vec::with_capacity(x_t.len());
    for (&x, &v) in x_t.iter().zip(v_pred) {
        let s = -(x + (1.0 - sigma_t) * v) / sigma_t;
        if s.abs() > SCORE_CLIP {
            score.push(SCORE_CLIP.copysign(s));
            dscore.push(0.0);
        } else {
            score.push(s);
            dscore.push(slope);
        }
    }
    Ok((score, dscore))
}

/// Isotropic Gaussian transition `N(mean, variance · I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionParams {
    pub mean: Vec<f64>,
    pub variance: f64,
    pub step_index: usize,
}

/// Itô-corrected Euler–Maruyama transition for step `t`:
/// `mean = x + v·dt + (Σ_t/2)·score`, `variance = Σ_t`, with
/// `dt = σ_{t+1} - σ_t`.
pub fn sde_step_params(
    x_t: &[f64],
    v_pred: &[f64],
    score: &[f64],
    sigma_t: f64,
    sigma_next: f64,
    strategy: &VarianceStrategy,
) -> Result<TransitionParams> {
    sde_step_params_signed(x_t, v_pred, score, sigma_t, sigma_next, strategy, ITO_SIGN)
}

/// [`sde_step_params`] with an explicit correction sign. Used by the
/// sign-resolution experiment; everything else goes through [`ITO_SIGN`].
#[doc(hidden)]
pub fn sde_step_params_signed(
    x_t: &[f64],
    v_pred: &[f64],
    score: &[f64],
    sigma_t: f64,
    sigma_next: f64,
    strategy: &VarianceStrategy,
    sign: ItoSign,
) -> Result<TransitionParams> {
    if x_t.len() != v_pred.len() || x_t.len() != score.len() {
        return Err(invalid("state, velocity and score dimensions differ"));
    }
    let variance = strategy.step_variance(sigma_t, sigma_next)?;
    let dt = sigma_next - sigma_t;
    let k = sign.factor() * 0.5 * variance;
    let mean = x_t
        .iter()
        .zip(v_pred)
        .zip(score)
        .map(|((&x, &v), &s)| x + v * dt + k * s)
        .collect();
    Ok(TransitionParams {
        mean,
        variance,
        step_index: 0,
    })
}

/// `mean + sqrt(variance) · noise`.
pub fn sample_transition(params: &TransitionParams, noise: &[f64]) -> Vec<f64> {
    debug_assert_eq!(params.mean.len(), noise.len());
    let std = params.variance.sqrt();
    params
        .mean
        .iter()
        .zip(noise)
        .map(|(&m, &e)| m + std * e)
        .collect()
}

/// Log density of `N(mean, variance · I)` at `x_next`.
pub fn transition_log_prob(x_next: &[f64], params: &TransitionParams) -> Result<f64> {
    if !(params.variance > 0.0) {
        return Err(Error::Degenerate(format!(
            "log-probability of a transition with variance {}",
            params.variance
        )));
    }
    if x_next.len() != params.mean.len() {
        return Err(invalid("sample and mean dimensions differ"));
    }
    let d = x_next.len() as f64;
    let sq: f64 = x_next
        .iter()
        .zip(&params.mean)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(
        -0.5 * d * (2.0 * std::f64::consts::PI * params.variance).ln()
            - sq / (2.0 * params.variance),
    )
}

/// `∇_μ log π = (x_next - μ)/Σ`.
pub fn log_prob_mean_gradient(x_next: &[f64], params: &TransitionParams) -> Result<Vec<f64>> {
    if !(params.variance > 0.0) {
        return Err(Error::Degenerate(
            "gradient of a zero-variance transition".into(),
        ));
    }
    Ok(x_next
        .iter()
        .zip(&params.mean)
        .map(|(x, m)| (x - m) / params.variance)
        .collect())
}

/// Deterministic Euler update `x + v · dt`.
pub fn ode_step(x_t: &[f64], v_pred: &[f64], dt: f64) -> Vec<f64> {
    x_t.iter().zip(v_pred).map(|(&x, &v)| x + v * dt).collect()
}

/// Derivative of each transition-mean coordinate with respect to the
/// matching velocity coordinate: `dt + (Σ_t/2) · ∂score/∂v`.
pub(crate) fn mean_velocity_slope(dt: f64, variance: f64, dscore: &[f64]) -> Vec<f64> {
    dscore
        .iter()
        .map(|&ds| dt + ITO_SIGN.factor() * 0.5 * variance * ds)
        .collect()
}
