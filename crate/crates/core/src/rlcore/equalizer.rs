use crate::dynamics::VarianceStrategy;
use crate::error::{invalid, Error, Result};
use crate::schedule::NoiseSchedule;

/// `N_t = Δσ / Σ_t^{1/2}`: the velocity-to-mean sensitivity `Δσ` over the
/// transition standard deviation.
pub fn gradient_scale_proxy(
    sigma_t: f64,
    sigma_next: f64,
    strategy: &VarianceStrategy,
) -> Result<f64> {
    let var = strategy.step_variance(sigma_t, sigma_next)?;
    if !(var > 0.0) {
        return Err(Error::Degenerate(format!(
            "no gradient scale for a deterministic step ({sigma_t} -> {sigma_next})"
        )));
    }
    Ok((sigma_t - sigma_next) / var.sqrt())
}

/// Median; even lengths average the two central values.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(invalid("median of an empty list"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// `S_t = median(N)/(N_t + ε)`.
pub fn equalizer_weights(proxies: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    let m = median(proxies)?;
    if !m.is_finite() {
        return Err(invalid("proxy median is not finite"));
    }
    Ok(proxies.iter().map(|n| m / (n + epsilon)).collect())
}

/// Per-step loss weights for a schedule. Deterministic steps carry weight 0
/// and no proxy.
#[derive(Debug, Clone, PartialEq)]
pub struct EqualizerState {
    /// `N_t` for stochastic steps, `None` for deterministic ones.
    pub proxies: Vec<Option<f64>>,
    pub weights: Vec<f64>,
    pub epsilon: f64,
    /// `λ_t = Δσ`.
    pub sensitivities: Vec<f64>,
}

impl EqualizerState {
    /// Equalized weights over the stochastic steps of `schedule`.
    pub fn from_schedule(
        schedule: &NoiseSchedule,
        strategy: &VarianceStrategy,
        epsilon: f64,
    ) -> Result<Self> {
        let mut base = Self::uniform(schedule, strategy)?;
        let active: Vec<f64> = base.proxies.iter().flatten().copied().collect();
        if active.is_empty() {
            return Err(Error::Degenerate("schedule has no stochastic steps".into()));
        }
        let s = equalizer_weights(&active, epsilon)?;
        let mut it = s.into_iter();
        for (w, p) in base.weights.iter_mut().zip(&base.proxies) {
            *w = if p.is_some() {
                it.next().expect("one weight per proxy")
            } else {
                0.0
            };
        }
        base.epsilon = epsilon;
        Ok(base)
    }

    /// Weight 1 on every stochastic step (no equalization).
    pub fn uniform(schedule: &NoiseSchedule, strategy: &VarianceStrategy) -> Result<Self> {
        let mut proxies = Vec::with_capacity(schedule.steps());
        let mut sens = Vec::with_capacity(schedule.steps());
        for (t, (a, b)) in schedule.intervals().enumerate() {
            let stochastic = t + 1 < schedule.steps() && strategy.step_variance(a, b)? > 0.0;
            proxies.push(if stochastic {
                Some(gradient_scale_proxy(a, b, strategy)?)
            } else {
                None
            });
            sens.push(a - b);
        }
        let weights = proxies
            .iter()
            .map(|p| if p.is_some() { 1.0 } else { 0.0 })
            .collect();
        Ok(Self {
            proxies,
            weights,
            epsilon: 0.0,
            sensitivities: sens,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}
