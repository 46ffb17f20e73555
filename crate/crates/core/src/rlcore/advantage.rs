use crate::error::{invalid, Result};

/// Stability constant shared by advantage and equalizer denominators.
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// `A_i = (r_i - mean)/(std + ε)` with the population standard deviation.
pub fn group_advantages(rewards: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    if rewards.len() < 2 {
        return Err(invalid(format!(
            "advantages need a group of at least two, got {}",
            rewards.len()
        )));
    }
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(invalid("rewards must be finite"));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let denom = var.sqrt() + epsilon;
    Ok(rewards.iter().map(|r| (r - mean) / denom).collect())
}
