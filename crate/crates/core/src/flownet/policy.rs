use ndarray::Array2;

use super::net::{ForwardCache, VelocityNet};
use crate::dynamics::{mean_velocity_slope, score_with_slope, ITO_SIGN};
use crate::error::{invalid, Error, Result};

/// A recorded state and the interval it was stepped over.
#[derive(Debug, Clone, Copy)]
pub struct StepInput<'a> {
    pub x_t: &'a [f64],
    pub sigma_t: f64,
    pub sigma_next: f64,
    /// Integrated variance `Σ_t` of the step (zero for deterministic steps).
    pub variance: f64,
}

/// Transition means recomputed under some network, ready for backprop.
#[derive(Debug, Clone)]
pub struct MeanBatch {
    /// `[rows, state_dim]`.
    pub means: Array2<f64>,
    /// `∂mean/∂v` per coordinate, `[rows, state_dim]`.
    pub slopes: Array2<f64>,
    pub cache: ForwardCache,
}

impl MeanBatch {
    /// Parameter gradient of `Σ <d_mean_row, mean_row>`.
    pub fn backward(&self, net: &VelocityNet, d_mean: &Array2<f64>) -> Vec<f64> {
        let d_v = d_mean * &self.slopes;
        net.backward(&self.cache, &d_v)
    }
}

/// Means of the transitions `π_θ(· | x_t)` for each input row, evaluated
/// under `net`.
pub fn transition_means(
    net: &VelocityNet,
    rows: &[StepInput<'_>],
    cond: Option<usize>,
) -> Result<MeanBatch> {
    let d = net.config().state_dim;
    let mut xs = Array2::zeros((rows.len(), d));
    for (i, r) in rows.iter().enumerate() {
        if r.x_t.len() != d {
            return Err(invalid("recorded state has the wrong dimension"));
        }
        for (j, &x) in r.x_t.iter().enumerate() {
            xs[[i, j]] = x;
        }
    }
    let sigmas: Vec<f64> = rows.iter().map(|r| r.sigma_t).collect();
    let conds = vec![cond; rows.len()];
    let (v, cache) = net.forward_batch(&xs, &sigmas, &conds)?;
    let mut means = Array2::zeros((rows.len(), d));
    let mut slopes = Array2::zeros((rows.len(), d));
    let sign = ITO_SIGN.factor();
    for (i, r) in rows.iter().enumerate() {
        let vi = v.row(i).to_vec();
        let dt = r.sigma_next - r.sigma_t;
        if r.variance > 0.0 {
            let (score, dscore) = score_with_slope(r.x_t, &vi, r.sigma_t)?;
            let slope = mean_velocity_slope(dt, r.variance, &dscore);
            for j in 0..d {
                means[[i, j]] = r.x_t[j] + vi[j] * dt + sign * 0.5 * r.variance * score[j];
                slopes[[i, j]] = slope[j];
            }
        } else {
            for j in 0..d {
                means[[i, j]] = r.x_t[j] + vi[j] * dt;
                slopes[[i, j]] = dt;
            }
        }
    }
    Ok(MeanBatch {
        means,
        slopes,
        cache,
    })
}

/// One term `weight · log π_θ(x_next | x_t)` of a policy objective.
#[derive(Debug, Clone, Copy)]
pub struct PolicyStep<'a> {
    pub input: StepInput<'a>,
    pub x_next: &'a [f64],
    pub weight: f64,
}

/// Value and parameter gradient of `Σ weight_t · log π_θ(x_next | x_t)`.
///
/// The transition mean depends on the network through the velocity term
/// and through the score correction; both paths are differentiated.
pub fn policy_gradient(
    net: &VelocityNet,
    steps: &[PolicyStep<'_>],
    cond: Option<usize>,
) -> Result<(f64, Vec<f64>)> {
    let active: Vec<&PolicyStep<'_>> = steps.iter().filter(|s| s.weight != 0.0).collect();
    if let Some(bad) = active.iter().find(|s| !(s.input.variance > 0.0)) {
        return Err(Error::Degenerate(format!(
            "weighted step at sigma {} has variance {}",
            bad.input.sigma_t, bad.input.variance
        )));
    }
    if active.is_empty() {
        return Ok((0.0, vec![0.0; net.num_params()]));
    }
    let rows: Vec<StepInput<'_>> = active.iter().map(|s| s.input).collect();
    let batch = transition_means(net, &rows, cond)?;
    let d = net.config().state_dim;
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let mut value = 0.0;
    let mut d_mean = Array2::zeros((active.len(), d));
    for (i, s) in active.iter().enumerate() {
        if s.x_next.len() != d {
            return Err(invalid("realized next state has the wrong dimension"));
        }
        let var = s.input.variance;
        let mut sq = 0.0;
        for j in 0..d {
            let r = s.x_next[j] - batch.means[[i, j]];
            sq += r * r;
            d_mean[[i, j]] = s.weight * r / var;
        }
        let lp = -0.5 * d as f64 * (ln2pi + var.ln()) - sq / (2.0 * var);
        value += s.weight * lp;
    }
    Ok((value, batch.backward(net, &d_mean)))
}
