use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::data::DataSpec;
use super::net::VelocityNet;
use super::VelocityField;
use crate::error::{invalid, Error, Result};
use crate::optim::{Optimizer, OptimizerKind};
use crate::schedule::NoiseSchedule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Probability of training a sample against the null condition.
    pub uncond_prob: f64,
    pub optimizer: OptimizerKind,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            steps: 5000,
            lr: 1e-3,
            batch_size: 128,
            seed: 0,
            uncond_prob: 0.5,
            optimizer: OptimizerKind::Sgd,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(invalid("pretraining needs at least one step"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size must be positive"));
        }
        if !(0.0..=1.0).contains(&self.uncond_prob) {
            return Err(invalid(format!(
                "uncond_prob must lie in [0, 1], got {}",
                self.uncond_prob
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainReport {
    /// Mini-batch loss before each update.
    pub losses: Vec<f64>,
}

impl PretrainReport {
    pub fn final_loss(&self) -> f64 {
        *self.losses.last().expect("at least one step")
    }
}

/// Training triples `(x_0, z, σ, c)` for the rectified-flow objective.
#[derive(Debug, Clone)]
pub struct FlowBatch {
    pub x0: Array2<f64>,
    pub z: Array2<f64>,
    pub sigmas: Vec<f64>,
    pub conds: Vec<Option<usize>>,
}

impl FlowBatch {
    pub fn sample<R: Rng + ?Sized>(
        data: &DataSpec,
        size: usize,
        uncond_prob: f64,
        rng: &mut R,
    ) -> Self {
        let d = data.dim();
        let mut x0 = Array2::zeros((size, d));
        let mut z = Array2::zeros((size, d));
        let mut sigmas = Vec::with_capacity(size);
        let mut conds = Vec::with_capacity(size);
        for i in 0..size {
            let (x, mode) = data.sample(rng);
            for j in 0..d {
                x0[[i, j]] = x[j];
                z[[i, j]] = rng.sample(StandardNormal);
            }
            sigmas.push(rng.random::<f64>());
            conds.push(if rng.random::<f64>() < uncond_prob {
                None
            } else {
                Some(mode)
            });
        }
        Self {
            x0,
            z,
            sigmas,
            conds,
        }
    }

    fn inputs(&self) -> Array2<f64> {
        let mut xs = self.x0.clone();
        for (i, mut row) in xs.rows_mut().into_iter().enumerate() {
            let s = self.sigmas[i];
            for (j, x) in row.iter_mut().enumerate() {
                *x = (1.0 - s) * *x + s * self.z[[i, j]];
            }
        }
        xs
    }
}

/// Mean `‖v(x_σ, σ, c) - (z - x_0)‖²` over the batch, with its parameter
/// gradient.
pub fn flow_matching_loss(net: &VelocityNet, batch: &FlowBatch) -> Result<(f64, Vec<f64>)> {
    let (v, cache) = net.forward_batch(&batch.inputs(), &batch.sigmas, &batch.conds)?;
    let n = batch.sigmas.len() as f64;
    let resid = v - (&batch.z - &batch.x0);
    let loss = resid.iter().map(|r| r * r).sum::<f64>() / n;
    let d_out = resid * (2.0 / n);
    Ok((loss, net.backward(&cache, &d_out)))
}

/// Train `net` in place on freshly sampled batches.
pub fn flow_matching_pretrain(
    net: &mut VelocityNet,
    data: &DataSpec,
    config: &PretrainConfig,
) -> Result<PretrainReport> {
    config.validate()?;
    data.validate()?;
    if data.dim() != net.config().state_dim {
        return Err(invalid("data and network dimensions differ"));
    }
    if data.num_modes() > net.config().num_conditions {
        return Err(invalid("network has fewer condition slots than data modes"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = Optimizer::new(config.optimizer, config.lr, net.num_params())?;
    let mut losses = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let batch = FlowBatch::sample(data, config.batch_size, config.uncond_prob, &mut rng);
        let (loss, grad) = flow_matching_loss(net, &batch)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::TrainingDiverged { step, loss });
        }
        opt.step(net.params_mut(), &grad);
        losses.push(loss);
    }
    if !net.all_finite() {
        return Err(Error::TrainingDiverged {
            step: config.steps,
            loss: f64::NAN,
        });
    }
    Ok(PretrainReport { losses })
}

/// Deterministic Euler samples from `x ~ N(0, I)` at the head of `schedule`.
pub fn ode_sample<F: VelocityField + ?Sized>(
    field: &F,
    schedule: &NoiseSchedule,
    count: usize,
    cond: Option<usize>,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let d = field.state_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Array2::from_shape_fn((count, d), |_| rng.sample(StandardNormal));
    let conds = vec![cond; count];
    for (a, b) in schedule.intervals() {
        let v = field.velocity_batch(&xs, &vec![a; count], &conds)?;
        xs = xs + v * (b - a);
    }
    Ok(xs.rows().into_iter().map(|r| r.to_vec()).collect())
}
