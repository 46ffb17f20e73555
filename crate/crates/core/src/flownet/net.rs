use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::VelocityField;
use crate::error::{invalid, Result};

/// Shape of a [`VelocityNet`].
///
/// The network input is the state, a sinusoidal embedding of σ, and a
/// learned embedding of the condition. Row `num_conditions` of the
/// condition table is the unconditional ("null") embedding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub state_dim: usize,
    pub hidden: Vec<usize>,
    pub time_embed: usize,
    pub cond_embed: usize,
    pub num_conditions: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            state_dim: 2,
            hidden: vec![64, 64, 64],
            time_embed: 8,
            cond_embed: 8,
            num_conditions: 8,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.state_dim == 0 {
            return Err(invalid("net.state_dim must be positive"));
        }
        if !self.time_embed.is_multiple_of(2) {
            return Err(invalid("net.time_embed must be even"));
        }
        if self.hidden.contains(&0) {
            return Err(invalid("net.hidden widths must be positive"));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.state_dim + self.time_embed + self.cond_embed
    }

    /// `[input, hidden..., state_dim]`.
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(self.input_dim());
        dims.extend(&self.hidden);
        dims.push(self.state_dim);
        dims
    }

    fn cond_rows(&self) -> usize {
        self.num_conditions + 1
    }

    pub fn num_params(&self) -> usize {
        let dims = self.layer_dims();
        let dense: usize = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        dense + self.cond_rows() * self.cond_embed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerSlot {
    w: usize,
    b: usize,
    fan_in: usize,
    fan_out: usize,
}

/// Dense SiLU network with all parameters in one flat vector.
///
/// Flat layout: for each layer, the weight matrix `[fan_out, fan_in]` in
/// row-major order followed by its bias; then the condition table
/// `[num_conditions + 1, cond_embed]` row-major. Gradients use the same
/// layout.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityNet {
    config: NetConfig,
    params: Vec<f64>,
    slots: Vec<LayerSlot>,
    cond_offset: usize,
}

fn silu(z: f64) -> f64 {
    z / (1.0 + (-z).exp())
}

fn silu_grad(z: f64) -> f64 {
    let s = 1.0 / (1.0 + (-z).exp());
    s * (1.0 + z * (1.0 - s))
}

fn layout(config: &NetConfig) -> (Vec<LayerSlot>, usize) {
    let dims = config.layer_dims();
    let mut off = 0;
    let slots = dims
        .windows(2)
        .map(|w| {
            let slot = LayerSlot {
                w: off,
                b: off + w[0] * w[1],
                fan_in: w[0],
                fan_out: w[1],
            };
            off += w[0] * w[1] + w[1];
            slot
        })
        .collect();
    (slots, off)
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Array2<f64>,
    pre: Vec<Array2<f64>>,
    post: Vec<Array2<f64>>,
    cond_rows: Vec<usize>,
}

impl VelocityNet {
    /// All-zero parameters; the network outputs zero everywhere.
    pub fn zeros(config: NetConfig) -> Result<Self> {
        config.validate()?;
        let (slots, cond_offset) = layout(&config);
        Ok(Self {
            params: vec![0.0; config.num_params()],
            config,
            slots,
            cond_offset,
        })
    }

    /// Glorot-uniform weights, zero biases, small uniform condition table.
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for slot in net.slots.clone() {
            let bound = (6.0 / (slot.fan_in + slot.fan_out) as f64).sqrt();
            for p in &mut net.params[slot.w..slot.b] {
                *p = rng.random_range(-bound..bound);
            }
        }
        let off = net.cond_offset;
        for p in &mut net.params[off..] {
            *p = rng.random_range(-0.1..0.1);
        }
        Ok(net)
    }

    pub fn from_params(config: NetConfig, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        if params.len() != net.params.len() {
            return Err(invalid(format!(
                "expected {} parameters, got {}",
                net.params.len(),
                params.len()
            )));
        }
        net.params = params;
        Ok(net)
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn weight(&self, slot: &LayerSlot) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((slot.fan_out, slot.fan_in), &self.params[slot.w..slot.b])
            .expect("layout is consistent")
    }

    fn bias(&self, slot: &LayerSlot) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.params[slot.b..slot.b + slot.fan_out])
    }

    fn cond_row(&self, cond: Option<usize>) -> Result<usize> {
        match cond {
            None => Ok(self.config.num_conditions),
            Some(c) if c < self.config.num_conditions => Ok(c),
            Some(c) => Err(invalid(format!(
                "condition {c} out of range (net has {} conditions)",
                self.config.num_conditions
            ))),
        }
    }

    fn build_input(
        &self,
        xs: &Array2<f64>,
        sigmas: &[f64],
        conds: &[Option<usize>],
    ) -> Result<(Array2<f64>, Vec<usize>)> {
        let cfg = &self.config;
        let batch = xs.nrows();
        if xs.ncols() != cfg.state_dim {
            return Err(invalid(format!(
                "state dimension {} does not match network dimension {}",
                xs.ncols(),
                cfg.state_dim
            )));
        }
        if sigmas.len() != batch || conds.len() != batch {
            return Err(invalid("batch, sigma and condition lengths differ"));
        }
        let mut input = Array2::zeros((batch, cfg.input_dim()));
        let mut rows = Vec::with_capacity(batch);
        let table_off = self.cond_offset;
        for (i, (&sigma, &cond)) in sigmas.iter().zip(conds).enumerate() {
            let mut row = input.row_mut(i);
            row.slice_mut(s![..cfg.state_dim]).assign(&xs.row(i));
            for k in 0..cfg.time_embed / 2 {
                let arg = std::f64::consts::PI * (1u64 << k) as f64 * sigma;
                row[cfg.state_dim + 2 * k] = arg.sin();
                row[cfg.state_dim + 2 * k + 1] = arg.cos();
            }
            let r = self.cond_row(cond)?;
            let start = table_off + r * cfg.cond_embed;
            let base = cfg.state_dim + cfg.time_embed;
            for j in 0..cfg.cond_embed {
                row[base + j] = self.params[start + j];
            }
            rows.push(r);
        }
        Ok((input, rows))
    }

    /// Batched forward pass returning `[batch, state_dim]` velocities.
    pub fn forward_batch(
        &self,
        xs: &Array2<f64>,
        sigmas: &[f64],
        conds: &[Option<usize>],
    ) -> Result<(Array2<f64>, ForwardCache)> {
        let (input, cond_rows) = self.build_input(xs, sigmas, conds)?;
        let mut pre = Vec::with_capacity(self.slots.len());
        let mut post: Vec<Array2<f64>> = Vec::with_capacity(self.slots.len() - 1);
        let last = self.slots.len() - 1;
        for (l, slot) in self.slots.iter().enumerate() {
            let h = if l == 0 { &input } else { &post[l - 1] };
            let mut z = h.dot(&self.weight(slot).t());
            z += &self.bias(slot);
            if l < last {
                post.push(z.mapv(silu));
            }
            pre.push(z);
        }
        let out = pre[last].clone();
        Ok((
            out,
            ForwardCache {
                input,
                pre,
                post,
                cond_rows,
            },
        ))
    }

    /// Single-state forward pass.
    pub fn forward(&self, x: &[f64], sigma: f64, cond: Option<usize>) -> Result<Vec<f64>> {
        if x.len() != self.config.state_dim {
            return Err(invalid(format!(
                "state dimension {} does not match network dimension {}",
                x.len(),
                self.config.state_dim
            )));
        }
        let xs = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row vector");
        let (out, _) = self.forward_batch(&xs, &[sigma], &[cond])?;
        Ok(out.row(0).to_vec())
    }

    /// Parameter gradient of `Σ_rows <d_out_row, v_row>`.
    pub fn backward(&self, cache: &ForwardCache, d_out: &Array2<f64>) -> Vec<f64> {
        let mut grad = vec![0.0; self.params.len()];
        let mut dz = d_out.clone();
        for l in (0..self.slots.len()).rev() {
            let slot = &self.slots[l];
            let h = if l == 0 {
                &cache.input
            } else {
                &cache.post[l - 1]
            };
            let dw = dz.t().dot(h);
            for (g, v) in grad[slot.w..slot.b].iter_mut().zip(dw.iter()) {
                *g += v;
            }
            let db = dz.sum_axis(Axis(0));
            for (g, v) in grad[slot.b..slot.b + slot.fan_out]
                .iter_mut()
                .zip(db.iter())
            {
                *g += v;
            }
            let dh = dz.dot(&self.weight(slot));
            if l == 0 {
                let cfg = &self.config;
                let base = cfg.state_dim + cfg.time_embed;
                for (i, &r) in cache.cond_rows.iter().enumerate() {
                    let start = self.cond_offset + r * cfg.cond_embed;
                    for j in 0..cfg.cond_embed {
                        grad[start + j] += dh[[i, base + j]];
                    }
                }
            } else {
                let zprev = &cache.pre[l - 1];
                dz = dh;
                dz.zip_mut_with(zprev, |d, &z| *d *= silu_grad(z));
            }
        }
        grad
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}

impl VelocityField for VelocityNet {
    fn state_dim(&self) -> usize {
        self.config.state_dim
    }

    fn velocity_batch(
        &self,
        xs: &Array2<f64>,
        sigmas: &[f64],
        conditions: &[Option<usize>],
    ) -> Result<Array2<f64>> {
        self.forward_batch(xs, sigmas, conditions).map(|(v, _)| v)
    }
}
