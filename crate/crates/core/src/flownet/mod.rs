//! The toy generator: a dense velocity network, its training data, flow
//! matching pretraining, policy gradients through the SDE transition, and
//! checkpoint persistence.

mod checkpoint;
mod data;
mod net;
mod policy;
mod pretrain;

use ndarray::Array2;

use crate::error::Result;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint,
    PretrainMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use data::DataSpec;
pub use net::{ForwardCache, NetConfig, VelocityNet};
pub use policy::{policy_gradient, transition_means, MeanBatch, PolicyStep, StepInput};
pub use pretrain::{
    flow_matching_loss, flow_matching_pretrain, ode_sample, FlowBatch, PretrainConfig,
    PretrainReport,
};

/// Anything that predicts a velocity for a batch of states.
pub trait VelocityField {
    fn state_dim(&self) -> usize;

    /// `xs` is `[batch, state_dim]`; `sigmas` and `conditions` have one
    /// entry per row.
    fn velocity_batch(
        &self,
        xs: &Array2<f64>,
        sigmas: &[f64],
        conditions: &[Option<usize>],
    ) -> Result<Array2<f64>>;
}
