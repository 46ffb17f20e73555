//! Group rollouts, rewards, advantages, the temporal gradient equalizer and
//! the group-relative policy loss.

mod advantage;
mod equalizer;
mod loss;
mod reward;
mod rollout;

pub use advantage::{group_advantages, DEFAULT_EPSILON};
pub use equalizer::{equalizer_weights, gradient_scale_proxy, median, EqualizerState};
pub use loss::{grpo_loss_and_grad, step_contribution_norms};
pub use reward::{composite_reward, CustomReward, RewardComponent, RewardKind, RewardSpec};
pub use rollout::{rollout_group, RolloutGroup, Trajectory, Transition};
