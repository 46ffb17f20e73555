use super::equalizer::EqualizerState;
use super::rollout::RolloutGroup;
use crate::error::{invalid, Result};
use crate::flownet::{policy_gradient, transition_means, PolicyStep, StepInput, VelocityNet};

fn check_lengths(group: &RolloutGroup, eq: &EqualizerState) -> Result<()> {
    if group.members.iter().any(|m| m.steps.len() != eq.len()) {
        return Err(invalid(format!(
            "equalizer has {} weights but trajectories have {} steps",
            eq.len(),
            group.steps()
        )));
    }
    Ok(())
}

/// `-(1/G) Σ_i A_i Σ_t S_t log π_θ(x_{t+1} | x_t, c)` and its gradient.
pub fn grpo_loss_and_grad(
    net: &VelocityNet,
    group: &RolloutGroup,
    eq: &EqualizerState,
) -> Result<(f64, Vec<f64>)> {
    let adv = group
        .advantages
        .as_ref()
        .ok_or_else(|| invalid("advantages have not been computed"))?;
    if adv.len() != group.size() {
        return Err(invalid("one advantage per group member is required"));
    }
    check_lengths(group, eq)?;
    let steps: Vec<PolicyStep<'_>> = group
        .members
        .iter()
        .zip(adv)
        .flat_map(|(m, &a)| {
            m.steps
                .iter()
                .zip(&eq.weights)
                .map(move |(s, &w)| PolicyStep {
                    input: s.input(),
                    x_next: &s.x_next,
                    weight: a * w,
                })
        })
        .collect();
    let (value, mut grad) = policy_gradient(net, &steps, group.condition)?;
    let scale = -1.0 / group.size() as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok((scale * value, grad))
}

/// Mean over members of `‖S_t ∂ log π_θ(x_{t+1} | x_t)/∂v_θ‖` per step,
/// with `None` for deterministic steps. This is the size of each step's
/// contribution at the network output.
pub fn step_contribution_norms(
    net: &VelocityNet,
    group: &RolloutGroup,
    eq: &EqualizerState,
) -> Result<Vec<Option<f64>>> {
    check_lengths(group, eq)?;
    let t_len = eq.len();
    let mut out = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let rows: Vec<StepInput<'_>> = group.members.iter().map(|m| m.steps[t].input()).collect();
        if !(rows[0].variance > 0.0) || eq.weights[t] == 0.0 {
            out.push(None);
            continue;
        }
        let batch = transition_means(net, &rows, group.condition)?;
        let d = net.config().state_dim;
        let mut total = 0.0;
        for (i, m) in group.members.iter().enumerate() {
            let s = &m.steps[t];
            let mut sq = 0.0;
            for j in 0..d {
                let g =
                    batch.slopes[[i, j]] * (s.x_next[j] - batch.means[[i, j]]) / s.params.variance;
                sq += g * g;
            }
            total += eq.weights[t] * sq.sqrt();
        }
        out.push(Some(total / group.size() as f64));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::VarianceStrategy;
    use crate::flownet::NetConfig;
    use crate::oracle::finite_diff_grad;
    use crate::rlcore::{group_advantages, rollout_group};
    use crate::schedule::NoiseSchedule;

    fn tiny() -> NetConfig {
        NetConfig {
            state_dim: 2,
            hidden: vec![4],
            time_embed: 4,
            cond_embed: 2,
            num_conditions: 2,
        }
    }

    fn setup(advantages: Vec<f64>) -> (VelocityNet, RolloutGroup, EqualizerState) {
        let net = VelocityNet::new(tiny(), 21).unwrap();
        let sched = NoiseSchedule::linear(4, 1.0)
            .unwrap()
            .clamped(3e-3)
            .unwrap();
        let strat = VarianceStrategy::precise(0.7).unwrap();
        let mut g = rollout_group(&net, &sched, &strat, Some(1), advantages.len(), 4).unwrap();
        g.advantages = Some(advantages);
        let eq = EqualizerState::from_schedule(&sched, &strat, 1e-8).unwrap();
        (net, g, eq)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (net, g, eq) = setup(group_advantages(&[0.3, -1.2], 1e-8).unwrap());
        let (_, grad) = grpo_loss_and_grad(&net, &g, &eq).unwrap();
        let cfg = tiny();
        let fd = finite_diff_grad(
            |p| {
                let n = VelocityNet::from_params(cfg.clone(), p.to_vec()).unwrap();
                grpo_loss_and_grad(&n, &g, &eq).unwrap().0
            },
            net.params(),
            1e-5,
        )
        .unwrap();
        for (a, b) in grad.iter().zip(&fd) {
            let scale = a.abs().max(b.abs()).max(1e-4);
            assert!((a - b).abs() / scale <= 1e-3, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_advantages_give_zero() {
        let (net, g, eq) = setup(vec![0.0, 0.0, 0.0]);
        let (l, grad) = grpo_loss_and_grad(&net, &g, &eq).unwrap();
        assert_eq!(l, 0.0);
        assert!(grad.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn opposite_advantages_on_identical_trajectories_cancel() {
        let (net, mut g, eq) = setup(vec![1.5, -1.5]);
        g.members[1] = g.members[0].clone();
        let (l, grad) = grpo_loss_and_grad(&net, &g, &eq).unwrap();
        assert!(l.abs() < 1e-12);
        assert!(grad.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn requires_advantages_and_matching_lengths() {
        let (net, mut g, eq) = setup(vec![1.0, -1.0]);
        let mut short = eq.clone();
        short.weights.pop();
        assert!(grpo_loss_and_grad(&net, &g, &short).is_err());
        g.advantages = None;
        assert!(grpo_loss_and_grad(&net, &g, &eq).is_err());
    }
}
