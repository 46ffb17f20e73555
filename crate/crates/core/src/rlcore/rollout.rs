use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dynamics::{
    ode_step, sample_transition, score_estimate, sde_step_params, transition_log_prob,
    TransitionParams, VarianceStrategy,
};
use crate::error::{invalid, Error, Result};
use crate::flownet::{StepInput, VelocityField};
use crate::schedule::NoiseSchedule;

/// One recorded step of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub x_t: Vec<f64>,
    pub sigma_t: f64,
    pub sigma_next: f64,
    /// Generating policy's Gaussian; variance 0 marks a deterministic step.
    pub params: TransitionParams,
    pub x_next: Vec<f64>,
    /// `log π_old(x_next | x_t)`, or 0 for deterministic steps.
    pub log_prob: f64,
}

impl Transition {
    pub fn is_stochastic(&self) -> bool {
        self.params.variance > 0.0
    }

    pub fn input(&self) -> StepInput<'_> {
        StepInput {
            x_t: &self.x_t,
            sigma_t: self.sigma_t,
            sigma_next: self.sigma_next,
            variance: self.params.variance,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<Transition>,
    pub x0: Vec<f64>,
}

impl Trajectory {
    pub fn log_probs(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.log_prob).collect()
    }
}

/// `G` trajectories sharing one condition.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutGroup {
    pub members: Vec<Trajectory>,
    pub condition: Option<usize>,
    pub rewards: Option<Vec<f64>>,
    pub advantages: Option<Vec<f64>>,
}

impl RolloutGroup {
    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn steps(&self) -> usize {
        self.members.first().map_or(0, |m| m.steps.len())
    }

    pub fn final_samples(&self) -> Vec<Vec<f64>> {
        self.members.iter().map(|m| m.x0.clone()).collect()
    }
}

/// Sample `group_size` SDE trajectories from `x ~ N(0, I)` at the head of
/// `schedule` down to its last level.
///
/// Member `i` draws all of its noise from a ChaCha8 generator seeded with
/// `seed` on stream `i`, so members are independent and the group does not
/// depend on evaluation order. The final interval is an ODE step, and so is
/// any interval with zero integrated variance.
pub fn rollout_group<F: VelocityField + ?Sized>(
    field: &F,
    schedule: &NoiseSchedule,
    strategy: &VarianceStrategy,
    condition: Option<usize>,
    group_size: usize,
    seed: u64,
) -> Result<RolloutGroup> {
    if group_size < 2 {
        return Err(invalid(format!(
            "a rollout group needs at least two members, got {group_size}"
        )));
    }
    let d = field.state_dim();
    let steps = schedule.steps();
    let mut rngs: Vec<ChaCha8Rng> = (0..group_size)
        .map(|i| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(i as u64);
            r
        })
        .collect();
    let mut xs: Vec<Vec<f64>> = rngs
        .iter_mut()
        .map(|r| (0..d).map(|_| r.sample(StandardNormal)).collect())
        .collect();
    let mut records: Vec<Vec<Transition>> = vec![Vec::with_capacity(steps); group_size];
    let conds = vec![condition; group_size];
    for (t, (a, b)) in schedule.intervals().enumerate() {
        let batch = Array2::from_shape_fn((group_size, d), |(i, j)| xs[i][j]);
        let v = field.velocity_batch(&batch, &vec![a; group_size], &conds)?;
        let last = t + 1 == steps;
        let variance = if last {
            0.0
        } else {
            strategy.step_variance(a, b)?
        };
        for i in 0..group_size {
            let vi = v.row(i).to_vec();
            let x_t = std::mem::take(&mut xs[i]);
            let (params, x_next, log_prob) = if variance > 0.0 {
                let score = score_estimate(&x_t, &vi, a)?;
                let mut p = sde_step_params(&x_t, &vi, &score, a, b, strategy)?;
                p.step_index = t;
                let noise: Vec<f64> = (0..d).map(|_| rngs[i].sample(StandardNormal)).collect();
                let x_next = sample_transition(&p, &noise);
                let lp = transition_log_prob(&x_next, &p)?;
                (p, x_next, lp)
            } else {
                let x_next = ode_step(&x_t, &vi, b - a);
                let p = TransitionParams {
                    mean: x_next.clone(),
                    variance: 0.0,
                    step_index: t,
                };
                (p, x_next, 0.0)
            };
            if x_next.iter().any(|x| !x.is_finite()) {
                return Err(Error::RolloutDiverged { step: t });
            }
            xs[i] = x_next.clone();
            records[i].push(Transition {
                x_t,
                sigma_t: a,
                sigma_next: b,
                params,
                x_next,
                log_prob,
            });
        }
    }
    let members = records
        .into_iter()
        .zip(xs)
        .map(|(steps, x0)| Trajectory { steps, x0 })
        .collect();
    Ok(RolloutGroup {
        members,
        condition,
        rewards: None,
        advantages: None,
    })
}
