use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dynamics::{
    ode_step, sde_step_params_signed, ItoSign, StrategyKind, VarianceStrategy, ITO_SIGN,
};
use crate::error::{Error, Result};
use crate::flownet::{NetConfig, VelocityNet};
use crate::oracle::{
    energy_permutation_test, finite_diff_grad, quadrature_variance, PermutationTest,
    StandardGaussianFlow,
};
use crate::rlcore::{group_advantages, grpo_loss_and_grad, rollout_group, EqualizerState};
use crate::schedule::NoiseSchedule;
use crate::trustregion::{kl_penalty, TrustRegionConfig, TrustRegionState};

/// One line of the verification report.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    fn at_most(name: &str, measured: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            tolerance,
            passed: measured <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Fixed-width table, one check per line.
    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<44} {:>14} {:>14}  result\n",
            "check", "measured", "tolerance"
        );
        for c in &self.checks {
            s.push_str(&format!(
                "{:<44} {:>14.6e} {:>14.6e}  {}\n",
                c.name,
                c.measured,
                c.tolerance,
                if c.passed { "PASS" } else { "FAIL" }
            ));
        }
        s
    }

    /// `Err(Verification)` naming the failed checks.
    pub fn into_result(self) -> Result<Self> {
        if self.passed() {
            return Ok(self);
        }
        let failed: Vec<&str> = self
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect();
        Err(Error::Verification(failed.join(", ")))
    }
}

/// Sample statistics at one grid level of a marginal check.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelReport {
    pub sigma: f64,
    /// Largest per-dimension `|mean|`.
    pub max_mean_gap: f64,
    /// Largest per-dimension `|var/target - 1|`.
    pub max_var_rel_gap: f64,
    pub energy: Option<PermutationTest>,
}

/// Settings for [`marginal_check`].
#[derive(Debug, Clone)]
pub struct MarginalCheck {
    pub schedule: NoiseSchedule,
    pub strategy: VarianceStrategy,
    pub samples: usize,
    pub sign: ItoSign,
    pub seed: u64,
    /// Per-side sample count for the energy permutation test at each level;
    /// `None` skips the test.
    pub energy_subsample: Option<usize>,
    pub energy_resamples: usize,
}

/// Roll `samples` two-dimensional states from the exact marginal at the
/// schedule head through the SDE sampler driven by the exact velocity and
/// score of a standard Gaussian data distribution, and compare each level
/// with the analytic marginal `N(0, ((1-σ)² + σ²) I)`. The final interval
/// is a deterministic step, as in group rollouts.
pub fn marginal_check(cfg: &MarginalCheck) -> Result<Vec<LevelReport>> {
    let d = 2;
    let n = cfg.samples;
    let flow = StandardGaussianFlow { dim: d };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let head = cfg.schedule.sigmas()[0];
    let s0 = StandardGaussianFlow::marginal_variance(head).sqrt();
    let mut xs: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..d)
                .map(|_| s0 * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let steps = cfg.schedule.steps();
    let mut out = Vec::with_capacity(steps);
    let mut ref_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    for (t, (a, b)) in cfg.schedule.intervals().enumerate() {
        for x in xs.iter_mut() {
            let v = flow.velocity(x, a);
            *x = if t + 1 == steps {
                ode_step(x, &v, b - a)
            } else {
                let score = flow.score(x, a);
                let p = sde_step_params_signed(x, &v, &score, a, b, &cfg.strategy, cfg.sign)?;
                let sd = p.variance.sqrt();
                p.mean
                    .iter()
                    .map(|m| m + sd * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            };
        }
        let target = StandardGaussianFlow::marginal_variance(b);
        let mut max_mean: f64 = 0.0;
        let mut max_var: f64 = 0.0;
        for j in 0..d {
            let mean = xs.iter().map(|x| x[j]).sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x[j] - mean).powi(2)).sum::<f64>() / n as f64;
            max_mean = max_mean.max(mean.abs());
            max_var = max_var.max((var / target - 1.0).abs());
        }
        let energy = match cfg.energy_subsample {
            Some(m) => {
                let m = m.min(n);
                let sd = target.sqrt();
                let reference: Vec<Vec<f64>> = (0..m)
                    .map(|_| {
                        (0..d)
                            .map(|_| sd * ref_rng.sample::<f64, _>(StandardNormal))
                            .collect()
                    })
                    .collect();
                Some(energy_permutation_test(
                    &xs[..m],
                    &reference,
                    cfg.energy_resamples,
                    0.95,
                    cfg.seed.wrapping_add(t as u64),
                )?)
            }
            None => None,
        };
        out.push(LevelReport {
            sigma: b,
            max_mean_gap: max_mean,
            max_var_rel_gap: max_var,
            energy,
        });
    }
    Ok(out)
}

fn tiny_net() -> NetConfig {
    NetConfig {
        state_dim: 2,
        hidden: vec![4],
        time_embed: 4,
        cond_embed: 2,
        num_conditions: 2,
    }
}

fn max_rel_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-4))
        .fold(0.0, f64::max)
}

/// Relative gradient errors of the policy loss and of the dual KL penalty
/// against central differences on a tiny network (`D = 2`, one hidden layer
/// of width 4, `T = 3`, `G = 2`).
pub fn gradient_checks(seed: u64) -> Result<(f64, f64)> {
    let cfg = tiny_net();
    let net = VelocityNet::new(cfg.clone(), seed)?;
    let sched = NoiseSchedule::linear(3, 1.0)?.clamped(crate::schedule::DEFAULT_FLOOR)?;
    let strat = VarianceStrategy::precise(0.7)?;
    let mut group = rollout_group(&net, &sched, &strat, Some(1), 2, seed)?;
    let rewards: Vec<f64> = group.members.iter().map(|m| -m.x0[0].abs()).collect();
    group.advantages = Some(group_advantages(&rewards, 1e-8)?);
    let eq = EqualizerState::from_schedule(&sched, &strat, 1e-8)?;
    let (_, g) = grpo_loss_and_grad(&net, &group, &eq)?;
    let fd = finite_diff_grad(
        |p| {
            VelocityNet::from_params(cfg.clone(), p.to_vec())
                .and_then(|n| grpo_loss_and_grad(&n, &group, &eq))
                .map_or(f64::NAN, |r| r.0)
        },
        net.params(),
        1e-5,
    )?;
    let policy_err = max_rel_error(&g, &fd);

    let mut shifted = net.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    for p in shifted.params_mut() {
        *p += 0.05 * rng.sample::<f64, _>(StandardNormal);
    }
    let mut trust = TrustRegionState::new(TrustRegionConfig::default(), &net)?;
    let mut prev = net.clone();
    for p in prev.params_mut() {
        *p -= 0.05 * rng.sample::<f64, _>(StandardNormal);
    }
    trust.refresh_prev(&prev);
    let (_, kg) = kl_penalty(&trust, &group, &shifted)?;
    let kfd = finite_diff_grad(
        |p| {
            VelocityNet::from_params(cfg.clone(), p.to_vec())
                .and_then(|n| kl_penalty(&trust, &group, &n))
                .map_or(f64::NAN, |r| r.0)
        },
        shifted.params(),
        1e-5,
    )?;
    Ok((policy_err, max_rel_error(&kg, &kfd)))
}

/// The full oracle suite with the given correction sign.
#[doc(hidden)]
pub fn verify_with_sign(sign: ItoSign) -> Result<VerifyReport> {
    let mut checks = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);

    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let hi = rng.random_range(0.01..=0.997);
        let lo = rng.random_range(0.0..hi);
        let eta = rng.random_range(0.1..2.0);
        let closed = VarianceStrategy::precise(eta)?.step_variance(hi, lo)?;
        let quad = quadrature_variance(hi, lo, eta, 1_000_000)?;
        worst = worst.max(((closed - quad) / quad).abs());
    }
    checks.push(CheckResult::at_most(
        "precise variance vs quadrature (rel)",
        worst,
        1e-8,
    ));

    let precise = VarianceStrategy::precise(1.0)?;
    let flow = VarianceStrategy::new(StrategyKind::FlowStyle, 1.0)?;
    let mut excess: f64 = 0.0;
    for i in 0..50 {
        for j in 0..50 {
            let hi = 0.997 * (i + 1) as f64 / 50.0;
            let lo = hi * j as f64 / 50.0;
            let p = precise.step_variance(hi, lo)?;
            let f = flow.step_variance(hi, lo)?;
            excess = excess.max(p - f);
        }
    }
    checks.push(CheckResult::at_most(
        "precise <= flow-style on 50x50 grid",
        excess,
        0.0,
    ));

    let mut add: f64 = 0.0;
    for _ in 0..20 {
        let hi = rng.random_range(0.05..=0.997);
        let lo = rng.random_range(0.0..hi * 0.5);
        let mid = rng.random_range(lo..hi);
        let whole = precise.step_variance(hi, lo)?;
        let parts = precise.step_variance(hi, mid)? + precise.step_variance(mid, lo)?;
        add = add.max(((whole - parts) / whole).abs());
    }
    checks.push(CheckResult::at_most("precise additivity (rel)", add, 1e-10));

    let gap = |w: f64| -> Result<f64> {
        let p = precise.step_variance(0.5, 0.5 - w)?;
        let f = flow.step_variance(0.5, 0.5 - w)?;
        Ok((f - p) / f)
    };
    let g2 = gap(1e-2)?;
    let g3 = gap(1e-3)?;
    let g4 = gap(1e-4)?;
    let ratio_dev = [g2 / g3, g3 / g4]
        .iter()
        .map(|r| (r / 10.0).ln().abs())
        .fold(0.0, f64::max);
    checks.push(CheckResult::at_most(
        "taylor gap shrinks like width (log factor)",
        ratio_dev,
        2f64.ln(),
    ));

    let (pg, kg) = gradient_checks(7)?;
    checks.push(CheckResult::at_most(
        "policy loss gradient vs finite diff",
        pg,
        1e-3,
    ));
    checks.push(CheckResult::at_most(
        "kl penalty gradient vs finite diff",
        kg,
        1e-3,
    ));

    let levels = marginal_check(&MarginalCheck {
        schedule: NoiseSchedule::linear(400, 1.0)?.clamped(crate::schedule::DEFAULT_FLOOR)?,
        strategy: VarianceStrategy::precise(0.7)?,
        samples: 20_000,
        sign,
        seed: 11,
        energy_subsample: None,
        energy_resamples: 0,
    })?;
    let mean_gap = levels.iter().map(|l| l.max_mean_gap).fold(0.0, f64::max);
    let var_gap = levels.iter().map(|l| l.max_var_rel_gap).fold(0.0, f64::max);
    checks.push(CheckResult::at_most(
        "gaussian marginal mean gap (T=400)",
        mean_gap,
        0.05,
    ));
    checks.push(CheckResult::at_most(
        "gaussian marginal variance gap (T=400)",
        var_gap,
        0.05,
    ));

    Ok(VerifyReport { checks })
}

/// Run the oracle suite. Failures are reported in the returned table; use
/// [`VerifyReport::into_result`] to turn them into an error.
pub fn cmd_verify() -> Result<VerifyReport> {
    verify_with_sign(ITO_SIGN)
}
