use std::fs;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::RunConfig;
use super::metrics::{fmt_f64, metrics_header, CsvSink, MetricsRow};
use crate::dynamics::{StrategyKind, VarianceStrategy};
use crate::error::{Error, Result};
use crate::flownet::{
    flow_matching_pretrain, load_checkpoint, save_checkpoint, Checkpoint, PretrainMeta, VelocityNet,
};
use crate::optim::{l2_norm, Optimizer};
use crate::rlcore::{
    group_advantages, grpo_loss_and_grad, rollout_group, step_contribution_norms, EqualizerState,
    RolloutGroup,
};
use crate::schedule::NoiseSchedule;
use crate::trustregion::{
    kl_penalty, maybe_refresh_anchor, policy_kl, ControllerSignal, KlController, KlMode,
    TrustRegionConfig, TrustRegionState,
};

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn snapshot(net: &Option<VelocityNet>) -> &VelocityNet {
    net.as_ref().expect("snapshots are kept in every mode")
}

/// Files written by [`cmd_pretrain`].
#[derive(Debug, Clone)]
pub struct PretrainOutput {
    pub checkpoint: PathBuf,
    pub loss_csv: PathBuf,
    pub losses: Vec<f64>,
}

/// Flow-matching pretraining: `pretrained.ckpt` and `pretrain_loss.csv`.
pub fn cmd_pretrain(config: &RunConfig) -> Result<PretrainOutput> {
    config.validate()?;
    let out = &config.run.out;
    ensure_dir(out)?;
    let data = config.data.build()?;
    let mut net = VelocityNet::new(config.net_config(), config.net.init_seed)?;
    let pcfg = config.pretrain_config();
    let report = flow_matching_pretrain(&mut net, &data, &pcfg)?;
    let loss_csv = out.join("pretrain_loss.csv");
    let mut sink = CsvSink::create(&loss_csv, &["step", "loss"])?;
    for (k, l) in report.losses.iter().enumerate() {
        sink.row(&[k.to_string(), fmt_f64(*l)])?;
    }
    sink.finish()?;
    let checkpoint = out.join("pretrained.ckpt");
    save_checkpoint(
        &Checkpoint {
            net,
            meta: PretrainMeta {
                steps: pcfg.steps as u64,
                final_loss: report.final_loss(),
                seed: pcfg.seed,
            },
        },
        &checkpoint,
    )?;
    Ok(PretrainOutput {
        checkpoint,
        loss_csv,
        losses: report.losses,
    })
}

/// Result of an alignment run.
#[derive(Debug, Clone)]
pub struct AlignOutcome {
    pub net: VelocityNet,
    pub rows: Vec<MetricsRow>,
}

fn population_std(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt()
}

fn rollout_spread(group: &RolloutGroup) -> f64 {
    let d = group.members[0].x0.len();
    (0..d)
        .map(|j| {
            let col: Vec<f64> = group.members.iter().map(|m| m.x0[j]).collect();
            population_std(&col)
        })
        .sum::<f64>()
        / d as f64
}

/// Run the alignment loop from `initial` with the given KL mode, writing one
/// row per update to `sink` when present.
///
/// Each update: pick `λ` (warm-up, then controller), snapshot the previous
/// policy, roll out a group, score it, build the equalized policy loss, add
/// `λ` times the KL penalty, take an Adam step, measure the KL terms, refresh
/// the anchor on schedule and feed the controller.
pub fn align(
    config: &RunConfig,
    initial: &VelocityNet,
    mode: KlMode,
    mut sink: Option<&mut CsvSink>,
) -> Result<AlignOutcome> {
    config.validate()?;
    let data = config.data.build()?;
    let schedule = config.schedule.build()?;
    let strategy = config.sde.build()?;
    let reward = config.reward_spec()?;
    let g = &config.grpo;
    let eq = if g.equalizer {
        EqualizerState::from_schedule(&schedule, &strategy, g.epsilon)?
    } else {
        EqualizerState::uniform(&schedule, &strategy)?
    };
    let mut net = initial.clone();
    let trust_cfg = TrustRegionConfig {
        mode,
        ..config.trust
    };
    let mut trust = TrustRegionState::new(trust_cfg, &net)?;
    let mut ctl = KlController::new(config.controller)?;
    let warmup = config.controller.warmup_steps;
    let mut opt = Optimizer::adam(g.lr, net.num_params())?;
    let mut master = ChaCha8Rng::seed_from_u64(config.run.seed);
    let mut rows = Vec::with_capacity(g.updates);
    let ncomp = reward.components.len();

    for k in 0..g.updates {
        let lambda = if k <= warmup {
            ctl.warmup_lambda(k)
        } else {
            ctl.lambda()
        };
        trust.refresh_prev(&net);
        let seed = master.next_u64();
        let attempt = (|| -> Result<MetricsRow> {
            let mut group =
                rollout_group(&net, &schedule, &strategy, g.condition, g.group_size, seed)?;
            let mut rewards = Vec::with_capacity(group.size());
            let mut comp = vec![0.0; ncomp];
            for m in &group.members {
                let s = reward.component_scores(&data, &m.x0, g.condition)?;
                rewards.push(
                    reward
                        .components
                        .iter()
                        .zip(&s)
                        .map(|(c, v)| c.weight * v)
                        .sum(),
                );
                for (a, v) in comp.iter_mut().zip(&s) {
                    *a += v / group.size() as f64;
                }
            }
            group.advantages = Some(group_advantages(&rewards, g.epsilon)?);
            let (pg_loss, mut grad) = grpo_loss_and_grad(&net, &group, &eq)?;
            let (penalty, pgrad) = kl_penalty(&trust, &group, &net)?;
            for (a, b) in grad.iter_mut().zip(&pgrad) {
                *a += lambda * b;
            }
            let loss = pg_loss + lambda * penalty;
            let grad_norm = l2_norm(&grad);
            if !loss.is_finite() || !grad_norm.is_finite() {
                return Err(Error::TrainingDiverged { step: k, loss });
            }
            opt.step(net.params_mut(), &grad);
            if !net.all_finite() {
                return Err(Error::TrainingDiverged { step: k, loss });
            }
            trust.step += 1;
            let anchor_kl = policy_kl(&net, snapshot(&trust.anchor), &group)?;
            let stepwise_kl = policy_kl(&net, snapshot(&trust.prev), &group)?;
            let init_kl = policy_kl(&net, snapshot(&trust.init), &group)?;
            let anchor_refresh = maybe_refresh_anchor(&mut trust, &net);
            if k >= warmup {
                let observed = match config.controller.signal {
                    ControllerSignal::Anchor => anchor_kl,
                    ControllerSignal::Stepwise => stepwise_kl,
                    ControllerSignal::Sum => match mode {
                        KlMode::NoKl => 0.0,
                        KlMode::Fixed => init_kl,
                        KlMode::Stepwise => stepwise_kl,
                        KlMode::Moving => anchor_kl,
                        KlMode::Dual => anchor_kl + stepwise_kl,
                    },
                };
                ctl.controller_update(observed);
            }
            Ok(MetricsRow {
                step: k,
                mean_reward: rewards.iter().sum::<f64>() / rewards.len() as f64,
                reward_std: population_std(&rewards),
                component_means: comp,
                loss,
                grad_norm,
                lambda_kl: lambda,
                anchor_kl,
                stepwise_kl,
                init_kl,
                penalty,
                anchor_refresh,
                rollout_std: rollout_spread(&group),
            })
        })();
        match attempt {
            Ok(row) => {
                if let Some(s) = sink.as_deref_mut() {
                    s.row(&row.record())?;
                }
                rows.push(row);
            }
            Err(e) => {
                if let Some(s) = sink.as_deref_mut() {
                    let mut failed = vec![k.to_string()];
                    failed.resize(metrics_header(&component_names(config)).len(), "NaN".into());
                    s.row(&failed)?;
                }
                return Err(e);
            }
        }
    }
    Ok(AlignOutcome { net, rows })
}

fn component_names(config: &RunConfig) -> Vec<String> {
    config
        .reward
        .components
        .iter()
        .map(|c| c.name.clone())
        .collect()
}

/// Files written by [`cmd_align`].
#[derive(Debug, Clone)]
pub struct AlignOutput {
    pub checkpoint: PathBuf,
    pub metrics_csv: PathBuf,
    pub rows: Vec<MetricsRow>,
}

/// Alignment with the configured KL mode: `aligned.ckpt` and `metrics.csv`.
pub fn cmd_align(config: &RunConfig, checkpoint: &Path) -> Result<AlignOutput> {
    config.validate()?;
    let ckpt = load_checkpoint(checkpoint)?;
    check_checkpoint(config, &ckpt)?;
    let out = &config.run.out;
    ensure_dir(out)?;
    let metrics_csv = out.join("metrics.csv");
    let mut sink = CsvSink::create(&metrics_csv, &metrics_header(&component_names(config)))?;
    let outcome = align(config, &ckpt.net, config.trust.mode, Some(&mut sink))?;
    sink.finish()?;
    let path = out.join("aligned.ckpt");
    save_checkpoint(
        &Checkpoint {
            net: outcome.net,
            meta: ckpt.meta,
        },
        &path,
    )?;
    Ok(AlignOutput {
        checkpoint: path,
        metrics_csv,
        rows: outcome.rows,
    })
}

fn check_checkpoint(config: &RunConfig, ckpt: &Checkpoint) -> Result<()> {
    if ckpt.net.config() != &config.net_config() {
        return Err(Error::Config(
            "checkpoint architecture differs from the [net]/[data] configuration".into(),
        ));
    }
    Ok(())
}

/// Output of [`cmd_compare_kl`]: one CSV and one metrics series per mode.
#[derive(Debug, Clone)]
pub struct CompareOutput {
    pub runs: Vec<(KlMode, PathBuf, Vec<MetricsRow>)>,
}

/// The same alignment run under every KL mode, written to `<mode>.csv`.
pub fn cmd_compare_kl(config: &RunConfig, checkpoint: &Path) -> Result<CompareOutput> {
    config.validate()?;
    let ckpt = load_checkpoint(checkpoint)?;
    check_checkpoint(config, &ckpt)?;
    let out = &config.run.out;
    ensure_dir(out)?;
    let header = metrics_header(&component_names(config));
    let mut runs = Vec::with_capacity(KlMode::ALL.len());
    for mode in KlMode::ALL {
        let path = out.join(format!("{}.csv", mode.name()));
        let mut sink = CsvSink::create(&path, &header)?;
        let outcome = align(config, &ckpt.net, mode, Some(&mut sink))?;
        sink.finish()?;
        runs.push((mode, path, outcome.rows));
    }
    Ok(CompareOutput { runs })
}

/// One row of the std-per-step comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct StdRow {
    pub regime: char,
    pub strategy: StrategyKind,
    /// 1-based step index.
    pub step: usize,
    pub sigma_t: f64,
    pub sigma_next: f64,
    pub zero_width: bool,
    pub std: f64,
}

/// The schedules compared by [`cmd_analyze_std`]: the repeated-head grid
/// and the clamped linear grid.
pub fn std_regime_schedules(config: &RunConfig) -> Result<(NoiseSchedule, NoiseSchedule)> {
    let s = &config.schedule;
    let head = NoiseSchedule::flowgrpo_style(s.steps, config.analyze.flowgrpo_sigma_max)?;
    let clamped = NoiseSchedule::linear(s.steps, s.sigma_max)?.clamped(s.floor)?;
    Ok((head, clamped))
}

/// Per-step noise std for FlowStyle and Precise under three regimes:
/// (a) both on the repeated-head grid, (b) both on the clamped grid,
/// (c) FlowStyle on the repeated-head grid against Precise on the clamped
/// grid. Written to `analyze_std.csv`.
pub fn cmd_analyze_std(config: &RunConfig) -> Result<Vec<StdRow>> {
    config.validate()?;
    let (head, clamped) = std_regime_schedules(config)?;
    let eta = config.sde.eta;
    let flow = VarianceStrategy::new(StrategyKind::FlowStyle, eta)?;
    let precise = VarianceStrategy::new(StrategyKind::Precise, eta)?;
    let plan: [(char, &VarianceStrategy, &NoiseSchedule); 6] = [
        ('a', &flow, &head),
        ('a', &precise, &head),
        ('b', &flow, &clamped),
        ('b', &precise, &clamped),
        ('c', &flow, &head),
        ('c', &precise, &clamped),
    ];
    let mut rows = Vec::new();
    for (regime, strat, sched) in plan {
        for (t, (a, b)) in sched.intervals().enumerate() {
            rows.push(StdRow {
                regime,
                strategy: strat.kind(),
                step: t + 1,
                sigma_t: a,
                sigma_next: b,
                zero_width: a == b,
                std: strat.step_std(a, b)?,
            });
        }
    }
    let out = &config.run.out;
    ensure_dir(out)?;
    let mut sink = CsvSink::create(
        &out.join("analyze_std.csv"),
        &[
            "regime",
            "strategy",
            "step",
            "sigma_t",
            "sigma_next",
            "zero_width",
            "std",
        ],
    )?;
    for r in &rows {
        sink.row(&[
            r.regime.to_string(),
            r.strategy.name().to_string(),
            r.step.to_string(),
            fmt_f64(r.sigma_t),
            fmt_f64(r.sigma_next),
            u8::from(r.zero_width).to_string(),
            fmt_f64(r.std),
        ])?;
    }
    sink.finish()?;
    Ok(rows)
}

/// One stochastic step of the gradient-norm table.
#[derive(Debug, Clone, PartialEq)]
pub struct GradNormRow {
    pub step: usize,
    pub sigma_t: f64,
    pub sigma_next: f64,
    pub variance: f64,
    /// Monte-Carlo mean of `‖∇_μ log π‖`.
    pub observed: f64,
    /// `E‖ζ‖ / Σ_t^{1/2}` for standard normal `ζ` in the state dimension.
    pub predicted: f64,
    pub proxy: f64,
    pub weight: f64,
    /// Mean `‖∂ log π/∂v‖` without equalization.
    pub contribution_plain: f64,
    /// The same with the equalizer weight applied.
    pub contribution_equalized: f64,
}

impl GradNormRow {
    pub fn ratio(&self) -> f64 {
        self.observed / self.predicted
    }
}

/// Monte-Carlo gradient magnitudes per timestep for the checkpointed policy,
/// written to `analyze_gradnorm.csv`.
pub fn cmd_analyze_gradnorm(config: &RunConfig, checkpoint: &Path) -> Result<Vec<GradNormRow>> {
    config.validate()?;
    let ckpt = load_checkpoint(checkpoint)?;
    check_checkpoint(config, &ckpt)?;
    let rows = gradnorm_table(config, &ckpt.net)?;
    let out = &config.run.out;
    ensure_dir(out)?;
    let mut sink = CsvSink::create(
        &out.join("analyze_gradnorm.csv"),
        &[
            "step",
            "sigma_t",
            "sigma_next",
            "variance",
            "observed_grad_norm",
            "predicted_grad_norm",
            "ratio",
            "proxy",
            "weight",
            "contribution_plain",
            "contribution_equalized",
        ],
    )?;
    for r in &rows {
        sink.row(&[
            r.step.to_string(),
            fmt_f64(r.sigma_t),
            fmt_f64(r.sigma_next),
            fmt_f64(r.variance),
            fmt_f64(r.observed),
            fmt_f64(r.predicted),
            fmt_f64(r.ratio()),
            fmt_f64(r.proxy),
            fmt_f64(r.weight),
            fmt_f64(r.contribution_plain),
            fmt_f64(r.contribution_equalized),
        ])?;
    }
    sink.finish()?;
    Ok(rows)
}

/// The table behind [`cmd_analyze_gradnorm`] for an in-memory network.
pub fn gradnorm_table(config: &RunConfig, net: &VelocityNet) -> Result<Vec<GradNormRow>> {
    let schedule = config.schedule.build()?;
    let strategy = config.sde.build()?;
    let plain = EqualizerState::uniform(&schedule, &strategy)?;
    let equalized = EqualizerState::from_schedule(&schedule, &strategy, config.grpo.epsilon)?;
    let group = rollout_group(
        net,
        &schedule,
        &strategy,
        config.grpo.condition,
        config.analyze.samples,
        config.run.seed,
    )?;
    let c = crate::oracle::expected_gaussian_norm(net.config().state_dim);
    let cp = step_contribution_norms(net, &group, &plain)?;
    let ce = step_contribution_norms(net, &group, &equalized)?;
    let mut rows = Vec::new();
    for t in 0..schedule.steps() {
        let (Some(p), Some(e), Some(proxy)) = (cp[t], ce[t], equalized.proxies[t]) else {
            continue;
        };
        let var = group.members[0].steps[t].params.variance;
        let observed = group
            .members
            .iter()
            .map(|m| {
                let s = &m.steps[t];
                l2_norm(
                    &s.x_next
                        .iter()
                        .zip(&s.params.mean)
                        .map(|(x, mu)| (x - mu) / var)
                        .collect::<Vec<_>>(),
                )
            })
            .sum::<f64>()
            / group.size() as f64;
        let (a, b) = schedule.interval(t);
        rows.push(GradNormRow {
            step: t + 1,
            sigma_t: a,
            sigma_next: b,
            variance: var,
            observed,
            predicted: c / var.sqrt(),
            proxy,
            weight: equalized.weights[t],
            contribution_plain: p,
            contribution_equalized: e,
        });
    }
    Ok(rows)
}
