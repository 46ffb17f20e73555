use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{StrategyKind, VarianceStrategy, DEFAULT_ETA};
use crate::error::{Error, Result};
use crate::flownet::{DataSpec, NetConfig, PretrainConfig};
use crate::optim::OptimizerKind;
use crate::rlcore::{RewardComponent, RewardKind, RewardSpec, DEFAULT_EPSILON};
use crate::schedule::{NoiseSchedule, DEFAULT_FLOOR, DEFAULT_STEPS};
use crate::trustregion::{KlControllerConfig, TrustRegionConfig};

/// Grid family for sampling schedules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Linear,
    FlowgrpoStyle,
    Clamped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    pub kind: ScheduleKind,
    pub steps: usize,
    pub sigma_max: f64,
    pub floor: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self {
            kind: ScheduleKind::Clamped,
            steps: DEFAULT_STEPS,
            sigma_max: 1.0,
            floor: DEFAULT_FLOOR,
        }
    }
}

impl ScheduleSection {
    pub fn build(&self) -> Result<NoiseSchedule> {
        match self.kind {
            ScheduleKind::Linear => NoiseSchedule::linear(self.steps, self.sigma_max),
            ScheduleKind::FlowgrpoStyle => {
                NoiseSchedule::flowgrpo_style(self.steps, self.sigma_max)
            }
            ScheduleKind::Clamped => {
                NoiseSchedule::linear(self.steps, self.sigma_max)?.clamped(self.floor)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdeSection {
    pub strategy: StrategyKind,
    pub eta: f64,
}

impl Default for SdeSection {
    fn default() -> Self {
        Self {
            strategy: StrategyKind::Precise,
            eta: DEFAULT_ETA,
        }
    }
}

impl SdeSection {
    pub fn build(&self) -> Result<VarianceStrategy> {
        VarianceStrategy::new(self.strategy, self.eta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetSection {
    pub hidden: Vec<usize>,
    pub time_embed: usize,
    pub cond_embed: usize,
    pub init_seed: u64,
}

impl Default for NetSection {
    fn default() -> Self {
        let d = NetConfig::default();
        Self {
            hidden: d.hidden,
            time_embed: d.time_embed,
            cond_embed: d.cond_embed,
            init_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub modes: usize,
    pub radius: f64,
    pub mode_std: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            modes: 8,
            radius: 4.0,
            mode_std: 0.3,
        }
    }
}

impl DataSection {
    pub fn build(&self) -> Result<DataSpec> {
        DataSpec::ring(self.modes, self.radius, self.mode_std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSection {
    pub components: Vec<RewardComponent>,
}

impl Default for RewardSection {
    fn default() -> Self {
        Self {
            components: vec![RewardComponent {
                name: "proximity".into(),
                weight: 1.0,
                kind: RewardKind::TargetModeProximity(0),
            }],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainSection {
    pub steps: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub uncond_prob: f64,
    pub optimizer: OptimizerKind,
}

impl Default for PretrainSection {
    fn default() -> Self {
        Self {
            steps: 5000,
            lr: 3e-3,
            batch_size: 128,
            uncond_prob: 0.5,
            optimizer: OptimizerKind::Adam,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrpoSection {
    pub group_size: usize,
    pub updates: usize,
    pub lr: f64,
    /// Condition shared by every rollout group; absent means unconditional.
    pub condition: Option<usize>,
    pub equalizer: bool,
    pub epsilon: f64,
}

impl Default for GrpoSection {
    fn default() -> Self {
        Self {
            group_size: 8,
            updates: 300,
            lr: 1e-3,
            condition: None,
            equalizer: true,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeSection {
    /// Rollouts per step for the gradient-norm table.
    pub samples: usize,
    /// Head level of the repeated-head grid in the std comparison.
    pub flowgrpo_sigma_max: f64,
}

impl Default for AnalyzeSection {
    fn default() -> Self {
        Self {
            samples: 10_000,
            flowgrpo_sigma_max: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("runs/default")
}

/// Everything a command needs. Every section but `run` may be omitted and
/// falls back to its defaults; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub sde: SdeSection,
    #[serde(default)]
    pub net: NetSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub reward: RewardSection,
    #[serde(default)]
    pub pretrain: PretrainSection,
    #[serde(default)]
    pub grpo: GrpoSection,
    #[serde(default)]
    pub trust: TrustRegionConfig,
    #[serde(default)]
    pub controller: KlControllerConfig,
    #[serde(default)]
    pub analyze: AnalyzeSection,
    pub run: RunSection,
}

impl RunConfig {
    /// Defaults everywhere, with the given seed.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            schedule: Default::default(),
            sde: Default::default(),
            net: Default::default(),
            data: Default::default(),
            reward: Default::default(),
            pretrain: Default::default(),
            grpo: Default::default(),
            trust: Default::default(),
            controller: Default::default(),
            analyze: Default::default(),
            run: RunSection {
                seed,
                out: default_out(),
            },
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Cross-field checks; errors are reported as configuration errors.
    pub fn validate(&self) -> Result<()> {
        let wrap = |section: &str, e: Error| Error::Config(format!("[{section}] {e}"));
        self.schedule.build().map_err(|e| wrap("schedule", e))?;
        self.sde.build().map_err(|e| wrap("sde", e))?;
        let data = self.data.build().map_err(|e| wrap("data", e))?;
        self.net_config().validate().map_err(|e| wrap("net", e))?;
        self.reward_spec()
            .and_then(|r| r.validate(&data))
            .map_err(|e| wrap("reward", e))?;
        self.pretrain_config()
            .validate()
            .map_err(|e| wrap("pretrain", e))?;
        let g = &self.grpo;
        if g.group_size < 2 {
            return Err(Error::Config("[grpo] group_size must be at least 2".into()));
        }
        if !(g.lr > 0.0 && g.lr.is_finite()) {
            return Err(Error::Config("[grpo] lr must be positive".into()));
        }
        if g.condition.is_some_and(|c| c >= self.data.modes) {
            return Err(Error::Config(
                "[grpo] condition exceeds the number of modes".into(),
            ));
        }
        if !(g.epsilon >= 0.0) {
            return Err(Error::Config("[grpo] epsilon must be non-negative".into()));
        }
        self.trust.validate().map_err(|e| wrap("trust", e))?;
        self.controller
            .validate()
            .map_err(|e| wrap("controller", e))?;
        if self.analyze.samples < 2 {
            return Err(Error::Config("[analyze] samples must be at least 2".into()));
        }
        if !(self.analyze.flowgrpo_sigma_max > 0.0 && self.analyze.flowgrpo_sigma_max < 1.0) {
            return Err(Error::Config(
                "[analyze] flowgrpo_sigma_max must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }

    pub fn net_config(&self) -> NetConfig {
        NetConfig {
            state_dim: 2,
            hidden: self.net.hidden.clone(),
            time_embed: self.net.time_embed,
            cond_embed: self.net.cond_embed,
            num_conditions: self.data.modes,
        }
    }

    pub fn pretrain_config(&self) -> PretrainConfig {
        let p = &self.pretrain;
        PretrainConfig {
            steps: p.steps,
            lr: p.lr,
            batch_size: p.batch_size,
            seed: self.run.seed,
            uncond_prob: p.uncond_prob,
            optimizer: p.optimizer,
        }
    }

    pub fn reward_spec(&self) -> Result<RewardSpec> {
        RewardSpec::new(self.reward.components.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = RunConfig::from_toml_str("[run]\nseed = 3\n").unwrap();
        assert_eq!(cfg, RunConfig::with_seed(3));
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = RunConfig::with_seed(9);
        assert_eq!(
            RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap(),
            cfg
        );
    }

    #[test]
    fn unknown_key_is_named() {
        let err =
            RunConfig::from_toml_str("[run]\nseed = 3\n[grpo]\nlearning_rate = 0.1\n").unwrap_err();
        assert!(
            matches!(err, Error::Config(ref m) if m.contains("learning_rate")),
            "{err}"
        );
    }

    #[test]
    fn seed_is_required() {
        assert!(RunConfig::from_toml_str("[grpo]\nupdates = 3\n").is_err());
    }

    #[test]
    fn cross_field_validation() {
        let text = "[run]\nseed = 1\n[grpo]\ncondition = 8\n";
        assert!(matches!(
            RunConfig::from_toml_str(text),
            Err(Error::Config(_))
        ));
        let text = "[run]\nseed = 1\n[trust]\nmode = \"dual\"\nbeta_vel = 0.0\n";
        assert!(matches!(
            RunConfig::from_toml_str(text),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn reward_components_parse() {
        let text = r#"
[run]
seed = 1
[reward]
components = [
  { name = "proximity", weight = 0.5, kind = { target_mode_proximity = 2 } },
  { name = "compact", weight = 0.5, kind = "compactness" },
]
"#;
        let cfg = RunConfig::from_toml_str(text).unwrap();
        assert_eq!(
            cfg.reward.components[0].kind,
            RewardKind::TargetModeProximity(2)
        );
        assert_eq!(cfg.reward.components[1].kind, RewardKind::Compactness);
        let bad = text.replace("\"compactness\"", "{ custom = \"nope\" }");
        assert!(RunConfig::from_toml_str(&bad).is_err());
    }
}
