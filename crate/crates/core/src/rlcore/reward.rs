use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::flownet::DataSpec;

/// Scoring rule for one reward component.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    /// `-‖x_0 - center_j‖`.
    TargetModeProximity(usize),
    /// `-‖x_0‖²/16`.
    Compactness,
    /// A function registered on the reward spec under this name.
    Custom(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardComponent {
    pub name: String,
    pub weight: f64,
    pub kind: RewardKind,
}

/// User-supplied scoring function of `(x_0, condition)`.
pub type CustomReward = Arc<dyn Fn(&[f64], Option<usize>) -> f64 + Send + Sync>;

/// Weighted sum of reward components evaluated on final samples.
#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardSpec {
    pub components: Vec<RewardComponent>,
    #[serde(skip)]
    custom: BTreeMap<String, CustomReward>,
}

impl fmt::Debug for RewardSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RewardSpec")
            .field("components", &self.components)
            .field("custom", &self.custom.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl PartialEq for RewardSpec {
    fn eq(&self, other: &Self) -> bool {
        self.components == other.components && self.custom.keys().eq(other.custom.keys())
    }
}

impl RewardSpec {
    pub fn new(components: Vec<RewardComponent>) -> Result<Self> {
        let spec = Self {
            components,
            custom: BTreeMap::new(),
        };
        if spec.components.is_empty() {
            return Err(invalid("reward needs at least one component"));
        }
        if spec.components.iter().any(|c| !c.weight.is_finite()) {
            return Err(invalid("reward weights must be finite"));
        }
        Ok(spec)
    }

    /// Proximity to mode `mode` with weight 1.
    pub fn target_mode(mode: usize) -> Self {
        Self::new(vec![RewardComponent {
            name: "proximity".into(),
            weight: 1.0,
            kind: RewardKind::TargetModeProximity(mode),
        }])
        .expect("one finite component")
    }

    pub fn register_custom(&mut self, name: impl Into<String>, f: CustomReward) {
        self.custom.insert(name.into(), f);
    }

    /// Checks that every component is well formed and resolvable.
    pub fn validate(&self, data: &DataSpec) -> Result<()> {
        if self.components.is_empty() {
            return Err(invalid("reward needs at least one component"));
        }
        for c in &self.components {
            if !c.weight.is_finite() {
                return Err(invalid(format!("weight of `{}` is not finite", c.name)));
            }
            match &c.kind {
                RewardKind::TargetModeProximity(j) if *j >= data.num_modes() => {
                    return Err(invalid(format!(
                        "`{}` targets mode {j} but the data has {} modes",
                        c.name,
                        data.num_modes()
                    )));
                }
                RewardKind::Custom(tag) if !self.custom.contains_key(tag) => {
                    return Err(invalid(format!("unknown reward tag `{tag}`")));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Unweighted component scores, in component order.
    pub fn component_scores(
        &self,
        data: &DataSpec,
        x0: &[f64],
        condition: Option<usize>,
    ) -> Result<Vec<f64>> {
        self.validate(data)?;
        if x0.len() != data.dim() {
            return Err(invalid("sample dimension differs from the data dimension"));
        }
        Ok(self
            .components
            .iter()
            .map(|c| match &c.kind {
                RewardKind::TargetModeProximity(j) => -data.mode_centers[*j]
                    .iter()
                    .zip(x0)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt(),
                RewardKind::Compactness => -x0.iter().map(|x| x * x).sum::<f64>() / 16.0,
                RewardKind::Custom(tag) => (self.custom[tag])(x0, condition),
            })
            .collect())
    }
}

/// `Σ_k w_k S_k(x_0)`.
pub fn composite_reward(
    spec: &RewardSpec,
    data: &DataSpec,
    x0: &[f64],
    condition: Option<usize>,
) -> Result<f64> {
    let scores = spec.component_scores(data, x0, condition)?;
    Ok(spec
        .components
        .iter()
        .zip(scores)
        .map(|(c, s)| c.weight * s)
        .sum())
}
