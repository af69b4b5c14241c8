//! Run configuration: one JSON document, every key overridable from the
//! command line as `--section.key=value`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::optimizer::{AlgoVariant, RatioDenominator, TrainConfig};
use crate::policy::FeatureSet;
use crate::preference::PrefTrainConfig;
use crate::reward::{HyperParams, PrefAggregation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvSection {
    pub modulus: u32,
    #[serde(rename = "T_max")]
    pub t_max: usize,
    /// Sampling weights for difficulties 1, 2, 3.
    pub difficulty_mix: [f64; 3],
    pub train_questions: usize,
    pub eval_questions: usize,
}

impl Default for EnvSection {
    fn default() -> Self {
        Self { modulus: 16, t_max: 12, difficulty_mix: [0.3, 0.7, 0.0], train_questions: 64, eval_questions: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicySection {
    pub learning_rate: f64,
    pub ratio_denominator: RatioDenominator,
    pub features: FeatureSet,
}

impl Default for PolicySection {
    fn default() -> Self {
        Self { learning_rate: 0.05, ratio_denominator: RatioDenominator::Behavior, features: FeatureSet::Base }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrefSection {
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub cross_pairs_per_traj: usize,
    pub split_fraction: f64,
}

impl Default for PrefSection {
    fn default() -> Self {
        Self { hidden_dim: 32, learning_rate: 1e-2, epochs: 200, batch_size: 32, cross_pairs_per_traj: 2, split_fraction: 0.9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardSection {
    pub lambda: f64,
    pub alpha: f64,
    pub n_min: usize,
    pub n_max: usize,
    pub pref_aggregation: PrefAggregation,
}

impl Default for RewardSection {
    fn default() -> Self {
        Self { lambda: 0.1, alpha: 0.1, n_min: 3, n_max: 6, pref_aggregation: PrefAggregation::Normalized }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimSection {
    pub variant: AlgoVariant,
    #[serde(rename = "G")]
    pub group_size: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub clip_eps: f64,
    pub kl_beta: f64,
    pub iterations: usize,
    pub batch_questions: usize,
    pub eval_every: usize,
    pub inner_epochs: usize,
}

impl Default for OptimSection {
    fn default() -> Self {
        Self {
            variant: AlgoVariant::Grpo,
            group_size: 8,
            k: 4,
            clip_eps: 0.2,
            kl_beta: 0.01,
            iterations: 300,
            batch_questions: 8,
            eval_every: 25,
            inner_epochs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub out_dir: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self { out_dir: PathBuf::from("runs") }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub env: EnvSection,
    pub policy: PolicySection,
    pub pref: PrefSection,
    pub reward: RewardSection,
    pub optim: OptimSection,
    pub paths: PathsSection,
}

fn parse_scalar(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        Ok(cfg)
    }

    /// Set the dotted key `path` (e.g. `optim.variant`) from a raw string.
    /// The value is parsed as JSON when possible and as a bare string
    /// otherwise; unknown keys are rejected.
    pub fn with_override(&self, path: &str, raw: &str) -> Result<Self> {
        let mut doc = serde_json::to_value(self)?;
        let mut slot = &mut doc;
        for key in path.split('.') {
            slot = slot
                .as_object_mut()
                .and_then(|o| o.get_mut(key))
                .ok_or_else(|| Error::InvalidHyperParams(format!("unknown config key {path:?}")))?;
        }
        *slot = parse_scalar(raw);
        Ok(serde_json::from_value(doc)?)
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig { modulus: self.env.modulus, t_max: self.env.t_max }
    }

    pub fn hyper_params(&self) -> HyperParams {
        HyperParams {
            lambda: self.reward.lambda,
            alpha: self.reward.alpha,
            n_min: self.reward.n_min,
            n_max: self.reward.n_max,
            group_size: self.optim.group_size,
            k: self.optim.k,
            clip_eps: self.optim.clip_eps,
            kl_beta: self.optim.kl_beta,
            t_max: self.env.t_max,
            pref_aggregation: self.reward.pref_aggregation,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            variant: self.optim.variant,
            iterations: self.optim.iterations,
            batch_questions: self.optim.batch_questions,
            learning_rate: self.policy.learning_rate,
            eval_every: self.optim.eval_every,
            inner_epochs: self.optim.inner_epochs,
            ratio_denominator: self.policy.ratio_denominator,
        }
    }

    pub fn pref_train_config(&self) -> PrefTrainConfig {
        PrefTrainConfig { epochs: self.pref.epochs, batch_size: self.pref.batch_size, learning_rate: self.pref.learning_rate }
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper_params().validate()?;
        if !(2..=crate::env::MAX_MODULUS).contains(&self.env.modulus) {
            return Err(Error::UnsupportedModulus(self.env.modulus));
        }
        if self.optim.k == 0 {
            return Err(Error::InvalidHyperParams("K must be ≥ 1".into()));
        }
        if self.optim.batch_questions == 0 || self.optim.inner_epochs == 0 {
            return Err(Error::InvalidHyperParams("batch_questions and inner_epochs must be ≥ 1".into()));
        }
        if !(self.pref.split_fraction > 0.0 && self.pref.split_fraction <= 1.0) {
            return Err(Error::InvalidHyperParams("split_fraction must lie in (0, 1]".into()));
        }
        if self.pref.hidden_dim == 0 || self.pref.batch_size == 0 {
            return Err(Error::InvalidHyperParams("hidden_dim and batch_size must be ≥ 1".into()));
        }
        Ok(())
    }
}
