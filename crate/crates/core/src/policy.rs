//! Linear-softmax policy over [`StepAction`]s.

use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{apply_step, distances_to, EnvConfig, Prefix, Question, StepAction, Trajectory};
use crate::error::{Error, Result};
use crate::{io, rng};

pub const NUM_ACTIONS: usize = StepAction::COUNT;

/// Policy input layout. `Base` is value one-hot, target one-hot, normalized
/// length, per-action counts and bias (`2 * modulus + 7`). `Offset` appends a
/// one-hot of `(target - value) mod modulus`, which a linear policy needs to
/// tell "at the target" apart from every other state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSet {
    #[default]
    Base,
    Offset,
}

impl FeatureSet {
    pub fn dim(self, modulus: u32) -> usize {
        match self {
            FeatureSet::Base => 2 * modulus as usize + 7,
            FeatureSet::Offset => 3 * modulus as usize + 7,
        }
    }

    /// Recover the layout from a checkpoint's declared dimension.
    pub fn for_dim(dim: usize, modulus: u32) -> Result<Self> {
        [FeatureSet::Base, FeatureSet::Offset]
            .into_iter()
            .find(|s| s.dim(modulus) == dim)
            .ok_or_else(|| Error::DimensionMismatch(format!("no policy feature layout has dimension {dim} at modulus {modulus}")))
    }
}

pub fn feature_dim(modulus: u32) -> usize {
    FeatureSet::Base.dim(modulus)
}

/// Base policy input for the state reached after `prefix`.
pub fn features(question: &Question, prefix: &Prefix<'_>, t_max: usize) -> Vec<f64> {
    features_for(FeatureSet::Base, question, prefix, t_max)
}

pub fn features_for(set: FeatureSet, question: &Question, prefix: &Prefix<'_>, t_max: usize) -> Vec<f64> {
    let m = question.modulus as usize;
    let scale = t_max as f64;
    let mut f = vec![0.0; set.dim(question.modulus)];
    f[prefix.value as usize] = 1.0;
    f[m + question.target as usize] = 1.0;
    f[2 * m] = prefix.len() as f64 / scale;
    for (k, c) in prefix.action_counts().iter().enumerate() {
        f[2 * m + 1 + k] = *c as f64 / scale;
    }
    f[2 * m + 6] = 1.0;
    if set == FeatureSet::Offset {
        let offset = (question.target + question.modulus - prefix.value) % question.modulus;
        f[2 * m + 7 + offset as usize] = 1.0;
    }
    f
}

/// Features in the layout `params` was built for.
pub fn state_features(params: &PolicyParams, question: &Question, prefix: &Prefix<'_>, t_max: usize) -> Result<Vec<f64>> {
    Ok(features_for(FeatureSet::for_dim(params.feature_dim, question.modulus)?, question, prefix, t_max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub feature_dim: usize,
    pub num_actions: usize,
    /// Row-major `num_actions x feature_dim`.
    pub weights: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros(feature_dim: usize) -> Self {
        Self { feature_dim, num_actions: NUM_ACTIONS, weights: vec![0.0; NUM_ACTIONS * feature_dim] }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_actions != NUM_ACTIONS || self.weights.len() != self.num_actions * self.feature_dim {
            return Err(Error::DimensionMismatch(format!(
                "policy weights have {} entries, expected {} x {}",
                self.weights.len(),
                self.num_actions,
                self.feature_dim
            )));
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFiniteParams);
        }
        Ok(())
    }

    pub fn row(&self, action: usize) -> &[f64] {
        &self.weights[action * self.feature_dim..(action + 1) * self.feature_dim]
    }

    pub fn row_mut(&mut self, action: usize) -> &mut [f64] {
        let d = self.feature_dim;
        &mut self.weights[action * d..(action + 1) * d]
    }

    pub fn logits(&self, feat: &[f64]) -> [f64; NUM_ACTIONS] {
        debug_assert_eq!(feat.len(), self.feature_dim);
        std::array::from_fn(|k| self.row(k).iter().zip(feat).map(|(w, x)| w * x).sum())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let params: Self = io::read_json(path)?;
        params.validate()?;
        Ok(params)
    }
}

/// Stable softmax over raw logits.
pub fn softmax(logits: &[f64; NUM_ACTIONS]) -> Result<[f64; NUM_ACTIONS]> {
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::PolicyOverflow);
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: [f64; NUM_ACTIONS] = std::array::from_fn(|k| (logits[k] - max).exp());
    let total: f64 = exp.iter().sum();
    Ok(exp.map(|e| e / total))
}

pub fn action_distribution(params: &PolicyParams, feat: &[f64]) -> Result<[f64; NUM_ACTIONS]> {
    softmax(&params.logits(feat))
}

/// `log pi(action | feat)` and its gradient `(1[k = action] - p_k) * feat`
/// laid out like `params.weights`.
pub fn log_prob_and_grad(params: &PolicyParams, feat: &[f64], action: StepAction) -> Result<(f64, Vec<f64>)> {
    let logits = params.logits(feat);
    let probs = softmax(&logits)?;
    let a = action.index();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_norm = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    let mut grad = vec![0.0; params.weights.len()];
    for (k, p) in probs.iter().enumerate() {
        let coef = if k == a { 1.0 - p } else { -p };
        for (g, x) in grad[k * params.feature_dim..(k + 1) * params.feature_dim].iter_mut().zip(feat) {
            *g = coef * x;
        }
    }
    Ok((logits[a] - log_norm, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RolloutMode {
    Sample,
    Greedy,
}

/// Index of the largest probability; ties go to the lowest index.
pub fn greedy_action(probs: &[f64; NUM_ACTIONS]) -> usize {
    let mut best = 0;
    for k in 1..NUM_ACTIONS {
        if probs[k] > probs[best] {
            best = k;
        }
    }
    best
}

fn sample_action(probs: &[f64; NUM_ACTIONS], u: f64) -> usize {
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // u landed in the float slack above the last cumulative sum
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(NUM_ACTIONS - 1)
}

/// Generate one trajectory, stopping at `ANSWER` or after `env.t_max` steps.
pub fn rollout(params: &PolicyParams, question: &Question, rng_seed: u64, mode: RolloutMode, env: EnvConfig) -> Result<Trajectory> {
    let mut r = rng::stream(rng_seed, rng::ROLLOUTS, &[]);
    let mut steps = Vec::with_capacity(env.t_max);
    let mut value = question.start;
    while steps.len() < env.t_max {
        let prefix = Prefix { steps: &steps, value, answered: false };
        let probs = action_distribution(params, &state_features(params, question, &prefix, env.t_max)?)?;
        let k = match mode {
            RolloutMode::Greedy => greedy_action(&probs),
            RolloutMode::Sample => sample_action(&probs, r.gen::<f64>()),
        };
        let action = StepAction::ALL[k];
        steps.push(action);
        if action == StepAction::Answer {
            break;
        }
        value = apply_step(value, action, question.modulus)?;
    }
    Trajectory::from_steps(question, &steps, env.t_max)
}

pub const KL_FLOOR: f64 = 1e-12;

/// Exact `KL(p || q)`; terms with `p_k = 0` vanish and `q` is clamped below
/// at [`KL_FLOOR`].
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pk, _)| **pk > 0.0)
        .map(|(pk, qk)| pk * (pk / qk.max(KL_FLOOR)).ln())
        .sum::<f64>()
        .max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SnapshotTag {
    Behavior,
    Reference,
}

/// Frozen copy of the policy parameters.
#[derive(Debug, Clone)]
pub struct PolicySnapshot {
    params: Arc<PolicyParams>,
    tag: SnapshotTag,
}

impl PolicySnapshot {
    pub fn new(params: &PolicyParams, tag: SnapshotTag) -> Self {
        Self { params: Arc::new(params.clone()), tag }
    }

    pub fn params(&self) -> &PolicyParams {
        &self.params
    }

    pub fn tag(&self) -> SnapshotTag {
        self.tag
    }
}

/// Hand-built policy that walks the BFS shortest-path tree towards a fixed
/// target and answers on arrival. Exact for any question set sharing that
/// target (the linear policy cannot condition moves on a target/value pair).
pub fn oracle_policy(target: u32, env: EnvConfig) -> Result<PolicyParams> {
    let m = env.modulus;
    let dist = distances_to(target, m)?;
    let mut params = PolicyParams::zeros(feature_dim(m));
    for v in 0..m {
        let action = if v == target {
            StepAction::Answer
        } else {
            let d = dist[v as usize].ok_or(Error::Unreachable { start: v, target, modulus: m })?;
            StepAction::MOVES
                .into_iter()
                .find(|a| dist[apply_step(v, *a, m).expect("non-terminal") as usize] == Some(d - 1))
                .expect("BFS layer has a successor")
        };
        params.row_mut(action.index())[v as usize] = 10.0;
    }
    Ok(params)
}
