//! Group-relative policy optimization: GRPO, a centering-only Dr.GRPO-style
//! variant, and WS-GRPO (outcome plus scaled prefix-preference reward).

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{evaluate, MetricsRecord};
use crate::env::{EnvConfig, Question, Trajectory};
use crate::error::{Error, Result};
use crate::policy::{
    state_features,
    action_distribution, rollout, PolicyParams, PolicySnapshot, RolloutMode, SnapshotTag, NUM_ACTIONS,
};
use crate::preference::PairScorer;
use crate::reward::{pref_reward, HyperParams, RewardBreakdown};
use crate::rng;

/// Groups whose reward std falls below this get all-zero advantages.
pub const SIGMA_FLOOR: f64 = 1e-8;
/// Smallest behavior probability accepted as a ratio denominator.
pub const MIN_BEHAVIOR_PROB: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AlgoVariant {
    #[serde(rename = "GRPO")]
    Grpo,
    #[serde(rename = "DRGRPO")]
    DrGrpo,
    #[serde(rename = "WSGRPO")]
    WsGrpo,
}

impl AlgoVariant {
    pub fn name(self) -> &'static str {
        match self {
            AlgoVariant::Grpo => "GRPO",
            AlgoVariant::DrGrpo => "DRGRPO",
            AlgoVariant::WsGrpo => "WSGRPO",
        }
    }
}

impl std::fmt::Display for AlgoVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for AlgoVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_uppercase().replace(['-', '.', '_'], "").as_str() {
            "GRPO" => Ok(AlgoVariant::Grpo),
            "DRGRPO" => Ok(AlgoVariant::DrGrpo),
            "WSGRPO" => Ok(AlgoVariant::WsGrpo),
            _ => Err(format!("unknown variant {s:?} (expected GRPO, DRGRPO or WSGRPO)")),
        }
    }
}

/// Which snapshot divides the current probability in the clipped ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RatioDenominator {
    #[default]
    Behavior,
    Reference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupStats {
    pub advantages: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

/// Group-relative advantages. GRPO and WS-GRPO standardize by the group
/// mean and population std (all zeros below [`SIGMA_FLOOR`]); DRGRPO only
/// subtracts the mean.
pub fn group_advantages(rewards: &[f64], variant: AlgoVariant) -> Result<GroupStats> {
    let g = rewards.len();
    if g < 2 {
        return Err(Error::GroupTooSmall);
    }
    let mean = rewards.iter().sum::<f64>() / g as f64;
    let std = (rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / g as f64).sqrt();
    let advantages = match variant {
        AlgoVariant::DrGrpo => rewards.iter().map(|r| r - mean).collect(),
        _ if std < SIGMA_FLOOR => vec![0.0; g],
        _ => rewards.iter().map(|r| (r - mean) / std).collect(),
    };
    Ok(GroupStats { advantages, mean, std })
}

/// `min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A)`.
pub fn clipped_term(ratio: f64, advantage: f64, clip_eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
    (ratio * advantage).min(clipped * advantage)
}

/// G rollouts for one question with their rewards and advantages.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutGroup {
    pub question: Question,
    pub trajectories: Vec<Trajectory>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
    pub reward_mean: f64,
    pub reward_std: f64,
    /// Preference breakdowns when a scorer was available, else empty.
    pub breakdowns: Vec<RewardBreakdown>,
}

impl RolloutGroup {
    pub fn question_id(&self) -> u64 {
        self.question.id
    }

    /// Compute rewards for `variant` and the matching advantages.
    pub fn score(
        question: Question,
        trajectories: Vec<Trajectory>,
        scorer: Option<&dyn PairScorer>,
        variant: AlgoVariant,
        hp: &HyperParams,
    ) -> Result<Self> {
        let breakdowns = match scorer {
            Some(s) => trajectories.iter().map(|t| pref_reward(s, &question, t, hp)).collect::<Result<Vec<_>>>()?,
            None if variant == AlgoVariant::WsGrpo => {
                return Err(Error::MissingDependency("WSGRPO requires a preference model".into()))
            }
            None => Vec::new(),
        };
        let rewards: Vec<f64> = match variant {
            AlgoVariant::WsGrpo => breakdowns.iter().map(|b| b.combined).collect(),
            _ => trajectories.iter().map(|t| f64::from(u8::from(t.correct))).collect(),
        };
        let stats = group_advantages(&rewards, variant)?;
        Ok(Self {
            question,
            trajectories,
            rewards,
            advantages: stats.advantages,
            reward_mean: stats.mean,
            reward_std: stats.std,
            breakdowns,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSettings {
    pub variant: AlgoVariant,
    pub clip_eps: f64,
    pub kl_beta: f64,
    pub t_max: usize,
    pub ratio_denominator: RatioDenominator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveValue {
    pub objective: f64,
    /// Laid out like `PolicyParams::weights`.
    pub grad: Vec<f64>,
    /// Mean per-visited-state KL to the reference policy.
    pub mean_kl: f64,
    /// Fraction of visited states where the clipped branch was selected.
    pub clip_fraction: f64,
}

/// Clipped surrogate minus `beta * KL(pi || ref)` and its exact gradient.
///
/// Advantages and denominator probabilities are constants. Each rollout's
/// per-step terms are averaged over its length (summed and divided by
/// `T_max` for DRGRPO); the KL term is always a per-rollout mean. Rollouts
/// are averaged within a group and groups are averaged.
pub fn surrogate_objective(
    policy: &PolicyParams,
    behavior: &PolicyParams,
    reference: &PolicyParams,
    groups: &[RolloutGroup],
    settings: &ObjectiveSettings,
) -> Result<ObjectiveValue> {
    let dim = policy.feature_dim;
    let mut grad = vec![0.0; policy.len()];
    let (mut objective, mut kl_total, mut kl_weight) = (0.0, 0.0, 0.0);
    let (mut clipped_states, mut states) = (0usize, 0usize);
    if groups.is_empty() {
        return Ok(ObjectiveValue { objective, grad, mean_kl: 0.0, clip_fraction: 0.0 });
    }
    let group_scale = 1.0 / groups.len() as f64;
    let denominator = match settings.ratio_denominator {
        RatioDenominator::Behavior => behavior,
        RatioDenominator::Reference => reference,
    };
    for group in groups {
        let g = group.trajectories.len() as f64;
        for (traj, &adv) in group.trajectories.iter().zip(&group.advantages) {
            let n = traj.len() as f64;
            let token_weight = match settings.variant {
                AlgoVariant::DrGrpo => 1.0 / settings.t_max as f64,
                _ => 1.0 / n,
            };
            let surrogate_scale = group_scale / g * token_weight;
            let kl_scale = group_scale / g / n;
            for (t, action) in traj.steps.iter().enumerate() {
                let feat = state_features(policy, &group.question, &traj.prefix(t), settings.t_max)?;
                let probs = action_distribution(policy, &feat)?;
                let denom_probs = action_distribution(denominator, &feat)?;
                let ref_probs = action_distribution(reference, &feat)?;
                let a = action.index();
                if denom_probs[a] < MIN_BEHAVIOR_PROB {
                    return Err(Error::DegenerateBehaviorProbability);
                }
                let ratio = probs[a] / denom_probs[a];
                objective += surrogate_scale * clipped_term(ratio, adv, settings.clip_eps);
                // d/dz_k of the surrogate, z = logits
                let mut dlogits = [0.0; NUM_ACTIONS];
                let unclipped = ratio * adv;
                let clipped = ratio.clamp(1.0 - settings.clip_eps, 1.0 + settings.clip_eps) * adv;
                states += 1;
                if unclipped <= clipped {
                    let c = surrogate_scale * adv * ratio;
                    for (k, d) in dlogits.iter_mut().enumerate() {
                        *d += c * (f64::from(u8::from(k == a)) - probs[k]);
                    }
                } else {
                    clipped_states += 1;
                }
                let log_ratios: [f64; NUM_ACTIONS] = std::array::from_fn(|k| {
                    if probs[k] > 0.0 {
                        (probs[k] / ref_probs[k].max(crate::policy::KL_FLOOR)).ln()
                    } else {
                        0.0
                    }
                });
                let kl: f64 = probs.iter().zip(&log_ratios).map(|(p, l)| p * l).sum();
                objective -= settings.kl_beta * kl_scale * kl;
                kl_total += kl / n;
                kl_weight += 1.0 / n;
                for (k, d) in dlogits.iter_mut().enumerate() {
                    *d -= settings.kl_beta * kl_scale * probs[k] * (log_ratios[k] - kl);
                }
                for (k, d) in dlogits.iter().enumerate() {
                    if *d != 0.0 {
                        for (gk, x) in grad[k * dim..(k + 1) * dim].iter_mut().zip(&feat) {
                            *gk += d * x;
                        }
                    }
                }
            }
        }
    }
    Ok(ObjectiveValue {
        objective,
        grad,
        mean_kl: if kl_weight > 0.0 { kl_total / kl_weight } else { 0.0 },
        clip_fraction: clipped_states as f64 / states.max(1) as f64,
    })
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub policy: PolicyParams,
    pub behavior: PolicySnapshot,
    pub reference: PolicySnapshot,
    pub hp: HyperParams,
    pub step_count: u64,
    /// Root of the rollout and minibatch seed lineage.
    pub seed: u64,
}

impl TrainState {
    /// Fresh state whose reference and behavior snapshots equal `policy`.
    pub fn new(policy: PolicyParams, hp: HyperParams, seed: u64) -> Self {
        Self {
            behavior: PolicySnapshot::new(&policy, SnapshotTag::Behavior),
            reference: PolicySnapshot::new(&policy, SnapshotTag::Reference),
            policy,
            hp,
            step_count: 0,
            seed,
        }
    }

    pub fn refresh_behavior(&mut self) {
        self.behavior = PolicySnapshot::new(&self.policy, SnapshotTag::Behavior);
    }

    pub fn settings(&self, variant: AlgoVariant, ratio_denominator: RatioDenominator) -> ObjectiveSettings {
        ObjectiveSettings {
            variant,
            clip_eps: self.hp.clip_eps,
            kl_beta: self.hp.kl_beta,
            t_max: self.hp.t_max,
            ratio_denominator,
        }
    }
}

/// Objective of the current policy against the state's snapshots.
pub fn objective_and_grad(
    state: &TrainState,
    groups: &[RolloutGroup],
    variant: AlgoVariant,
    ratio_denominator: RatioDenominator,
) -> Result<ObjectiveValue> {
    surrogate_objective(
        &state.policy,
        state.behavior.params(),
        state.reference.params(),
        groups,
        &state.settings(variant, ratio_denominator),
    )
}

/// `params += learning_rate * grad`.
pub fn ascent_step(params: &mut PolicyParams, grad: &[f64], learning_rate: f64) -> Result<()> {
    for (w, g) in params.weights.iter_mut().zip(grad) {
        *w += learning_rate * g;
    }
    if params.weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFiniteParams);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub variant: AlgoVariant,
    pub iterations: usize,
    pub batch_questions: usize,
    pub learning_rate: f64,
    pub eval_every: usize,
    pub inner_epochs: usize,
    pub ratio_denominator: RatioDenominator,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: AlgoVariant::Grpo,
            iterations: 300,
            batch_questions: 8,
            learning_rate: 0.05,
            eval_every: 25,
            inner_epochs: 1,
            ratio_denominator: RatioDenominator::Behavior,
        }
    }
}

/// Per-question rewards and advantages recorded at one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTrace {
    pub question_id: u64,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
    pub lengths: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub iteration: u64,
    pub groups: Vec<GroupTrace>,
    pub mean_reward: f64,
    pub mean_kl: f64,
    pub mean_pref_reward: f64,
    pub clip_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub metrics: Vec<MetricsRecord>,
    pub trace: Vec<IterationTrace>,
}

/// Sample and score one rollout group per minibatch question with the
/// current behavior snapshot.
pub fn collect_groups(
    state: &TrainState,
    batch: &[Question],
    scorer: Option<&dyn PairScorer>,
    variant: AlgoVariant,
    env: EnvConfig,
) -> Result<Vec<RolloutGroup>> {
    let behavior = state.behavior.params();
    batch
        .par_iter()
        .enumerate()
        .map(|(pos, q)| {
            let trajectories = (0..state.hp.group_size)
                .map(|i| {
                    let seed = rng::derive_seed(state.seed, rng::ROLLOUTS, &[state.step_count, pos as u64, i as u64]);
                    rollout(behavior, q, seed, RolloutMode::Sample, env)
                })
                .collect::<Result<Vec<_>>>()?;
            RolloutGroup::score(q.clone(), trajectories, scorer, variant, &state.hp)
        })
        .collect()
}

/// Run `cfg.iterations` rounds of: refresh behavior snapshot, sample a
/// minibatch of questions, roll out and score G trajectories each, and take
/// `inner_epochs` gradient-ascent steps on the clipped objective. Evaluates
/// greedily on `eval_questions` every `eval_every` iterations and after the
/// last one.
pub fn train(
    mut state: TrainState,
    train_questions: &[Question],
    eval_questions: &[Question],
    scorer: Option<&dyn PairScorer>,
    cfg: &TrainConfig,
    env: EnvConfig,
) -> Result<TrainOutcome> {
    state.hp.validate()?;
    if cfg.variant == AlgoVariant::WsGrpo && scorer.is_none() {
        return Err(Error::MissingDependency("WSGRPO requires a preference model".into()));
    }
    if train_questions.is_empty() && cfg.iterations > 0 {
        return Err(Error::EmptyInput("training questions".into()));
    }
    let mut metrics = Vec::new();
    let mut trace = Vec::with_capacity(cfg.iterations);
    let batch_size = cfg.batch_questions.clamp(1, train_questions.len().max(1));
    for it in 0..cfg.iterations {
        state.refresh_behavior();
        let mut order: Vec<usize> = (0..train_questions.len()).collect();
        order.partial_shuffle(&mut rng::stream(state.seed, "minibatch", &[state.step_count]), batch_size);
        let batch: Vec<Question> = order[..batch_size].iter().map(|&i| train_questions[i].clone()).collect();
        let groups = collect_groups(&state, &batch, scorer, cfg.variant, env)?;

        let mut first: Option<ObjectiveValue> = None;
        for _ in 0..cfg.inner_epochs.max(1) {
            let value = objective_and_grad(&state, &groups, cfg.variant, cfg.ratio_denominator)?;
            ascent_step(&mut state.policy, &value.grad, cfg.learning_rate)?;
            first.get_or_insert(value);
        }
        let first = first.expect("at least one inner epoch");

        let all_rewards: Vec<f64> = groups.iter().flat_map(|g| g.rewards.iter().copied()).collect();
        let prefs: Vec<f64> = groups.iter().flat_map(|g| g.breakdowns.iter().map(|b| b.pref_reward)).collect();
        let record = IterationTrace {
            iteration: it as u64 + 1,
            groups: groups
                .iter()
                .map(|g| GroupTrace {
                    question_id: g.question.id,
                    rewards: g.rewards.clone(),
                    advantages: g.advantages.clone(),
                    lengths: g.trajectories.iter().map(Trajectory::len).collect(),
                })
                .collect(),
            mean_reward: mean(&all_rewards),
            mean_kl: first.mean_kl,
            mean_pref_reward: mean(&prefs),
            clip_fraction: first.clip_fraction,
        };
        state.step_count += 1;

        let due = cfg.eval_every > 0 && (it + 1) % cfg.eval_every == 0;
        if (due || it + 1 == cfg.iterations) && !eval_questions.is_empty() {
            let ev = evaluate(&state.policy, eval_questions, env)?;
            metrics.push(MetricsRecord::from_evaluation(
                record.iteration,
                cfg.variant.name(),
                &ev,
                record.mean_reward,
                record.mean_kl,
                record.mean_pref_reward,
            ));
        }
        trace.push(record);
    }
    Ok(TrainOutcome { state, metrics, trace })
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::StepAction;
    use crate::policy::feature_dim;

    #[test]
    fn advantage_examples() {
        let s = group_advantages(&[1.0, 0.0, 0.0, 1.0], AlgoVariant::Grpo).unwrap();
        assert_eq!((s.mean, s.std), (0.5, 0.5));
        assert_eq!(s.advantages, vec![1.0, -1.0, -1.0, 1.0]);
        let s = group_advantages(&[1.0; 4], AlgoVariant::Grpo).unwrap();
        assert_eq!(s.advantages, vec![0.0; 4]);
        let s = group_advantages(&[1.0, 0.0, 0.0, 1.0], AlgoVariant::DrGrpo).unwrap();
        assert_eq!(s.advantages, vec![0.5, -0.5, -0.5, 0.5]);
        assert_eq!(group_advantages(&[1.0], AlgoVariant::Grpo).unwrap_err().to_string(), "group too small for relative baseline");
    }

    #[test]
    fn clipped_term_examples() {
        assert!((clipped_term(1.3, 1.0, 0.2) - 1.2).abs() < 1e-15);
        assert_eq!(clipped_term(1.0, -0.7, 0.3), -0.7);
        assert_eq!(clipped_term(0.5, -1.0, 0.2), -0.8);
        assert_eq!(clipped_term(0.5, 1.0, 0.2), 0.5);
    }

    fn one_group(variant: AlgoVariant) -> RolloutGroup {
        let q = Question::new(0, 2, 5, 16).unwrap();
        let a = Trajectory::from_steps(&q, &[StepAction::Add3, StepAction::Answer], 12).unwrap();
        let b = Trajectory::from_steps(&q, &[StepAction::Noop, StepAction::Answer], 12).unwrap();
        RolloutGroup::score(q, vec![a, b], None, variant, &HyperParams::default()).unwrap()
    }

    #[test]
    fn identity_snapshots_give_mean_advantage() {
        let state = TrainState::new(PolicyParams::zeros(feature_dim(16)), HyperParams::default(), 0);
        let g = one_group(AlgoVariant::Grpo);
        assert_eq!(g.advantages, vec![1.0, -1.0]);
        let v = objective_and_grad(&state, &[g], AlgoVariant::Grpo, RatioDenominator::Behavior).unwrap();
        assert!(v.objective.abs() < 1e-15);
        assert_eq!(v.mean_kl, 0.0);
    }

    #[test]
    fn wsgrpo_requires_scorer() {
        let q = Question::new(0, 2, 5, 16).unwrap();
        let t = Trajectory::from_steps(&q, &[StepAction::Answer], 12).unwrap();
        let err = RolloutGroup::score(q, vec![t.clone(), t], None, AlgoVariant::WsGrpo, &HyperParams::default());
        assert!(matches!(err, Err(Error::MissingDependency(_))));
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let mut p = PolicyParams::zeros(feature_dim(16));
        p.weights[3] = 0.25;
        let before = p.clone();
        ascent_step(&mut p, &vec![1.0; before.len()], 0.0).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("ws-grpo".parse::<AlgoVariant>().unwrap(), AlgoVariant::WsGrpo);
        assert_eq!("DRGRPO".parse::<AlgoVariant>().unwrap(), AlgoVariant::DrGrpo);
        assert!("ppo".parse::<AlgoVariant>().is_err());
        assert_eq!(serde_json::to_string(&AlgoVariant::WsGrpo).unwrap(), "\"WSGRPO\"");
    }
}
