//! Evaluation metrics, preference-model diagnostics, and bound calculators.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{sample_questions, EnvConfig, Prefix, Question, StepAction, Trajectory};
use crate::error::{Error, Result};
use crate::policy::{rollout, PolicyParams, RolloutMode};
use crate::preference::{build_pairs, PairScorer, PROB_CLAMP};
use crate::reward::{pref_reward, HyperParams, PrefAggregation};
use crate::rng;

/// Tokens per reasoning step; one step is one token at this scale.
pub const TOKENS_PER_STEP: f64 = 1.0;

/// One evaluation checkpoint row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub iteration: u64,
    pub variant: String,
    pub pass_at_1: f64,
    pub avg_steps: f64,
    pub eval_length_tokens: f64,
    pub step_efficiency: f64,
    pub mean_reward: f64,
    pub mean_kl: f64,
    pub mean_pref_reward: f64,
}

impl MetricsRecord {
    pub fn from_evaluation(iteration: u64, variant: &str, ev: &Evaluation, mean_reward: f64, mean_kl: f64, mean_pref_reward: f64) -> Self {
        Self {
            iteration,
            variant: variant.to_string(),
            pass_at_1: ev.pass_at_1,
            avg_steps: ev.avg_steps,
            eval_length_tokens: ev.eval_length_tokens,
            step_efficiency: ev.step_efficiency,
            mean_reward,
            mean_kl,
            mean_pref_reward,
        }
    }
}

/// Greedy-decoding evaluation over a question set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub pass_at_1: f64,
    pub avg_steps: f64,
    pub eval_length_tokens: f64,
    pub step_efficiency: f64,
    pub length_histogram: BTreeMap<usize, usize>,
}

impl Evaluation {
    /// Fraction of evaluated rollouts shorter than `n_min` and longer than
    /// `n_max`.
    pub fn penalty_bound_fractions(&self, n_min: usize, n_max: usize) -> (f64, f64) {
        let total: usize = self.length_histogram.values().sum();
        let count = |pred: &dyn Fn(usize) -> bool| {
            self.length_histogram.iter().filter(|(l, _)| pred(**l)).map(|(_, c)| c).sum::<usize>() as f64 / total.max(1) as f64
        };
        (count(&|l| l < n_min), count(&|l| l > n_max))
    }
}

pub fn evaluate(policy: &PolicyParams, questions: &[Question], env: EnvConfig) -> Result<Evaluation> {
    if questions.is_empty() {
        return Err(Error::EmptyInput("evaluation questions".into()));
    }
    let mut correct = 0usize;
    let mut steps = 0usize;
    let mut length_histogram = BTreeMap::new();
    for q in questions {
        let t = rollout(policy, q, 0, RolloutMode::Greedy, env)?;
        correct += usize::from(t.correct);
        steps += t.len();
        *length_histogram.entry(t.len()).or_insert(0) += 1;
    }
    let n = questions.len() as f64;
    let pass_at_1 = correct as f64 / n;
    let avg_steps = steps as f64 / n;
    Ok(Evaluation {
        pass_at_1,
        avg_steps,
        eval_length_tokens: avg_steps * TOKENS_PER_STEP,
        step_efficiency: pass_at_1 / avg_steps,
        length_histogram,
    })
}

/// `|P(q, +, -) - P(q, -, +)|`.
pub fn score_gap(scorer: &dyn PairScorer, question: &Question, traj_correct: &Trajectory, traj_incorrect: &Trajectory) -> f64 {
    let (p, n) = (traj_correct.full(), traj_incorrect.full());
    (scorer.score(question, &p, &n) - scorer.score(question, &n, &p)).abs()
}

/// How early the scorer ranks a correct trace above an incorrect one.
///
/// For prefixes `t = 2..=n` (n the shorter length), a strictly-above-0.5
/// score earns weight `1/t`; each pair's score is normalized by the total
/// weight and pairs are averaged.
pub fn prefix_anticipation(scorer: &dyn PairScorer, pairs: &[(Question, Trajectory, Trajectory)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("prefix-anticipation pairs".into()));
    }
    let mut total = 0.0;
    for (q, pos, neg) in pairs {
        let n = pos.len().min(neg.len());
        if n < 2 {
            return Err(Error::InvalidTrajectory(format!("prefix anticipation needs length >= 2, got {n}")));
        }
        let (mut hit, mut max) = (0.0, 0.0);
        for t in 2..=n {
            let w = 1.0 / t as f64;
            max += w;
            if scorer.score(q, &pos.prefix(t), &neg.prefix(t)) > 0.5 {
                hit += w;
            }
        }
        total += hit / max;
    }
    Ok(total / pairs.len() as f64)
}

/// Uniform-convergence bound for a class of VC dimension `d_p` on `n`
/// pairs at confidence `1 - delta` (natural logarithms).
pub fn vc_bound(d_p: f64, n: f64, delta: f64) -> f64 {
    ((2.0 * d_p * (2.0 * std::f64::consts::E * n / d_p).ln() + 2.0 * (2.0 / delta).ln()) / n).sqrt()
}

/// Objective degradation from a sup-norm preference error `eps_pref`,
/// `lambda * T_max * eps_pref / 4`.
pub fn robustness_bound(lambda: f64, t_max: f64, eps_pref: f64) -> f64 {
    lambda * t_max * eps_pref / 4.0
}

/// Argument of the generalization rate, `sqrt((max(d, d_p) + (lambda B T_max)^2) / n)`,
/// without the hidden logarithmic factors.
pub fn generalization_rate(d: f64, d_p: f64, lambda: f64, scorer_bound: f64, t_max: f64, n: f64) -> f64 {
    ((d.max(d_p) + lambda * lambda * (scorer_bound * t_max).powi(2)) / n).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub d_p: u64,
    pub d: u64,
    pub n: u64,
    pub delta: f64,
    pub scorer_bound: f64,
    pub t_max: u64,
    pub lambda: f64,
}

impl BoundInputs {
    /// The bounds are vacuous when there are fewer samples than dimensions.
    pub fn is_meaningful(&self) -> bool {
        self.n >= self.d_p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub inputs: BoundInputs,
    pub meaningful: bool,
    /// Preference-model consistency bound.
    pub preference_error: f64,
    /// Objective degradation bound with `eps_pref = preference_error`.
    pub policy_robustness: f64,
    pub generalization_rate: f64,
}

pub fn bounds_report(inputs: BoundInputs) -> BoundsReport {
    let eps = vc_bound(inputs.d_p as f64, inputs.n as f64, inputs.delta);
    BoundsReport {
        inputs,
        meaningful: inputs.is_meaningful(),
        preference_error: eps,
        policy_robustness: robustness_bound(inputs.lambda, inputs.t_max as f64, eps),
        generalization_rate: generalization_rate(
            inputs.d as f64,
            inputs.d_p as f64,
            inputs.lambda,
            inputs.scorer_bound,
            inputs.t_max as f64,
            inputs.n as f64,
        ),
    }
}

/// Wraps a scorer and shifts every score by a deterministic pseudo-random
/// amount in `[-eps, eps]`, re-clamped to the probability range. Clamping
/// is a projection, so the shift never exceeds `eps`.
pub struct PerturbedScorer<'a> {
    pub base: &'a dyn PairScorer,
    pub eps: f64,
    pub seed: u64,
}

impl PerturbedScorer<'_> {
    fn offset(&self, question: &Question, a: &Prefix<'_>, b: &Prefix<'_>) -> f64 {
        let mut path = vec![question.id, u64::from(a.value), u64::from(a.answered), u64::from(b.value), u64::from(b.answered)];
        path.extend(a.steps.iter().map(|s| s.index() as u64));
        path.push(u64::MAX);
        path.extend(b.steps.iter().map(|s| s.index() as u64));
        let h = rng::derive_seed(self.seed, "perturb", &path);
        // uniform in [-1, 1]
        (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    }
}

impl PairScorer for PerturbedScorer<'_> {
    fn score(&self, question: &Question, a: &Prefix<'_>, b: &Prefix<'_>) -> f64 {
        let base = self.base.score(question, a, b);
        (base + self.eps * self.offset(question, a, b)).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub perturb_eps: f64,
    pub trajectories: usize,
    pub aggregation: PrefAggregation,
    pub max_step_delta: f64,
    pub max_delta_pref: f64,
    pub max_delta_ws: f64,
    /// Worst-case allowed `|dR_pref|` over the evaluated lengths.
    pub pref_bound: f64,
    pub ws_bound: f64,
    /// Number of trajectories whose reward change exceeded its
    /// length-specific bound.
    pub violations: usize,
    pub holds: bool,
}

/// Allowed `|dR_pref|` for a length-`n` trajectory when every step score
/// moves by at most `eps`.
pub fn pref_delta_bound(n: usize, eps: f64, aggregation: PrefAggregation) -> f64 {
    match aggregation {
        PrefAggregation::Normalized => eps / n as f64,
        PrefAggregation::Sum => n.saturating_sub(1) as f64 * eps,
    }
}

/// Float slack for bound checks.
pub const BOUND_SLACK: f64 = 1e-12;

/// Perturb the scorer by at most `perturb_eps` per prefix pair and measure
/// the induced change in preference and combined rewards.
pub fn empirical_robustness(
    scorer: &dyn PairScorer,
    perturb_eps: f64,
    items: &[(Question, Trajectory)],
    rng_seed: u64,
    hp: &HyperParams,
) -> Result<RobustnessReport> {
    let perturbed = PerturbedScorer { base: scorer, eps: perturb_eps, seed: rng_seed };
    let (mut max_step, mut max_pref, mut max_ws, mut pref_bound) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut violations = 0;
    for (q, t) in items {
        let a = pref_reward(scorer, q, t, hp)?;
        let b = pref_reward(&perturbed, q, t, hp)?;
        for (x, y) in a.step_scores.iter().zip(&b.step_scores) {
            max_step = max_step.max((x - y).abs());
        }
        let d_pref = (a.pref_reward - b.pref_reward).abs();
        let d_ws = (a.combined - b.combined).abs();
        let bound = pref_delta_bound(t.len(), perturb_eps, hp.pref_aggregation);
        if d_pref > bound + BOUND_SLACK || d_ws > hp.lambda * bound + BOUND_SLACK {
            violations += 1;
        }
        max_pref = max_pref.max(d_pref);
        max_ws = max_ws.max(d_ws);
        pref_bound = pref_bound.max(bound);
    }
    Ok(RobustnessReport {
        perturb_eps,
        trajectories: items.len(),
        aggregation: hp.pref_aggregation,
        max_step_delta: max_step,
        max_delta_pref: max_pref,
        max_delta_ws: max_ws,
        pref_bound,
        ws_bound: hp.lambda * pref_bound,
        violations,
        holds: violations == 0 && max_step <= perturb_eps + BOUND_SLACK,
    })
}

/// Random questions, each with one random (possibly truncated) rollout of
/// random length in `1..=T_max`.
pub fn random_trajectories(count: usize, seed: u64, env: EnvConfig) -> Result<Vec<(Question, Trajectory)>> {
    let questions = sample_questions(seed, count, [0.5, 0.5, 0.0], env.modulus)?;
    let mut r = rng::stream(seed, rng::EVAL, &[u64::MAX]);
    questions
        .into_iter()
        .map(|q| {
            let n = r.gen_range(1..=env.t_max);
            let mut steps: Vec<StepAction> = (0..n).map(|_| StepAction::ALL[r.gen_range(0..4)]).collect();
            if r.gen_bool(0.7) {
                steps[n - 1] = StepAction::Answer;
            }
            let t = Trajectory::from_steps(&q, &steps, env.t_max)?;
            Ok((q, t))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthBucket {
    pub length: usize,
    pub value: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub score_gap_by_length: Vec<LengthBucket>,
    pub prefix_anticipation_by_length: Vec<LengthBucket>,
    pub combined_reward_by_length: Vec<LengthBucket>,
    pub robustness: Vec<RobustnessReport>,
    pub bounds: BoundsReport,
}

fn bucket_means(values: impl IntoIterator<Item = (usize, f64)>) -> Vec<LengthBucket> {
    let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for (len, v) in values {
        let e = acc.entry(len).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    acc.into_iter().map(|(length, (sum, count))| LengthBucket { length, value: sum / count as f64, count }).collect()
}

/// Preference-model diagnostics over an outcome-labelled corpus.
///
/// Correct/incorrect pairs are formed exactly as for training; pairs are
/// bucketed by the shorter trajectory's length.
#[allow(clippy::too_many_arguments)]
pub fn analyze(
    scorer: &dyn PairScorer,
    questions: &[Question],
    corpus: &BTreeMap<u64, Vec<Trajectory>>,
    hp: &HyperParams,
    cross_pairs_per_traj: usize,
    seed: u64,
    pref_param_count: usize,
    policy_param_count: usize,
) -> Result<AnalysisReport> {
    if corpus.values().all(Vec::is_empty) {
        return Err(Error::EmptyInput("trajectory corpus".into()));
    }
    let pairs: Vec<(Question, Trajectory, Trajectory)> = build_pairs(questions, corpus, seed, cross_pairs_per_traj)?
        .into_iter()
        .filter(|ex| ex.label == 1)
        .map(|ex| (ex.question, ex.traj_a, ex.traj_b))
        .collect();
    let min_len = |p: &(Question, Trajectory, Trajectory)| p.1.len().min(p.2.len());

    let score_gap_by_length = bucket_means(pairs.iter().map(|p| (min_len(p), score_gap(scorer, &p.0, &p.1, &p.2))));

    let mut by_len: BTreeMap<usize, Vec<(Question, Trajectory, Trajectory)>> = BTreeMap::new();
    for p in pairs.iter().filter(|p| min_len(p) >= 2) {
        by_len.entry(min_len(p)).or_default().push(p.clone());
    }
    let prefix_anticipation_by_length = by_len
        .iter()
        .map(|(len, ps)| Ok(LengthBucket { length: *len, value: prefix_anticipation(scorer, ps)?, count: ps.len() }))
        .collect::<Result<Vec<_>>>()?;

    let by_id: BTreeMap<u64, &Question> = questions.iter().map(|q| (q.id, q)).collect();
    let items: Vec<(Question, Trajectory)> = corpus
        .iter()
        .filter_map(|(id, ts)| by_id.get(id).map(|q| ts.iter().map(move |t| ((*q).clone(), t.clone()))))
        .flatten()
        .collect();
    let combined = items
        .iter()
        .map(|(q, t)| Ok((t.len(), pref_reward(scorer, q, t, hp)?.combined)))
        .collect::<Result<Vec<_>>>()?;
    let combined_reward_by_length = bucket_means(combined);

    let robustness = [0.01, 0.1]
        .into_iter()
        .map(|eps| empirical_robustness(scorer, eps, &items, seed, hp))
        .collect::<Result<Vec<_>>>()?;

    let bounds = bounds_report(BoundInputs {
        d_p: pref_param_count as u64,
        d: policy_param_count as u64,
        n: (pairs.len() as u64).max(1),
        delta: 0.05,
        scorer_bound: 1.0,
        t_max: hp.t_max as u64,
        lambda: hp.lambda,
    });
    Ok(AnalysisReport { score_gap_by_length, prefix_anticipation_by_length, combined_reward_by_length, robustness, bounds })
}
