//! Outcome-supervised trajectory preference model.
//!
//! Correct and incorrect rollouts are paired into ordered examples (both
//! orderings, complementary labels) and a one-hidden-layer scorer
//! `sigmoid(w2 . tanh(W1 x + b1) + b2)` is fit by binary cross-entropy. The
//! input `x` is an order-sensitive concatenation of question, first, and
//! second trajectory features.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{shortest_solution, EnvConfig, Prefix, Question, StepAction, Trajectory};
use crate::error::{Error, Result};
use crate::{io, rng};

pub const PROB_CLAMP: f64 = 1e-7;
pub const DEFAULT_HIDDEN_DIM: usize = 32;
pub const INIT_SCALE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PairSource {
    Mixed,
    CrossAllCorrect,
    CrossAllIncorrect,
}

/// Ordered trajectory pair; `label == 1` iff `traj_a` is the correct member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreferenceExample {
    /// Question the pair is scored against (for cross-question pairs, the
    /// question whose outcomes were uniform).
    pub question: Question,
    pub traj_a: Trajectory,
    pub traj_b: Trajectory,
    pub label: u8,
    pub source: PairSource,
}

impl PreferenceExample {
    pub fn question_id(&self) -> u64 {
        self.question.id
    }

    pub fn reversed(&self) -> Self {
        Self {
            question: self.question.clone(),
            traj_a: self.traj_b.clone(),
            traj_b: self.traj_a.clone(),
            label: 1 - self.label,
            source: self.source,
        }
    }
}

/// JSONL row for an exported preference dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRow {
    pub question_id: u64,
    pub steps_a: Vec<StepAction>,
    pub steps_b: Vec<StepAction>,
    pub label: u8,
    pub source: PairSource,
    pub start_a: u32,
    pub start_b: u32,
}

impl From<&PreferenceExample> for PairRow {
    fn from(ex: &PreferenceExample) -> Self {
        Self {
            question_id: ex.question.id,
            steps_a: ex.traj_a.steps.clone(),
            steps_b: ex.traj_b.steps.clone(),
            label: ex.label,
            source: ex.source,
            start_a: ex.traj_a.start,
            start_b: ex.traj_b.start,
        }
    }
}

fn push_both(out: &mut Vec<PreferenceExample>, question: &Question, good: &Trajectory, bad: &Trajectory, source: PairSource) {
    let ex = PreferenceExample { question: question.clone(), traj_a: good.clone(), traj_b: bad.clone(), label: 1, source };
    let rev = ex.reversed();
    out.push(ex);
    out.push(rev);
}

/// Build the symmetric preference dataset from outcome-labelled rollouts.
///
/// Questions with mixed outcomes contribute every (correct, incorrect)
/// combination. Questions whose rollouts all agree borrow
/// `cross_pairs_per_traj` partners of the opposite outcome from other
/// questions (uniformly, with replacement, from `rng_seed`). Every unordered
/// pair is emitted as `(+, -)` with label 1 immediately followed by `(-, +)`
/// with label 0.
pub fn build_pairs(
    questions: &[Question],
    trajectories: &BTreeMap<u64, Vec<Trajectory>>,
    rng_seed: u64,
    cross_pairs_per_traj: usize,
) -> Result<Vec<PreferenceExample>> {
    let all = || trajectories.values().flatten();
    if !all().any(|t| t.correct) || !all().any(|t| !t.correct) {
        return Err(Error::DegenerateCorpus);
    }
    let mut r = rng::stream(rng_seed, rng::PAIRS, &[]);
    let mut out = Vec::new();
    for q in questions {
        let Some(trajs) = trajectories.get(&q.id) else { continue };
        let (pos, neg): (Vec<&Trajectory>, Vec<&Trajectory>) = trajs.iter().partition(|t| t.correct);
        if !pos.is_empty() && !neg.is_empty() {
            for p in &pos {
                for n in &neg {
                    push_both(&mut out, q, p, n, PairSource::Mixed);
                }
            }
            continue;
        }
        let want_correct = pos.is_empty();
        let pool: Vec<&Trajectory> = trajectories
            .iter()
            .filter(|(id, _)| **id != q.id)
            .flat_map(|(_, ts)| ts.iter().filter(|t| t.correct == want_correct))
            .collect();
        if pool.is_empty() {
            return Err(Error::DegenerateCorpus);
        }
        for own in trajs {
            for _ in 0..cross_pairs_per_traj {
                let other = pool[r.gen_range(0..pool.len())];
                if want_correct {
                    push_both(&mut out, q, other, own, PairSource::CrossAllIncorrect);
                } else {
                    push_both(&mut out, q, own, other, PairSource::CrossAllCorrect);
                }
            }
        }
    }
    Ok(out)
}

/// Seeded split keeping both orderings of each unordered pair on the same
/// side. Returns `(train, held_out)` with about `train_fraction` of the
/// pairs in `train`.
pub fn split_pairs(dataset: &[PreferenceExample], train_fraction: f64, rng_seed: u64) -> (Vec<PreferenceExample>, Vec<PreferenceExample>) {
    let mut chunks: Vec<&[PreferenceExample]> = dataset.chunks(2).collect();
    chunks.shuffle(&mut rng::stream(rng_seed, rng::PREF_SPLIT, &[]));
    let n_train = ((chunks.len() as f64) * train_fraction).round() as usize;
    let (a, b) = chunks.split_at(n_train.min(chunks.len()));
    (a.concat(), b.concat())
}

/// `5 + 1 + modulus + 1`: action counts, length, final value one-hot,
/// answered flag.
pub fn trajectory_feature_dim(modulus: u32) -> usize {
    modulus as usize + 7
}

pub fn pref_input_dim(modulus: u32) -> usize {
    2 * modulus as usize + 2 * trajectory_feature_dim(modulus)
}

fn push_trajectory_features(out: &mut Vec<f64>, prefix: &Prefix<'_>, env: EnvConfig) {
    let scale = env.t_max as f64;
    out.extend(prefix.action_counts().iter().map(|c| *c as f64 / scale));
    out.push(prefix.len() as f64 / scale);
    let base = out.len();
    out.resize(base + env.modulus as usize, 0.0);
    out[base + prefix.value as usize] = 1.0;
    out.push(if prefix.answered { 1.0 } else { 0.0 });
}

/// `[target one-hot ; start one-hot ; phi(a) ; phi(b)]`.
pub fn pref_features(question: &Question, a: &Prefix<'_>, b: &Prefix<'_>, env: EnvConfig) -> Vec<f64> {
    let m = env.modulus as usize;
    let mut x = vec![0.0; 2 * m];
    x[question.target as usize] = 1.0;
    x[m + question.start as usize] = 1.0;
    x.reserve(2 * trajectory_feature_dim(env.modulus));
    push_trajectory_features(&mut x, a, env);
    push_trajectory_features(&mut x, b, env);
    x
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefModelParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// Row-major `hidden_dim x input_dim`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl PrefModelParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dim,
            w1: vec![0.0; hidden_dim * input_dim],
            b1: vec![0.0; hidden_dim],
            w2: vec![0.0; hidden_dim],
            b2: 0.0,
        }
    }

    /// Weights uniform in `[-0.1, 0.1]`, biases zero.
    pub fn init(input_dim: usize, hidden_dim: usize, seed: u64) -> Self {
        let mut r = rng::stream(seed, rng::PREF_INIT, &[]);
        let mut p = Self::zeros(input_dim, hidden_dim);
        p.w1.iter_mut().chain(p.w2.iter_mut()).for_each(|w| *w = r.gen_range(-INIT_SCALE..=INIT_SCALE));
        p
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        let (i, h) = (self.input_dim, self.hidden_dim);
        if self.w1.len() != h * i || self.b1.len() != h || self.w2.len() != h {
            return Err(Error::DimensionMismatch(format!("preference model is not {h} x {i}")));
        }
        if !self.iter().all(f64::is_finite) {
            return Err(Error::NonFiniteParams);
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let params: Self = io::read_json(path)?;
        params.validate()?;
        Ok(params)
    }

    /// All parameters in a fixed order: w1, b1, w2, b2.
    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.w1.iter().chain(&self.b1).chain(&self.w2).copied().chain(std::iter::once(self.b2))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.w1.iter_mut().chain(self.b1.iter_mut()).chain(self.w2.iter_mut()).chain(std::iter::once(&mut self.b2))
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &PrefModelParams, scale: f64) {
        for (s, o) in self.iter_mut().zip(other.iter()) {
            *s += scale * o;
        }
    }

    fn hidden(&self, x: &[f64]) -> Vec<f64> {
        self.w1
            .chunks_exact(self.input_dim)
            .zip(&self.b1)
            .map(|(row, b)| (row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b).tanh())
            .collect()
    }

    /// Pre-sigmoid score.
    pub fn logit(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.input_dim);
        self.hidden(x).iter().zip(&self.w2).map(|(h, w)| h * w).sum::<f64>() + self.b2
    }

    /// Clamped preference probability for a feature vector.
    pub fn prob(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x)).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Anything that scores "a is preferred to b" for a question.
pub trait PairScorer: Sync {
    fn score(&self, question: &Question, a: &Prefix<'_>, b: &Prefix<'_>) -> f64;
}

/// A trained scorer bound to the environment dimensions it was built for.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceModel {
    pub params: PrefModelParams,
    pub env: EnvConfig,
}

impl PreferenceModel {
    pub fn new(params: PrefModelParams, env: EnvConfig) -> Result<Self> {
        params.validate()?;
        if params.input_dim != pref_input_dim(env.modulus) {
            return Err(Error::DimensionMismatch(format!(
                "preference input_dim {} does not match modulus {} (expected {})",
                params.input_dim,
                env.modulus,
                pref_input_dim(env.modulus)
            )));
        }
        Ok(Self { params, env })
    }
}

impl PairScorer for PreferenceModel {
    fn score(&self, question: &Question, a: &Prefix<'_>, b: &Prefix<'_>) -> f64 {
        self.params.prob(&pref_features(question, a, b, self.env))
    }
}

/// Free-function form of [`PairScorer::score`] on full trajectories.
pub fn score(params: &PrefModelParams, question: &Question, traj_a: &Trajectory, traj_b: &Trajectory, env: EnvConfig) -> f64 {
    params.prob(&pref_features(question, &traj_a.full(), &traj_b.full(), env))
}

/// Cross-entropy on the clamped probability, with its exact gradient (zero
/// where the clamp is active).
pub fn bce_loss_and_grad_features(params: &PrefModelParams, x: &[f64], label: u8) -> (f64, PrefModelParams) {
    let hidden = params.hidden(x);
    let z = hidden.iter().zip(&params.w2).map(|(h, w)| h * w).sum::<f64>() + params.b2;
    let raw = sigmoid(z);
    let p = raw.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    let y = f64::from(label);
    let loss = -y * p.ln() - (1.0 - y) * (1.0 - p).ln();
    let mut grad = PrefModelParams::zeros(params.input_dim, params.hidden_dim);
    if raw != p {
        return (loss, grad);
    }
    let dz = p - y;
    grad.b2 = dz;
    for j in 0..params.hidden_dim {
        grad.w2[j] = dz * hidden[j];
        let dpre = dz * params.w2[j] * (1.0 - hidden[j] * hidden[j]);
        grad.b1[j] = dpre;
        for (g, xi) in grad.w1[j * params.input_dim..(j + 1) * params.input_dim].iter_mut().zip(x) {
            *g = dpre * xi;
        }
    }
    (loss, grad)
}

pub fn example_features(example: &PreferenceExample, env: EnvConfig) -> Vec<f64> {
    pref_features(&example.question, &example.traj_a.full(), &example.traj_b.full(), env)
}

pub fn bce_loss_and_grad(params: &PrefModelParams, example: &PreferenceExample, env: EnvConfig) -> (f64, PrefModelParams) {
    bce_loss_and_grad_features(params, &example_features(example, env), example.label)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrefTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for PrefTrainConfig {
    fn default() -> Self {
        Self { epochs: 200, batch_size: 32, learning_rate: 1e-2 }
    }
}

#[derive(Debug, Clone)]
pub struct PrefTrainOutput {
    pub params: PrefModelParams,
    /// Mean training loss per epoch.
    pub loss_trace: Vec<f64>,
}

/// Minibatch gradient descent from `init`, reshuffling every epoch.
pub fn train_pref(
    init: PrefModelParams,
    dataset: &[PreferenceExample],
    cfg: PrefTrainConfig,
    env: EnvConfig,
    rng_seed: u64,
) -> Result<PrefTrainOutput> {
    train_pref_with(init, dataset, cfg, env, rng_seed, |_, _, _| {})
}

/// As [`train_pref`], calling `on_epoch(epoch, mean_loss, &params)` after
/// every epoch.
pub fn train_pref_with(
    init: PrefModelParams,
    dataset: &[PreferenceExample],
    cfg: PrefTrainConfig,
    env: EnvConfig,
    rng_seed: u64,
    mut on_epoch: impl FnMut(usize, f64, &PrefModelParams),
) -> Result<PrefTrainOutput> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput("preference dataset".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidHyperParams("batch_size must be >= 1".into()));
    }
    init.validate()?;
    let inputs: Vec<(Vec<f64>, u8)> = dataset.iter().map(|ex| (example_features(ex, env), ex.label)).collect();
    let mut params = init;
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut loss_trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng::stream(rng_seed, rng::PREF_SHUFFLE, &[epoch as u64]));
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc = PrefModelParams::zeros(params.input_dim, params.hidden_dim);
            for &i in batch {
                let (loss, grad) = bce_loss_and_grad_features(&params, &inputs[i].0, inputs[i].1);
                if !loss.is_finite() {
                    return Err(Error::Divergence);
                }
                total += loss;
                acc.add_scaled(&grad, 1.0);
            }
            params.add_scaled(&acc, -cfg.learning_rate / batch.len() as f64);
        }
        let mean = total / inputs.len() as f64;
        if !mean.is_finite() || !params.iter().all(f64::is_finite) {
            return Err(Error::Divergence);
        }
        loss_trace.push(mean);
        on_epoch(epoch, mean, &params);
    }
    Ok(PrefTrainOutput { params, loss_trace })
}

/// Fraction of examples whose thresholded score agrees with the label.
pub fn pair_accuracy(params: &PrefModelParams, dataset: &[PreferenceExample], env: EnvConfig) -> f64 {
    if dataset.is_empty() {
        return 0.0;
    }
    let hits = dataset
        .iter()
        .filter(|ex| (params.prob(&example_features(ex, env)) > 0.5) == (ex.label == 1))
        .count();
    hits as f64 / dataset.len() as f64
}

pub fn mean_loss(params: &PrefModelParams, dataset: &[PreferenceExample], env: EnvConfig) -> f64 {
    let total: f64 = dataset.iter().map(|ex| bce_loss_and_grad(params, ex, env).0).sum();
    total / dataset.len().max(1) as f64
}

/// Corpus in which outcome is visible from the surface: per question, two
/// answered correct traces (the shortest solution, and the same with one
/// leading `NOOP`) and two unanswered traces truncated at `T_max`.
pub fn separable_corpus(questions: &[Question], env: EnvConfig, seed: u64) -> Result<BTreeMap<u64, Vec<Trajectory>>> {
    let mut r = rng::stream(seed, rng::CORPUS, &[u64::MAX]);
    let mut corpus = BTreeMap::new();
    for q in questions {
        let best = shortest_solution(q.start, q.target, q.modulus)?;
        let mut padded = vec![StepAction::Noop];
        padded.extend(&best);
        let mut trajs = vec![Trajectory::from_steps(q, &best, env.t_max)?, Trajectory::from_steps(q, &padded, env.t_max)?];
        for _ in 0..2 {
            let steps: Vec<StepAction> = (0..env.t_max).map(|_| StepAction::ALL[r.gen_range(0..4)]).collect();
            trajs.push(Trajectory::from_steps(q, &steps, env.t_max)?);
        }
        corpus.insert(q.id, trajs);
    }
    Ok(corpus)
}
