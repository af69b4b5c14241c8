//! End-to-end two-phase procedure driven by a [`RunConfig`]: sample
//! questions, collect outcome-labelled rollouts, fit the preference model,
//! then optimize the policy.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::env::{sample_questions, EnvConfig, Question, StepAction, Trajectory};
use crate::error::{Error, Result};
use crate::optimizer::{train, TrainOutcome, TrainState};
use crate::policy::{rollout, PolicyParams, RolloutMode};
use crate::preference::{
    build_pairs, pair_accuracy, pref_input_dim, split_pairs, train_pref_with, PrefModelParams, PreferenceExample,
    PreferenceModel,
};
use crate::rng;

pub type Corpus = BTreeMap<u64, Vec<Trajectory>>;

/// Training and evaluation question sets for a config.
pub fn question_sets(cfg: &RunConfig) -> Result<(Vec<Question>, Vec<Question>)> {
    let train = sample_questions(
        rng::derive_seed(cfg.seed, rng::TRAIN_QUESTIONS, &[]),
        cfg.env.train_questions,
        cfg.env.difficulty_mix,
        cfg.env.modulus,
    )?;
    let eval = sample_questions(
        rng::derive_seed(cfg.seed, rng::EVAL, &[]),
        cfg.env.eval_questions,
        cfg.env.difficulty_mix,
        cfg.env.modulus,
    )?;
    Ok((train, eval))
}

/// The uniform policy in the configured feature layout.
pub fn initial_policy(cfg: &RunConfig) -> PolicyParams {
    PolicyParams::zeros(cfg.policy.features.dim(cfg.env.modulus))
}

/// `k` sampled rollouts per question from `policy`.
pub fn generate_corpus(policy: &PolicyParams, questions: &[Question], k: usize, seed: u64, env: EnvConfig) -> Result<Corpus> {
    if k == 0 {
        return Err(Error::InvalidHyperParams("K must be ≥ 1".into()));
    }
    questions
        .iter()
        .map(|q| {
            let trajs = (0..k)
                .map(|i| rollout(policy, q, rng::derive_seed(seed, rng::CORPUS, &[q.id, i as u64]), RolloutMode::Sample, env))
                .collect::<Result<Vec<_>>>()?;
            Ok((q.id, trajs))
        })
        .collect()
}

/// One corpus line: the question and one labelled rollout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRow {
    pub question: Question,
    pub steps: Vec<StepAction>,
    pub values: Vec<u32>,
    pub answer: Option<u32>,
    pub correct: bool,
}

pub fn corpus_rows(questions: &[Question], corpus: &Corpus) -> Vec<CorpusRow> {
    questions
        .iter()
        .filter_map(|q| corpus.get(&q.id).map(|ts| (q, ts)))
        .flat_map(|(q, ts)| {
            ts.iter().map(|t| CorpusRow {
                question: q.clone(),
                steps: t.steps.clone(),
                values: t.values.clone(),
                answer: t.answer,
                correct: t.correct,
            })
        })
        .collect()
}

/// Rebuild questions and trajectories from corpus rows, re-deriving each
/// trajectory from its steps so stored labels cannot drift.
pub fn corpus_from_rows(rows: &[CorpusRow], t_max: usize) -> Result<(Vec<Question>, Corpus)> {
    let mut questions: BTreeMap<u64, Question> = BTreeMap::new();
    let mut corpus = Corpus::new();
    for row in rows {
        row.question.validate()?;
        let t = Trajectory::from_steps(&row.question, &row.steps, t_max)?;
        if t.correct != row.correct || t.values != row.values || t.answer != row.answer {
            return Err(Error::InvalidTrajectory(format!("corpus row for question {} disagrees with replay", row.question.id)));
        }
        match questions.get(&row.question.id) {
            Some(q) if *q != row.question => {
                return Err(Error::InvalidTrajectory(format!("question id {} has conflicting definitions", q.id)))
            }
            _ => {
                questions.insert(row.question.id, row.question.clone());
            }
        }
        corpus.entry(row.question.id).or_default().push(t);
    }
    Ok((questions.into_values().collect(), corpus))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub rows: usize,
    pub correct_fraction: f64,
    pub length_histogram: BTreeMap<usize, usize>,
    pub mean_length_correct: f64,
    pub mean_length_incorrect: f64,
}

pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let all: Vec<&Trajectory> = corpus.values().flatten().collect();
    let mut length_histogram = BTreeMap::new();
    for t in &all {
        *length_histogram.entry(t.len()).or_insert(0) += 1;
    }
    let mean_len = |correct: bool| {
        let ls: Vec<usize> = all.iter().filter(|t| t.correct == correct).map(|t| t.len()).collect();
        if ls.is_empty() {
            0.0
        } else {
            ls.iter().sum::<usize>() as f64 / ls.len() as f64
        }
    };
    CorpusStats {
        rows: all.len(),
        correct_fraction: all.iter().filter(|t| t.correct).count() as f64 / all.len().max(1) as f64,
        length_histogram,
        mean_length_correct: mean_len(true),
        mean_length_incorrect: mean_len(false),
    }
}

/// Per-epoch record of preference training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub heldout_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct PrefPhase {
    pub params: PrefModelParams,
    pub train_pairs: Vec<PreferenceExample>,
    pub heldout_pairs: Vec<PreferenceExample>,
    pub trace: Vec<PrefEpoch>,
    pub train_accuracy: f64,
    pub heldout_accuracy: f64,
}

impl PrefPhase {
    pub fn model(&self, env: EnvConfig) -> Result<PreferenceModel> {
        PreferenceModel::new(self.params.clone(), env)
    }
}

/// Build pairs, split them, and fit the scorer. `trace_every` controls how
/// often accuracies are recorded in the trace (0 records only the last
/// epoch).
pub fn train_preference_phase(questions: &[Question], corpus: &Corpus, cfg: &RunConfig, trace_every: usize) -> Result<PrefPhase> {
    let env = cfg.env_config();
    let pairs = build_pairs(questions, corpus, rng::derive_seed(cfg.seed, rng::PAIRS, &[]), cfg.pref.cross_pairs_per_traj)?;
    let (train_pairs, heldout_pairs) = split_pairs(&pairs, cfg.pref.split_fraction, cfg.seed);
    if train_pairs.is_empty() {
        return Err(Error::DegenerateCorpus);
    }
    let init = PrefModelParams::init(pref_input_dim(env.modulus), cfg.pref.hidden_dim, cfg.seed);
    let epochs = cfg.pref.epochs;
    let mut trace = Vec::new();
    let out = train_pref_with(init, &train_pairs, cfg.pref_train_config(), env, cfg.seed, |epoch, loss, params| {
        let last = epoch + 1 == epochs;
        if last || (trace_every > 0 && (epoch + 1) % trace_every == 0) {
            trace.push(PrefEpoch {
                epoch: epoch + 1,
                train_loss: loss,
                train_accuracy: pair_accuracy(params, &train_pairs, env),
                heldout_accuracy: pair_accuracy(params, &heldout_pairs, env),
            });
        }
    })?;
    Ok(PrefPhase {
        train_accuracy: pair_accuracy(&out.params, &train_pairs, env),
        heldout_accuracy: pair_accuracy(&out.params, &heldout_pairs, env),
        params: out.params,
        train_pairs,
        heldout_pairs,
        trace,
    })
}

/// Policy optimization from the uniform initial policy.
pub fn train_policy_phase(cfg: &RunConfig, scorer: Option<&PreferenceModel>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let env = cfg.env_config();
    let (train_q, eval_q) = question_sets(cfg)?;
    let state = TrainState::new(initial_policy(cfg), cfg.hyper_params(), rng::derive_seed(cfg.seed, rng::ROLLOUTS, &[]));
    train(state, &train_q, &eval_q, scorer.map(|s| s as _), &cfg.train_config(), env)
}

/// Phase I on rollouts of the initial policy: returns the corpus and the
/// fitted preference phase.
pub fn preference_from_initial_policy(cfg: &RunConfig) -> Result<(Vec<Question>, Corpus, PrefPhase)> {
    cfg.validate()?;
    let env = cfg.env_config();
    let (train_q, _) = question_sets(cfg)?;
    let corpus = generate_corpus(&initial_policy(cfg), &train_q, cfg.optim.k, rng::derive_seed(cfg.seed, rng::CORPUS, &[]), env)?;
    let phase = train_preference_phase(&train_q, &corpus, cfg, 0)?;
    Ok((train_q, corpus, phase))
}
