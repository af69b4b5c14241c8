//! Outcome-supervised preference learning: roll out the uniform policy,
//! pair correct against incorrect rollouts, and fit the scorer.
//!
//! ```bash
//! cargo run --release --example preference_learning
//! ```

use wsgrpo::config::RunConfig;
use wsgrpo::pipeline::{corpus_stats, preference_from_initial_policy};
use wsgrpo::preference::{build_pairs, pair_accuracy, pref_input_dim, separable_corpus, split_pairs, train_pref, PrefModelParams, PrefTrainConfig};

pub fn run_example() -> wsgrpo::Result<()> {
    let cfg = RunConfig { seed: 1, ..Default::default() };
    let env = cfg.env_config();

    let (questions, corpus, phase) = preference_from_initial_policy(&cfg)?;
    let stats = corpus_stats(&corpus);
    println!(
        "corpus: {} rollouts over {} questions, {:.1}% correct",
        stats.rows,
        questions.len(),
        100.0 * stats.correct_fraction
    );
    println!(
        "pairs: {} train / {} held out; accuracy {:.3} / {:.3}",
        phase.train_pairs.len(),
        phase.heldout_pairs.len(),
        phase.train_accuracy,
        phase.heldout_accuracy
    );

    // A corpus where every correct rollout is short and answered and every
    // incorrect one runs out the clock.
    let sep = separable_corpus(&questions, env, cfg.seed)?;
    let pairs = build_pairs(&questions, &sep, cfg.seed, cfg.pref.cross_pairs_per_traj)?;
    let (train, heldout) = split_pairs(&pairs, 0.9, cfg.seed);
    let init = PrefModelParams::init(pref_input_dim(env.modulus), cfg.pref.hidden_dim, cfg.seed);
    let out = train_pref(init, &train, PrefTrainConfig::default(), env, cfg.seed)?;
    println!(
        "separable corpus: final loss {:.4}, held-out accuracy {:.3}",
        out.loss_trace.last().copied().unwrap_or(f64::NAN),
        pair_accuracy(&out.params, &heldout, env)
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> wsgrpo::Result<()> {
    run_example()
}
