//! Fit a scorer on initial-policy rollouts and print the per-length score
//! gap, prefix anticipation and combined reward.
//!
//! ```bash
//! cargo run --release --example analysis_report
//! ```

use wsgrpo::analysis::analyze;
use wsgrpo::config::RunConfig;
use wsgrpo::pipeline::{initial_policy, preference_from_initial_policy};

pub fn run_example() -> wsgrpo::Result<()> {
    let cfg = RunConfig { seed: 3, ..Default::default() };
    let (questions, corpus, phase) = preference_from_initial_policy(&cfg)?;
    let model = phase.model(cfg.env_config())?;
    let report = analyze(
        &model,
        &questions,
        &corpus,
        &cfg.hyper_params(),
        cfg.pref.cross_pairs_per_traj,
        cfg.seed,
        phase.params.num_params(),
        initial_policy(&cfg).len(),
    )?;

    println!("{:>6} {:>9} {:>8}", "length", "score gap", "pairs");
    for b in &report.score_gap_by_length {
        println!("{:>6} {:>9.4} {:>8}", b.length, b.value, b.count);
    }
    println!("{:>6} {:>9} {:>8}", "length", "anticip.", "pairs");
    for b in &report.prefix_anticipation_by_length {
        println!("{:>6} {:>9.4} {:>8}", b.length, b.value, b.count);
    }
    println!("{:>6} {:>9} {:>8}", "length", "R_ws", "rollouts");
    for b in &report.combined_reward_by_length {
        println!("{:>6} {:>9.4} {:>8}", b.length, b.value, b.count);
    }
    for r in &report.robustness {
        println!("perturbation {}: max |dR_pref| {:.5} <= {:.5}: {}", r.perturb_eps, r.max_delta_pref, r.pref_bound, r.holds);
    }
    println!(
        "bounds (n = {} pairs): preference error {:.3}, meaningful {}",
        report.bounds.inputs.n, report.bounds.preference_error, report.bounds.meaningful
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> wsgrpo::Result<()> {
    run_example()
}
