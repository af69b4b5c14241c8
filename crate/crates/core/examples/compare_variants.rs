//! Train GRPO, Dr.GRPO and WS-GRPO from the same seeds and compare greedy
//! Pass@1 and average steps at every checkpoint.
//!
//! Config keys can be overridden as `section.key=value` arguments:
//!
//! ```bash
//! cargo run --release --example compare_variants
//! cargo run --release --example compare_variants -- optim.iterations=500 policy.learning_rate=0.5 policy.features=offset
//! ```

use std::time::Instant;

use wsgrpo::config::RunConfig;
use wsgrpo::optimizer::AlgoVariant;
use wsgrpo::pipeline::{preference_from_initial_policy, train_policy_phase};

pub fn compare(base: &RunConfig, seeds: &[u64]) -> wsgrpo::Result<()> {
    for &seed in seeds {
        let cfg = RunConfig { seed, ..base.clone() };
        let started = Instant::now();
        let (_, _, phase) = preference_from_initial_policy(&cfg)?;
        let model = phase.model(cfg.env_config())?;
        println!("seed {seed}: preference held-out accuracy {:.3}", phase.heldout_accuracy);
        for variant in [AlgoVariant::Grpo, AlgoVariant::DrGrpo, AlgoVariant::WsGrpo] {
            let mut c = cfg.clone();
            c.optim.variant = variant;
            let out = train_policy_phase(&c, Some(&model))?;
            let curve: Vec<String> = out.metrics.iter().map(|m| format!("{:.2}/{:.2}", m.pass_at_1, m.avg_steps)).collect();
            println!("  {:<7} pass/steps {}", variant.name(), curve.join(" "));
        }
        println!("  ({:.1?})", started.elapsed());
    }
    Ok(())
}

pub fn run_example() -> wsgrpo::Result<()> {
    let mut cfg = RunConfig::default();
    cfg.optim.iterations = 50;
    compare(&cfg, &[1])
}

#[allow(dead_code)]
fn main() -> wsgrpo::Result<()> {
    let mut cfg = RunConfig::default();
    cfg.optim.eval_every = 50;
    for arg in std::env::args().skip(1) {
        let (key, value) = arg
            .split_once('=')
            .ok_or_else(|| wsgrpo::Error::InvalidHyperParams(format!("expected key=value, got {arg:?}")))?;
        cfg = cfg.with_override(key, value)?;
    }
    cfg.validate()?;
    compare(&cfg, &[1, 2, 3])
}
