//! The bound calculators, plus an empirical check that bounded step-score
//! perturbations move the preference reward by at most the stated amount.
//!
//! ```bash
//! cargo run --release --example bounds
//! ```

use wsgrpo::analysis::{empirical_robustness, generalization_rate, random_trajectories, robustness_bound, vc_bound};
use wsgrpo::env::EnvConfig;
use wsgrpo::preference::{pref_input_dim, PrefModelParams, PreferenceModel};
use wsgrpo::reward::{HyperParams, PrefAggregation};

pub fn run_example() -> wsgrpo::Result<()> {
    for n in [100.0, 1_000.0, 10_000.0, 100_000.0] {
        println!("d_P = 10, n = {n:>6}: preference error <= {:.4}", vc_bound(10.0, n, 0.05));
    }
    println!("lambda 0.1, T_max 8, eps 0.2: policy robustness {:.4}", robustness_bound(0.1, 8.0, 0.2));
    println!("generalization rate (d 195, d_P 2561, n 1e6): {:.4}", generalization_rate(195.0, 2561.0, 0.1, 1.0, 12.0, 1e6));

    let env = EnvConfig::default();
    let model = PreferenceModel::new(PrefModelParams::init(pref_input_dim(env.modulus), 32, 3), env)?;
    let items = random_trajectories(200, 11, env)?;
    for aggregation in [PrefAggregation::Normalized, PrefAggregation::Sum] {
        let hp = HyperParams { pref_aggregation: aggregation, ..HyperParams::default() };
        for eps in [0.01, 0.1] {
            let r = empirical_robustness(&model, eps, &items, 5, &hp)?;
            println!(
                "{aggregation:?} eps {eps}: max |dR_pref| {:.5} (bound {:.5}), max |dR_ws| {:.6} (bound {:.6}), holds {}",
                r.max_delta_pref, r.pref_bound, r.max_delta_ws, r.ws_bound, r.holds
            );
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> wsgrpo::Result<()> {
    run_example()
}
