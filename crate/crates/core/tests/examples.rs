//! Every example runs to completion.

#[path = "../examples/environment.rs"]
mod environment;

#[test]
fn environment_runs() {
    environment::run_example().unwrap();
}

#[path = "../examples/step_rewards.rs"]
mod step_rewards;

#[test]
fn step_rewards_runs() {
    step_rewards::run_example().unwrap();
}

#[path = "../examples/preference_learning.rs"]
mod preference_learning;

#[test]
fn preference_learning_runs() {
    preference_learning::run_example().unwrap();
}

#[path = "../examples/bounds.rs"]
mod bounds;

#[test]
fn bounds_runs() {
    bounds::run_example().unwrap();
}

#[path = "../examples/analysis_report.rs"]
mod analysis_report;

#[test]
fn analysis_report_runs() {
    analysis_report::run_example().unwrap();
}

#[path = "../examples/cli_pipeline.rs"]
mod cli_pipeline;

#[test]
fn cli_pipeline_runs() {
    cli_pipeline::run_example().unwrap();
}

#[path = "../examples/compare_variants.rs"]
mod compare_variants;

#[test]
fn compare_variants_runs() {
    compare_variants::run_example().unwrap();
}
