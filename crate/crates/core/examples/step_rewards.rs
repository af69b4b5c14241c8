//! Prefix-level step scores, the length penalty, and the combined reward for
//! a few hand-built rollouts of one question.
//!
//! ```bash
//! cargo run --release --example step_rewards
//! ```

use wsgrpo::config::RunConfig;
use wsgrpo::env::{shortest_solution, StepAction, Trajectory};
use wsgrpo::pipeline::preference_from_initial_policy;
use wsgrpo::reward::pref_reward;

pub fn run_example() -> wsgrpo::Result<()> {
    let cfg = RunConfig { seed: 2, ..Default::default() };
    let env = cfg.env_config();
    let hp = cfg.hyper_params();
    let (questions, _, phase) = preference_from_initial_policy(&cfg)?;
    let model = phase.model(env)?;

    let q = questions.iter().max_by_key(|q| q.optimal_steps).expect("question set is nonempty");
    let short = shortest_solution(q.start, q.target, q.modulus)?;
    let mut padded = vec![StepAction::Noop; 3];
    padded.extend(&short);
    let mut wrong = vec![StepAction::Add1; 2];
    wrong.push(StepAction::Answer);
    let cases = [
        ("shortest", short),
        ("padded", padded),
        ("wrong answer", wrong),
        ("answer at once", vec![StepAction::Answer]),
        ("never answers", vec![StepAction::Add1; env.t_max]),
    ];

    println!("question {} -> {} (optimal {} steps)", q.start, q.target, q.optimal_steps);
    println!("{:<15} {:>2} {:>7} {:>7} {:>8} {:>5} {:>8}", "rollout", "n", "p_bar", "l(n)", "R_pref", "final", "R_ws");
    for (name, steps) in cases {
        let t = Trajectory::from_steps(q, &steps, env.t_max)?;
        let b = pref_reward(&model, q, &t, &hp)?;
        println!(
            "{name:<15} {:>2} {:>7.4} {:>7.3} {:>8.4} {:>5} {:>8.4}",
            t.len(),
            b.mean_step,
            b.length_penalty,
            b.pref_reward,
            b.final_reward,
            b.combined
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> wsgrpo::Result<()> {
    run_example()
}
