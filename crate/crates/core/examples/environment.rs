//! The arithmetic-chain environment: sample questions, solve them with the
//! BFS oracle, and replay a hand-written rollout.
//!
//! ```bash
//! cargo run --example environment
//! ```

use wsgrpo::env::{optimal_steps, sample_questions, shortest_solution, EnvConfig, Question, StepAction, Trajectory};

pub fn run_example() -> wsgrpo::Result<()> {
    let env = EnvConfig::default();

    // How many (start, target) pairs sit at each BFS distance.
    let mut by_distance = [0usize; 8];
    for start in 0..env.modulus {
        for target in 0..env.modulus {
            by_distance[optimal_steps(start, target, env.modulus)? as usize] += 1;
        }
    }
    println!("optimal_steps histogram at modulus {}: {:?}", env.modulus, &by_distance[1..]);

    let questions = sample_questions(7, 5, [0.3, 0.7, 0.0], env.modulus)?;
    for q in &questions {
        let plan = shortest_solution(q.start, q.target, q.modulus)?;
        let t = Trajectory::from_steps(q, &plan, env.t_max)?;
        println!("q{} {:>2} -> {:>2}  optimal {}  {:?}  correct={}", q.id, q.start, q.target, q.optimal_steps, plan, t.correct);
    }

    let q = Question::new(99, 3, 9, env.modulus)?;
    let steps = [StepAction::Add3, StepAction::Noop, StepAction::Add3, StepAction::Answer];
    let t = Trajectory::from_steps(&q, &steps, env.t_max)?;
    println!("replay {:?}: values {:?}, answer {:?}, correct {}", steps, t.values, t.answer, t.correct);
    Ok(())
}

#[allow(dead_code)]
fn main() -> wsgrpo::Result<()> {
    run_example()
}
