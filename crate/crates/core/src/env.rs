//! Arithmetic-chain reasoning environment.
//!
//! A question asks the agent to walk from `start` to `target` in the cyclic
//! group Z_m using the moves `+1`, `+3`, `x2` (and a do-nothing `NOOP`), and
//! then emit `ANSWER`. Correctness of the emitted value is the only outcome
//! signal; the BFS distance gives the shortest correct trajectory.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_MODULUS: u32 = 16;
pub const DEFAULT_T_MAX: usize = 12;
pub const MAX_MODULUS: u32 = 64;

/// One reasoning step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StepAction {
    Add1,
    Add3,
    Mul2,
    Noop,
    Answer,
}

impl StepAction {
    pub const COUNT: usize = 5;
    pub const ALL: [StepAction; 5] = [
        StepAction::Add1,
        StepAction::Add3,
        StepAction::Mul2,
        StepAction::Noop,
        StepAction::Answer,
    ];
    /// Moves that change the state (used by the BFS).
    pub const MOVES: [StepAction; 3] = [StepAction::Add1, StepAction::Add3, StepAction::Mul2];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<StepAction> {
        Self::ALL.get(i).copied()
    }
}

/// Environment dimensions shared by featurizers and rollouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub modulus: u32,
    pub t_max: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self { modulus: DEFAULT_MODULUS, t_max: DEFAULT_T_MAX }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: u64,
    pub start: u32,
    pub target: u32,
    pub modulus: u32,
    pub optimal_steps: u32,
}

impl Question {
    pub fn new(id: u64, start: u32, target: u32, modulus: u32) -> Result<Self> {
        let optimal_steps = optimal_steps(start, target, modulus)?;
        Ok(Self { id, start, target, modulus, optimal_steps })
    }

    /// Re-check the cached BFS distance and state-space bounds, e.g. after
    /// loading from disk.
    pub fn validate(&self) -> Result<()> {
        let fresh = Question::new(self.id, self.start, self.target, self.modulus)?;
        if fresh.optimal_steps != self.optimal_steps {
            return Err(Error::InvalidTrajectory(format!(
                "question {} caches optimal_steps {} but BFS gives {}",
                self.id, self.optimal_steps, fresh.optimal_steps
            )));
        }
        Ok(())
    }
}

pub fn apply_step(value: u32, action: StepAction, modulus: u32) -> Result<u32> {
    if value >= modulus {
        return Err(Error::ValueOutOfRange { value, modulus });
    }
    let (v, m) = (u64::from(value), u64::from(modulus));
    let next = match action {
        StepAction::Add1 => (v + 1) % m,
        StepAction::Add3 => (v + 3) % m,
        StepAction::Mul2 => (2 * v) % m,
        StepAction::Noop => v,
        StepAction::Answer => return Err(Error::TerminalAction),
    };
    Ok(next as u32)
}

/// Binary outcome reward: an absent answer (truncated rollout) is wrong.
pub fn check_answer(question: &Question, answer: Option<u32>) -> bool {
    answer == Some(question.target)
}

fn check_space(start: u32, target: u32, modulus: u32) -> Result<()> {
    if !(2..=MAX_MODULUS).contains(&modulus) {
        return Err(Error::UnsupportedModulus(modulus));
    }
    for value in [start, target] {
        if value >= modulus {
            return Err(Error::ValueOutOfRange { value, modulus });
        }
    }
    Ok(())
}

/// BFS distances (in moves) from `start` to every state.
fn distances_from(start: u32, modulus: u32) -> Vec<Option<u32>> {
    let mut dist = vec![None; modulus as usize];
    dist[start as usize] = Some(0);
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        let d = dist[v as usize].unwrap_or(0);
        for a in StepAction::MOVES {
            let n = apply_step(v, a, modulus).expect("moves are non-terminal");
            if dist[n as usize].is_none() {
                dist[n as usize] = Some(d + 1);
                queue.push_back(n);
            }
        }
    }
    dist
}

/// Minimal number of steps, counting the final `ANSWER`, of any correct
/// trajectory.
pub fn optimal_steps(start: u32, target: u32, modulus: u32) -> Result<u32> {
    check_space(start, target, modulus)?;
    distances_from(start, modulus)[target as usize]
        .map(|d| d + 1)
        .ok_or(Error::Unreachable { start, target, modulus })
}

/// A shortest correct action sequence (moves then `ANSWER`). Among equally
/// short routes the one preferring lower action indices at each step wins.
pub fn shortest_solution(start: u32, target: u32, modulus: u32) -> Result<Vec<StepAction>> {
    let to_target = distances_to(target, modulus)?;
    let mut v = start;
    let mut steps = Vec::new();
    let mut remaining = to_target[start as usize].ok_or(Error::Unreachable { start, target, modulus })?;
    while remaining > 0 {
        let (a, n) = StepAction::MOVES
            .iter()
            .map(|&a| (a, apply_step(v, a, modulus).expect("moves are non-terminal")))
            .find(|&(_, n)| to_target[n as usize] == Some(remaining - 1))
            .expect("BFS layer has a predecessor");
        steps.push(a);
        v = n;
        remaining -= 1;
    }
    steps.push(StepAction::Answer);
    Ok(steps)
}

/// Move distance from every state to `target` (reverse BFS by brute force
/// over the forward distances; the state space is tiny).
pub fn distances_to(target: u32, modulus: u32) -> Result<Vec<Option<u32>>> {
    check_space(0, target, modulus)?;
    Ok((0..modulus).map(|s| distances_from(s, modulus)[target as usize]).collect())
}

/// Inclusive `optimal_steps` range for a difficulty bucket.
pub fn difficulty_bucket(difficulty: u8) -> Result<(u32, u32)> {
    match difficulty {
        1 => Ok((1, 2)),
        2 => Ok((3, 5)),
        3 => Ok((6, 9)),
        d => Err(Error::InvalidDifficulty(d)),
    }
}

/// Draw a question whose BFS distance falls in the difficulty bucket.
///
/// Equivalent to rejection sampling uniform (start, target) pairs, but the
/// eligible pairs are enumerated first so an empty bucket is reported instead
/// of looping forever (with modulus 16 no question needs more than 5 steps).
pub fn sample_question(rng_seed: u64, difficulty: u8, modulus: u32) -> Result<Question> {
    let (lo, hi) = difficulty_bucket(difficulty)?;
    check_space(0, 0, modulus)?;
    let eligible: Vec<(u32, u32, u32)> = (0..modulus)
        .flat_map(|s| {
            let dist = distances_from(s, modulus);
            (0..modulus).filter_map(move |t| dist[t as usize].map(|d| (s, t, d + 1)))
        })
        .filter(|&(_, _, steps)| (lo..=hi).contains(&steps))
        .collect();
    if eligible.is_empty() {
        return Err(Error::EmptyDifficultyBucket { lo, hi, modulus });
    }
    let mut r = rng::stream(rng_seed, rng::CORPUS, &[u64::from(difficulty)]);
    let (start, target, optimal_steps) = eligible[r.gen_range(0..eligible.len())];
    Ok(Question { id: 0, start, target, modulus, optimal_steps })
}

/// Sample `count` questions with ids `0..count`, drawing each difficulty from
/// the (unnormalized) weights `mix` over difficulties 1, 2, 3.
pub fn sample_questions(seed: u64, count: usize, mix: [f64; 3], modulus: u32) -> Result<Vec<Question>> {
    let total: f64 = mix.iter().sum();
    if !(total > 0.0) || mix.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::InvalidHyperParams(format!("difficulty_mix {mix:?} must be non-negative with positive sum")));
    }
    let mut r = rng::stream(seed, rng::CORPUS, &[]);
    (0..count)
        .map(|i| {
            let mut u = r.gen::<f64>() * total;
            let mut difficulty = 3u8;
            for (d, w) in mix.iter().enumerate() {
                if *w > 0.0 && u < *w {
                    difficulty = d as u8 + 1;
                    break;
                }
                u -= w;
            }
            if mix[difficulty as usize - 1] == 0.0 {
                // float slack at the top end; fall back to the last nonzero bucket
                difficulty = mix.iter().rposition(|w| *w > 0.0).map_or(1, |d| d as u8 + 1);
            }
            let q = sample_question(r.gen(), difficulty, modulus)?;
            Ok(Question { id: i as u64, ..q })
        })
        .collect()
}

/// A (possibly partial) reasoning trace for one question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub question_id: u64,
    pub start: u32,
    pub steps: Vec<StepAction>,
    /// State after each step; `ANSWER` leaves the state unchanged.
    pub values: Vec<u32>,
    pub answer: Option<u32>,
    pub correct: bool,
}

impl Trajectory {
    /// Replay `steps` from the question's start state. `ANSWER` may only
    /// appear last; a trace without it is a truncated rollout.
    pub fn from_steps(question: &Question, steps: &[StepAction], t_max: usize) -> Result<Self> {
        if steps.len() > t_max {
            return Err(Error::InvalidTrajectory(format!("{} steps exceed T_max = {t_max}", steps.len())));
        }
        let mut v = question.start;
        let mut values = Vec::with_capacity(steps.len());
        let mut answer = None;
        for (i, &a) in steps.iter().enumerate() {
            if a == StepAction::Answer {
                if i + 1 != steps.len() {
                    return Err(Error::InvalidTrajectory("ANSWER must be the last step".into()));
                }
                answer = Some(v);
            } else {
                v = apply_step(v, a, question.modulus)?;
            }
            values.push(v);
        }
        Ok(Self {
            question_id: question.id,
            start: question.start,
            steps: steps.to_vec(),
            values,
            answer,
            correct: check_answer(question, answer),
        })
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// View of the first `t` steps. The full-length view keeps the answered
    /// flag; shorter views never count as answered.
    pub fn prefix(&self, t: usize) -> Prefix<'_> {
        let t = t.min(self.len());
        Prefix {
            steps: &self.steps[..t],
            value: if t == 0 { self.start } else { self.values[t - 1] },
            answered: t == self.len() && self.answer.is_some(),
        }
    }

    pub fn full(&self) -> Prefix<'_> {
        self.prefix(self.len())
    }
}

/// Borrowed partial trajectory: the steps so far, the current state, and
/// whether an answer has been emitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prefix<'a> {
    pub steps: &'a [StepAction],
    pub value: u32,
    pub answered: bool,
}

impl Prefix<'_> {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn action_counts(&self) -> [usize; StepAction::COUNT] {
        let mut counts = [0; StepAction::COUNT];
        for a in self.steps {
            counts[a.index()] += 1;
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exhaustive search over all action strings up to `depth` moves.
    fn brute_force_steps(start: u32, target: u32, m: u32, depth: u32) -> Option<u32> {
        let mut frontier = vec![start];
        for d in 0..=depth {
            if frontier.contains(&target) {
                return Some(d + 1);
            }
            frontier = frontier
                .iter()
                .flat_map(|&v| StepAction::MOVES.map(|a| apply_step(v, a, m).unwrap()))
                .collect();
        }
        None
    }

    #[test]
    fn apply_step_examples() {
        assert_eq!(apply_step(3, StepAction::Add1, 10).unwrap(), 4);
        assert_eq!(apply_step(7, StepAction::Mul2, 10).unwrap(), 4);
        assert_eq!(apply_step(5, StepAction::Noop, 10).unwrap(), 5);
        assert_eq!(apply_step(9, StepAction::Add3, 10).unwrap(), 2);
        assert!(matches!(apply_step(5, StepAction::Answer, 10), Err(Error::TerminalAction)));
        assert_eq!(
            apply_step(5, StepAction::Answer, 10).unwrap_err().to_string(),
            "terminal action has no successor state"
        );
        assert!(apply_step(10, StepAction::Add1, 10).is_err());
    }

    #[test]
    fn optimal_steps_examples() {
        assert_eq!(optimal_steps(0, 0, 16).unwrap(), 1);
        assert_eq!(brute_force_steps(0, 3, 16, 3), Some(2));
        assert_eq!(optimal_steps(0, 3, 16).unwrap(), 2);
        // 0 -> 3 -> 6 is the only two-move route
        assert_eq!(brute_force_steps(0, 6, 16, 3), Some(3));
        assert_eq!(optimal_steps(0, 6, 16).unwrap(), 3);
        assert!(optimal_steps(0, 70, 128).is_err());
    }

    #[test]
    fn bfs_matches_brute_force_everywhere() {
        for m in [2, 5, 10, 16] {
            for s in 0..m {
                for t in 0..m {
                    assert_eq!(Some(optimal_steps(s, t, m).unwrap()), brute_force_steps(s, t, m, 8), "{s}->{t} mod {m}");
                }
            }
        }
    }

    #[test]
    fn shortest_solution_is_correct_and_optimal() {
        for s in 0..16 {
            for t in 0..16 {
                let q = Question::new(0, s, t, 16).unwrap();
                let steps = shortest_solution(s, t, 16).unwrap();
                let traj = Trajectory::from_steps(&q, &steps, 12).unwrap();
                assert!(traj.correct);
                assert_eq!(traj.len() as u32, q.optimal_steps);
            }
        }
    }

    #[test]
    fn sample_question_is_deterministic_and_in_bucket() {
        let a = sample_question(7, 2, 16).unwrap();
        assert_eq!(a, sample_question(7, 2, 16).unwrap());
        for seed in 0..200 {
            let q = sample_question(seed, 1, 16).unwrap();
            let oracle = brute_force_steps(q.start, q.target, 16, 8).unwrap();
            assert_eq!(q.optimal_steps, oracle);
            assert!((1..=2).contains(&oracle));
            let q = sample_question(seed, 2, 16).unwrap();
            assert!((3..=5).contains(&q.optimal_steps));
        }
    }

    #[test]
    fn hardest_bucket_is_empty_for_modulus_16() {
        assert!(matches!(sample_question(1, 3, 16), Err(Error::EmptyDifficultyBucket { .. })));
        let q = sample_question(1, 3, 64).unwrap();
        assert!((6..=9).contains(&q.optimal_steps));
        assert!(sample_question(1, 4, 16).is_err());
    }

    #[test]
    fn check_answer_examples() {
        let q = Question::new(0, 2, 9, 16).unwrap();
        assert!(check_answer(&q, Some(9)));
        assert!(!check_answer(&q, Some(8)));
        assert!(!check_answer(&q, None));
    }

    #[test]
    fn truncated_trajectory_is_incorrect() {
        let q = Question::new(0, 4, 4, 16).unwrap();
        let t = Trajectory::from_steps(&q, &[StepAction::Noop; 12], 12).unwrap();
        assert_eq!(t.answer, None);
        assert!(!t.correct);
        assert!(Trajectory::from_steps(&q, &[StepAction::Noop; 13], 12).is_err());
        assert!(Trajectory::from_steps(&q, &[StepAction::Answer, StepAction::Noop], 12).is_err());
    }

    #[test]
    fn prefix_views() {
        let q = Question::new(0, 1, 4, 16).unwrap();
        let t = Trajectory::from_steps(&q, &[StepAction::Add1, StepAction::Mul2, StepAction::Answer], 12).unwrap();
        assert_eq!(t.values, vec![2, 4, 4]);
        assert!(t.correct);
        assert_eq!(t.prefix(0).value, 1);
        assert_eq!(t.prefix(1).value, 2);
        assert!(!t.prefix(2).answered);
        assert!(t.full().answered);
        assert_eq!(t.prefix(2).action_counts(), [1, 0, 1, 0, 0]);
    }

    #[test]
    fn question_sets() {
        let qs = sample_questions(3, 50, [0.5, 0.5, 0.0], 16).unwrap();
        assert_eq!(qs.len(), 50);
        assert!(qs.iter().enumerate().all(|(i, q)| q.id == i as u64 && q.optimal_steps <= 5));
        assert_eq!(qs, sample_questions(3, 50, [0.5, 0.5, 0.0], 16).unwrap());
        assert!(sample_questions(3, 5, [0.0, 0.0, 0.0], 16).is_err());
        assert!(sample_questions(3, 5, [0.0, 0.0, 1.0], 16).is_err());
    }
}
