//! Prefix-level pseudo-rewards from a frozen preference scorer.
//!
//! Each step `t >= 2` of a rollout is scored by comparing the consecutive
//! prefixes `s[..t-1]` and `s[..t]`. The mean step score plus a length
//! penalty, divided by the rollout length, forms the preference reward,
//! which is mixed with the binary outcome reward.

use serde::{Deserialize, Serialize};

use crate::env::{Question, Trajectory};
use crate::error::{Error, Result};
use crate::preference::PairScorer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrefAggregation {
    /// `(mean step score + length penalty) / n`.
    #[default]
    Normalized,
    /// Raw sum of step scores, no penalty.
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub lambda: f64,
    pub alpha: f64,
    pub n_min: usize,
    pub n_max: usize,
    pub group_size: usize,
    pub k: usize,
    pub clip_eps: f64,
    pub kl_beta: f64,
    pub t_max: usize,
    pub pref_aggregation: PrefAggregation,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            alpha: 0.1,
            n_min: 3,
            n_max: 6,
            group_size: 8,
            k: 4,
            clip_eps: 0.2,
            kl_beta: 0.01,
            t_max: 12,
            pref_aggregation: PrefAggregation::Normalized,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidHyperParams(msg.to_string()));
        if !(self.lambda >= 0.0) {
            return bad("lambda must be >= 0");
        }
        if !(self.alpha >= 0.0) {
            return bad("alpha must be >= 0");
        }
        if !(1 <= self.n_min && self.n_min <= self.n_max && self.n_max <= self.t_max) {
            return bad("need 1 <= n_min <= n_max <= T_max");
        }
        if self.group_size < 2 {
            return bad("G must be >= 2");
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return bad("clip_eps must lie in (0, 1)");
        }
        if !(self.kl_beta >= 0.0) {
            return bad("kl_beta must be >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    /// Scores for `t = 2..=n`.
    pub step_scores: Vec<f64>,
    pub mean_step: f64,
    pub length_penalty: f64,
    pub pref_reward: f64,
    pub final_reward: u8,
    pub combined: f64,
}

/// `P(prefix[..t-1] preferred to prefix[..t])` for `2 <= t <= n`.
pub fn step_reward(scorer: &dyn PairScorer, question: &Question, trajectory: &Trajectory, t: usize) -> Result<f64> {
    if t < 2 || t > trajectory.len() {
        return Err(Error::StepOutOfRange { t, len: trajectory.len() });
    }
    Ok(scorer.score(question, &trajectory.prefix(t - 1), &trajectory.prefix(t)))
}

/// Zero inside `[n_min, n_max]`, `-alpha` per step outside it.
pub fn length_penalty(n: usize, alpha: f64, n_min: usize, n_max: usize) -> f64 {
    if n < n_min {
        -alpha * (n_min - n) as f64
    } else if n > n_max {
        -alpha * (n - n_max) as f64
    } else {
        0.0
    }
}

pub fn combined_reward(pref_reward: f64, final_reward: u8, lambda: f64) -> f64 {
    lambda * pref_reward + f64::from(final_reward)
}

/// Score every consecutive prefix pair and assemble the reward breakdown.
pub fn pref_reward(scorer: &dyn PairScorer, question: &Question, trajectory: &Trajectory, hp: &HyperParams) -> Result<RewardBreakdown> {
    let n = trajectory.len();
    if n == 0 {
        return Err(Error::InvalidTrajectory("empty trajectory has no reward".into()));
    }
    let step_scores = (2..=n).map(|t| step_reward(scorer, question, trajectory, t)).collect::<Result<Vec<_>>>()?;
    Ok(breakdown_from_scores(step_scores, n, u8::from(trajectory.correct), hp))
}

/// Aggregate precomputed step scores (`n - 1` of them) for a length-`n`
/// trajectory.
pub fn breakdown_from_scores(step_scores: Vec<f64>, n: usize, final_reward: u8, hp: &HyperParams) -> RewardBreakdown {
    debug_assert_eq!(step_scores.len() + 1, n.max(1));
    let mean_step = if step_scores.is_empty() { 0.0 } else { step_scores.iter().sum::<f64>() / step_scores.len() as f64 };
    let (penalty, pref) = match hp.pref_aggregation {
        PrefAggregation::Normalized => {
            let penalty = length_penalty(n, hp.alpha, hp.n_min, hp.n_max);
            (penalty, (mean_step + penalty) / n as f64)
        }
        PrefAggregation::Sum => (0.0, step_scores.iter().sum()),
    };
    RewardBreakdown {
        mean_step,
        length_penalty: penalty,
        pref_reward: pref,
        final_reward,
        combined: combined_reward(pref, final_reward, hp.lambda),
        step_scores,
    }
}
