//! Finite-difference gradient oracles shared by the test targets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wsgrpo::analysis::random_trajectories;
use wsgrpo::env::{EnvConfig, StepAction, Trajectory};
use wsgrpo::optimizer::{surrogate_objective, AlgoVariant, ObjectiveSettings, RatioDenominator, RolloutGroup};
use wsgrpo::policy::{features, log_prob_and_grad, rollout, PolicyParams, RolloutMode, NUM_ACTIONS};
use wsgrpo::preference::{bce_loss_and_grad_features, pref_features, pref_input_dim, PrefModelParams};

pub const ENV: EnvConfig = EnvConfig { modulus: 16, t_max: 12 };
const H: f64 = 1e-6;

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

pub fn random_policy(r: &mut ChaCha8Rng, scale: f64) -> PolicyParams {
    let dim = wsgrpo::policy::feature_dim(16);
    PolicyParams { feature_dim: dim, num_actions: NUM_ACTIONS, weights: (0..NUM_ACTIONS * dim).map(|_| r.gen_range(-scale..scale)).collect() }
}

/// Numeric gradient of `f` at `x` by central differences.
fn central_diff(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + H;
            let up = f(&x);
            x[i] = orig - H;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * H)
        })
        .collect()
}

/// Worst relative error of the policy log-prob gradient over 100 cases.
pub fn policy_grad_error() -> f64 {
    let mut r = ChaCha8Rng::seed_from_u64(11);
    let items = random_trajectories(100, 5, ENV).unwrap();
    let mut worst = 0.0f64;
    for (q, t) in &items {
        let params = random_policy(&mut r, 1.0);
        let step = r.gen_range(0..t.len());
        let feat = features(q, &t.prefix(step), ENV.t_max);
        let action = StepAction::ALL[r.gen_range(0..NUM_ACTIONS)];
        let (_, grad) = log_prob_and_grad(&params, &feat, action).unwrap();
        let numeric = central_diff(&params.weights, |w| {
            let p = PolicyParams { weights: w.to_vec(), ..params.clone() };
            log_prob_and_grad(&p, &feat, action).unwrap().0
        });
        for (a, n) in grad.iter().zip(&numeric) {
            worst = worst.max(rel_err(*a, *n));
        }
    }
    worst
}

/// Worst relative error of the preference BCE gradient over 100 cases.
pub fn pref_grad_error() -> f64 {
    let mut r = ChaCha8Rng::seed_from_u64(12);
    let items = random_trajectories(200, 6, ENV).unwrap();
    let mut worst = 0.0f64;
    for (case, pair) in items.chunks(2).enumerate() {
        let q = &pair[0].0;
        let other = Trajectory::from_steps(q, &pair[1].1.steps, ENV.t_max).unwrap();
        let x = pref_features(q, &pair[0].1.full(), &other.full(), ENV);
        let mut params = PrefModelParams::init(pref_input_dim(16), 8, case as u64);
        params.iter_mut().for_each(|w| *w *= r.gen_range(1.0..10.0));
        let label = (case % 2) as u8;
        let (_, grad) = bce_loss_and_grad_features(&params, &x, label);
        let flat: Vec<f64> = params.iter().collect();
        let numeric = central_diff(&flat, |w| {
            let mut p = params.clone();
            p.iter_mut().zip(w).for_each(|(dst, src)| *dst = *src);
            bce_loss_and_grad_features(&p, &x, label).0
        });
        for (a, n) in grad.iter().zip(&numeric) {
            worst = worst.max(rel_err(a, *n));
        }
    }
    worst
}

fn micro_groups(r: &mut ChaCha8Rng, behavior: &PolicyParams, case: u64) -> Vec<RolloutGroup> {
    let questions = wsgrpo::env::sample_questions(case, 2, [0.5, 0.5, 0.0], 16).unwrap();
    questions
        .into_iter()
        .map(|q| {
            let g = r.gen_range(2..5);
            let trajectories: Vec<Trajectory> =
                (0..g).map(|i| rollout(behavior, &q, case * 100 + i, RolloutMode::Sample, ENV).unwrap()).collect();
            let advantages: Vec<f64> = (0..g).map(|_| r.gen_range(-2.0..2.0)).collect();
            RolloutGroup {
                question: q,
                trajectories,
                rewards: vec![0.0; g as usize],
                advantages,
                reward_mean: 0.0,
                reward_std: 1.0,
                breakdowns: Vec::new(),
            }
        })
        .collect()
}

/// Worst absolute error of the objective gradient over 20 micro-cases.
pub fn objective_grad_error() -> f64 {
    let mut r = ChaCha8Rng::seed_from_u64(13);
    let variants = [AlgoVariant::Grpo, AlgoVariant::DrGrpo, AlgoVariant::WsGrpo];
    let denominators = [RatioDenominator::Behavior, RatioDenominator::Reference];
    let mut worst = 0.0f64;
    for case in 0..20u64 {
        let reference = random_policy(&mut r, 0.3);
        let behavior = random_policy(&mut r, 0.3);
        let mut policy = behavior.clone();
        policy.weights.iter_mut().for_each(|w| *w += r.gen_range(-0.05..0.05));
        let groups = micro_groups(&mut r, &behavior, case);
        let settings = ObjectiveSettings {
            variant: variants[case as usize % 3],
            clip_eps: 0.2,
            kl_beta: r.gen_range(0.0..0.5),
            t_max: ENV.t_max,
            ratio_denominator: denominators[case as usize % 2],
        };
        let value = surrogate_objective(&policy, &behavior, &reference, &groups, &settings).unwrap();
        let numeric = central_diff(&policy.weights, |w| {
            let p = PolicyParams { weights: w.to_vec(), ..policy.clone() };
            surrogate_objective(&p, &behavior, &reference, &groups, &settings).unwrap().objective
        });
        for (a, n) in value.grad.iter().zip(&numeric) {
            worst = worst.max((a - n).abs());
        }
    }
    worst
}
