//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::collections::{BTreeMap, HashMap};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wsgrpo::analysis::{empirical_robustness, random_trajectories, robustness_bound, vc_bound, PerturbedScorer, BOUND_SLACK};
use wsgrpo::config::RunConfig;
use wsgrpo::env::{Question, StepAction, Trajectory};
use wsgrpo::optimizer::{group_advantages, AlgoVariant, IterationTrace};
use wsgrpo::pipeline::{preference_from_initial_policy, question_sets, train_policy_phase, train_preference_phase};
use wsgrpo::preference::{build_pairs, pref_input_dim, separable_corpus, PairScorer, PrefModelParams, PreferenceExample, PreferenceModel};
use wsgrpo::reward::{length_penalty, HyperParams};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed < Duration::from_secs(limit_s)
}

fn a1_advantages() -> Outcome {
    let started = Instant::now();
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_mean, mut worst_std, mut inexact) = (0.0f64, 0.0f64, 0usize);
    let mut vectors = 0;
    while vectors < 1000 {
        let g = [2, 4, 8][vectors % 3];
        // dyadic rewards, shifts and scales keep every transformation exact
        let rewards: Vec<f64> = (0..g).map(|_| f64::from(r.gen_range(-1024i32..=1024)) / 1024.0).collect();
        let mean = rewards.iter().sum::<f64>() / g as f64;
        let sigma = (rewards.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / g as f64).sqrt();
        if sigma < 1e-8 {
            continue;
        }
        vectors += 1;
        let base = group_advantages(&rewards, AlgoVariant::Grpo).unwrap().advantages;
        let m = base.iter().sum::<f64>() / g as f64;
        let s = (base.iter().map(|a| (a - m).powi(2)).sum::<f64>() / g as f64).sqrt();
        worst_mean = worst_mean.max(m.abs());
        worst_std = worst_std.max((s - 1.0).abs());

        let shift = f64::from(r.gen_range(-4096i32..=4096)) / 1024.0;
        let scale = 2f64.powi(r.gen_range(-4..=4));
        let shifted: Vec<f64> = rewards.iter().map(|x| x + shift).collect();
        let scaled: Vec<f64> = rewards.iter().map(|x| x * scale).collect();
        for variant in [AlgoVariant::Grpo, AlgoVariant::WsGrpo] {
            let a = group_advantages(&rewards, variant).unwrap().advantages;
            inexact += usize::from(a != group_advantages(&shifted, variant).unwrap().advantages);
            inexact += usize::from(a != group_advantages(&scaled, variant).unwrap().advantages);
        }
        let centered = group_advantages(&rewards, AlgoVariant::DrGrpo).unwrap().advantages;
        inexact += usize::from(centered != group_advantages(&shifted, AlgoVariant::DrGrpo).unwrap().advantages);
    }
    let elapsed = started.elapsed();
    outcome(
        worst_mean <= 1e-9 && worst_std <= 1e-9 && inexact == 0 && within(elapsed, 1),
        format!("|mean| {worst_mean:.1e}, |std-1| {worst_std:.1e}, inexact invariances {inexact}, {elapsed:.2?}"),
    )
}

fn a2_gradients() -> Outcome {
    let started = Instant::now();
    let policy = common::policy_grad_error();
    let pref = common::pref_grad_error();
    let objective = common::objective_grad_error();
    let elapsed = started.elapsed();
    outcome(
        policy < 1e-4 && pref < 1e-4 && objective < 1e-3 && within(elapsed, 30),
        format!("policy rel {policy:.1e}, pref rel {pref:.1e}, objective abs {objective:.1e}, {elapsed:.2?}"),
    )
}

fn a3_length_penalty() -> Outcome {
    let expected = [(2, -0.1), (3, 0.0), (4, 0.0), (5, 0.0), (6, 0.0), (9, -0.3)];
    let worst = expected.iter().map(|&(n, v)| (length_penalty(n, 0.1, 3, 6) - v).abs()).fold(0.0, f64::max);
    outcome(worst <= 1e-15, format!("max error {worst:.1e}"))
}

type Key = (u64, u32, Vec<StepAction>, u32, Vec<StepAction>, u8);

fn key(ex: &PreferenceExample) -> Key {
    (ex.question.id, ex.traj_a.start, ex.traj_a.steps.clone(), ex.traj_b.start, ex.traj_b.steps.clone(), ex.label)
}

/// Every example's reversal occurs exactly as often as the example itself.
fn symmetric(pairs: &[PreferenceExample]) -> bool {
    let mut counts: HashMap<Key, i64> = HashMap::new();
    for ex in pairs {
        *counts.entry(key(ex)).or_default() += 1;
    }
    pairs.iter().all(|ex| counts.get(&key(&ex.reversed())) == counts.get(&key(ex)))
}

/// The question whose corpus entry holds `t`.
fn owner(corpus: &BTreeMap<u64, Vec<Trajectory>>, t: &Trajectory) -> Option<u64> {
    corpus.iter().find(|(_, ts)| ts.contains(t)).map(|(id, _)| *id)
}

fn a4_pairs() -> Outcome {
    let q = Question::new(0, 1, 2, 16).unwrap();
    let tr = |q: &Question, steps: &[StepAction]| Trajectory::from_steps(q, steps, 12).unwrap();
    use StepAction::*;
    let mixed = BTreeMap::from([(
        0,
        vec![tr(&q, &[Add1, Answer]), tr(&q, &[Noop, Add1, Answer]), tr(&q, &[Answer]), tr(&q, &[Add3, Answer])],
    )]);
    let mixed_pairs = build_pairs(std::slice::from_ref(&q), &mixed, 1, 2).unwrap();

    let easy = Question::new(1, 5, 6, 16).unwrap();
    let hard = Question::new(2, 7, 3, 16).unwrap();
    let uniform = BTreeMap::from([
        (1, vec![tr(&easy, &[Add1, Answer]), tr(&easy, &[Noop, Add1, Answer]), tr(&easy, &[Noop, Noop, Add1, Answer])]),
        (2, vec![tr(&hard, &[Answer]), tr(&hard, &[Add1, Answer]), tr(&hard, &[Noop, Noop])]),
    ]);
    let mut cross_only = true;
    let mut all_symmetric = symmetric(&mixed_pairs);
    for seed in 0..20 {
        let pairs = build_pairs(&[easy.clone(), hard.clone()], &uniform, seed, 3).unwrap();
        cross_only &= pairs.len() == 2 * 6 * 3;
        cross_only &= pairs.iter().all(|ex| owner(&uniform, &ex.traj_a) != owner(&uniform, &ex.traj_b));
        all_symmetric &= symmetric(&pairs);
    }
    outcome(
        mixed_pairs.len() == 8 && cross_only && all_symmetric,
        format!("2/2 split gives {} examples, uniform outcomes cross-question only: {cross_only}, symmetric: {all_symmetric}", mixed_pairs.len()),
    )
}

fn a5_learnability() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for seed in 1..=3 {
        let started = Instant::now();
        let cfg = RunConfig { seed, ..Default::default() };
        let (train_q, _) = question_sets(&cfg).unwrap();
        let corpus = separable_corpus(&train_q, cfg.env_config(), seed).unwrap();
        let phase = train_preference_phase(&train_q, &corpus, &cfg, 0).unwrap();
        let elapsed = started.elapsed();
        pass &= phase.heldout_accuracy >= 0.95 && within(elapsed, 60);
        parts.push(format!("seed {seed}: {:.3} in {elapsed:.1?}", phase.heldout_accuracy));
    }
    outcome(pass, format!("held-out accuracy {}", parts.join(", ")))
}

/// Preference reward recomputed from raw scorer calls.
fn pref_reward_by_hand(scorer: &dyn PairScorer, q: &Question, t: &Trajectory, hp: &HyperParams) -> f64 {
    let n = t.len();
    let scores: Vec<f64> = (2..=n).map(|i| scorer.score(q, &t.prefix(i - 1), &t.prefix(i))).collect();
    let mean = if scores.is_empty() { 0.0 } else { scores.iter().sum::<f64>() / scores.len() as f64 };
    (mean + length_penalty(n, hp.alpha, hp.n_min, hp.n_max)) / n as f64
}

fn a6_robustness() -> Outcome {
    let hp = HyperParams::default();
    let env = common::ENV;
    let mut params = PrefModelParams::init(pref_input_dim(env.modulus), 32, 6);
    params.iter_mut().for_each(|w| *w *= 20.0);
    let model = PreferenceModel::new(params, env).unwrap();
    let items = random_trajectories(200, 6, env).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for eps in [0.01, 0.1] {
        let perturbed = PerturbedScorer { base: &model, eps, seed: 6 };
        let (mut d_pref, mut d_ws) = (0.0f64, 0.0f64);
        for (q, t) in &items {
            let a = pref_reward_by_hand(&model, q, t, &hp);
            let b = pref_reward_by_hand(&perturbed, q, t, &hp);
            d_pref = d_pref.max((a - b).abs());
            let final_reward = f64::from(u8::from(t.correct));
            d_ws = d_ws.max(((hp.lambda * a + final_reward) - (hp.lambda * b + final_reward)).abs());
        }
        let report = empirical_robustness(&model, eps, &items, 6, &hp).unwrap();
        let ok = d_pref <= eps + BOUND_SLACK
            && d_ws <= hp.lambda * eps + BOUND_SLACK
            && report.holds
            && report.max_delta_pref == d_pref
            && d_pref > 0.0;
        pass &= ok;
        parts.push(format!("eps {eps}: |dR_pref| {d_pref:.3e}, |dR_ws| {d_ws:.3e}"));
    }
    outcome(pass, parts.join("; "))
}

fn a7_bounds() -> Outcome {
    let value = vc_bound(10.0, 1000.0, 0.05);
    // same formula rearranged: ln(2en/d) = ln 2 + 1 + ln n - ln d
    let (d, n, delta) = (10.0f64, 1000.0f64, 0.05f64);
    let oracle = ((2.0 * d * (std::f64::consts::LN_2 + 1.0 + n.ln() - d.ln()) + 2.0 * (2.0f64.ln() - delta.ln())) / n).sqrt();
    let literal = 0.3683;
    let robust = robustness_bound(0.1, 8.0, 0.2);
    let ulp = f64::EPSILON * 0.04;
    let pass = (value - oracle).abs() <= 1e-12 && (value - literal).abs() <= 1e-3 && (robust - 0.04).abs() <= ulp;
    outcome(
        pass,
        format!(
            "vc_bound {value:.6} (oracle {oracle:.6}, stated {literal} ± 1e-3, off by {:.4}); robustness_bound {robust:e}",
            (value - literal).abs()
        ),
    )
}

fn a8_mechanism() -> Outcome {
    let started = Instant::now();
    let mut rows = Vec::new();
    let mut pass = true;
    for seed in 1..=3 {
        let mut cfg = RunConfig { seed, ..Default::default() };
        cfg.optim.iterations = 500;
        let (_, _, phase) = preference_from_initial_policy(&cfg).unwrap();
        let model = phase.model(cfg.env_config()).unwrap();
        let mut finals = Vec::new();
        for variant in [AlgoVariant::Grpo, AlgoVariant::WsGrpo] {
            cfg.optim.variant = variant;
            let out = train_policy_phase(&cfg, Some(&model)).unwrap();
            finals.push(out.metrics.last().cloned().unwrap());
        }
        let (grpo, ws) = (&finals[0], &finals[1]);
        let shorter = ws.avg_steps <= 0.8 * grpo.avg_steps;
        let accurate = (ws.pass_at_1 - grpo.pass_at_1).abs() <= 0.10;
        pass &= shorter && accurate;
        rows.push(format!(
            "seed {seed}: GRPO {:.3}/{:.2} vs WS-GRPO {:.3}/{:.2}",
            grpo.pass_at_1, grpo.avg_steps, ws.pass_at_1, ws.avg_steps
        ));
    }
    let elapsed = started.elapsed();
    pass &= within(elapsed, 600);
    outcome(pass, format!("pass@1/avg_steps {}; {elapsed:.1?}", rows.join(", ")))
}

fn a9_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_wsgrpo"))
            .current_dir(dir.path())
            .args(["--seed=7", "--optim.iterations=60", "train-policy", "--metrics", name])
            .output()
            .expect("binary runs");
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(dir.path().join(name)).unwrap()
    };
    let (first, second) = (run("a.jsonl"), run("b.jsonl"));
    outcome(!first.is_empty() && first == second, format!("{} bytes, identical: {}", first.len(), first == second))
}

fn a10_lambda_zero() -> Outcome {
    let mut cfg = RunConfig { seed: 10, ..Default::default() };
    cfg.optim.iterations = 100;
    cfg.reward.lambda = 0.0;
    let (_, _, phase) = preference_from_initial_policy(&cfg).unwrap();
    let model = phase.model(cfg.env_config()).unwrap();
    let trace = |variant| {
        let mut c = cfg.clone();
        c.optim.variant = variant;
        train_policy_phase(&c, Some(&model)).unwrap().trace
    };
    let (grpo, ws): (Vec<IterationTrace>, Vec<IterationTrace>) = (trace(AlgoVariant::Grpo), trace(AlgoVariant::WsGrpo));
    let groups = |t: &[IterationTrace]| -> Vec<(Vec<f64>, Vec<f64>)> {
        t.iter().flat_map(|it| it.groups.iter().map(|g| (g.rewards.clone(), g.advantages.clone()))).collect()
    };
    let equal = grpo.len() == ws.len() && groups(&grpo) == groups(&ws);
    outcome(equal, format!("{} iterations, rewards and advantages identical: {equal}", grpo.len()))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("A1 advantage normalization", a1_advantages),
        ("A2 gradient oracles", a2_gradients),
        ("A3 length penalty", a3_length_penalty),
        ("A4 pair construction", a4_pairs),
        ("A5 preference learnability", a5_learnability),
        ("A6 perturbation robustness", a6_robustness),
        ("A7 bound calculators", a7_bounds),
        ("A8 length reduction", a8_mechanism),
        ("A9 determinism", a9_determinism),
        ("A10 lambda zero equivalence", a10_lambda_zero),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        failed += usize::from(!o.pass);
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
