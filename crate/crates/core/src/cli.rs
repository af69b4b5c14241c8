//! Command-line entry point.
//!
//! ```text
//! wsgrpo [--config run.json] [--section.key=value ...] <gen|train-pref|train-policy|eval|analyze|bound> [options]
//! ```
//!
//! Exit codes: 0 on success, 2 for usage and I/O errors (bad flags, unreadable
//! or malformed inputs, invalid config), 3 for domain errors (degenerate data,
//! missing dependency artifacts, training failures).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::analysis::{self, BoundInputs, MetricsRecord};
use crate::config::RunConfig;
use crate::env::Question;
use crate::error::Error;
use crate::io;
use crate::optimizer::{self, AlgoVariant, TrainState};
use crate::pipeline::{self, CorpusRow};
use crate::policy::{PolicyParams, NUM_ACTIONS};
use crate::preference::{pref_input_dim, PairRow, PrefModelParams, PreferenceModel};
use crate::rng;

#[derive(Debug, Parser)]
#[command(name = "wsgrpo", version, about = "Preference-shaped group-relative policy optimization on an arithmetic-chain environment")]
struct Cli {
    /// JSON run config; absent keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample K labelled rollouts per training question.
    Gen {
        /// Policy checkpoint to sample from (default: the uniform policy).
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Question set JSONL (default: the config's training questions).
        #[arg(long)]
        questions: Option<PathBuf>,
        /// Output corpus (default: <out_dir>/corpus.jsonl).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build preference pairs from a corpus and fit the scorer.
    TrainPref {
        /// Corpus JSONL (default: <out_dir>/corpus.jsonl).
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Output checkpoint (default: <out_dir>/pref.json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimize the policy with the configured variant.
    TrainPolicy {
        /// Preference checkpoint (required for WSGRPO; default: <out_dir>/pref.json).
        #[arg(long)]
        pref: Option<PathBuf>,
        /// Output checkpoint (default: <out_dir>/policy.json).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Metrics JSONL (default: <out_dir>/metrics.jsonl).
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Also write per-iteration group rewards and advantages here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Greedy evaluation of a policy checkpoint.
    Eval {
        #[arg(long)]
        policy: PathBuf,
        /// Question set JSONL (default: the config's evaluation questions).
        #[arg(long)]
        questions: Option<PathBuf>,
    },
    /// Preference-model diagnostics over a corpus.
    Analyze {
        /// Preference checkpoint (default: <out_dir>/pref.json).
        #[arg(long)]
        pref: Option<PathBuf>,
        /// Corpus JSONL (default: <out_dir>/corpus.jsonl).
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Output report (default: <out_dir>/analysis.json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate one of the bound formulas.
    Bound {
        /// 1: preference error, 2: policy robustness, 3: generalization rate.
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        theorem: u8,
        /// Preference-class dimension (default: scorer parameter count).
        #[arg(long)]
        d_p: Option<u64>,
        /// Policy-class dimension (default: policy parameter count).
        #[arg(long)]
        d: Option<u64>,
        #[arg(long, default_value_t = 1000)]
        n: u64,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        /// Preference error for theorem 2 (default: the theorem-1 value).
        #[arg(long)]
        eps: Option<f64>,
        /// Bound on the scorer output.
        #[arg(long, default_value_t = 1.0)]
        scorer_bound: f64,
    },
}

/// A failed command and the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(e: impl std::fmt::Display) -> Self {
        Self { code: 2, message: e.to_string() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io(_)
            | Error::Json(_)
            | Error::InvalidHyperParams(_)
            | Error::UnsupportedModulus(_)
            | Error::InvalidDifficulty(_)
            | Error::EmptyDifficultyBucket { .. }
            | Error::DimensionMismatch(_) => 2,
            _ => 3,
        };
        Self { code, message: e.to_string() }
    }
}

type CmdResult<T> = std::result::Result<T, Failure>;

/// Inputs that fail to load are usage errors whatever the cause.
fn input<T>(what: &str, path: &Path, r: crate::Result<T>) -> CmdResult<T> {
    r.map_err(|e| Failure::usage(format!("{what} {}: {e}", path.display())))
}

/// Config sections; `--optim.K=2` is an override, `--policy=p.json` a flag.
const CONFIG_SECTIONS: [&str; 6] = ["env", "policy", "pref", "reward", "optim", "paths"];

fn is_config_key(key: &str) -> bool {
    match key.split_once('.') {
        Some((section, _)) => CONFIG_SECTIONS.contains(&section),
        None => key == "seed",
    }
}

/// Split config overrides from the arguments clap sees.
fn split_overrides(args: Vec<OsString>) -> (Vec<OsString>, Vec<(String, String)>) {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    for arg in args {
        let parsed = arg
            .to_str()
            .and_then(|s| s.strip_prefix("--"))
            .and_then(|s| s.split_once('='))
            .filter(|(k, _)| is_config_key(k));
        match parsed {
            Some((k, v)) => overrides.push((k.to_string(), v.to_string())),
            None => rest.push(arg),
        }
    }
    (rest, overrides)
}

fn resolve_config(path: Option<&Path>, overrides: &[(String, String)]) -> CmdResult<RunConfig> {
    let mut cfg = match path {
        Some(p) => input("config", p, RunConfig::load(p))?,
        None => RunConfig::default(),
    };
    for (k, v) in overrides {
        cfg = cfg.with_override(k, v).map_err(Failure::usage)?;
    }
    cfg.validate().map_err(Failure::usage)?;
    Ok(cfg)
}

fn out_path(cfg: &RunConfig, given: Option<PathBuf>, name: &str) -> PathBuf {
    given.unwrap_or_else(|| cfg.paths.out_dir.join(name))
}

fn ensure_parent(path: &Path) -> CmdResult<()> {
    match path.parent().filter(|p| !p.as_os_str().is_empty()) {
        Some(dir) => std::fs::create_dir_all(dir).map_err(|e| Failure::usage(format!("cannot create {}: {e}", dir.display()))),
        None => Ok(()),
    }
}

fn print_json<T: Serialize>(value: &T) -> CmdResult<()> {
    println!("{}", io::to_pretty(value)?);
    Ok(())
}

fn load_questions(path: &Path) -> CmdResult<Vec<Question>> {
    let qs: Vec<Question> = input("question set", path, io::read_jsonl(path))?;
    for q in &qs {
        input("question set", path, q.validate())?;
    }
    Ok(qs)
}

fn load_corpus(path: &Path, cfg: &RunConfig) -> CmdResult<(Vec<Question>, pipeline::Corpus)> {
    let rows: Vec<CorpusRow> = input("corpus", path, io::read_jsonl(path))?;
    input("corpus", path, pipeline::corpus_from_rows(&rows, cfg.env.t_max))
}

fn load_policy(path: &Path, cfg: &RunConfig) -> CmdResult<PolicyParams> {
    let params = input("policy checkpoint", path, PolicyParams::load(path))?;
    input("policy checkpoint", path, crate::policy::FeatureSet::for_dim(params.feature_dim, cfg.env.modulus))?;
    Ok(params)
}

fn load_pref(path: &Path, cfg: &RunConfig) -> CmdResult<PreferenceModel> {
    let params = input("preference checkpoint", path, PrefModelParams::load(path))?;
    input("preference checkpoint", path, PreferenceModel::new(params, cfg.env_config()))
}

fn cmd_gen(cfg: &RunConfig, policy: Option<PathBuf>, questions: Option<PathBuf>, out: Option<PathBuf>) -> CmdResult<()> {
    let env = cfg.env_config();
    let policy = match policy {
        Some(p) => load_policy(&p, cfg)?,
        None => pipeline::initial_policy(cfg),
    };
    let questions = match questions {
        Some(p) => load_questions(&p)?,
        None => pipeline::question_sets(cfg)?.0,
    };
    let corpus = pipeline::generate_corpus(&policy, &questions, cfg.optim.k, rng::derive_seed(cfg.seed, rng::CORPUS, &[]), env)?;
    let out = out_path(cfg, out, "corpus.jsonl");
    ensure_parent(&out)?;
    io::write_jsonl(&out, &pipeline::corpus_rows(&questions, &corpus))?;
    eprintln!("wrote {}", out.display());
    print_json(&pipeline::corpus_stats(&corpus))
}

fn cmd_train_pref(cfg: &RunConfig, corpus: Option<PathBuf>, out: Option<PathBuf>) -> CmdResult<()> {
    let corpus_path = out_path(cfg, corpus, "corpus.jsonl");
    let (questions, corpus) = load_corpus(&corpus_path, cfg)?;
    let phase = pipeline::train_preference_phase(&questions, &corpus, cfg, 1)?;
    let out = out_path(cfg, out, "pref.json");
    ensure_parent(&out)?;
    phase.params.save(&out)?;
    let dir = out.parent().unwrap_or(Path::new("."));
    io::write_jsonl(&dir.join("pref_trace.jsonl"), &phase.trace)?;
    let pairs: Vec<PairRow> = phase.train_pairs.iter().chain(&phase.heldout_pairs).map(PairRow::from).collect();
    io::write_jsonl(&dir.join("pairs.jsonl"), &pairs)?;
    eprintln!("wrote {}", out.display());
    print_json(&json!({
        "train_pairs": phase.train_pairs.len(),
        "heldout_pairs": phase.heldout_pairs.len(),
        "train_accuracy": phase.train_accuracy,
        "heldout_accuracy": phase.heldout_accuracy,
    }))
}

fn cmd_train_policy(
    cfg: &RunConfig,
    pref: Option<PathBuf>,
    out: Option<PathBuf>,
    metrics: Option<PathBuf>,
    trace: Option<PathBuf>,
) -> CmdResult<()> {
    let scorer = match (pref, cfg.optim.variant) {
        (Some(p), _) => Some(load_pref(&p, cfg)?),
        (None, AlgoVariant::WsGrpo) => {
            let p = cfg.paths.out_dir.join("pref.json");
            if !p.exists() {
                return Err(Error::MissingDependency(format!("WSGRPO needs a preference checkpoint; {} not found", p.display())).into());
            }
            Some(load_pref(&p, cfg)?)
        }
        (None, _) => None,
    };
    let env = cfg.env_config();
    let (train_q, eval_q) = pipeline::question_sets(cfg)?;
    let state = TrainState::new(pipeline::initial_policy(cfg), cfg.hyper_params(), rng::derive_seed(cfg.seed, rng::ROLLOUTS, &[]));
    let outcome = optimizer::train(state, &train_q, &eval_q, scorer.as_ref().map(|s| s as _), &cfg.train_config(), env)?;

    let out = out_path(cfg, out, "policy.json");
    let metrics = out_path(cfg, metrics, "metrics.jsonl");
    ensure_parent(&out)?;
    ensure_parent(&metrics)?;
    outcome.state.policy.save(&out)?;
    io::write_jsonl(&metrics, &outcome.metrics)?;
    if let Some(t) = trace {
        ensure_parent(&t)?;
        io::write_jsonl(&t, &outcome.trace)?;
    }
    eprintln!("wrote {} and {}", out.display(), metrics.display());
    match outcome.metrics.last() {
        Some(m) => print_json(m),
        None => Ok(()),
    }
}

fn cmd_eval(cfg: &RunConfig, policy: &Path, questions: Option<PathBuf>) -> CmdResult<()> {
    let params = load_policy(policy, cfg)?;
    let questions = match questions {
        Some(p) => load_questions(&p)?,
        None => pipeline::question_sets(cfg)?.1,
    };
    let ev = analysis::evaluate(&params, &questions, cfg.env_config())?;
    print_json(&MetricsRecord::from_evaluation(0, cfg.optim.variant.name(), &ev, 0.0, 0.0, 0.0))
}

fn cmd_analyze(cfg: &RunConfig, pref: Option<PathBuf>, corpus: Option<PathBuf>, out: Option<PathBuf>) -> CmdResult<()> {
    let model = load_pref(&out_path(cfg, pref, "pref.json"), cfg)?;
    let (questions, corpus) = load_corpus(&out_path(cfg, corpus, "corpus.jsonl"), cfg)?;
    let report = analysis::analyze(
        &model,
        &questions,
        &corpus,
        &cfg.hyper_params(),
        cfg.pref.cross_pairs_per_traj,
        cfg.seed,
        model.params.num_params(),
        policy_param_count(cfg),
    )?;
    let out = out_path(cfg, out, "analysis.json");
    ensure_parent(&out)?;
    io::write_json(&out, &report)?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn policy_param_count(cfg: &RunConfig) -> usize {
    NUM_ACTIONS * cfg.policy.features.dim(cfg.env.modulus)
}

#[allow(clippy::too_many_arguments)]
fn cmd_bound(
    cfg: &RunConfig,
    theorem: u8,
    d_p: Option<u64>,
    d: Option<u64>,
    n: u64,
    delta: f64,
    eps: Option<f64>,
    scorer_bound: f64,
) -> CmdResult<()> {
    if n == 0 || !(delta > 0.0 && delta < 1.0) || scorer_bound <= 0.0 || eps.is_some_and(|e| !(e >= 0.0)) {
        return Err(Failure::usage("bound inputs need n >= 1, 0 < delta < 1, scorer_bound > 0, eps >= 0"));
    }
    let inputs = BoundInputs {
        d_p: d_p.unwrap_or_else(|| PrefModelParams::zeros(pref_input_dim(cfg.env.modulus), cfg.pref.hidden_dim).num_params() as u64),
        d: d.unwrap_or(policy_param_count(cfg) as u64),
        n,
        delta,
        scorer_bound,
        t_max: cfg.env.t_max as u64,
        lambda: cfg.reward.lambda,
    };
    if inputs.d_p == 0 || inputs.d == 0 {
        return Err(Failure::usage("dimensions must be >= 1"));
    }
    if !inputs.is_meaningful() {
        eprintln!("warning: n = {} is below the class dimension; the bound is vacuous", inputs.n);
    }
    let report = analysis::bounds_report(inputs);
    let value = match theorem {
        1 => json!({ "theorem": 1, "preference_error": report.preference_error }),
        2 => {
            let eps = eps.unwrap_or(report.preference_error);
            json!({ "theorem": 2, "eps_pref": eps, "policy_robustness": analysis::robustness_bound(inputs.lambda, inputs.t_max as f64, eps) })
        }
        _ => json!({ "theorem": 3, "generalization_rate": report.generalization_rate }),
    };
    print_json(&json!({ "inputs": inputs, "meaningful": report.meaningful, "result": value }))
}

fn dispatch(args: Vec<OsString>) -> CmdResult<()> {
    let (args, overrides) = split_overrides(args);
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return Err(Failure { code, message: String::new() });
        }
    };
    let cfg = resolve_config(cli.config.as_deref(), &overrides)?;
    match cli.command {
        Command::Gen { policy, questions, out } => cmd_gen(&cfg, policy, questions, out),
        Command::TrainPref { corpus, out } => cmd_train_pref(&cfg, corpus, out),
        Command::TrainPolicy { pref, out, metrics, trace } => cmd_train_policy(&cfg, pref, out, metrics, trace),
        Command::Eval { policy, questions } => cmd_eval(&cfg, &policy, questions),
        Command::Analyze { pref, corpus, out } => cmd_analyze(&cfg, pref, corpus, out),
        Command::Bound { theorem, d_p, d, n, delta, eps, scorer_bound } => cmd_bound(&cfg, theorem, d_p, d, n, delta, eps, scorer_bound),
    }
}

/// Run the CLI on `args` (including the program name) and return the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    match dispatch(args.into_iter().map(Into::into).collect()) {
        Ok(()) => 0,
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("error: {}", f.message);
            }
            f.code
        }
    }
}
