use thiserror::Error;

/// Errors raised by the environment, models, and training loops.
#[derive(Debug, Error)]
pub enum Error {
    #[error("terminal action has no successor state")]
    TerminalAction,

    #[error("value {value} outside state space [0, {modulus})")]
    ValueOutOfRange { value: u32, modulus: u32 },

    #[error("modulus {0} unsupported (need 2 <= modulus <= 64)")]
    UnsupportedModulus(u32),

    #[error("target {target} unreachable from {start} under modulus {modulus}")]
    Unreachable { start: u32, target: u32, modulus: u32 },

    #[error("difficulty {0} invalid (expected 1, 2 or 3)")]
    InvalidDifficulty(u8),

    #[error("no question with optimal_steps in [{lo}, {hi}] exists for modulus {modulus}")]
    EmptyDifficultyBucket { lo: u32, hi: u32, modulus: u32 },

    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("numerical overflow in policy logits")]
    PolicyOverflow,

    #[error("degenerate behavior probability")]
    DegenerateBehaviorProbability,

    #[error("degenerate corpus: preference pairs undefined")]
    DegenerateCorpus,

    #[error("divergence: reduce learning rate")]
    Divergence,

    #[error("group too small for relative baseline")]
    GroupTooSmall,

    #[error("step index {t} out of range [2, {len}]")]
    StepOutOfRange { t: usize, len: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid hyperparameters: {0}")]
    InvalidHyperParams(String),

    #[error("missing dependency: {0}")]
    MissingDependency(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("non-finite policy parameters after update")]
    NonFiniteParams,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
