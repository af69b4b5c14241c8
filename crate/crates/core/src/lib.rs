//! Group-relative policy optimization with weakly-supervised prefix
//! preference rewards.
//!
//! The crate contains a small arithmetic-chain reasoning environment
//! ([`env`]), a linear-softmax policy ([`policy`]), a trajectory preference
//! model trained from outcome labels only ([`preference`]), prefix-level
//! reward shaping ([`reward`]), the GRPO / Dr.GRPO / WS-GRPO optimizer
//! ([`optimizer`]) and evaluation plus bound calculators ([`analysis`]).
//! [`pipeline`] wires them into the end-to-end two-phase procedure and
//! [`cli`] exposes it as the `wsgrpo` command.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod env;
pub mod error;
pub mod io;
pub mod optimizer;
pub mod pipeline;
pub mod policy;
pub mod preference;
pub mod reward;
pub mod rng;

pub use error::{Error, Result};
