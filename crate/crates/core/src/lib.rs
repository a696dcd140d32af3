//! Tree-search plus evolutionary refinement over LLM-generated prediction
//! pipelines.

pub mod cli;
pub mod config;
pub mod error;
pub mod evolution;
pub mod executor;
pub mod generator;
pub mod ledger;
pub mod mcts;
pub mod metrics;
pub mod orchestrator;
pub mod reporting;
pub mod reward;
pub mod tree;
pub mod types;

pub use error::{Error, Result};
