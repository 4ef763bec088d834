//! Sequential multi-agent reasoning with expert role specialization.
//!
//! The crate is organised bottom-up:
//!
//! - [`types`]: rosters, experts, task instances, transcripts.
//! - [`backends`]: chat-completion and embedding providers (HTTP and mock).
//! - [`roles`]: prompt templates, roster generation/augmentation, role files.
//! - [`protocol`]: the sequential collaboration engine.
//! - [`harness`]: datasets, experiment plans, the append-only run log.
//! - [`analysis`]: accuracy, alignment deltas, relevance, diversity, scaling.
//! - [`cli`]: the `roleplex` command-line front end.

pub mod analysis;
pub mod backends;
pub mod cli;
pub mod harness;
pub mod protocol;
pub mod roles;
pub mod types;
