//! Sampling-based answer-entropy harness for multiple-choice question sets.
//!
//! A chat-completion model is asked every question of a set `N` times with a
//! fixed three-shot prompt and a fresh context per request. Replies are
//! normalised to a single letter, tallied into per-question answer
//! distributions, and summarised as entropy (nats) against error rate. The
//! closed-form entropy/error-rate curve families live in [`curves`], and a
//! seeded scripted responder in [`simulator`] makes the whole pipeline
//! testable offline.

pub mod cli;
pub mod client;
pub mod curves;
pub mod dataset;
pub mod digest;
pub mod letter;
pub mod parsing;
pub mod prompting;
pub mod report;
pub mod simulator;
pub mod stats;

pub use letter::Letter;
