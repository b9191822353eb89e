//! Engine and evaluation harness for single-model, self-reflection, and
//! two-agent debate protocols over ternary cultural-norm scenarios, with
//! judge/oracle/random adjudication and accuracy, parity, and
//! decision-dynamics reporting.

pub mod client;
pub mod dataset;
pub mod metrics;
pub mod prompts;
pub mod runner;
pub mod seeded;
pub mod strategies;
