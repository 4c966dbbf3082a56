//! A hybrid parallel/sequential deep-search agent harness: a token-delimited
//! transcript protocol, budget-constrained reasoning-querying-retrieval
//! loops, hybrid-hop question synthesis with trajectory filtering, and an
//! evaluation suite (F1, model-based evaluation, accuracy-budget curves,
//! AUC, evidence coverage).

pub mod cache;
pub mod config;
pub mod dataset;
pub mod evaluation;
pub mod gateways;
pub mod orchestrator;
pub mod prompts;
pub mod protocol;
pub mod report;
pub mod synthesis;
