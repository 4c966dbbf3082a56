//! The reasoning-querying-retrieval loop: generate until a query batch or
//! final answer, dispatch the batch, inject results, repeat. Turn and call
//! budgets force a final answer once exhausted.

use std::collections::BTreeMap;
use std::sync::Arc;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use crate::cache::DiskCache;
use crate::dataset::QuestionRecord;
use crate::gateways::{
    dispatch_parallel, GatewayError, Gateways, GenerationRequest, QueryCache, StopReason,
    SummarizedResult,
};
use crate::prompts::{self, PromptSet, EMPTY_ANSWER_SENTINEL, NO_INFORMATION_SENTINEL};
use crate::protocol::{
    self, estimate_tokens, parse_stream, ProtocolError, Trajectory, TrajectorySegment,
    QUERIES_CLOSE, QUERIES_OPEN, QUERY_SEPARATOR,
};

/// Turn/call budget limits and running usage. `forced` is set only when a
/// budget is exhausted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetState {
    pub max_turns: usize,
    pub max_calls: usize,
    pub turns_used: usize,
    pub calls_used: usize,
    pub forced: bool,
}

impl BudgetState {
    pub fn new(max_turns: usize, max_calls: usize) -> Self {
        assert!(max_turns >= 1 && max_calls >= 1);
        Self {
            max_turns,
            max_calls,
            turns_used: 0,
            calls_used: 0,
            forced: false,
        }
    }

    pub fn exhausted(&self) -> bool {
        self.turns_used >= self.max_turns || self.calls_used >= self.max_calls
    }

    pub fn remaining_calls(&self) -> usize {
        self.max_calls - self.calls_used
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortReason {
    ProtocolViolation,
    ContextOverflow,
    BackendFailure,
    NoAnswerAtLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Hybrid,
    SingleQuery,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: usize,
}

impl Default for Sampling {
    fn default() -> Self {
        Self {
            temperature: 0.6,
            top_p: 0.95,
            max_tokens: 4096,
        }
    }
}

/// Per-run configuration. Defaults: 10 turns, 64 calls (effectively
/// unlimited at benchmark scale), both overridable to sweep budget grids.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunPolicy {
    pub mode: RunMode,
    pub concurrency: usize,
    pub sampling: Sampling,
    /// Abort with ContextOverflow when the assembled prompt exceeds this
    /// token estimate, rather than silently truncating history.
    pub context_token_limit: usize,
    #[serde(default)]
    pub prompts: PromptSet,
    pub seed: u64,
}

impl Default for RunPolicy {
    fn default() -> Self {
        Self {
            mode: RunMode::Hybrid,
            concurrency: 16,
            sampling: Sampling::default(),
            context_token_limit: 24_000,
            prompts: PromptSet::default(),
            seed: 0,
        }
    }
}

pub const DEFAULT_MAX_TURNS: usize = 10;
pub const DEFAULT_MAX_CALLS: usize = 64;

/// Outcome of one question run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub question_id: String,
    pub question: String,
    pub trajectory: Trajectory,
    /// Extracted boxed answer; the empty sentinel for aborted runs.
    pub final_answer: String,
    pub budget: BudgetState,
    pub wall_time_ms: u64,
    pub aborted: bool,
    pub abort_reason: Option<AbortReason>,
}

impl RunRecord {
    pub fn generated_tokens(&self) -> usize {
        self.trajectory.generated_tokens()
    }
}

fn map_gateway_abort(err: &GatewayError) -> AbortReason {
    match err {
        GatewayError::ContextOverflow { .. } => AbortReason::ContextOverflow,
        _ => AbortReason::BackendFailure,
    }
}

struct LoopState {
    transcript: String,
    budget: BudgetState,
}

impl LoopState {
    fn record(
        self,
        question_id: &str,
        question: &str,
        final_answer: Option<String>,
        abort_reason: Option<AbortReason>,
        wall_time_ms: u64,
    ) -> RunRecord {
        let trajectory = match parse_stream(&self.transcript) {
            Ok(segments) => Trajectory::new(segments),
            Err(err) => Trajectory::new(err.partial),
        };
        let final_answer = final_answer.unwrap_or_else(|| EMPTY_ANSWER_SENTINEL.to_owned());
        RunRecord {
            question_id: question_id.to_owned(),
            question: question.to_owned(),
            trajectory,
            aborted: final_answer.is_empty(),
            final_answer,
            budget: self.budget,
            wall_time_ms,
            abort_reason,
        }
    }
}

/// Drive one question through the loop under the given budgets.
pub async fn run(
    question_id: &str,
    question: &str,
    budget: BudgetState,
    policy: &RunPolicy,
    gateways: &Gateways,
    disk_cache: Option<Arc<DiskCache>>,
) -> RunRecord {
    assert!(!question.is_empty(), "question must be non-empty");
    let started = tokio::time::Instant::now();
    let cache = QueryCache::new(disk_cache);
    let mut state = LoopState {
        transcript: String::new(),
        budget,
    };

    let vars = BTreeMap::from([("question", question)]);
    let base_prompt = match prompts::fill(&policy.prompts.response_generation, &vars) {
        Ok(p) => p,
        Err(err) => {
            tracing::error!(%err, "response template failed to render");
            return state.record(
                question_id,
                question,
                None,
                Some(AbortReason::ProtocolViolation),
                elapsed_ms(started),
            );
        }
    };

    loop {
        let prompt = format!("{base_prompt}{}", state.transcript);
        if estimate_tokens(&prompt) > policy.context_token_limit {
            return state.record(
                question_id,
                question,
                None,
                Some(AbortReason::ContextOverflow),
                elapsed_ms(started),
            );
        }
        let request = GenerationRequest {
            prompt,
            stop_sequences: vec![QUERIES_CLOSE.to_owned()],
            temperature: policy.sampling.temperature,
            top_p: policy.sampling.top_p,
            max_tokens: policy.sampling.max_tokens,
            seed: policy.seed,
        };
        let generation = match gateways.generator.generate(&request).await {
            Ok(g) => g,
            Err(err) => {
                tracing::warn!(question_id, %err, "generation failed");
                return state.record(
                    question_id,
                    question,
                    None,
                    Some(map_gateway_abort(&err)),
                    elapsed_ms(started),
                );
            }
        };

        if generation.stop_reason != StopReason::StopSequence {
            // The model finished without opening another search turn; the
            // chunk either carries a boxed answer or the run ends empty.
            state.transcript.push_str(&generation.text);
            return match final_answer_in(&generation.text) {
                Ok(Some(answer)) => {
                    state.record(question_id, question, Some(answer), None, elapsed_ms(started))
                }
                Ok(None) => state.record(
                    question_id,
                    question,
                    None,
                    Some(AbortReason::NoAnswerAtLimit),
                    elapsed_ms(started),
                ),
                Err(_) => state.record(
                    question_id,
                    question,
                    None,
                    Some(AbortReason::ProtocolViolation),
                    elapsed_ms(started),
                ),
            };
        }

        // Stop sequence hit: the chunk ends just before the close delimiter.
        let chunk = format!("{}{QUERIES_CLOSE}", generation.text);
        let queries = match extract_batch(&chunk) {
            Ok(q) => q,
            Err(_) => {
                state.transcript.push_str(&chunk);
                return state.record(
                    question_id,
                    question,
                    None,
                    Some(AbortReason::ProtocolViolation),
                    elapsed_ms(started),
                );
            }
        };

        // Budget enforcement: single-query emulation first, then clipping a
        // batch that exceeds the remaining call budget. The recorded batch
        // span always matches the executed queries.
        let mut executed = queries.clone();
        if policy.mode == RunMode::SingleQuery {
            executed.truncate(1);
        }
        let remaining = state.budget.remaining_calls();
        if executed.len() > remaining {
            executed.truncate(remaining);
            state.budget.forced = true;
        }
        if executed.len() == queries.len() {
            state.transcript.push_str(&chunk);
        } else {
            let prefix_end = chunk.rfind(QUERIES_OPEN).expect("verified by extract_batch");
            state.transcript.push_str(&chunk[..prefix_end]);
            state.transcript.push_str(QUERIES_OPEN);
            state.transcript.push_str(&executed.join(QUERY_SEPARATOR));
            state.transcript.push_str(QUERIES_CLOSE);
        }

        state.budget.turns_used += 1;
        state.budget.calls_used += executed.len();

        let concurrency = match policy.mode {
            RunMode::Hybrid => policy.concurrency,
            RunMode::SingleQuery => 1,
        };
        let results =
            match dispatch_parallel(&gateways.pipeline, &executed, concurrency, &cache, question)
                .await
            {
                Ok(results) => results,
                // Inject an all-sentinel block on total failure so the model
                // can react to the dead end instead of stalling.
                Err(GatewayError::BatchFailed) => executed
                    .iter()
                    .map(|q| SummarizedResult {
                        query: q.clone(),
                        summary: NO_INFORMATION_SENTINEL.to_owned(),
                        source_count: 0,
                        cached: false,
                    })
                    .collect(),
                Err(err) => {
                    return state.record(
                        question_id,
                        question,
                        None,
                        Some(map_gateway_abort(&err)),
                        elapsed_ms(started),
                    );
                }
            };
        state.transcript.push('\n');
        state
            .transcript
            .push_str(&protocol::format_results_block(&results));
        state.transcript.push('\n');

        if state.budget.exhausted() {
            state.budget.forced = true;
            return force_answer_pass(question_id, question, state, policy, gateways, &base_prompt, started)
                .await;
        }
    }
}

/// One final generation pass with the force-answer instruction appended to
/// the prompt (never to the transcript) and search delimiters disabled as
/// stop sequences.
async fn force_answer_pass(
    question_id: &str,
    question: &str,
    mut state: LoopState,
    policy: &RunPolicy,
    gateways: &Gateways,
    base_prompt: &str,
    started: tokio::time::Instant,
) -> RunRecord {
    let force_text = prompts::fill(&policy.prompts.force_answer, &BTreeMap::new())
        .unwrap_or_else(|_| policy.prompts.force_answer.clone());
    let request = GenerationRequest {
        prompt: format!("{base_prompt}{}{force_text}", state.transcript),
        stop_sequences: vec![],
        temperature: policy.sampling.temperature,
        top_p: policy.sampling.top_p,
        max_tokens: policy.sampling.max_tokens,
        seed: policy.seed,
    };
    match gateways.generator.generate(&request).await {
        Ok(generation) => {
            state.transcript.push_str(&generation.text);
            match final_answer_in(&generation.text) {
                Ok(Some(answer)) => {
                    state.record(question_id, question, Some(answer), None, elapsed_ms(started))
                }
                _ => state.record(
                    question_id,
                    question,
                    None,
                    Some(AbortReason::NoAnswerAtLimit),
                    elapsed_ms(started),
                ),
            }
        }
        Err(err) => state.record(
            question_id,
            question,
            None,
            Some(map_gateway_abort(&err)),
            elapsed_ms(started),
        ),
    }
}

fn elapsed_ms(started: tokio::time::Instant) -> u64 {
    started.elapsed().as_millis() as u64
}

fn final_answer_in(chunk: &str) -> Result<Option<String>, ProtocolError> {
    let segments = parse_stream(chunk).map_err(|e| e.kind)?;
    Ok(segments.into_iter().rev().find_map(|s| match s {
        TrajectorySegment::FinalAnswer { answer, .. } => Some(answer),
        _ => None,
    }))
}

fn extract_batch(chunk: &str) -> Result<Vec<String>, ProtocolError> {
    let segments = parse_stream(chunk).map_err(|e| e.kind)?;
    let batch = segments.into_iter().rev().find_map(|s| match s {
        TrajectorySegment::QueryBatch { queries, .. } => Some(queries),
        _ => None,
    });
    match batch {
        Some(queries) if !queries.is_empty() => Ok(queries),
        _ => Err(ProtocolError::EmptyBatch),
    }
}

/// `run` with every batch truncated to its first query, emulating iterative
/// single-query baselines for head-to-head latency comparisons.
pub async fn run_single_query_mode(
    question_id: &str,
    question: &str,
    budget: BudgetState,
    policy: &RunPolicy,
    gateways: &Gateways,
    disk_cache: Option<Arc<DiskCache>>,
) -> RunRecord {
    let policy = RunPolicy {
        mode: RunMode::SingleQuery,
        ..policy.clone()
    };
    run(question_id, question, budget, &policy, gateways, disk_cache).await
}

/// Builds one isolated gateway set per run.
pub trait GatewayFactory: Send + Sync {
    fn gateways(&self, question_id: &str) -> Gateways;
}

/// Factory returning clones of one shared gateway set (live backends).
pub struct SharedGateways(pub Gateways);

impl GatewayFactory for SharedGateways {
    fn gateways(&self, _question_id: &str) -> Gateways {
        self.0.clone()
    }
}

/// Run every question in the dataset, at most `parallel_runs` concurrently,
/// with per-run cache and budget isolation. Output order matches input
/// order. Individual failures are recorded in their RunRecord.
pub async fn run_batch(
    dataset: &[QuestionRecord],
    budget: BudgetState,
    policy: &RunPolicy,
    parallel_runs: usize,
    factory: &dyn GatewayFactory,
    disk_cache: Option<Arc<DiskCache>>,
) -> Vec<RunRecord> {
    assert!(parallel_runs >= 1);
    stream::iter(dataset.iter())
        .map(|record| {
            let gateways = factory.gateways(&record.id);
            let disk = disk_cache.clone();
            async move {
                run(&record.id, &record.question, budget, policy, &gateways, disk).await
            }
        })
        .buffered(parallel_runs)
        .collect()
        .await
}
