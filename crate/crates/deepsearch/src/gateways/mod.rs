//! Interface-abstracted clients for the external services (generator,
//! search provider, summarizer, judge, related-questions and link
//! providers), plus bounded-parallel dispatch over a per-run query cache.

pub mod http;
pub mod mock;

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use async_trait::async_trait;
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Mutex;
use unicode_normalization::UnicodeNormalization;

use crate::cache::{cache_key, now_epoch_secs, CacheEntry, DiskCache};
use crate::prompts::{
    self, PromptSet, EMPTY_ANSWER_SENTINEL, FINAL_INFORMATION_MARKER, NO_INFORMATION_SENTINEL,
    REPEATED_QUERY_SENTINEL,
};
pub use crate::protocol::SummarizedResult;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("prompt exceeds backend context limit ({estimate} > {limit} estimated tokens)")]
    ContextOverflow { estimate: usize, limit: usize },
    #[error("search failed for query {query:?}: {message}")]
    SearchFailed { query: String, message: String },
    #[error("every query in the batch failed")]
    BatchFailed,
    #[error("related-questions provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchDocument {
    pub url: String,
    pub title: String,
    pub content: String,
    /// 1-based rank within the response.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    pub prompt: String,
    pub stop_sequences: Vec<String>,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: usize,
    /// Sampling seed; mocks and live backends that support seeding use it
    /// for reproducibility.
    pub seed: u64,
}

impl GenerationRequest {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.prompt.is_empty() {
            return Err(GatewayError::InvalidRequest("prompt is empty".into()));
        }
        if self.temperature < 0.0 {
            return Err(GatewayError::InvalidRequest("temperature < 0".into()));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(GatewayError::InvalidRequest("top_p out of (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    StopSequence,
    EndOfSequence,
    MaxTokens,
}

#[derive(Debug, Clone)]
pub struct Generation {
    /// Generated text, excluding the matched stop sequence.
    pub text: String,
    pub stop_reason: StopReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub correct: bool,
    pub raw: String,
}

#[async_trait]
pub trait Generator: Send + Sync {
    async fn generate(&self, request: &GenerationRequest) -> Result<Generation, GatewayError>;
}

#[async_trait]
pub trait SearchProvider: Send + Sync {
    async fn search(&self, query: &str, top_k: usize)
        -> Result<Vec<SearchDocument>, GatewayError>;
}

#[async_trait]
pub trait Summarize: Send + Sync {
    async fn summarize(
        &self,
        query: &str,
        documents: &[SearchDocument],
        reference_entity: &str,
    ) -> Result<SummarizedResult, GatewayError>;
}

#[async_trait]
pub trait Judge: Send + Sync {
    async fn judge(
        &self,
        question: &str,
        gold: &str,
        prediction: &str,
    ) -> Result<JudgeVerdict, GatewayError>;
}

#[async_trait]
pub trait RelatedQuestionsProvider: Send + Sync {
    async fn related(&self, seed_question: &str, entity: &str)
        -> Result<Vec<String>, GatewayError>;
}

#[async_trait]
pub trait LinkProvider: Send + Sync {
    async fn top_links(&self, query: &str, top_k: usize) -> Result<Vec<String>, GatewayError>;
}

/// Cache key normalization: Unicode NFC, lowercase, whitespace collapse.
/// Sampled rephrasings that differ only in case or spacing share one entry.
pub fn normalize_query(query: &str) -> String {
    query
        .nfc()
        .collect::<String>()
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Per-run query cache. Repeats within one run get the repeated-query
/// sentinel; an optional disk cache serves cross-run hits.
pub struct QueryCache {
    seen: Mutex<HashMap<String, ()>>,
    disk: Option<Arc<DiskCache>>,
}

impl QueryCache {
    pub fn new(disk: Option<Arc<DiskCache>>) -> Self {
        Self {
            seen: Mutex::new(HashMap::new()),
            disk,
        }
    }
}

impl Default for QueryCache {
    fn default() -> Self {
        Self::new(None)
    }
}

/// One search + summarize pipeline shared by the orchestrator and the
/// synthesis stages.
#[derive(Clone)]
pub struct SearchPipeline {
    pub provider: Arc<dyn SearchProvider>,
    pub summarizer: Arc<dyn Summarize>,
    pub top_k: usize,
}

enum QueryPlan {
    Repeat,
    DiskHit(CacheEntry),
    Live,
}

/// Run every query through search + summarize with at most `concurrency`
/// pipelines in flight. Output order equals input order regardless of
/// completion order. Per-query failures are captured in place as sentinel
/// summaries; only total failure raises `BatchFailed`.
pub async fn dispatch_parallel(
    pipeline: &SearchPipeline,
    queries: &[String],
    concurrency: usize,
    cache: &QueryCache,
    reference_entity: &str,
) -> Result<Vec<SummarizedResult>, GatewayError> {
    assert!(!queries.is_empty(), "queries must be non-empty");
    assert!(concurrency >= 1, "concurrency must be >= 1");

    // Plan sequentially so duplicates inside one batch also hit the cache
    // exactly once, then fan out.
    let mut plans = Vec::with_capacity(queries.len());
    {
        let mut seen = cache.seen.lock().await;
        for query in queries {
            let normalized = normalize_query(query);
            if seen.contains_key(&normalized) {
                plans.push(QueryPlan::Repeat);
                continue;
            }
            seen.insert(normalized.clone(), ());
            let disk_hit = cache
                .disk
                .as_ref()
                .and_then(|d| d.get(&cache_key(&normalized)));
            plans.push(match disk_hit {
                Some(entry) => QueryPlan::DiskHit(entry),
                None => QueryPlan::Live,
            });
        }
    }

    let results: Vec<(SummarizedResult, bool)> = stream::iter(queries.iter().zip(plans))
        .map(|(query, plan)| {
            let query = query.trim().to_owned();
            let pipeline = pipeline.clone();
            let disk = cache.disk.clone();
            let reference_entity = reference_entity.to_owned();
            async move {
                match plan {
                    QueryPlan::Repeat => (
                        SummarizedResult {
                            query,
                            summary: REPEATED_QUERY_SENTINEL.to_owned(),
                            source_count: 0,
                            cached: true,
                        },
                        false,
                    ),
                    QueryPlan::DiskHit(entry) => (
                        SummarizedResult {
                            query,
                            summary: entry.summary,
                            source_count: entry.documents.len(),
                            cached: true,
                        },
                        false,
                    ),
                    QueryPlan::Live => {
                        run_live_query(&pipeline, disk.as_deref(), &query, &reference_entity)
                            .await
                    }
                }
            }
        })
        .buffered(concurrency)
        .collect()
        .await;

    if results.iter().all(|(_, failed)| *failed) {
        return Err(GatewayError::BatchFailed);
    }
    Ok(results.into_iter().map(|(r, _)| r).collect())
}

async fn run_live_query(
    pipeline: &SearchPipeline,
    disk: Option<&DiskCache>,
    query: &str,
    reference_entity: &str,
) -> (SummarizedResult, bool) {
    let failure = |message: String| {
        tracing::warn!(query, %message, "search pipeline failed; emitting sentinel");
        (
            SummarizedResult {
                query: query.to_owned(),
                summary: NO_INFORMATION_SENTINEL.to_owned(),
                source_count: 0,
                cached: false,
            },
            true,
        )
    };
    let documents = match pipeline.provider.search(query, pipeline.top_k).await {
        Ok(docs) => docs,
        Err(err) => return failure(err.to_string()),
    };
    let result = match pipeline
        .summarizer
        .summarize(query, &documents, reference_entity)
        .await
    {
        Ok(result) => result,
        Err(err) => return failure(err.to_string()),
    };
    if let Some(disk) = disk {
        let normalized = normalize_query(query);
        let entry = CacheEntry {
            key: cache_key(&normalized),
            query: query.to_owned(),
            documents,
            summary: result.summary.clone(),
            created_at: now_epoch_secs(),
        };
        if let Err(err) = disk.put(&entry) {
            tracing::warn!(%err, "failed to persist cache entry");
        }
    }
    (result, false)
}

/// Summarizer backed by a generator and the webpage-reasoning template.
pub struct LlmSummarizer {
    pub generator: Arc<dyn Generator>,
    pub template: String,
    /// Fallback truncation length when the output marker is missing.
    pub fallback_chars: usize,
    pub max_tokens: usize,
}

impl LlmSummarizer {
    pub fn new(generator: Arc<dyn Generator>) -> Self {
        Self {
            generator,
            template: prompts::WEBPAGE_REASONING.to_owned(),
            fallback_chars: 1500,
            max_tokens: 1024,
        }
    }

    pub fn with_template(mut self, template: impl Into<String>) -> Self {
        self.template = template.into();
        self
    }
}

fn render_documents(documents: &[SearchDocument]) -> String {
    documents
        .iter()
        .map(|d| format!("Web Page {} ({}): {}\n{}", d.rank, d.url, d.title, d.content))
        .collect::<Vec<_>>()
        .join("\n\n")
}

#[async_trait]
impl Summarize for LlmSummarizer {
    async fn summarize(
        &self,
        query: &str,
        documents: &[SearchDocument],
        reference_entity: &str,
    ) -> Result<SummarizedResult, GatewayError> {
        if documents.is_empty() {
            return Ok(SummarizedResult {
                query: query.to_owned(),
                summary: NO_INFORMATION_SENTINEL.to_owned(),
                source_count: 0,
                cached: false,
            });
        }
        let rendered = render_documents(documents);
        let vars = BTreeMap::from([
            ("search_query", query),
            ("document", rendered.as_str()),
            ("reference_entity", reference_entity),
        ]);
        let prompt = prompts::fill(&self.template, &vars)
            .map_err(|e| GatewayError::InvalidRequest(e.to_string()))?;
        let generation = self
            .generator
            .generate(&GenerationRequest {
                prompt,
                stop_sequences: vec![],
                temperature: 0.6,
                top_p: 0.95,
                max_tokens: self.max_tokens,
                seed: 0,
            })
            .await?;
        let summary = match generation.text.find(FINAL_INFORMATION_MARKER) {
            Some(pos) => generation.text[pos + FINAL_INFORMATION_MARKER.len()..]
                .trim()
                .to_owned(),
            None => {
                tracing::warn!(query, "summarizer output missing marker; using truncated raw");
                let mut raw = generation.text.trim().to_owned();
                if raw.len() > self.fallback_chars {
                    let mut cut = self.fallback_chars;
                    while !raw.is_char_boundary(cut) {
                        cut -= 1;
                    }
                    raw.truncate(cut);
                }
                raw
            }
        };
        Ok(SummarizedResult {
            query: query.to_owned(),
            summary,
            source_count: documents.len(),
            cached: false,
        })
    }
}

/// Judge backed by a generator. The verdict is parsed from the last line of
/// raw output: "incorrect" is checked before "correct", case-insensitively;
/// if neither appears, the call is retried once and then recorded false.
pub struct LlmJudge {
    pub generator: Arc<dyn Generator>,
    pub template: String,
}

impl LlmJudge {
    pub fn new(generator: Arc<dyn Generator>) -> Self {
        Self {
            generator,
            template: prompts::JUDGE.to_owned(),
        }
    }
}

pub fn parse_verdict(raw: &str) -> Option<bool> {
    let last_line = raw.lines().rev().find(|l| !l.trim().is_empty())?;
    let lower = last_line.to_lowercase();
    if lower.contains("incorrect") {
        Some(false)
    } else if lower.contains("correct") {
        Some(true)
    } else {
        None
    }
}

#[async_trait]
impl Judge for LlmJudge {
    async fn judge(
        &self,
        question: &str,
        gold: &str,
        prediction: &str,
    ) -> Result<JudgeVerdict, GatewayError> {
        // Aborted runs carry the empty-answer sentinel and score false
        // without a model call.
        if prediction == EMPTY_ANSWER_SENTINEL {
            return Ok(JudgeVerdict {
                correct: false,
                raw: String::new(),
            });
        }
        let vars = BTreeMap::from([
            ("question", question),
            ("gold", gold),
            ("prediction", prediction),
        ]);
        let prompt = prompts::fill(&self.template, &vars)
            .map_err(|e| GatewayError::InvalidRequest(e.to_string()))?;
        let request = GenerationRequest {
            prompt,
            stop_sequences: vec![],
            temperature: 0.0,
            top_p: 1.0,
            max_tokens: 256,
            seed: 0,
        };
        let mut raw = String::new();
        for attempt in 0..2 {
            let generation = self.generator.generate(&request).await?;
            raw = generation.text;
            if let Some(correct) = parse_verdict(&raw) {
                return Ok(JudgeVerdict { correct, raw });
            }
            if attempt == 0 {
                tracing::warn!("judge output had no verdict keyword; retrying once");
            }
        }
        Ok(JudgeVerdict {
            correct: false,
            raw,
        })
    }
}

/// The full set of service clients one run needs.
#[derive(Clone)]
pub struct Gateways {
    pub generator: Arc<dyn Generator>,
    pub pipeline: SearchPipeline,
    pub judge: Arc<dyn Judge>,
}

/// Default prompt set accessor so call sites do not construct it ad hoc.
pub fn default_prompts() -> PromptSet {
    PromptSet::default()
}
