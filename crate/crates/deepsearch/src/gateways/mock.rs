//! Deterministic offline backends: scripted generators, a fixture-driven
//! search corpus with a simulated-latency clock, and a heuristic judge.
//! These make every benchmark and pipeline run reproducible without any
//! network access.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{
    GatewayError, Gateways, Generation, GenerationRequest, Generator, Judge, JudgeVerdict,
    LinkProvider, RelatedQuestionsProvider, SearchDocument, SearchPipeline, SearchProvider,
    StopReason, Summarize, SummarizedResult,
};
use crate::gateways::normalize_query;
use crate::prompts::NO_INFORMATION_SENTINEL;

/// Generator that replays a fixed program, one chunk per call, honoring
/// stop sequences the way a real sampling backend would.
pub struct ScriptedGenerator {
    program: Mutex<VecDeque<String>>,
    calls: AtomicUsize,
}

impl ScriptedGenerator {
    pub fn new(program: Vec<String>) -> Self {
        Self {
            program: Mutex::new(program.into()),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

#[async_trait]
impl Generator for ScriptedGenerator {
    async fn generate(&self, request: &GenerationRequest) -> Result<Generation, GatewayError> {
        request.validate()?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        let chunk = self
            .program
            .lock()
            .unwrap()
            .pop_front()
            .ok_or_else(|| GatewayError::BackendUnavailable("script exhausted".into()))?;
        let stop = request
            .stop_sequences
            .iter()
            .filter_map(|s| chunk.find(s.as_str()).map(|pos| (pos, s.len())))
            .min_by_key(|(pos, _)| *pos);
        Ok(match stop {
            Some((pos, _)) => Generation {
                text: chunk[..pos].to_owned(),
                stop_reason: StopReason::StopSequence,
            },
            None => Generation {
                text: chunk,
                stop_reason: StopReason::EndOfSequence,
            },
        })
    }
}

/// Search provider over an in-memory corpus keyed by normalized query.
/// Every call sleeps `latency` on the (pausable) tokio clock, so tests can
/// assert wall time exactly, and tracks in-flight concurrency.
#[derive(Default)]
pub struct MockSearchProvider {
    pub corpus: BTreeMap<String, Vec<SearchDocument>>,
    pub fail_queries: HashSet<String>,
    pub latency: Duration,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
    calls: AtomicUsize,
}

impl MockSearchProvider {
    pub fn peak_in_flight(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    pub fn total_calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

#[async_trait]
impl SearchProvider for MockSearchProvider {
    async fn search(
        &self,
        query: &str,
        top_k: usize,
    ) -> Result<Vec<SearchDocument>, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        tokio::time::sleep(self.latency).await;
        self.in_flight.fetch_sub(1, Ordering::SeqCst);

        let key = normalize_query(query);
        if self.fail_queries.contains(&key) {
            return Err(GatewayError::SearchFailed {
                query: query.to_owned(),
                message: "scripted failure".into(),
            });
        }
        let docs = self.corpus.get(&key).cloned().unwrap_or_default();
        Ok(docs.into_iter().take(top_k).collect())
    }
}

/// Summarizer that serves canned summaries by query, falling back to the
/// top document's content. No generator call, no latency.
#[derive(Default)]
pub struct FixtureSummarizer {
    pub summaries: BTreeMap<String, String>,
}

#[async_trait]
impl Summarize for FixtureSummarizer {
    async fn summarize(
        &self,
        query: &str,
        documents: &[SearchDocument],
        _reference_entity: &str,
    ) -> Result<SummarizedResult, GatewayError> {
        let summary = match self.summaries.get(&normalize_query(query)) {
            Some(s) => s.clone(),
            None => documents
                .first()
                .map(|d| d.content.trim().to_owned())
                .unwrap_or_else(|| NO_INFORMATION_SENTINEL.to_owned()),
        };
        Ok(SummarizedResult {
            query: query.to_owned(),
            summary,
            source_count: documents.len(),
            cached: false,
        })
    }
}

/// Judge without a model: normalized containment between gold and
/// prediction. Deterministic, so mock benchmark runs are reproducible.
#[derive(Default)]
pub struct HeuristicJudge;

fn judge_normalize(s: &str) -> String {
    s.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

#[async_trait]
impl Judge for HeuristicJudge {
    async fn judge(
        &self,
        _question: &str,
        gold: &str,
        prediction: &str,
    ) -> Result<JudgeVerdict, GatewayError> {
        let g = judge_normalize(gold);
        let p = judge_normalize(prediction);
        let correct = !p.is_empty() && !g.is_empty() && (p.contains(&g) || g.contains(&p));
        Ok(JudgeVerdict {
            correct,
            raw: format!("heuristic: {}", if correct { "correct" } else { "incorrect" }),
        })
    }
}

/// Related-questions provider over a fixture map keyed by entity.
#[derive(Default)]
pub struct MockRelatedProvider {
    pub by_entity: BTreeMap<String, Vec<String>>,
    /// Number of leading calls that fail, for retry tests.
    pub failures_remaining: AtomicUsize,
}

#[async_trait]
impl RelatedQuestionsProvider for MockRelatedProvider {
    async fn related(
        &self,
        _seed_question: &str,
        entity: &str,
    ) -> Result<Vec<String>, GatewayError> {
        if self
            .failures_remaining
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
            .is_ok()
        {
            return Err(GatewayError::ProviderUnavailable("scripted outage".into()));
        }
        Ok(self
            .by_entity
            .get(&normalize_query(entity))
            .cloned()
            .unwrap_or_default())
    }
}

/// Link provider over a fixture map of query -> ranked URL list.
#[derive(Default)]
pub struct MockLinkProvider {
    pub by_query: BTreeMap<String, Vec<String>>,
}

#[async_trait]
impl LinkProvider for MockLinkProvider {
    async fn top_links(&self, query: &str, top_k: usize) -> Result<Vec<String>, GatewayError> {
        Ok(self
            .by_query
            .get(&normalize_query(query))
            .cloned()
            .unwrap_or_default()
            .into_iter()
            .take(top_k)
            .collect())
    }
}

/// Serializable mock-backend configuration: generator scripts per question,
/// a search corpus, canned summaries, related questions, and link lists.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MockFixture {
    /// Generator script used when no per-question program matches.
    #[serde(default)]
    pub default_program: Vec<String>,
    /// Per-question generator scripts, keyed by question id. Trajectory
    /// sampling looks up `"{id}#{sample}"` first, then plain `"{id}"`.
    #[serde(default)]
    pub programs: BTreeMap<String, Vec<String>>,
    /// Search corpus keyed by normalized query.
    #[serde(default)]
    pub search: BTreeMap<String, Vec<SearchDocument>>,
    /// Canned summaries keyed by normalized query.
    #[serde(default)]
    pub summaries: BTreeMap<String, String>,
    /// Related questions keyed by normalized entity.
    #[serde(default)]
    pub related: BTreeMap<String, Vec<String>>,
    /// Ranked link lists keyed by normalized query, for coverage replay.
    #[serde(default)]
    pub links: BTreeMap<String, Vec<String>>,
    /// Simulated search latency in time-units (milliseconds on the
    /// pausable clock).
    #[serde(default)]
    pub latency_ms: u64,
}

impl MockFixture {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let bytes = std::fs::read(path)?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    pub fn program_for(&self, question_id: &str) -> Vec<String> {
        if let Some(p) = self.programs.get(question_id) {
            return p.clone();
        }
        if let Some(base) = question_id.split('#').next() {
            if let Some(p) = self.programs.get(base) {
                return p.clone();
            }
        }
        self.default_program.clone()
    }

    pub fn search_provider(&self) -> Arc<MockSearchProvider> {
        let mut provider = MockSearchProvider {
            latency: Duration::from_millis(self.latency_ms),
            ..Default::default()
        };
        for (query, docs) in &self.search {
            provider.corpus.insert(normalize_query(query), docs.clone());
        }
        Arc::new(provider)
    }

    pub fn summarizer(&self) -> Arc<FixtureSummarizer> {
        let mut s = FixtureSummarizer::default();
        for (query, summary) in &self.summaries {
            s.summaries.insert(normalize_query(query), summary.clone());
        }
        Arc::new(s)
    }

    pub fn related_provider(&self) -> Arc<MockRelatedProvider> {
        let mut p = MockRelatedProvider::default();
        for (entity, questions) in &self.related {
            p.by_entity
                .insert(normalize_query(entity), questions.clone());
        }
        Arc::new(p)
    }

    pub fn link_provider(&self) -> Arc<MockLinkProvider> {
        let mut p = MockLinkProvider::default();
        for (query, links) in &self.links {
            p.by_query.insert(normalize_query(query), links.clone());
        }
        Arc::new(p)
    }

    /// Build a fresh, isolated gateway set for one run.
    pub fn gateways_for(&self, question_id: &str, top_k: usize) -> Gateways {
        Gateways {
            generator: Arc::new(ScriptedGenerator::new(self.program_for(question_id))),
            pipeline: SearchPipeline {
                provider: self.search_provider(),
                summarizer: self.summarizer(),
                top_k,
            },
            judge: Arc::new(HeuristicJudge),
        }
    }
}
