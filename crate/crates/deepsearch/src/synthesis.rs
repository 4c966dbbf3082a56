//! Hybrid-hop question construction: from a single-hop seed question, build
//! a verified hybrid question (entity extraction, related-question
//! collection, clue summarization, parallel-question formulation,
//! integration, single-retrieval verification), then sample answer
//! trajectories and export masked SFT data.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::DiskCache;
use crate::dataset::QuestionRecord;
use crate::gateways::{
    GatewayError, Generation, GenerationRequest, Generator, Judge, RelatedQuestionsProvider,
    SearchPipeline,
};
use crate::orchestrator::{run, BudgetState, GatewayFactory, RunPolicy, RunRecord};
use crate::prompts::{self, PromptSet};
use crate::protocol::TrajectorySegment;

/// Below this many clues the parallel hop degenerates into a lookup.
pub const MIN_CLUES: usize = 3;
pub const MAX_CLUES: usize = 6;
pub const TRAJECTORY_SAMPLES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectionReason {
    DuplicateTopDoc,
    ParallelDirectlyAnswerable,
    HybridDirectlyAnswerable,
    EntityNotFound,
    EntityLeak,
    IntegrationFailure,
    ProviderUnavailable,
}

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("seed rejected: {0:?}")]
    Rejected(RejectionReason),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelatedQuestion {
    pub question: String,
    pub top_document_url: String,
}

/// Full provenance for one seed, written out whether or not the seed
/// survived. `verified` is true only when both single-retrieval checks ran
/// and failed to answer the question directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticQuestion {
    pub seed_id: String,
    pub seed_question: String,
    pub seed_answer: String,
    pub entity: String,
    pub related_questions: Vec<RelatedQuestion>,
    pub clues: Vec<String>,
    pub parallel_hop_question: String,
    pub hybrid_question: String,
    pub verified: bool,
    pub rejection_reason: Option<RejectionReason>,
}

impl SyntheticQuestion {
    fn rejected(mut self, reason: RejectionReason) -> Self {
        self.verified = false;
        self.rejection_reason = Some(reason);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub question_id: String,
    pub sample_index: usize,
    pub run: RunRecord,
    pub correct: bool,
}

pub struct SynthesisPipeline {
    pub generator: Arc<dyn Generator>,
    pub search: SearchPipeline,
    pub judge: Arc<dyn Judge>,
    pub related_provider: Arc<dyn RelatedQuestionsProvider>,
    pub prompts: PromptSet,
    pub seed: u64,
}

fn request(prompt: String, seed: u64) -> GenerationRequest {
    GenerationRequest {
        prompt,
        stop_sequences: vec![],
        temperature: 0.6,
        top_p: 0.95,
        max_tokens: 1024,
        seed,
    }
}

/// Extract the first balanced `{...}` object from model output; tolerates
/// prose and code fences around it.
fn extract_json_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let mut depth = 0usize;
    for (i, c) in text[start..].char_indices() {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + i + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

#[derive(Deserialize)]
struct ExtractedEntities {
    #[serde(default)]
    question: Vec<String>,
    #[serde(default)]
    answer: Vec<String>,
}

fn contains_ci(haystack: &str, needle: &str) -> bool {
    haystack.to_lowercase().contains(&needle.to_lowercase())
}

impl SynthesisPipeline {
    async fn generate(&self, prompt: String, salt: u64) -> Result<Generation, GatewayError> {
        self.generator
            .generate(&request(prompt, self.seed ^ salt))
            .await
    }

    /// Fill the entity-extraction prompt and parse its JSON-shaped output.
    /// The central entity is the first question-entity; entities that also
    /// appear in the seed answer are skipped, since replacing an
    /// answer-entity would corrupt the final hop. Malformed JSON gets one
    /// retry.
    pub async fn extract_entity(
        &self,
        seed_question: &str,
        seed_answer: &str,
    ) -> Result<String, SynthesisError> {
        assert!(!seed_question.is_empty() && !seed_answer.is_empty());
        let vars = BTreeMap::from([("question", seed_question), ("answer", seed_answer)]);
        let prompt = prompts::fill(self.prompts.entity_extraction.as_str(), &vars)
            .expect("entity-extraction template placeholders");
        for attempt in 0..2u64 {
            let generation = self.generate(prompt.clone(), 0x0e + attempt).await?;
            let Some(object) = extract_json_object(&generation.text) else {
                continue;
            };
            let Ok(parsed) = serde_json::from_str::<ExtractedEntities>(object) else {
                continue;
            };
            let central = parsed
                .question
                .iter()
                .find(|e| {
                    !e.trim().is_empty()
                        && !contains_ci(seed_answer, e)
                        && !parsed.answer.iter().any(|a| a.eq_ignore_ascii_case(e))
                })
                .cloned();
            return central.ok_or(SynthesisError::Rejected(RejectionReason::EntityNotFound));
        }
        Err(SynthesisError::Rejected(RejectionReason::EntityNotFound))
    }

    /// Fetch candidate related questions and keep only those whose
    /// top-ranked document differs from every previously kept candidate's.
    pub async fn collect_related(
        &self,
        seed_question: &str,
        entity: &str,
    ) -> Result<Vec<RelatedQuestion>, SynthesisError> {
        let candidates = match self.related_provider.related(seed_question, entity).await {
            Ok(c) => c,
            // One retry; a second failure aborts this seed.
            Err(_) => self
                .related_provider
                .related(seed_question, entity)
                .await
                .map_err(|_| SynthesisError::Rejected(RejectionReason::ProviderUnavailable))?,
        };
        let mut kept: Vec<RelatedQuestion> = Vec::new();
        for question in candidates {
            let docs = match self.search.provider.search(&question, self.search.top_k).await {
                Ok(docs) => docs,
                Err(_) => continue,
            };
            let Some(top) = docs.iter().min_by_key(|d| d.rank) else {
                continue;
            };
            let url = crate::evaluation::normalize_url(&top.url);
            if kept.iter().any(|r| r.top_document_url == url) {
                tracing::debug!(%question, %url, "dropping related question: duplicate top document");
                continue;
            }
            kept.push(RelatedQuestion {
                question,
                top_document_url: url,
            });
        }
        if kept.len() < MIN_CLUES {
            return Err(SynthesisError::Rejected(RejectionReason::DuplicateTopDoc));
        }
        Ok(kept)
    }

    /// Per related question: retrieve, summarize grounded on the entity,
    /// then compress the surviving summaries into concise clues. Dead pages
    /// drop their clue rather than failing the seed.
    pub async fn summarize_clues(
        &self,
        entity: &str,
        related: &[RelatedQuestion],
    ) -> Result<Vec<String>, SynthesisError> {
        assert!(!related.is_empty());
        let mut raw_clues = Vec::new();
        for r in related.iter().take(MAX_CLUES) {
            let docs = match self.search.provider.search(&r.question, self.search.top_k).await {
                Ok(docs) => docs,
                Err(_) => continue,
            };
            let summary = match self.search.summarizer.summarize(&r.question, &docs, entity).await {
                Ok(s) => s.summary,
                Err(_) => continue,
            };
            if summary.trim().is_empty() || summary.contains(prompts::NO_INFORMATION_SENTINEL) {
                continue;
            }
            raw_clues.push(summary);
        }
        if raw_clues.len() < MIN_CLUES {
            return Err(SynthesisError::Rejected(RejectionReason::DuplicateTopDoc));
        }
        let input_list = raw_clues
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{}. {}", i + 1, c))
            .collect::<Vec<_>>()
            .join("\n");
        let vars = BTreeMap::from([("entity", entity), ("input_list", input_list.as_str())]);
        let prompt = prompts::fill(self.prompts.clue_summarization.as_str(), &vars)
            .expect("clue-summarization template placeholders");
        let generation = self.generate(prompt, 0xc1).await?;
        let summarized = parse_clue_list(&generation.text);
        // The compressor must preserve arity; otherwise keep the raw clues.
        if summarized.len() == raw_clues.len() {
            Ok(summarized)
        } else {
            Ok(raw_clues)
        }
    }

    /// Generate the parallel-hop question from the clues. Outputs naming
    /// the entity are rejected; one regeneration attempt is allowed.
    pub async fn formulate_parallel_question(
        &self,
        entity: &str,
        clues: &[String],
    ) -> Result<String, SynthesisError> {
        assert!(clues.len() >= MIN_CLUES);
        let input_list = clues
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{}. {}", i + 1, c))
            .collect::<Vec<_>>()
            .join("\n");
        let vars = BTreeMap::from([("entity", entity), ("input_list", input_list.as_str())]);
        let prompt = prompts::fill(self.prompts.complex_question.as_str(), &vars)
            .expect("complex-question template placeholders");
        for attempt in 0..2u64 {
            let generation = self.generate(prompt.clone(), 0xf0 + attempt).await?;
            let question = extract_marked(&generation.text, "**Complex Question:**");
            if question.is_empty() || contains_ci(&question, entity) {
                continue;
            }
            return Ok(question);
        }
        Err(SynthesisError::Rejected(RejectionReason::EntityLeak))
    }

    /// Replace the entity mention in the seed question with the parallel
    /// description. Rejects outputs that leak the entity or read as two
    /// concatenated questions (more than one question mark).
    pub async fn integrate_questions(
        &self,
        seed_question: &str,
        parallel_question: &str,
        entity: &str,
    ) -> Result<String, SynthesisError> {
        if !contains_ci(seed_question, entity) {
            return Err(SynthesisError::Rejected(RejectionReason::IntegrationFailure));
        }
        let vars = BTreeMap::from([
            ("question_1", seed_question),
            ("question_2", parallel_question),
            ("entity", entity),
        ]);
        let prompt = prompts::fill(self.prompts.question_integration.as_str(), &vars)
            .expect("question-integration template placeholders");
        for attempt in 0..2u64 {
            let generation = self.generate(prompt.clone(), 0x17 + attempt).await?;
            let question = extract_marked(&generation.text, "**Integrated Question:**");
            let question_marks = question.matches('?').count();
            if question.is_empty() || question_marks > 1 || contains_ci(&question, entity) {
                continue;
            }
            return Ok(question);
        }
        Err(SynthesisError::Rejected(RejectionReason::IntegrationFailure))
    }

    /// One retrieval with the question verbatim, one summary, one judge
    /// call: returns true (multi-hop holds) only when the judge says the
    /// single-step summary does NOT yield the answer. Gateway failures are
    /// treated as unverifiable.
    pub async fn verify_multi_hop(
        &self,
        question: &str,
        answer: &str,
    ) -> Result<bool, GatewayError> {
        let docs = self.search.provider.search(question, self.search.top_k).await?;
        let summary = self.search.summarizer.summarize(question, &docs, "").await?;
        if summary.summary.contains(prompts::NO_INFORMATION_SENTINEL) {
            return Ok(true);
        }
        let verdict = self.judge.judge(question, answer, &summary.summary).await?;
        Ok(!verdict.correct)
    }

    /// Run the full construction pipeline for one seed. Rejections produce
    /// a provenance record with `rejection_reason` set rather than an
    /// error; only unexpected gateway failures propagate.
    pub async fn synthesize(&self, seed: &QuestionRecord) -> Result<SyntheticQuestion, GatewayError> {
        let seed_answer = seed.gold_answers.first().cloned().unwrap_or_default();
        let mut record = SyntheticQuestion {
            seed_id: seed.id.clone(),
            seed_question: seed.question.clone(),
            seed_answer: seed_answer.clone(),
            entity: String::new(),
            related_questions: vec![],
            clues: vec![],
            parallel_hop_question: String::new(),
            hybrid_question: String::new(),
            verified: false,
            rejection_reason: None,
        };
        macro_rules! step {
            ($expr:expr) => {
                match $expr {
                    Ok(v) => v,
                    Err(SynthesisError::Rejected(reason)) => return Ok(record.rejected(reason)),
                    Err(SynthesisError::Gateway(e)) => return Err(e),
                }
            };
        }
        record.entity = step!(self.extract_entity(&seed.question, &seed_answer).await);
        record.related_questions =
            step!(self.collect_related(&seed.question, &record.entity).await);
        record.clues = step!(self.summarize_clues(&record.entity, &record.related_questions).await);
        record.parallel_hop_question =
            step!(self.formulate_parallel_question(&record.entity, &record.clues).await);
        match self
            .verify_multi_hop(&record.parallel_hop_question, &record.entity)
            .await
        {
            Ok(true) => {}
            Ok(false) => {
                return Ok(record.rejected(RejectionReason::ParallelDirectlyAnswerable));
            }
            Err(e) => {
                tracing::warn!(id = %seed.id, %e, "verification gateway failure; rejecting seed");
                return Ok(record.rejected(RejectionReason::ParallelDirectlyAnswerable));
            }
        }
        record.hybrid_question = step!(
            self.integrate_questions(
                &seed.question,
                &record.parallel_hop_question,
                &record.entity
            )
            .await
        );
        match self.verify_multi_hop(&record.hybrid_question, &seed_answer).await {
            Ok(true) => {}
            _ => return Ok(record.rejected(RejectionReason::HybridDirectlyAnswerable)),
        }
        record.verified = true;
        Ok(record)
    }
}

fn extract_marked(text: &str, marker: &str) -> String {
    match text.rfind(marker) {
        Some(pos) => text[pos + marker.len()..].trim().to_owned(),
        None => text.trim().to_owned(),
    }
}

/// Parse the summarizer's bracketed list of quoted clues; tolerates prose
/// around the list. Returns empty on no parse.
fn parse_clue_list(text: &str) -> Vec<String> {
    let Some(start) = text.find('[') else {
        return vec![];
    };
    let Some(end) = text[start..].find(']') else {
        return vec![];
    };
    serde_json::from_str::<Vec<String>>(&text[start..start + end + 1]).unwrap_or_default()
}

/// Derive the per-sample seed; sample_index is folded in so the four
/// samples explore different trajectories under one base seed.
pub fn sample_seed(base: u64, sample_index: usize) -> u64 {
    base ^ (sample_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Run the orchestrator `samples` times over the hybrid question and judge
/// each final answer against the seed answer. Aborted samples are marked
/// incorrect without a judge call; per-sample failures never fail the
/// question.
pub async fn generate_trajectories(
    question: &SyntheticQuestion,
    samples: usize,
    budget: BudgetState,
    policy: &RunPolicy,
    factory: &dyn GatewayFactory,
    disk_cache: Option<Arc<DiskCache>>,
) -> Vec<TrajectorySample> {
    assert!(question.verified, "only verified questions get trajectories");
    let mut out = Vec::with_capacity(samples);
    for sample_index in 0..samples {
        let sample_id = format!("{}#{}", question.seed_id, sample_index);
        let gateways = factory.gateways(&sample_id);
        let sample_policy = RunPolicy {
            seed: sample_seed(policy.seed, sample_index),
            ..policy.clone()
        };
        let record = run(
            &sample_id,
            &question.hybrid_question,
            budget,
            &sample_policy,
            &gateways,
            disk_cache.clone(),
        )
        .await;
        let correct = if record.aborted || record.final_answer.is_empty() {
            false
        } else {
            match gateways
                .judge
                .judge(
                    &question.hybrid_question,
                    &question.seed_answer,
                    &record.final_answer,
                )
                .await
            {
                Ok(verdict) => verdict.correct,
                Err(_) => false,
            }
        };
        out.push(TrajectorySample {
            question_id: question.seed_id.clone(),
            sample_index,
            run: record,
            correct,
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SftFormat {
    Jsonl,
}

/// One training example: the rendered prompt, the full trajectory text, and
/// loss-mask character spans covering every results block, delimiters
/// included. The model must learn to emit the begin delimiter (it follows a
/// query turn) but never to produce results content.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftExample {
    pub question_id: String,
    pub sample_index: usize,
    pub prompt: String,
    pub text: String,
    /// Half-open `[start, end)` character-offset spans into `text`.
    pub mask_spans: Vec<(usize, usize)>,
}

/// Character-offset spans of every results block (delimiters inclusive) in
/// the serialized trajectory.
pub fn mask_spans(trajectory: &crate::protocol::Trajectory) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut offset = 0usize;
    for segment in &trajectory.segments {
        let len = crate::protocol::serialize(std::slice::from_ref(segment))
            .chars()
            .count();
        if matches!(segment, TrajectorySegment::ResultsBlock { .. }) {
            spans.push((offset, offset + len));
        }
        offset += len;
    }
    spans
}

pub fn to_sft_example(sample: &TrajectorySample, prompt_template: &str) -> SftExample {
    let question = &sample.run.question;
    let vars = BTreeMap::from([("question", question.as_str())]);
    let prompt = prompts::fill(prompt_template, &vars).expect("response-generation placeholders");
    SftExample {
        question_id: sample.question_id.clone(),
        sample_index: sample.sample_index,
        prompt,
        text: sample.run.trajectory.serialize(),
        mask_spans: mask_spans(&sample.run.trajectory),
    }
}

/// Emit one JSONL line per correct sample; incorrect and aborted samples
/// never enter the training set.
pub fn export_sft(
    samples: &[TrajectorySample],
    format: SftFormat,
    prompt_template: &str,
    out: &mut dyn std::io::Write,
) -> std::io::Result<usize> {
    let SftFormat::Jsonl = format;
    let mut written = 0;
    for sample in samples.iter().filter(|s| s.correct) {
        let example = to_sft_example(sample, prompt_template);
        serde_json::to_writer(&mut *out, &example)?;
        out.write_all(b"\n")?;
        written += 1;
    }
    Ok(written)
}
