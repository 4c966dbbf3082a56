//! Answer-accuracy and efficiency metrics: token-level F1, model-based
//! evaluation, accuracy-vs-budget curves, AUC, and mean evidence coverage.

use std::collections::BTreeSet;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::QuestionRecord;
use crate::gateways::{Judge, LinkProvider};
use crate::orchestrator::RunRecord;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("curve budgets must cover 1..=T with no gaps")]
    GapInCurve,
    #[error("cannot build a report from an empty record list")]
    EmptyRecords,
    #[error("records do not align with dataset ids: {0}")]
    Misaligned(String),
    #[error("link provider failed for question {id}: {message}")]
    LinkProvider { id: String, message: String },
}

/// Extractive-QA answer normalization: lowercase, strip punctuation, drop
/// articles, split on whitespace.
pub fn normalize_answer_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .filter(|t| !matches!(*t, "a" | "an" | "the"))
        .map(str::to_owned)
        .collect()
}

fn multiset_counts(tokens: &[String]) -> HashMap<&str, usize> {
    let mut counts = HashMap::new();
    for t in tokens {
        *counts.entry(t.as_str()).or_insert(0) += 1;
    }
    counts
}

fn f1_single(prediction: &[String], gold: &[String]) -> f64 {
    if prediction.is_empty() || gold.is_empty() {
        return 0.0;
    }
    let pred_counts = multiset_counts(prediction);
    let gold_counts = multiset_counts(gold);
    let overlap: usize = pred_counts
        .iter()
        .map(|(tok, &n)| n.min(*gold_counts.get(tok).unwrap_or(&0)))
        .sum();
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / prediction.len() as f64;
    let recall = overlap as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Token-level F1 on normalized token multisets, max over gold aliases.
/// Returns 0 when either side normalizes to empty.
pub fn token_f1(prediction: &str, gold_answers: &[String]) -> f64 {
    assert!(!gold_answers.is_empty(), "gold_answers must be non-empty");
    let pred_tokens = normalize_answer_tokens(prediction);
    gold_answers
        .iter()
        .map(|gold| f1_single(&pred_tokens, &normalize_answer_tokens(gold)))
        .fold(0.0, f64::max)
}

/// Per-question binary scores from the judge. Aborted runs score 0 with no
/// judge call; persistent judge failures are recorded as unjudged and
/// excluded from the mean rather than scored 0.
#[derive(Debug, Clone)]
pub struct MbeScores {
    /// One entry per record; `None` means unjudged.
    pub scores: Vec<Option<bool>>,
    pub unjudged: usize,
}

impl MbeScores {
    pub fn mean(&self) -> f64 {
        let judged: Vec<bool> = self.scores.iter().filter_map(|s| *s).collect();
        if judged.is_empty() {
            return 0.0;
        }
        judged.iter().filter(|&&c| c).count() as f64 / judged.len() as f64
    }
}

pub async fn mbe(
    records: &[RunRecord],
    dataset: &[QuestionRecord],
    judge: &dyn Judge,
) -> Result<MbeScores, MetricError> {
    let mut scores = Vec::with_capacity(records.len());
    let mut unjudged = 0;
    for record in records {
        let question = dataset
            .iter()
            .find(|q| q.id == record.question_id)
            .ok_or_else(|| MetricError::Misaligned(record.question_id.clone()))?;
        if record.aborted {
            scores.push(Some(false));
            continue;
        }
        let gold = question.gold_answers.join(" | ");
        match judge
            .judge(&question.question, &gold, &record.final_answer)
            .await
        {
            Ok(verdict) => scores.push(Some(verdict.correct)),
            Err(err) => {
                tracing::warn!(id = %record.question_id, %err, "judge failed; row unjudged");
                scores.push(None);
                unjudged += 1;
            }
        }
    }
    Ok(MbeScores { scores, unjudged })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveAxis {
    Turns,
    Calls,
    GeneratedTokens,
}

/// Mean score as a function of an integer budget. Budgets are strictly
/// increasing and the mean is non-decreasing: a run finished by budget t is
/// also finished by t+1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCurve {
    pub axis: CurveAxis,
    pub points: Vec<(usize, f64)>,
}

fn consumed(record: &RunRecord, axis: CurveAxis) -> Option<usize> {
    if record.aborted {
        return None; // never finished within any budget
    }
    Some(match axis {
        CurveAxis::Turns => record.budget.turns_used,
        CurveAxis::Calls => record.budget.calls_used,
        CurveAxis::GeneratedTokens => record.generated_tokens(),
    })
}

/// f(t) = mean over questions of score_i x 1[consumed_i <= t], for
/// t = 1..=max_budget. Unanswered questions score 0 at every budget.
pub fn accuracy_curve(
    records: &[RunRecord],
    scores: &[f64],
    axis: CurveAxis,
    max_budget: usize,
) -> MetricCurve {
    assert_eq!(records.len(), scores.len());
    let n = records.len().max(1) as f64;
    let consumed_at: Vec<Option<usize>> = records.iter().map(|r| consumed(r, axis)).collect();
    let points = (1..=max_budget)
        .map(|t| {
            let total: f64 = consumed_at
                .iter()
                .zip(scores)
                .map(|(c, s)| match c {
                    Some(c) if *c <= t => *s,
                    _ => 0.0,
                })
                .sum();
            (t, total / n)
        })
        .collect();
    MetricCurve { axis, points }
}

/// Normalized step integration: AUC = (1/T) x sum of f(t) for t = 1..=T.
/// The curve must cover budgets 1..=T with no gaps.
pub fn auc(curve: &MetricCurve) -> Result<f64, MetricError> {
    if curve.points.is_empty() {
        return Err(MetricError::GapInCurve);
    }
    for (i, (t, _)) in curve.points.iter().enumerate() {
        if *t != i + 1 {
            return Err(MetricError::GapInCurve);
        }
    }
    // A constant curve's mean is that constant; returning it directly keeps
    // the identity exact instead of within float-summation error.
    let first = curve.points[0].1;
    if curve.points.iter().all(|(_, f)| *f == first) {
        return Ok(first);
    }
    let total: f64 = curve.points.iter().map(|(_, f)| f).sum();
    Ok(total / curve.points.len() as f64)
}

fn percent_decode(path: &str) -> String {
    let bytes = path.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' && i + 2 < bytes.len() {
            let hex = std::str::from_utf8(&bytes[i + 1..i + 3]).ok();
            if let Some(byte) = hex.and_then(|h| u8::from_str_radix(h, 16).ok()) {
                out.push(byte);
                i += 3;
                continue;
            }
        }
        out.push(bytes[i]);
        i += 1;
    }
    String::from_utf8_lossy(&out).into_owned()
}

/// URL normalization for coverage comparison: strip scheme, query string,
/// fragment, and trailing slash; lowercase the host; percent-decode the
/// path.
pub fn normalize_url(url: &str) -> String {
    let s = url.trim();
    let s = s
        .strip_prefix("https://")
        .or_else(|| s.strip_prefix("http://"))
        .unwrap_or(s);
    let s = s.split(['#', '?']).next().unwrap_or(s);
    let (host, path) = match s.find('/') {
        Some(pos) => (&s[..pos], &s[pos..]),
        None => (s, ""),
    };
    let path = percent_decode(path);
    let path = path.trim_end_matches('/');
    format!("{}{}", host.to_lowercase(), path)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageRow {
    pub id: String,
    /// None when the question has no gold evidence links.
    pub coverage: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageReport {
    pub mean: f64,
    pub per_question: Vec<CoverageRow>,
    /// Questions without gold links, skipped from the mean.
    pub skipped: usize,
}

fn issued_queries(record: &RunRecord) -> Vec<String> {
    record
        .trajectory
        .segments
        .iter()
        .flat_map(|s| match s {
            crate::protocol::TrajectorySegment::QueryBatch { queries, .. } => queries.clone(),
            _ => vec![],
        })
        .collect()
}

/// coverage_i = |D_i intersect R_i| / |D_i|, where R_i is the union of the
/// top-k links returned for every query question i issued. The mean runs
/// over questions with non-empty gold link sets.
pub async fn mean_evidence_coverage(
    records: &[RunRecord],
    dataset: &[QuestionRecord],
    link_provider: &dyn LinkProvider,
    top_k: usize,
) -> Result<CoverageReport, MetricError> {
    let mut per_question = Vec::with_capacity(records.len());
    let mut covered_sum = 0.0;
    let mut counted = 0usize;
    let mut skipped = 0usize;
    for record in records {
        let question = dataset
            .iter()
            .find(|q| q.id == record.question_id)
            .ok_or_else(|| MetricError::Misaligned(record.question_id.clone()))?;
        let gold: BTreeSet<String> = match &question.gold_evidence_links {
            Some(links) if !links.is_empty() => {
                links.iter().map(|u| normalize_url(u)).collect()
            }
            _ => {
                skipped += 1;
                per_question.push(CoverageRow {
                    id: record.question_id.clone(),
                    coverage: None,
                });
                continue;
            }
        };
        let mut retrieved: BTreeSet<String> = BTreeSet::new();
        for query in issued_queries(record) {
            let links = link_provider
                .top_links(&query, top_k)
                .await
                .map_err(|e| MetricError::LinkProvider {
                    id: record.question_id.clone(),
                    message: e.to_string(),
                })?;
            retrieved.extend(links.iter().map(|u| normalize_url(u)));
        }
        let hit = gold.intersection(&retrieved).count();
        let coverage = hit as f64 / gold.len() as f64;
        covered_sum += coverage;
        counted += 1;
        per_question.push(CoverageRow {
            id: record.question_id.clone(),
            coverage: Some(coverage),
        });
    }
    let mean = if counted == 0 {
        0.0
    } else {
        covered_sum / counted as f64
    };
    Ok(CoverageReport {
        mean,
        per_question,
        skipped,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerQuestionRow {
    pub id: String,
    pub f1: f64,
    /// None when the judge never produced a verdict for this row.
    pub mbe: Option<u8>,
    pub turns: usize,
    pub calls: usize,
    pub generated_tokens: usize,
    pub coverage: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aggregates {
    pub mean_f1: f64,
    pub mean_mbe: f64,
    pub mean_turns: f64,
    pub mean_calls: f64,
    pub auc_turns: f64,
    pub auc_calls: f64,
    pub mean_coverage: Option<f64>,
    pub unjudged: usize,
    pub coverage_skipped: usize,
}

/// A published large-scale reference row kept for context. These numbers
/// come from a fine-tuned 8B model with live web search and large judge
/// models and are not reproducible with the offline harness.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PublishedReference {
    pub dataset: std::borrow::Cow<'static, str>,
    pub f1: f64,
    pub mbe: f64,
    pub mean_turns: f64,
    pub auc: f64,
}

pub const PUBLISHED_REFERENCE: PublishedReference = PublishedReference {
    dataset: std::borrow::Cow::Borrowed("FRAMES"),
    f1: 39.1,
    mbe: 54.0,
    mean_turns: 3.4,
    auc: 0.44,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub dataset: String,
    pub mode: String,
    pub n: usize,
    pub per_question: Vec<PerQuestionRow>,
    pub aggregates: Aggregates,
    pub curves: Vec<MetricCurve>,
    /// Non-reproducible published reference row, for context only.
    pub published_reference: PublishedReference,
}

pub struct ReportConfig {
    pub dataset_name: String,
    pub mode: String,
    pub max_turns: usize,
    pub max_calls: usize,
}

/// Assemble per-question rows, aggregates, and curves. MBE scores drive the
/// curves, matching the published curve definition.
pub fn build_report(
    records: &[RunRecord],
    dataset: &[QuestionRecord],
    mbe_scores: &MbeScores,
    coverage: Option<&CoverageReport>,
    config: &ReportConfig,
) -> Result<MetricReport, MetricError> {
    if records.is_empty() {
        return Err(MetricError::EmptyRecords);
    }
    assert_eq!(records.len(), mbe_scores.scores.len());

    let mut per_question = Vec::with_capacity(records.len());
    for (i, record) in records.iter().enumerate() {
        let question = dataset
            .iter()
            .find(|q| q.id == record.question_id)
            .ok_or_else(|| MetricError::Misaligned(record.question_id.clone()))?;
        let coverage_i = coverage.and_then(|c| {
            c.per_question
                .iter()
                .find(|row| row.id == record.question_id)
                .and_then(|row| row.coverage)
        });
        per_question.push(PerQuestionRow {
            id: record.question_id.clone(),
            f1: token_f1(&record.final_answer, &question.gold_answers),
            mbe: mbe_scores.scores[i].map(u8::from),
            turns: record.budget.turns_used,
            calls: record.budget.calls_used,
            generated_tokens: record.generated_tokens(),
            coverage: coverage_i,
        });
    }

    let n = records.len();
    let curve_scores: Vec<f64> = mbe_scores
        .scores
        .iter()
        .map(|s| if *s == Some(true) { 1.0 } else { 0.0 })
        .collect();
    let turns_curve = accuracy_curve(records, &curve_scores, CurveAxis::Turns, config.max_turns);
    let calls_curve = accuracy_curve(records, &curve_scores, CurveAxis::Calls, config.max_calls);
    let auc_turns = auc(&turns_curve)?;
    let auc_calls = auc(&calls_curve)?;

    let token_curve = {
        let max_tokens = records.iter().map(|r| r.generated_tokens()).max().unwrap_or(0);
        let raw = accuracy_curve(records, &curve_scores, CurveAxis::GeneratedTokens, max_tokens.max(1));
        // Downsample to at most 32 points; the full integer axis is noise.
        let step = (raw.points.len() / 32).max(1);
        MetricCurve {
            axis: CurveAxis::GeneratedTokens,
            points: raw
                .points
                .iter()
                .copied()
                .filter(|(t, _)| t % step == 0 || *t == raw.points.len())
                .collect(),
        }
    };

    let aggregates = Aggregates {
        mean_f1: per_question.iter().map(|r| r.f1).sum::<f64>() / n as f64,
        mean_mbe: mbe_scores.mean(),
        mean_turns: per_question.iter().map(|r| r.turns as f64).sum::<f64>() / n as f64,
        mean_calls: per_question.iter().map(|r| r.calls as f64).sum::<f64>() / n as f64,
        auc_turns,
        auc_calls,
        mean_coverage: coverage.map(|c| c.mean),
        unjudged: mbe_scores.unjudged,
        coverage_skipped: coverage.map(|c| c.skipped).unwrap_or(0),
    };

    Ok(MetricReport {
        dataset: config.dataset_name.clone(),
        mode: config.mode.clone(),
        n,
        per_question,
        aggregates,
        curves: vec![turns_curve, calls_curve, token_curve],
        published_reference: PUBLISHED_REFERENCE,
    })
}
