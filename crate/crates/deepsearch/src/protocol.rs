//! Transcript wire format: delimiter framing, query-batch splitting,
//! results-block assembly, and final-answer extraction.
//!
//! The delimiter byte strings below are part of the public wire contract
//! shared with the model tokenizer. They must never be localized or
//! reformatted.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const THINK_OPEN: &str = "<think>";
pub const THINK_CLOSE: &str = "</think>";
pub const QUERIES_OPEN: &str = "<|begin_search_queries|>";
pub const QUERIES_CLOSE: &str = "<|end_search_queries|>";
pub const RESULTS_OPEN: &str = "<|begin_search_results|>";
pub const RESULTS_CLOSE: &str = "<|end_search_results|>";

/// Query separator inside a batch: a literal semicolon followed by a real
/// newline character.
pub const QUERY_SEPARATOR: &str = ";\n";

pub const FINAL_ANSWER_MARKER: &str = "**Final Answer:**";
pub const BOXED_OPEN: &str = "\\boxed{";

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("unbalanced delimiter {delimiter:?} opened at byte offset {offset}")]
    UnbalancedDelimiter {
        delimiter: &'static str,
        offset: usize,
    },
    #[error("boxed expression opened at byte offset {offset} is never closed")]
    MalformedBox { offset: usize },
    #[error("query batch is empty after trimming")]
    EmptyBatch,
}

/// Parse failure carrying the segments recovered before the error, so the
/// orchestrator can abort gracefully instead of discarding the transcript.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{kind}")]
pub struct ParseError {
    pub kind: ProtocolError,
    pub partial: Vec<TrajectorySegment>,
}

/// One parsed unit of an agent transcript. `text` holds the raw span with
/// delimiters excluded, so re-serializing a segment list reproduces the
/// source byte string exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectorySegment {
    Thought {
        text: String,
    },
    QueryBatch {
        text: String,
        queries: Vec<String>,
    },
    ResultsBlock {
        text: String,
    },
    /// `text` is the verbatim span from the answer marker (or bare boxed
    /// expression) through the closing brace; `answer` is the innermost
    /// content with text-wrapping markup stripped.
    FinalAnswer {
        text: String,
        answer: String,
    },
    Plain {
        text: String,
    },
}

impl TrajectorySegment {
    pub fn text(&self) -> &str {
        match self {
            Self::Thought { text }
            | Self::QueryBatch { text, .. }
            | Self::ResultsBlock { text }
            | Self::FinalAnswer { text, .. }
            | Self::Plain { text } => text,
        }
    }

    pub fn is_query_batch(&self) -> bool {
        matches!(self, Self::QueryBatch { .. })
    }

    pub fn is_results_block(&self) -> bool {
        matches!(self, Self::ResultsBlock { .. })
    }
}

/// Split the raw content of a query span on `";\n"`, trimming each entry and
/// dropping whitespace-only entries. A batch with no surviving entries is a
/// protocol violation.
pub fn split_query_batch(span: &str) -> Result<Vec<String>, ProtocolError> {
    let queries: Vec<String> = span
        .split(QUERY_SEPARATOR)
        .map(str::trim)
        .filter(|q| !q.is_empty())
        .map(str::to_owned)
        .collect();
    if queries.is_empty() {
        return Err(ProtocolError::EmptyBatch);
    }
    Ok(queries)
}

/// A `(query, summary)` pair, the atom of a results block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummarizedResult {
    pub query: String,
    pub summary: String,
    pub source_count: usize,
    pub cached: bool,
}

impl SummarizedResult {
    pub fn new(query: impl Into<String>, summary: impl Into<String>) -> Self {
        Self {
            query: query.into(),
            summary: summary.into(),
            source_count: 0,
            cached: false,
        }
    }
}

/// Render each pair as `"q_i: s_i"`, join pairs with single newlines, and
/// wrap the whole block in the results delimiters.
pub fn format_results_block(results: &[SummarizedResult]) -> String {
    assert!(!results.is_empty(), "results block must not be empty");
    let body = results
        .iter()
        .map(|r| format!("{}: {}", r.query, r.summary))
        .collect::<Vec<_>>()
        .join("\n");
    format!("{RESULTS_OPEN}{body}{RESULTS_CLOSE}")
}

/// Re-serialize segments to the exact byte string they were parsed from.
pub fn serialize(segments: &[TrajectorySegment]) -> String {
    let mut out = String::new();
    for seg in segments {
        match seg {
            TrajectorySegment::Thought { text } => {
                out.push_str(THINK_OPEN);
                out.push_str(text);
                out.push_str(THINK_CLOSE);
            }
            TrajectorySegment::QueryBatch { text, .. } => {
                out.push_str(QUERIES_OPEN);
                out.push_str(text);
                out.push_str(QUERIES_CLOSE);
            }
            TrajectorySegment::ResultsBlock { text } => {
                out.push_str(RESULTS_OPEN);
                out.push_str(text);
                out.push_str(RESULTS_CLOSE);
            }
            TrajectorySegment::FinalAnswer { text, .. } | TrajectorySegment::Plain { text } => {
                out.push_str(text);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
enum Token {
    Think,
    Queries,
    Results,
    AnswerMarker,
    BareBox,
}

fn find_next_token(raw: &str, from: usize) -> Option<(usize, Token)> {
    let mut search_from = from;
    loop {
        let candidates = [
            (raw[search_from..].find(THINK_OPEN), Token::Think),
            (raw[search_from..].find(QUERIES_OPEN), Token::Queries),
            (raw[search_from..].find(RESULTS_OPEN), Token::Results),
            (
                raw[search_from..].find(FINAL_ANSWER_MARKER),
                Token::AnswerMarker,
            ),
            (raw[search_from..].find(BOXED_OPEN), Token::BareBox),
        ];
        let best = candidates
            .into_iter()
            .filter_map(|(pos, tok)| pos.map(|p| (search_from + p, tok)))
            .min_by_key(|(p, _)| *p)?;
        match best.1 {
            Token::AnswerMarker => {
                // A marker not followed by a boxed expression is plain text.
                let after = best.0 + FINAL_ANSWER_MARKER.len();
                let rest = raw[after..].trim_start();
                if rest.starts_with(BOXED_OPEN) {
                    return Some(best);
                }
                search_from = after;
            }
            _ => return Some(best),
        }
    }
}

/// Scan for the balanced closing brace of a boxed expression whose opening
/// `\boxed{` starts at `open`. Returns (inner content, end offset past `}`).
fn scan_boxed(raw: &str, open: usize) -> Result<(&str, usize), ProtocolError> {
    let body_start = open + BOXED_OPEN.len();
    let mut depth = 1usize;
    for (i, b) in raw[body_start..].bytes().enumerate() {
        match b {
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    let end = body_start + i;
                    return Ok((&raw[body_start..end], end + 1));
                }
            }
            _ => {}
        }
    }
    Err(ProtocolError::MalformedBox { offset: open })
}

/// Strip text-wrapping markup (`\text{...}` and friends) from boxed content.
fn strip_text_markup(content: &str) -> String {
    let mut s = content.trim();
    loop {
        let mut stripped = false;
        for wrapper in ["\\text{", "\\textbf{", "\\mathrm{"] {
            if let Some(inner) = s.strip_prefix(wrapper) {
                if let Some(inner) = inner.strip_suffix('}') {
                    s = inner.trim();
                    stripped = true;
                }
            }
        }
        if !stripped {
            return s.to_owned();
        }
    }
}

/// Parse a transcript into segments in source order. Text outside any
/// delimiter pair is `Plain`; an answer marker followed by a boxed
/// expression, or a bare boxed expression, yields `FinalAnswer` (first match
/// wins). On error the recovered prefix is returned inside the error.
pub fn parse_stream(raw: &str) -> Result<Vec<TrajectorySegment>, ParseError> {
    let mut segments = Vec::new();
    let mut pos = 0usize;

    let fail = |kind: ProtocolError, mut segments: Vec<TrajectorySegment>, pos: usize| {
        // Preserve everything before the error point as plain text.
        if pos < raw.len() {
            segments.push(TrajectorySegment::Plain {
                text: raw[pos..].to_owned(),
            });
        }
        Err(ParseError {
            kind,
            partial: segments,
        })
    };

    while pos < raw.len() {
        let Some((start, token)) = find_next_token(raw, pos) else {
            segments.push(TrajectorySegment::Plain {
                text: raw[pos..].to_owned(),
            });
            break;
        };
        if start > pos {
            segments.push(TrajectorySegment::Plain {
                text: raw[pos..start].to_owned(),
            });
        }
        match token {
            Token::Think | Token::Queries | Token::Results => {
                let (open, close) = match token {
                    Token::Think => (THINK_OPEN, THINK_CLOSE),
                    Token::Queries => (QUERIES_OPEN, QUERIES_CLOSE),
                    _ => (RESULTS_OPEN, RESULTS_CLOSE),
                };
                let body_start = start + open.len();
                let Some(rel) = raw[body_start..].find(close) else {
                    return fail(
                        ProtocolError::UnbalancedDelimiter {
                            delimiter: open,
                            offset: start,
                        },
                        segments,
                        start,
                    );
                };
                let text = raw[body_start..body_start + rel].to_owned();
                segments.push(match token {
                    Token::Think => TrajectorySegment::Thought { text },
                    Token::Queries => {
                        let queries = split_query_batch(&text).unwrap_or_default();
                        TrajectorySegment::QueryBatch { text, queries }
                    }
                    _ => TrajectorySegment::ResultsBlock { text },
                });
                pos = body_start + rel + close.len();
            }
            Token::AnswerMarker => {
                let after_marker = start + FINAL_ANSWER_MARKER.len();
                let ws = raw[after_marker..].len() - raw[after_marker..].trim_start().len();
                let box_open = after_marker + ws;
                match scan_boxed(raw, box_open) {
                    Ok((inner, end)) => {
                        segments.push(TrajectorySegment::FinalAnswer {
                            text: raw[start..end].to_owned(),
                            answer: strip_text_markup(inner),
                        });
                        pos = end;
                    }
                    Err(kind) => return fail(kind, segments, start),
                }
            }
            Token::BareBox => match scan_boxed(raw, start) {
                Ok((inner, end)) => {
                    segments.push(TrajectorySegment::FinalAnswer {
                        text: raw[start..end].to_owned(),
                        answer: strip_text_markup(inner),
                    });
                    pos = end;
                }
                Err(kind) => return fail(kind, segments, start),
            },
        }
    }
    Ok(segments)
}

/// Crude token estimate used for generated-token accounting: whitespace-
/// separated word count. Injected results blocks are excluded by callers.
pub fn estimate_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

/// An ordered transcript with turn, call, and generated-token accounting.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub segments: Vec<TrajectorySegment>,
}

impl Trajectory {
    pub fn new(segments: Vec<TrajectorySegment>) -> Self {
        Self { segments }
    }

    /// Number of query-batch segments.
    pub fn turns(&self) -> usize {
        self.segments.iter().filter(|s| s.is_query_batch()).count()
    }

    /// Total queries across all batches.
    pub fn calls(&self) -> usize {
        self.segments
            .iter()
            .map(|s| match s {
                TrajectorySegment::QueryBatch { queries, .. } => queries.len(),
                _ => 0,
            })
            .sum()
    }

    /// Token estimate over model-produced spans only; injected results
    /// blocks are excluded.
    pub fn generated_tokens(&self) -> usize {
        self.segments
            .iter()
            .filter(|s| !s.is_results_block())
            .map(|s| estimate_tokens(s.text()))
            .sum()
    }

    /// The extracted final answer, if any.
    pub fn final_answer(&self) -> Option<&str> {
        self.segments.iter().rev().find_map(|s| match s {
            TrajectorySegment::FinalAnswer { answer, .. } => Some(answer.as_str()),
            _ => None,
        })
    }

    pub fn serialize(&self) -> String {
        serialize(&self.segments)
    }
}
