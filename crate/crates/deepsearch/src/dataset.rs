//! Benchmark dataset ingestion: JSONL with `id`, `question`, `answer` or
//! `answers`, and optional `evidence_links`.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: String,
    pub question: String,
    /// Gold answers, aliases included. A single `answer` field is lifted
    /// into a one-element list.
    pub gold_answers: Vec<String>,
    /// Gold evidence links, when annotated. Deduplicated on load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_evidence_links: Option<Vec<String>>,
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    question: String,
    #[serde(default)]
    answer: Option<String>,
    #[serde(default)]
    answers: Option<Vec<String>>,
    #[serde(default)]
    evidence_links: Option<Vec<String>>,
}

pub fn load_dataset(path: &Path) -> Result<Vec<QuestionRecord>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord =
            serde_json::from_str(line).map_err(|e| DatasetError::Schema {
                line: line_no,
                message: e.to_string(),
            })?;
        let gold_answers = match (raw.answer, raw.answers) {
            (_, Some(answers)) if !answers.is_empty() => answers,
            (Some(answer), _) => vec![answer],
            _ => {
                return Err(DatasetError::Schema {
                    line: line_no,
                    message: "missing `answer` or non-empty `answers`".into(),
                })
            }
        };
        if raw.question.trim().is_empty() {
            return Err(DatasetError::Schema {
                line: line_no,
                message: "missing or empty `question`".into(),
            });
        }
        let gold_evidence_links = raw.evidence_links.map(|links| {
            let dedup: BTreeSet<String> = links.into_iter().collect();
            dedup.into_iter().collect()
        });
        records.push(QuestionRecord {
            id: raw.id,
            question: raw.question,
            gold_answers,
            gold_evidence_links,
        });
    }
    Ok(records)
}
