//! Shared helpers for integration tests: random well-formed transcript
//! generation and run-record construction.

use deepsearch::orchestrator::{AbortReason, BudgetState, RunRecord};
use deepsearch::protocol::{parse_stream, Trajectory};
use rand::Rng;

const WORDS: &[&str] = &[
    "film", "director", "river", "band", "album", "novel", "city", "bridge", "theory", "prize",
    "record", "season", "engine", "valley", "signal", "museum", "planet", "treaty", "harbor",
    "battery",
];

pub fn random_words<R: Rng>(rng: &mut R, min: usize, max: usize) -> String {
    let n = rng.gen_range(min..=max);
    (0..n)
        .map(|_| WORDS[rng.gen_range(0..WORDS.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

/// A random well-formed transcript: interleaved thoughts, query batches,
/// matching results blocks, optional plain prose, and (usually) a boxed
/// final answer. Never embeds delimiter substrings in free text.
pub fn random_transcript<R: Rng>(rng: &mut R) -> String {
    let mut out = String::new();
    let turns = rng.gen_range(0..=4);
    for _ in 0..turns {
        if rng.gen_bool(0.8) {
            out.push_str(&format!("<think>{}</think>\n", random_words(rng, 2, 8)));
        }
        if rng.gen_bool(0.2) {
            out.push_str(&random_words(rng, 1, 4));
            out.push('\n');
        }
        let n_queries = rng.gen_range(1..=6);
        let queries: Vec<String> = (0..n_queries).map(|_| random_words(rng, 1, 4)).collect();
        out.push_str("<|begin_search_queries|>");
        out.push_str(&queries.join(";\n"));
        out.push_str("<|end_search_queries|>\n");
        out.push_str("<|begin_search_results|>");
        let lines: Vec<String> = queries
            .iter()
            .map(|q| format!("{q}: {}", random_words(rng, 2, 6)))
            .collect();
        out.push_str(&lines.join("\n"));
        out.push_str("<|end_search_results|>\n");
    }
    if rng.gen_bool(0.9) {
        if rng.gen_bool(0.7) {
            out.push_str(&format!("<think>{}</think>\n", random_words(rng, 2, 8)));
        }
        out.push_str(&format!(
            "**Final Answer:**\n\\boxed{{{}}}",
            random_words(rng, 1, 3)
        ));
    }
    out
}

/// A run record with the given accounting and a trajectory carrying one
/// query batch per listed turn.
pub fn record_with_queries(
    id: &str,
    queries_per_turn: &[Vec<String>],
    max_turns: usize,
    max_calls: usize,
    aborted: bool,
) -> RunRecord {
    let mut text = String::new();
    for queries in queries_per_turn {
        text.push_str("<|begin_search_queries|>");
        text.push_str(&queries.join(";\n"));
        text.push_str("<|end_search_queries|>\n");
        text.push_str("<|begin_search_results|>");
        let lines: Vec<String> = queries.iter().map(|q| format!("{q}: found")).collect();
        text.push_str(&lines.join("\n"));
        text.push_str("<|end_search_results|>\n");
    }
    if !aborted {
        text.push_str("**Final Answer:**\\boxed{answer}");
    }
    let calls: usize = queries_per_turn.iter().map(Vec::len).sum();
    RunRecord {
        question_id: id.to_owned(),
        question: "q".to_owned(),
        trajectory: Trajectory::new(parse_stream(&text).unwrap()),
        final_answer: if aborted { String::new() } else { "answer".to_owned() },
        budget: BudgetState {
            max_turns,
            max_calls,
            turns_used: queries_per_turn.len(),
            calls_used: calls,
            forced: false,
        },
        wall_time_ms: 0,
        aborted,
        abort_reason: aborted.then_some(AbortReason::NoAnswerAtLimit),
    }
}

pub fn fixture_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}
