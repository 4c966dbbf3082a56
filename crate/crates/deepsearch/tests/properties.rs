//! Property tests for the protocol, metric, and masking invariants.

#[allow(dead_code)]
mod util;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use deepsearch::evaluation::{accuracy_curve, auc, CurveAxis};
use deepsearch::protocol::{
    format_results_block, parse_stream, serialize, split_query_batch, SummarizedResult, Trajectory,
};
use deepsearch::synthesis::mask_spans;

use util::{random_transcript, record_with_queries};

fn word() -> impl Strategy<Value = String> {
    "[a-z]{1,12}"
}

fn phrase() -> impl Strategy<Value = String> {
    prop::collection::vec(word(), 1..6).prop_map(|w| w.join(" "))
}

proptest! {
    // Any transcript from the generator parses and serializes back to the
    // exact input bytes.
    #[test]
    fn random_transcripts_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let text = random_transcript(&mut rng);
        let segments = parse_stream(&text).unwrap();
        prop_assert_eq!(serialize(&segments), text);
    }

    // Joining queries with the batch separator and splitting again is the
    // identity on trimmed, separator-free queries.
    #[test]
    fn query_batch_split_join(queries in prop::collection::vec(phrase(), 1..12)) {
        let joined = queries.join(";\n");
        let split = split_query_batch(&joined).unwrap();
        prop_assert_eq!(split, queries);
    }

    // Results blocks preserve every query/summary pair in order.
    #[test]
    fn results_block_preserves_pairs(
        pairs in prop::collection::vec((phrase(), phrase()), 1..8)
    ) {
        let results: Vec<SummarizedResult> = pairs
            .iter()
            .map(|(q, s)| SummarizedResult::new(q.clone(), s.clone()))
            .collect();
        let block = format_results_block(&results);
        let lines: Vec<&str> = block
            .trim_start_matches("<|begin_search_results|>")
            .trim_end_matches("<|end_search_results|>")
            .trim_matches('\n')
            .lines()
            .collect();
        prop_assert_eq!(lines.len(), pairs.len());
        for (line, (q, s)) in lines.iter().zip(&pairs) {
            prop_assert_eq!(*line, format!("{q}: {s}"));
        }
    }

    // Accuracy curves are monotone non-decreasing in the budget and bounded
    // by [0, 1], for arbitrary record populations.
    #[test]
    fn accuracy_curve_is_monotone(
        specs in prop::collection::vec(
            (1usize..6, 1usize..5, any::<bool>(), 0u8..2),
            1..20,
        ),
        max_budget in 1usize..12,
    ) {
        let mut records = Vec::new();
        let mut scores = Vec::new();
        for (i, (turns, per_turn, aborted, score)) in specs.iter().enumerate() {
            let batches: Vec<Vec<String>> = (0..*turns)
                .map(|t| (0..*per_turn).map(|q| format!("q {i} {t} {q}")).collect())
                .collect();
            records.push(record_with_queries(
                &format!("p{i}"),
                &batches,
                12,
                64,
                *aborted,
            ));
            scores.push(f64::from(*score));
        }
        for axis in [CurveAxis::Turns, CurveAxis::Calls] {
            let curve = accuracy_curve(&records, &scores, axis, max_budget);
            prop_assert_eq!(curve.points.len(), max_budget);
            let mut prev = 0.0f64;
            for (budget, f) in &curve.points {
                prop_assert!((0.0..=1.0).contains(f), "f({budget}) = {f}");
                prop_assert!(*f >= prev, "curve decreased at budget {budget}");
                prev = *f;
            }
            // AUC of a monotone curve is bounded by its final value.
            let area = auc(&curve).unwrap();
            prop_assert!(area <= prev + 1e-12);
        }
    }

    // Mask spans partition every transcript into results blocks and
    // loss-bearing text: spans are disjoint, cover all results delimiters,
    // and leave none outside.
    #[test]
    fn mask_spans_partition_transcripts(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let text = random_transcript(&mut rng);
        let trajectory = Trajectory::new(parse_stream(&text).unwrap());
        let spans = mask_spans(&trajectory);
        let chars: Vec<char> = text.chars().collect();
        let mut prev = 0usize;
        let mut unmasked = String::new();
        for (start, end) in &spans {
            prop_assert!(prev <= *start && start < end && *end <= chars.len());
            unmasked.extend(&chars[prev..*start]);
            prev = *end;
        }
        unmasked.extend(&chars[prev..]);
        prop_assert!(!unmasked.contains("search_results|>"));
        prop_assert_eq!(
            spans.len(),
            text.matches("<|begin_search_results|>").count()
        );
    }
}
