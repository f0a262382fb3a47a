//! Property tests over the pure core: parser totality and round-tripping,
//! scoring invariants against a brute-force oracle, and strategy guarantees.

use std::collections::BTreeSet;

use proptest::prelude::*;

use kbprobe_core::disambig::{
    disambiguate_case, disambiguate_keyword, extract_candidate_qid, Candidate,
};
use kbprobe_core::parse::{parse_object_list, render_object_list};
use kbprobe_core::relation::{ProfileTable, RelationId};
use kbprobe_core::score::row_scores;

/// Element strings the canonical renderer can represent losslessly: no
/// double quotes or backslashes, non-empty, and stable under trim.
fn renderable_element() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9 ,.'()-]{1,24}".prop_filter("trim-stable and non-empty", |s| {
        !s.trim().is_empty() && s.trim() == s
    })
}

fn id_set() -> impl Strategy<Value = BTreeSet<String>> {
    proptest::collection::btree_set("Q[1-9][0-9]{0,2}", 0..6)
}

/// Independent overlap count: nested loops over the raw vectors, no set
/// machinery shared with the implementation.
fn brute_force_scores(pred: &BTreeSet<String>, truth: &BTreeSet<String>) -> (f64, f64, f64) {
    let pred_vec: Vec<&String> = pred.iter().collect();
    let truth_vec: Vec<&String> = truth.iter().collect();
    let mut overlap = 0usize;
    for p in &pred_vec {
        for t in &truth_vec {
            if p == t {
                overlap += 1;
            }
        }
    }
    let p = if pred_vec.is_empty() {
        if truth_vec.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        overlap as f64 / pred_vec.len() as f64
    };
    let r = if truth_vec.is_empty() {
        if pred_vec.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        overlap as f64 / truth_vec.len() as f64
    };
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f1)
}

proptest! {
    #[test]
    fn parser_round_trips_canonical_lists(labels in proptest::collection::vec(renderable_element(), 1..8)) {
        let rendered = render_object_list(&labels);
        let parsed = parse_object_list(&rendered).unwrap();
        prop_assert_eq!(parsed, labels);
    }

    #[test]
    fn parser_total_on_arbitrary_input(raw in ".{0,200}") {
        // Must return a value, never panic.
        let _ = parse_object_list(&raw);
    }

    #[test]
    fn scores_in_range_and_f1_bounded(pred in id_set(), truth in id_set()) {
        let s = row_scores(&pred, &truth);
        for v in [s.precision, s.recall, s.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(s.f1 <= s.precision.max(s.recall) + 1e-12);
    }

    #[test]
    fn precision_recall_symmetry(a in id_set(), b in id_set()) {
        prop_assert_eq!(row_scores(&a, &b).precision, row_scores(&b, &a).recall);
    }

    #[test]
    fn scores_match_brute_force_oracle(pred in id_set(), truth in id_set()) {
        let s = row_scores(&pred, &truth);
        let (p, r, f1) = brute_force_scores(&pred, &truth);
        prop_assert_eq!(s.precision, p);
        prop_assert_eq!(s.recall, r);
        prop_assert_eq!(s.f1, f1);
    }

    #[test]
    fn scores_ignore_duplicates_and_order(ids in proptest::collection::vec("Q[1-9][0-9]{0,2}", 0..8), truth in id_set()) {
        let forward: BTreeSet<String> = ids.iter().cloned().collect();
        let mut doubled = ids.clone();
        doubled.extend(ids.iter().rev().cloned());
        let shuffled: BTreeSet<String> = doubled.into_iter().collect();
        prop_assert_eq!(row_scores(&forward, &truth), row_scores(&shuffled, &truth));
    }
}

fn arbitrary_candidates() -> impl Strategy<Value = Vec<Candidate>> {
    proptest::collection::vec(("Q[1-9][0-9]{0,3}", "[a-z]{1,8}", "[a-z ]{0,20}"), 0..6).prop_map(
        |raw| {
            raw.into_iter()
                .enumerate()
                .map(|(rank, (qid, label, description))| Candidate {
                    qid,
                    label,
                    description,
                    aliases: Vec::new(),
                    rank,
                })
                .collect()
        },
    )
}

proptest! {
    #[test]
    fn case_override_dominates_candidate_order(cands in arbitrary_candidates()) {
        let table = ProfileTable::builtin();
        let profile = table.profile(RelationId::CompoundHasParts);
        prop_assert_eq!(
            disambiguate_case("mercury", profile, &cands),
            Some("Q925".to_string())
        );
    }

    #[test]
    fn keyword_match_is_minimal_rank(cands in arbitrary_candidates()) {
        let keywords = vec!["lang".to_string()];
        if let Some(qid) = disambiguate_keyword(&cands, &keywords) {
            let matches: Vec<&Candidate> = cands
                .iter()
                .filter(|c| c.description.to_lowercase().contains("lang"))
                .collect();
            if let Some(best) = matches.iter().min_by_key(|c| c.rank) {
                prop_assert_eq!(&qid, &best.qid);
            }
        }
    }

    #[test]
    fn lm_extraction_only_returns_candidates(reply in ".{0,80}", cands in arbitrary_candidates()) {
        if let Some(qid) = extract_candidate_qid(&reply, &cands) {
            prop_assert!(cands.iter().any(|c| c.qid == qid));
        }
    }
}
