//! Disambiguation of predicted object strings against Wikidata candidates.
//!
//! Candidate search itself is an HTTP concern handled by the companion
//! crate; everything here is pure selection logic over candidate lists.
//! Four strategies exist: baseline takes the first search hit, case-based
//! applies hard-coded label overrides, keyword-based picks the first
//! candidate whose description mentions a relation keyword, and LM-based
//! asks a model to choose (the prompt/reply handling for that lives here,
//! the actual completion call does not).

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::prompt::{ChatMessage, Role};
use crate::record::is_valid_qid;
use crate::relation::{RelationProfile, Strategy, ValueKind};

/// One Wikidata search hit in API result order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub qid: String,
    pub label: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    pub rank: usize,
}

/// Whether per-relation strategies are dispatched or forced to baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisambiguationMode {
    Baseline,
    Improved,
}

impl core::str::FromStr for DisambiguationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(DisambiguationMode::Baseline),
            "improved" => Ok(DisambiguationMode::Improved),
            other => Err(alloc::format!("unknown disambiguation mode `{other}`")),
        }
    }
}

/// The strategy actually dispatched for a relation under a run mode.
/// Numeric relations never search or disambiguate in either mode.
pub fn effective_strategy(profile: &RelationProfile, mode: DisambiguationMode) -> Strategy {
    if profile.value_kind == ValueKind::Numeric {
        return Strategy::None;
    }
    match mode {
        DisambiguationMode::Baseline => Strategy::Baseline,
        DisambiguationMode::Improved => profile.disambiguation,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingErrorClass {
    /// The search produced no candidates for the label.
    NoCandidates,
    /// Candidates existed but the strategy could not settle on one.
    SurfaceAmbiguityUnresolved,
}

/// The linking result for one predicted object string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingOutcome {
    pub object_label: String,
    pub resolved_qid: Option<String>,
    pub strategy_used: Strategy,
    pub candidate_count: usize,
    pub error_class: Option<MappingErrorClass>,
}

fn first_by_rank(cands: &[Candidate]) -> Option<&Candidate> {
    cands.iter().min_by_key(|c| c.rank)
}

/// Baseline: the first entity returned by the search.
pub fn disambiguate_baseline(cands: &[Candidate]) -> Option<String> {
    first_by_rank(cands).map(|c| c.qid.clone())
}

/// Case-based: hard-coded label overrides win; everything else falls back
/// to baseline. Matching is case-insensitive (override keys are stored
/// lowercased).
pub fn disambiguate_case(
    label: &str,
    profile: &RelationProfile,
    cands: &[Candidate],
) -> Option<String> {
    if let Some(qid) = profile.case_overrides.get(&label.to_lowercase()) {
        return Some(qid.clone());
    }
    disambiguate_baseline(cands)
}

/// Keyword-based: the lowest-ranked candidate whose description contains
/// any keyword (case-insensitive substring); none matching falls back to
/// baseline. Aliases are deliberately not searched.
pub fn disambiguate_keyword(cands: &[Candidate], keywords: &[String]) -> Option<String> {
    let mut by_rank: Vec<&Candidate> = cands.iter().collect();
    by_rank.sort_by_key(|c| c.rank);
    for candidate in &by_rank {
        let description = candidate.description.to_lowercase();
        if keywords.iter().any(|k| description.contains(&k.to_lowercase())) {
            return Some(candidate.qid.clone());
        }
    }
    disambiguate_baseline(cands)
}

/// The user turn asking a model to pick among ambiguous candidates: the
/// original query, then a dictionary of candidate labels (with QIDs) to
/// descriptions. The exact wording is a tunable, not a contract.
pub fn build_lm_selection_messages(
    query_text: &str,
    object_label: &str,
    cands: &[Candidate],
) -> Vec<ChatMessage> {
    let mut by_rank: Vec<&Candidate> = cands.iter().collect();
    by_rank.sort_by_key(|c| c.rank);
    let mut text = String::new();
    text.push_str(query_text);
    text.push_str("\n\nThe object \"");
    text.push_str(object_label);
    text.push_str("\" matches several Wikidata entities:\n{");
    for (i, candidate) in by_rank.iter().enumerate() {
        if i > 0 {
            text.push_str(", ");
        }
        text.push('"');
        text.push_str(&candidate.label);
        text.push_str(" (");
        text.push_str(&candidate.qid);
        text.push_str(")\": \"");
        text.push_str(&candidate.description);
        text.push('"');
    }
    text.push_str("}\nWhich entity is the correct object? Reply with its QID only.");
    alloc::vec![ChatMessage::new(Role::User, text)]
}

/// The retry turn after an invalid selection reply: the invalid reply is
/// kept in the conversation and the instruction is restated.
pub fn build_lm_retry_messages(
    previous: &[ChatMessage],
    invalid_reply: &str,
) -> Vec<ChatMessage> {
    let mut messages = previous.to_vec();
    messages.push(ChatMessage::new(Role::Assistant, invalid_reply));
    messages.push(ChatMessage::new(
        Role::User,
        "That reply did not name a QID from the candidate list. Reply with exactly one QID from the list above.",
    ));
    messages
}

/// First `Q[0-9]+` token in the reply that names one of the candidates.
/// Tokens embedded in longer words (e.g. "FAQ925") do not count.
pub fn extract_candidate_qid(reply: &str, cands: &[Candidate]) -> Option<String> {
    let chars: Vec<char> = reply.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        if chars[i] == 'Q'
            && (i == 0 || !chars[i - 1].is_alphanumeric())
            && i + 1 < chars.len()
            && chars[i + 1].is_ascii_digit()
        {
            let mut j = i + 1;
            while j < chars.len() && chars[j].is_ascii_digit() {
                j += 1;
            }
            if j >= chars.len() || !chars[j].is_alphanumeric() {
                let token: String = chars[i..j].iter().collect();
                debug_assert!(is_valid_qid(&token));
                if cands.iter().any(|c| c.qid == token) {
                    return Some(token);
                }
            }
            i = j;
        } else {
            i += 1;
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relation::{ProfileTable, RelationId};
    use alloc::vec;

    fn candidate(qid: &str, label: &str, description: &str, rank: usize) -> Candidate {
        Candidate {
            qid: qid.to_string(),
            label: label.to_string(),
            description: description.to_string(),
            aliases: Vec::new(),
            rank,
        }
    }

    fn mercury_candidates() -> Vec<Candidate> {
        vec![
            candidate("Q308", "Mercury", "first planet from the Sun", 0),
            candidate("Q925", "mercury", "chemical element with symbol Hg", 1),
        ]
    }

    #[test]
    fn baseline_picks_first_rank() {
        assert_eq!(disambiguate_baseline(&mercury_candidates()), Some("Q308".to_string()));
        assert_eq!(disambiguate_baseline(&[]), None);
        let single = vec![candidate("Q1", "x", "", 0)];
        assert_eq!(disambiguate_baseline(&single), Some("Q1".to_string()));
    }

    #[test]
    fn baseline_is_min_rank_even_when_shuffled() {
        let mut cands = mercury_candidates();
        cands.reverse();
        assert_eq!(disambiguate_baseline(&cands), Some("Q308".to_string()));
    }

    #[test]
    fn case_override_maps_mercury_to_element() {
        let table = ProfileTable::builtin();
        let profile = table.profile(RelationId::CompoundHasParts);
        assert_eq!(
            disambiguate_case("mercury", profile, &mercury_candidates()),
            Some("Q925".to_string())
        );
        // Case-insensitive match on the label.
        assert_eq!(
            disambiguate_case("Mercury", profile, &mercury_candidates()),
            Some("Q925".to_string())
        );
    }

    #[test]
    fn case_override_wins_even_with_no_candidates() {
        let table = ProfileTable::builtin();
        let profile = table.profile(RelationId::CompoundHasParts);
        assert_eq!(disambiguate_case("mercury", profile, &[]), Some("Q925".to_string()));
    }

    #[test]
    fn case_falls_back_to_baseline() {
        let table = ProfileTable::builtin();
        let profile = table.profile(RelationId::CompoundHasParts);
        let carbon = vec![candidate("Q623", "carbon", "chemical element", 0)];
        assert_eq!(disambiguate_case("carbon", profile, &carbon), Some("Q623".to_string()));
        assert_eq!(disambiguate_case("carbon", profile, &[]), None);
    }

    #[test]
    fn keyword_picks_first_description_match() {
        let cands = vec![
            candidate("Q121842", "French", "ethnic group native to France", 0),
            candidate("Q150", "French", "Romance language of France", 1),
            candidate("Q1987", "French", "another language entry", 2),
        ];
        let keywords = vec!["language".to_string()];
        assert_eq!(disambiguate_keyword(&cands, &keywords), Some("Q150".to_string()));
    }

    #[test]
    fn keyword_falls_back_to_baseline_then_none() {
        let cands = vec![candidate("Q1", "x", "no match here", 0)];
        let keywords = vec!["language".to_string()];
        assert_eq!(disambiguate_keyword(&cands, &keywords), Some("Q1".to_string()));
        assert_eq!(disambiguate_keyword(&[], &keywords), None);
    }

    #[test]
    fn lm_reply_extraction_requires_candidate_membership() {
        let cands = mercury_candidates();
        assert_eq!(extract_candidate_qid("Q925", &cands), Some("Q925".to_string()));
        assert_eq!(
            extract_candidate_qid("I would pick Q925, the element.", &cands),
            Some("Q925".to_string())
        );
        // Not in candidate set.
        assert_eq!(extract_candidate_qid("Q42", &cands), None);
        // Embedded in a longer token.
        assert_eq!(extract_candidate_qid("FAQ925", &cands), None);
        // First valid candidate mention wins.
        assert_eq!(
            extract_candidate_qid("Q999 is wrong, Q308 then Q925", &cands),
            Some("Q308".to_string())
        );
    }

    #[test]
    fn lm_selection_prompt_contains_query_and_dictionary() {
        let messages = build_lm_selection_messages(
            "What is the name of the spouse of X?",
            "mercury",
            &mercury_candidates(),
        );
        assert_eq!(messages.len(), 1);
        let text = &messages[0].text;
        assert!(text.starts_with("What is the name of the spouse of X?"));
        assert!(text.contains("\"Mercury (Q308)\": \"first planet from the Sun\""));
        assert!(text.contains("\"mercury (Q925)\": \"chemical element with symbol Hg\""));
    }

    #[test]
    fn retry_messages_keep_invalid_reply_in_history() {
        let initial = build_lm_selection_messages("q", "l", &mercury_candidates());
        let retry = build_lm_retry_messages(&initial, "no idea");
        assert_eq!(retry.len(), 3);
        assert_eq!(retry[1].role, Role::Assistant);
        assert_eq!(retry[1].text, "no idea");
    }

    #[test]
    fn effective_strategy_dispatch() {
        let table = ProfileTable::builtin();
        for relation in RelationId::ALL {
            let profile = table.profile(relation);
            let improved = effective_strategy(profile, DisambiguationMode::Improved);
            let baseline = effective_strategy(profile, DisambiguationMode::Baseline);
            if profile.value_kind == ValueKind::Numeric {
                assert_eq!(improved, Strategy::None);
                assert_eq!(baseline, Strategy::None);
            } else {
                assert_eq!(improved, profile.disambiguation);
                assert_eq!(baseline, Strategy::Baseline);
            }
        }
    }
}
