//! Entity mapping: candidate search then per-relation disambiguation for
//! every predicted object string of a row.

use kbprobe_core::disambig::{
    build_lm_retry_messages, build_lm_selection_messages, disambiguate_baseline,
    disambiguate_case, disambiguate_keyword, effective_strategy, extract_candidate_qid,
    Candidate, DisambiguationMode, MappingErrorClass, MappingOutcome,
};
use kbprobe_core::parse::normalize_numeric;
use kbprobe_core::prompt::ChatMessage;
use kbprobe_core::record::QueryRecord;
use kbprobe_core::relation::{RelationProfile, Strategy};

use crate::llm::{cache_key, ChatCompletion, ChatRequest, LlmError};
use crate::wikidata::{CandidateSource, SearchError};

#[derive(Debug, thiserror::Error)]
pub enum MappingError {
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

/// Model configuration for LM-based selection among ambiguous candidates.
pub struct LmDisambiguator<'a> {
    pub client: &'a dyn ChatCompletion,
    pub model: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl<'a> LmDisambiguator<'a> {
    fn request(&self, messages: Vec<ChatMessage>) -> ChatRequest {
        ChatRequest {
            model: self.model.clone(),
            messages,
            temperature: self.temperature,
            max_output_tokens: self.max_output_tokens,
        }
    }

    /// Ask the model to pick a candidate. An invalid reply is retried once
    /// with the invalid text in the conversation; a second invalid reply
    /// returns `None` so the caller can fall back.
    fn select(
        &self,
        query_text: &str,
        label: &str,
        cands: &[Candidate],
        digests: &mut Vec<String>,
    ) -> Result<Option<String>, LlmError> {
        let messages = build_lm_selection_messages(query_text, label, cands);
        let request = self.request(messages.clone());
        digests.push(cache_key(&request));
        let reply = self.client.complete(&request)?;
        if let Some(qid) = extract_candidate_qid(&reply.text, cands) {
            return Ok(Some(qid));
        }
        log::warn!("invalid disambiguation reply for `{label}`, retrying once");
        let retry = self.request(build_lm_retry_messages(&messages, &reply.text));
        digests.push(cache_key(&retry));
        let second = self.client.complete(&retry)?;
        Ok(extract_candidate_qid(&second.text, cands))
    }
}

/// Map each parsed object string to an outcome, in order.
///
/// Numeric relations never search: the normalized number is the ID.
/// Entity relations search once per label and dispatch the strategy chosen
/// by the run mode. LM selection requests are recorded into `digests` so
/// run manifests capture them.
#[allow(clippy::too_many_arguments)]
pub fn map_objects(
    labels: &[String],
    record: &QueryRecord,
    profile: &RelationProfile,
    mode: DisambiguationMode,
    query_text: &str,
    search: &dyn CandidateSource,
    lm: &LmDisambiguator<'_>,
    digests: &mut Vec<String>,
) -> Result<Vec<MappingOutcome>, MappingError> {
    let strategy = effective_strategy(profile, mode);
    let mut outcomes = Vec::with_capacity(labels.len());
    for label in labels {
        outcomes.push(map_one(
            label, record, profile, strategy, query_text, search, lm, digests,
        )?);
    }
    Ok(outcomes)
}

#[allow(clippy::too_many_arguments)]
fn map_one(
    label: &str,
    _record: &QueryRecord,
    profile: &RelationProfile,
    strategy: Strategy,
    query_text: &str,
    search: &dyn CandidateSource,
    lm: &LmDisambiguator<'_>,
    digests: &mut Vec<String>,
) -> Result<MappingOutcome, MappingError> {
    if strategy == Strategy::None {
        // Number-valued relation: the normalized number is the ID.
        return Ok(match normalize_numeric(label) {
            Some(value) => MappingOutcome {
                object_label: value.clone(),
                resolved_qid: Some(value),
                strategy_used: Strategy::None,
                candidate_count: 0,
                error_class: None,
            },
            None => MappingOutcome {
                object_label: label.to_string(),
                resolved_qid: None,
                strategy_used: Strategy::None,
                candidate_count: 0,
                error_class: Some(MappingErrorClass::NoCandidates),
            },
        });
    }

    let cands = search.search(label)?;
    let candidate_count = cands.len();
    let mut error_class = None;
    let resolved_qid = match strategy {
        Strategy::Baseline => disambiguate_baseline(&cands),
        Strategy::Case => disambiguate_case(label, profile, &cands),
        Strategy::Keyword => disambiguate_keyword(&cands, &profile.keyword_terms),
        Strategy::Lm => match candidate_count {
            0 => None,
            // A single candidate needs no model call.
            1 => disambiguate_baseline(&cands),
            _ => match lm.select(query_text, label, &cands, digests)? {
                Some(qid) => Some(qid),
                None => {
                    // Two invalid replies: fall back to baseline, flagged.
                    error_class = Some(MappingErrorClass::SurfaceAmbiguityUnresolved);
                    disambiguate_baseline(&cands)
                }
            },
        },
        Strategy::None => unreachable!("handled above"),
    };
    if resolved_qid.is_none() && error_class.is_none() {
        error_class = Some(MappingErrorClass::NoCandidates);
    }
    Ok(MappingOutcome {
        object_label: label.to_string(),
        resolved_qid,
        strategy_used: strategy,
        candidate_count,
        error_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{cache_key as digest_of, ChatResponse, ProviderKind};
    use crate::store::CandidateStore;
    use crate::wikidata::{SnapshotSearch, DEFAULT_LIMIT};
    use kbprobe_core::relation::{ProfileTable, RelationId};
    use std::sync::Mutex;

    /// Completion fake that pops scripted reply texts and counts calls.
    struct ScriptedLlm {
        replies: Mutex<Vec<String>>,
        pub calls: Mutex<usize>,
    }

    impl ScriptedLlm {
        fn new(replies: &[&str]) -> Self {
            ScriptedLlm {
                replies: Mutex::new(replies.iter().map(|s| s.to_string()).collect()),
                calls: Mutex::new(0),
            }
        }
    }

    impl ChatCompletion for ScriptedLlm {
        fn complete(&self, _request: &ChatRequest) -> Result<ChatResponse, LlmError> {
            *self.calls.lock().unwrap() += 1;
            let mut replies = self.replies.lock().unwrap();
            assert!(!replies.is_empty(), "scripted llm exhausted");
            Ok(ChatResponse {
                text: replies.remove(0),
                provider: ProviderKind::Replay,
                cached: false,
                latency_ms: 0,
            })
        }
    }

    fn candidate(qid: &str, label: &str, description: &str, rank: usize) -> Candidate {
        Candidate {
            qid: qid.into(),
            label: label.into(),
            description: description.into(),
            aliases: vec![],
            rank,
        }
    }

    fn search_with(entries: &[(&str, Vec<Candidate>)]) -> SnapshotSearch {
        let mut store = CandidateStore::in_memory();
        for (label, cands) in entries {
            store.record(label, DEFAULT_LIMIT, cands).unwrap();
        }
        SnapshotSearch::new(store)
    }

    fn record(relation: RelationId) -> QueryRecord {
        QueryRecord {
            subject_label: "S".into(),
            subject_qid: "Q1".into(),
            relation,
        }
    }

    fn lm_over<'a>(client: &'a dyn ChatCompletion) -> LmDisambiguator<'a> {
        LmDisambiguator {
            client,
            model: "test-model".into(),
            temperature: 0.0,
            max_output_tokens: 64,
        }
    }

    #[test]
    fn outcomes_align_with_labels_in_order() {
        let table = ProfileTable::builtin();
        let profile = table.profile(RelationId::CountryBordersCountry);
        let search = search_with(&[
            ("Peru", vec![candidate("Q419", "Peru", "country", 0)]),
            ("Chile", vec![candidate("Q298", "Chile", "country", 0)]),
        ]);
        let llm = ScriptedLlm::new(&[]);
        let mut digests = Vec::new();
        let labels = vec!["Peru".to_string(), "Chile".to_string()];
        let outcomes = map_objects(
            &labels,
            &record(RelationId::CountryBordersCountry),
            profile,
            DisambiguationMode::Improved,
            "q",
            &search,
            &lm_over(&llm),
            &mut digests,
        )
        .unwrap();
        assert_eq!(outcomes.len(), 2);
        assert_eq!(outcomes[0].object_label, "Peru");
        assert_eq!(outcomes[0].resolved_qid.as_deref(), Some("Q419"));
        assert_eq!(outcomes[1].resolved_qid.as_deref(), Some("Q298"));
        assert!(digests.is_empty());
    }

    #[test]
    fn empty_label_list_maps_to_empty_outcomes() {
        let table = ProfileTable::builtin();
        let profile = table.profile(RelationId::CountryBordersCountry);
        let search = search_with(&[]);
        let llm = ScriptedLlm::new(&[]);
        let outcomes = map_objects(
            &[],
            &record(RelationId::CountryBordersCountry),
            profile,
            DisambiguationMode::Improved,
            "q",
            &search,
            &lm_over(&llm),
            &mut Vec::new(),
        )
        .unwrap();
        assert!(outcomes.is_empty());
    }

    #[test]
    fn numeric_relation_bypasses_search() {
        let table = ProfileTable::builtin();
        let profile = table.profile(RelationId::PersonHasNumberOfChildren);
        // Deliberately no search entries: a search call would error.
        let search = search_with(&[]);
        let llm = ScriptedLlm::new(&[]);
        let labels = vec!["about 4".to_string(), "none".to_string()];
        let outcomes = map_objects(
            &labels,
            &record(RelationId::PersonHasNumberOfChildren),
            profile,
            DisambiguationMode::Improved,
            "q",
            &search,
            &lm_over(&llm),
            &mut Vec::new(),
        )
        .unwrap();
        assert_eq!(outcomes[0].resolved_qid.as_deref(), Some("4"));
        assert_eq!(outcomes[0].object_label, "4");
        assert_eq!(outcomes[0].strategy_used, Strategy::None);
        assert!(outcomes[1].resolved_qid.is_none());
        assert_eq!(outcomes[1].error_class, Some(MappingErrorClass::NoCandidates));
    }

    #[test]
    fn mercury_improved_vs_baseline() {
        let table = ProfileTable::builtin();
        let profile = table.profile(RelationId::CompoundHasParts);
        let mercury = vec![
            candidate("Q308", "Mercury", "first planet from the Sun", 0),
            candidate("Q925", "mercury", "chemical element with symbol Hg", 1),
        ];
        let search = search_with(&[("mercury", mercury)]);
        let llm = ScriptedLlm::new(&[]);
        let labels = vec!["mercury".to_string()];

        let improved = map_objects(
            &labels,
            &record(RelationId::CompoundHasParts),
            profile,
            DisambiguationMode::Improved,
            "q",
            &search,
            &lm_over(&llm),
            &mut Vec::new(),
        )
        .unwrap();
        assert_eq!(improved[0].resolved_qid.as_deref(), Some("Q925"));
        assert_eq!(improved[0].strategy_used, Strategy::Case);

        let baseline = map_objects(
            &labels,
            &record(RelationId::CompoundHasParts),
            profile,
            DisambiguationMode::Baseline,
            "q",
            &search,
            &lm_over(&llm),
            &mut Vec::new(),
        )
        .unwrap();
        assert_eq!(baseline[0].resolved_qid.as_deref(), Some("Q308"));
        assert_eq!(baseline[0].strategy_used, Strategy::Baseline);
    }

    #[test]
    fn no_candidates_keeps_label_with_empty_slot() {
        let table = ProfileTable::builtin();
        let profile = table.profile(RelationId::PersonHasProfession);
        let search = search_with(&[("zzqx17", vec![])]);
        let llm = ScriptedLlm::new(&[]);
        let outcomes = map_objects(
            &["zzqx17".to_string()],
            &record(RelationId::PersonHasProfession),
            profile,
            DisambiguationMode::Improved,
            "q",
            &search,
            &lm_over(&llm),
            &mut Vec::new(),
        )
        .unwrap();
        assert_eq!(outcomes[0].object_label, "zzqx17");
        assert!(outcomes[0].resolved_qid.is_none());
        assert_eq!(outcomes[0].error_class, Some(MappingErrorClass::NoCandidates));
    }

    #[test]
    fn lm_single_candidate_needs_no_model_call() {
        let table = ProfileTable::builtin();
        let profile = table.profile(RelationId::PersonHasSpouse);
        let search = search_with(&[("Jane Doe", vec![candidate("Q7", "Jane Doe", "actor", 0)])]);
        let llm = ScriptedLlm::new(&[]);
        let outcomes = map_objects(
            &["Jane Doe".to_string()],
            &record(RelationId::PersonHasSpouse),
            profile,
            DisambiguationMode::Improved,
            "q",
            &search,
            &lm_over(&llm),
            &mut Vec::new(),
        )
        .unwrap();
        assert_eq!(outcomes[0].resolved_qid.as_deref(), Some("Q7"));
        assert_eq!(*llm.calls.lock().unwrap(), 0);
    }

    #[test]
    fn lm_selection_picks_model_choice_and_records_digest() {
        let table = ProfileTable::builtin();
        let profile = table.profile(RelationId::PersonHasSpouse);
        let cands = vec![
            candidate("Q600001", "Mary Smith", "American actress", 0),
            candidate("Q600002", "Mary Smith", "British chemist", 1),
        ];
        let search = search_with(&[("Mary Smith", cands)]);
        let llm = ScriptedLlm::new(&["The correct entity is Q600002."]);
        let mut digests = Vec::new();
        let outcomes = map_objects(
            &["Mary Smith".to_string()],
            &record(RelationId::PersonHasSpouse),
            profile,
            DisambiguationMode::Improved,
            "Who is the spouse of S?",
            &search,
            &lm_over(&llm),
            &mut digests,
        )
        .unwrap();
        assert_eq!(outcomes[0].resolved_qid.as_deref(), Some("Q600002"));
        assert!(outcomes[0].error_class.is_none());
        assert_eq!(digests.len(), 1);
        // Digest corresponds to the actual selection request.
        let messages = build_lm_selection_messages(
            "Who is the spouse of S?",
            "Mary Smith",
            &search.search("Mary Smith").unwrap(),
        );
        let expected = digest_of(&ChatRequest {
            model: "test-model".into(),
            messages,
            temperature: 0.0,
            max_output_tokens: 64,
        });
        assert_eq!(digests[0], expected);
    }

    #[test]
    fn lm_invalid_twice_falls_back_to_baseline_flagged() {
        let table = ProfileTable::builtin();
        let profile = table.profile(RelationId::PersonHasSpouse);
        let cands = vec![
            candidate("Q600001", "Mary Smith", "American actress", 0),
            candidate("Q600002", "Mary Smith", "British chemist", 1),
        ];
        let search = search_with(&[("Mary Smith", cands)]);
        // Q999999 is not in the candidate set, twice.
        let llm = ScriptedLlm::new(&["Q999999", "still Q999999, sorry"]);
        let outcomes = map_objects(
            &["Mary Smith".to_string()],
            &record(RelationId::PersonHasSpouse),
            profile,
            DisambiguationMode::Improved,
            "q",
            &search,
            &lm_over(&llm),
            &mut Vec::new(),
        )
        .unwrap();
        assert_eq!(*llm.calls.lock().unwrap(), 2);
        assert_eq!(outcomes[0].resolved_qid.as_deref(), Some("Q600001"));
        assert_eq!(
            outcomes[0].error_class,
            Some(MappingErrorClass::SurfaceAmbiguityUnresolved)
        );
    }

    #[test]
    fn keyword_relation_dispatches_from_profile() {
        let table = ProfileTable::builtin();
        let profile = table.profile(RelationId::CountryHasOfficialLanguage);
        let cands = vec![
            candidate("Q121842", "French", "ethnic group", 0),
            candidate("Q150", "French", "Romance language of France", 1),
        ];
        let search = search_with(&[("French", cands)]);
        let llm = ScriptedLlm::new(&[]);
        let outcomes = map_objects(
            &["French".to_string()],
            &record(RelationId::CountryHasOfficialLanguage),
            profile,
            DisambiguationMode::Improved,
            "q",
            &search,
            &lm_over(&llm),
            &mut Vec::new(),
        )
        .unwrap();
        assert_eq!(outcomes[0].resolved_qid.as_deref(), Some("Q150"));
        assert_eq!(outcomes[0].strategy_used, Strategy::Keyword);
    }
}
