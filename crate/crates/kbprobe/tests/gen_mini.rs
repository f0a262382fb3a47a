//! Generator for the bundled mini fixture set (21 relations x 5 subjects)
//! under `tests/data/mini/`. The set is committed; rerun this only when
//! prompts, templates, or the digest scheme change:
//!
//! ```text
//! cargo test -p kbprobe --test gen_mini -- --ignored
//! ```
//!
//! Everything is derived through the library's own prompt builders and
//! digest function, so fixtures always match what the pipeline will ask
//! for. Ground truth is derived from a replay run of the generated data
//! with per-row perturbations, giving the mini report non-trivial scores.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use kbprobe::contextsrc::assemble_context;
use kbprobe::dataset;
use kbprobe::llm::{cache_key, ChatRequest};
use kbprobe::pipeline;
use kbprobe::store::{CandidateStore, FixtureStore, PageStore};
use kbprobe::wikidata::DEFAULT_LIMIT;
use kbprobe::wikipedia::{ImdbTable, SnapshotPages};
use kbprobe_core::disambig::{
    build_lm_retry_messages, build_lm_selection_messages, Candidate, DisambiguationMode,
};
use kbprobe_core::parse::parse_object_list;
use kbprobe_core::prompt::{
    build_context_followup_prompt, build_question_prompt, select_few_shot, ChatMessage,
    PromptSetting, TemplateSet,
};
use kbprobe_core::record::{GroundTruthRecord, QueryRecord};
use kbprobe_core::relation::{ProfileTable, RelationId, Strategy, ValueKind};

use common::MINI_MODEL;

const SUBJECTS: usize = 5;
const TRAIN_ROWS: usize = 4;

fn relation_index(relation: RelationId) -> usize {
    RelationId::ALL.iter().position(|r| *r == relation).unwrap()
}

fn input_subject(relation: RelationId, j: usize) -> (String, String) {
    let i = relation_index(relation);
    (
        format!("{} Subject {}", relation.as_str(), j + 1),
        format!("Q{}", 700_000 + i * 10 + j),
    )
}

fn train_subject(relation: RelationId, j: usize) -> (String, String) {
    let i = relation_index(relation);
    (
        format!("{} Train {}", relation.as_str(), j + 1),
        format!("Q{}", 800_000 + i * 10 + j),
    )
}

/// Scripted step-one (and question-setting) reply per row. Defaults are
/// prose-wrapped two-element lists; the special cases exercise the case,
/// keyword, and LM strategies plus parser and empty-answer edge cases.
fn question_reply(relation: RelationId, j: usize) -> String {
    use RelationId::*;
    match (relation, j) {
        (CompoundHasParts, 0) => r#"["mercury", "sulfur"]"#.to_string(),
        (CountryHasOfficialLanguage, 0) => r#"["French"]"#.to_string(),
        (PersonHasSpouse, 0) => r#"["Mary Smith"]"#.to_string(),
        (PersonHasSpouse, 1) => r#"["John Ambiguous"]"#.to_string(),
        (CompanyHasParentOrganisation, 0) => r#"["Stale Parent Co"]"#.to_string(),
        (CompanyHasParentOrganisation, 1) => r#"[""]"#.to_string(),
        (PersonHasPlaceOfDeath, 2) => r#"[""]"#.to_string(),
        (PersonHasEmployer, 4) => "I'm really not sure about this one.".to_string(),
        (BandHasMember, 1) => "```json\n[\"Alice Axton\", \"Bob Breeze\"]\n```".to_string(),
        (CityLocatedAtRiver, 2) => "['River Alpha']".to_string(),
        (PersonHasProfession, 3) => r#"["zzqx17"]"#.to_string(),
        (PersonHasNumberOfChildren, _) => {
            [r#"["3"]"#, r#"["about 4"]"#, r#"["0"]"#, r#"["two"]"#, r#"["5"]"#][j].to_string()
        }
        (SeriesHasNumberOfEpisodes, _) => {
            [r#"["62"]"#, r#"["100 episodes"]"#, r#"["24"]"#, r#"["8"]"#, r#"["13"]"#][j]
                .to_string()
        }
        _ => format!(
            "Sure! Here is the list: [\"{rel} Object {n}A\", \"{rel} Object {n}B\"]",
            rel = relation.as_str(),
            n = j + 1
        ),
    }
}

/// Step-two replies mostly repeat step one; the parent-organisation row
/// demonstrates context overriding stale model knowledge.
fn context_reply(relation: RelationId, j: usize) -> String {
    match (relation, j) {
        (RelationId::CompanyHasParentOrganisation, 0) => r#"["Fresh Parent Co"]"#.to_string(),
        _ => question_reply(relation, j),
    }
}

/// Disambiguation replies for the two deliberately ambiguous labels.
/// `None` retry means the first reply is valid.
fn lm_replies(label: &str) -> Option<(String, Option<String>)> {
    match label {
        "Mary Smith" => Some(("The best match is Q600002 (British chemist).".to_string(), None)),
        "John Ambiguous" => Some((
            "Q999999".to_string(),
            Some("I still think Q999999 is right.".to_string()),
        )),
        _ => None,
    }
}

fn candidate(qid: &str, label: &str, description: &str, rank: usize) -> Candidate {
    Candidate {
        qid: qid.to_string(),
        label: label.to_string(),
        description: description.to_string(),
        aliases: Vec::new(),
        rank,
    }
}

fn special_candidates(label: &str) -> Option<Vec<Candidate>> {
    match label {
        "mercury" => Some(vec![
            candidate("Q308", "Mercury", "first planet from the Sun", 0),
            candidate("Q925", "mercury", "chemical element with symbol Hg and atomic number 80", 1),
        ]),
        "sulfur" => Some(vec![candidate("Q682", "sulfur", "chemical element with symbol S", 0)]),
        "French" => Some(vec![
            candidate("Q121842", "French", "ethnic group native to France", 0),
            candidate("Q150", "French", "Romance language originating in France", 1),
        ]),
        "Mary Smith" => Some(vec![
            candidate("Q600001", "Mary Smith", "American actress", 0),
            candidate("Q600002", "Mary Smith", "British chemist", 1),
        ]),
        "John Ambiguous" => Some(vec![
            candidate("Q600003", "John Ambiguous", "association football player", 0),
            candidate("Q600004", "John Ambiguous", "politician", 1),
        ]),
        "zzqx17" => Some(Vec::new()),
        _ => None,
    }
}

fn write_lines(path: &Path, lines: &[String]) {
    std::fs::write(path, lines.join("\n") + "\n").unwrap();
}

fn generate() {
    let mini = common::mini_dir();
    std::fs::create_dir_all(&mini).unwrap();
    for name in [
        "input.jsonl",
        "train.jsonl",
        "truth.jsonl",
        "fixtures.jsonl",
        "candidates.jsonl",
        "pages.jsonl",
        "imdb.jsonl",
    ] {
        let _ = std::fs::remove_file(mini.join(name));
    }

    let templates = TemplateSet::builtin();
    let profiles = ProfileTable::builtin();

    // Input split: 21 relations x 5 subjects.
    let mut input_rows = Vec::new();
    let mut input_lines = Vec::new();
    for relation in RelationId::ALL {
        for j in 0..SUBJECTS {
            let (label, qid) = input_subject(relation, j);
            let record = QueryRecord {
                subject_label: label,
                subject_qid: qid,
                relation,
            };
            input_lines.push(serde_json::to_string(&record).unwrap());
            input_rows.push(record);
        }
    }
    write_lines(&mini.join("input.jsonl"), &input_lines);

    // Train split: 4 rows per relation; nullable relations get one
    // empty-answer row at the highest QID so few-shot selection swaps it in.
    let mut train_rows = Vec::new();
    for relation in RelationId::ALL {
        let i = relation_index(relation);
        let nullable = profiles.profile(relation).nullable == Some(true);
        for j in 0..TRAIN_ROWS {
            let (label, qid) = train_subject(relation, j);
            let (object_labels, object_ids) = if nullable && j == TRAIN_ROWS - 1 {
                (Vec::new(), Vec::new())
            } else {
                (
                    vec![format!("{} Example {}", relation.as_str(), j + 1)],
                    vec![format!("Q{}", 850_000 + i * 10 + j)],
                )
            };
            train_rows.push(GroundTruthRecord {
                subject_label: label,
                subject_qid: qid,
                relation,
                object_labels,
                object_ids,
            });
        }
    }
    dataset::write_prediction_rows(&mini.join("train.jsonl"), &train_rows).unwrap();

    // Candidate store: one entry per distinct predicted label of an
    // entity-valued relation; special labels carry the ambiguity cases.
    let mut labels_by_relation: BTreeSet<(RelationId, String)> = BTreeSet::new();
    for relation in RelationId::ALL {
        if profiles.profile(relation).value_kind == ValueKind::Numeric {
            continue;
        }
        for j in 0..SUBJECTS {
            for reply in [question_reply(relation, j), context_reply(relation, j)] {
                for label in parse_object_list(&reply).unwrap_or_default() {
                    labels_by_relation.insert((relation, label));
                }
            }
        }
    }
    let mut candidate_store = CandidateStore::open_or_create(&mini.join("candidates.jsonl")).unwrap();
    let mut assigned = BTreeMap::new();
    let mut next_qid = 900_000u64;
    for (_, label) in &labels_by_relation {
        if assigned.contains_key(label) {
            continue;
        }
        let cands = match special_candidates(label) {
            Some(cands) => cands,
            None => {
                let qid = format!("Q{next_qid}");
                next_qid += 1;
                vec![candidate(&qid, label, &format!("test entity for {label}"), 0)]
            }
        };
        candidate_store.record(label, DEFAULT_LIMIT, &cands).unwrap();
        assigned.insert(label.clone(), ());
    }

    // Page snapshots: every subject page, the admin-division pages, and
    // the IMDb table feeding the relation-specific context policies.
    let mut page_store = PageStore::open_or_create(&mini.join("pages.jsonl")).unwrap();
    for record in &input_rows {
        let subject = &record.subject_label;
        let intro = if record.relation == RelationId::CompanyHasParentOrganisation {
            format!(
                "{subject} is a company. Recent filings say its parent organisation is Fresh Parent Co."
            )
        } else {
            format!("{subject} is a test entity. This intro exists to give the context setting deterministic material about {subject}.")
        };
        page_store.record("intro", subject, &intro).unwrap();
        page_store
            .record(
                "infobox",
                subject,
                &format!("{{\"name\":\"{subject}\",\"kind\":\"{}\"}}", record.relation.as_str()),
            )
            .unwrap();
        if record.relation == RelationId::CountryHasStates {
            let admin = format!("Administrative Division of {subject}");
            page_store
                .record("intro", &admin, &format!("{subject} is divided into several provinces."))
                .unwrap();
        }
    }
    drop(page_store);

    let imdb_lines: Vec<String> = (0..SUBJECTS)
        .map(|j| {
            let (_, qid) = input_subject(RelationId::SeriesHasNumberOfEpisodes, j);
            let count = [62, 100, 24, 8, 13][j];
            format!("{{\"subject_qid\":\"{qid}\",\"episode_count\":{count}}}")
        })
        .collect();
    write_lines(&mini.join("imdb.jsonl"), &imdb_lines);

    // Reply fixtures: question-setting (shared by the context setting's
    // first step), the context follow-up, and the LM selection exchanges.
    let pages = SnapshotPages::new(PageStore::load(&mini.join("pages.jsonl")).unwrap());
    let imdb = ImdbTable::load(&mini.join("imdb.jsonl")).unwrap();
    let candidates = CandidateStore::load(&mini.join("candidates.jsonl")).unwrap();
    let mut fixtures = FixtureStore::open_or_create(&mini.join("fixtures.jsonl")).unwrap();
    let request = |messages: Vec<ChatMessage>| ChatRequest {
        model: MINI_MODEL.to_string(),
        messages,
        temperature: 0.0,
        max_output_tokens: 512,
    };

    for record in &input_rows {
        let relation = record.relation;
        let j = record
            .subject_qid
            .trim_start_matches('Q')
            .parse::<usize>()
            .unwrap()
            % 10;
        let profile = profiles.profile(relation);
        let examples = select_few_shot(
            &train_rows,
            relation,
            3,
            PromptSetting::Question,
            &templates,
            profile.nullable == Some(true),
        )
        .unwrap();

        let step_one = build_question_prompt(record, &examples, &templates, None);
        let reply_one = question_reply(relation, j);
        fixtures
            .record(&cache_key(&request(step_one.messages.clone())), &reply_one)
            .unwrap();

        let bundle = assemble_context(record, profile, &pages, &imdb, 6000).unwrap();
        let followup = build_context_followup_prompt(&step_one, &bundle.rendered, &reply_one);
        fixtures
            .record(&cache_key(&request(followup.messages.clone())), &context_reply(relation, j))
            .unwrap();

        // LM selection fixtures for ambiguous labels under the lm strategy.
        if profile.disambiguation == Strategy::Lm {
            let mut labels = parse_object_list(&reply_one).unwrap_or_default();
            labels.extend(parse_object_list(&context_reply(relation, j)).unwrap_or_default());
            labels.dedup();
            for label in labels {
                let cands = candidates.get(&label, DEFAULT_LIMIT).unwrap().to_vec();
                if cands.len() < 2 {
                    continue;
                }
                let (first_reply, retry_reply) =
                    lm_replies(&label).expect("ambiguous label needs scripted replies");
                let question_text = templates.render(relation, &record.subject_label);
                let selection = build_lm_selection_messages(&question_text, &label, &cands);
                fixtures
                    .record(&cache_key(&request(selection.clone())), &first_reply)
                    .unwrap();
                if let Some(second) = retry_reply {
                    let retry = build_lm_retry_messages(&selection, &first_reply);
                    fixtures.record(&cache_key(&request(retry)), &second).unwrap();
                }
            }
        }
    }
    drop(fixtures);

    // Ground truth: replay the generated set once, then perturb per row so
    // the report has aligned rows, recall misses, and precision misses.
    let scratch = tempfile::tempdir().unwrap();
    let mut config = common::mini_config(
        scratch.path().to_path_buf(),
        PromptSetting::Question,
        DisambiguationMode::Improved,
    );
    config.truth = None;
    let outcome = pipeline::run(&config).unwrap();
    let predictions = dataset::load_prediction_rows(&outcome.predictions_path).unwrap();

    let mut truth_rows = Vec::new();
    for (index, prediction) in predictions.iter().enumerate() {
        let i = relation_index(prediction.relation);
        let j = index % SUBJECTS;
        let numeric = profiles.profile(prediction.relation).value_kind == ValueKind::Numeric;
        // Unresolved slots never belong in ground truth.
        let mut pairs: Vec<(String, String)> = prediction
            .object_labels
            .iter()
            .cloned()
            .zip(prediction.object_ids.iter().cloned())
            .filter(|(_, id)| !id.is_empty())
            .collect();
        match j {
            3 => {
                let extra_id =
                    if numeric { format!("41{i}") } else { format!("Q{}", 777_000 + i) };
                pairs.push((format!("Extra {}", prediction.relation.as_str()), extra_id));
            }
            4 => {
                let alt_id = if numeric { format!("88{i}") } else { format!("Q{}", 888_000 + i) };
                let alt = (format!("Alt {}", prediction.relation.as_str()), alt_id);
                if pairs.is_empty() {
                    pairs.push(alt);
                } else {
                    pairs[0] = alt;
                }
            }
            _ => {}
        }
        truth_rows.push(GroundTruthRecord {
            subject_label: prediction.subject_label.clone(),
            subject_qid: prediction.subject_qid.clone(),
            relation: prediction.relation,
            object_labels: pairs.iter().map(|(l, _)| l.clone()).collect(),
            object_ids: pairs.iter().map(|(_, id)| id.clone()).collect(),
        });
    }
    dataset::write_prediction_rows(&mini.join("truth.jsonl"), &truth_rows).unwrap();

    println!(
        "generated mini set: {} input rows, {} train rows, {} truth rows",
        input_rows.len(),
        train_rows.len(),
        truth_rows.len()
    );
}

#[test]
#[ignore = "regenerates the committed mini fixture set under tests/data/mini"]
fn regenerate_mini_fixture_set() {
    generate();
}
