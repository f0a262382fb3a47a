//! Assembly of per-row context bundles according to the relation's policy.

use kbprobe_core::context::{ContextBundle, ExtraSource};
use kbprobe_core::record::QueryRecord;
use kbprobe_core::relation::{ContextPolicy, RelationProfile};

use crate::wikipedia::{ImdbTable, PageError, PageSource};

/// Fetch and compose the context bundle for one row.
///
/// All policies start from the subject page's intro and Infobox. The
/// admin-division policy additionally pulls the "Administrative Division of
/// {subject}" page intro; the IMDb policy appends the episode-count snippet
/// from the checked-in table, prefaced by the label "IMDb". All sources
/// empty yields an empty bundle; the prompting stage handles that case.
pub fn assemble_context(
    record: &QueryRecord,
    profile: &RelationProfile,
    pages: &dyn PageSource,
    imdb: &ImdbTable,
    budget_chars: usize,
) -> Result<ContextBundle, PageError> {
    if profile.context_policy == ContextPolicy::None {
        return Ok(ContextBundle::compose("", "{}", None, Vec::new(), budget_chars));
    }

    let title = record.subject_label.clone();
    let intro = pages.intro(&title)?;
    let infobox = pages.infobox_json(&title)?;
    let mut source_titles = vec![title.clone()];

    let extra = match profile.context_policy {
        ContextPolicy::WikipediaAdminDivision => {
            let admin_title = format!("Administrative Division of {}", record.subject_label);
            let admin_intro = pages.intro(&admin_title)?;
            source_titles.push(admin_title.clone());
            Some(ExtraSource { label: admin_title, text: admin_intro })
        }
        ContextPolicy::WikipediaPlusImdb => {
            let text = match imdb.episode_count(&record.subject_qid) {
                Some(count) => format!("Number of episodes: {count}"),
                None => {
                    log::warn!(
                        "no IMDb episode count for {} ({})",
                        record.subject_label,
                        record.subject_qid
                    );
                    String::new()
                }
            };
            source_titles.push("IMDb".to_string());
            Some(ExtraSource { label: "IMDb".to_string(), text })
        }
        _ => None,
    };

    Ok(ContextBundle::compose(
        &intro,
        &infobox,
        extra,
        source_titles,
        budget_chars,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::PageStore;
    use crate::wikipedia::SnapshotPages;
    use kbprobe_core::relation::{ProfileTable, RelationId};

    fn record(subject: &str, qid: &str, relation: RelationId) -> QueryRecord {
        QueryRecord {
            subject_label: subject.to_string(),
            subject_qid: qid.to_string(),
            relation,
        }
    }

    #[test]
    fn admin_division_policy_pulls_extra_page() {
        let mut store = PageStore::in_memory();
        store.record("intro", "Examplestan", "Examplestan is a country.").unwrap();
        store
            .record("infobox", "Examplestan", r#"{"capital":"Alpha City"}"#)
            .unwrap();
        store
            .record(
                "intro",
                "Administrative Division of Examplestan",
                "Examplestan has nine provinces.",
            )
            .unwrap();
        let pages = SnapshotPages::new(store);
        let table = ProfileTable::builtin();
        let bundle = assemble_context(
            &record("Examplestan", "Q1", RelationId::CountryHasStates),
            table.profile(RelationId::CountryHasStates),
            &pages,
            &ImdbTable::empty(),
            6000,
        )
        .unwrap();
        assert!(bundle
            .source_titles
            .contains(&"Administrative Division of Examplestan".to_string()));
        assert!(bundle.rendered.contains("nine provinces"));
        assert!(bundle.rendered.contains("capital"));
    }

    #[test]
    fn imdb_policy_prefaces_snippet_with_label() {
        let mut store = PageStore::in_memory();
        store.record("intro", "Some Show", "Some Show is a series.").unwrap();
        let pages = SnapshotPages::new(store);
        let dir = tempfile::tempdir().unwrap();
        let imdb_path = dir.path().join("imdb.jsonl");
        std::fs::write(&imdb_path, "{\"subject_qid\":\"Q886\",\"episode_count\":62}\n").unwrap();
        let imdb = ImdbTable::load(&imdb_path).unwrap();
        let table = ProfileTable::builtin();
        let bundle = assemble_context(
            &record("Some Show", "Q886", RelationId::SeriesHasNumberOfEpisodes),
            table.profile(RelationId::SeriesHasNumberOfEpisodes),
            &pages,
            &imdb,
            6000,
        )
        .unwrap();
        let extra = bundle.extra_source.as_ref().unwrap();
        assert_eq!(extra.label, "IMDb");
        assert!(bundle.rendered.contains("IMDb: Number of episodes: 62"));
    }

    #[test]
    fn unknown_page_gives_empty_untruncated_bundle() {
        let pages = SnapshotPages::new(PageStore::in_memory());
        let table = ProfileTable::builtin();
        let bundle = assemble_context(
            &record("Ghost Page", "Q9", RelationId::CountryBordersCountry),
            table.profile(RelationId::CountryBordersCountry),
            &pages,
            &ImdbTable::empty(),
            6000,
        )
        .unwrap();
        assert!(bundle.is_empty());
        assert!(!bundle.truncated);
    }
}
