//! Assembly of the retrieval-augmented context bundle.
//!
//! Fetching lives in the companion crate; this module owns the pure part:
//! composing intro text, Infobox JSON, and an optional relation-specific
//! extra source into a single rendered string under a character budget.
//! The Infobox and extra source are the densest parts, so they render
//! first and are kept whole; the intro renders last and its tail is the
//! first thing trimmed.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// A relation-specific context addition, e.g. an episode-count snippet
/// labelled "IMDb" or the intro of an "Administrative Division of X" page.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtraSource {
    pub label: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextBundle {
    /// Intro text as used in the rendering, i.e. already trimmed to budget.
    pub intro_text: String,
    /// Flat key-value Infobox serialized as a JSON object string; `{}` when
    /// absent.
    pub infobox_json: String,
    pub extra_source: Option<ExtraSource>,
    pub source_titles: Vec<String>,
    pub truncated: bool,
    /// The final prompt-ready text, never longer than the budget.
    pub rendered: String,
}

impl ContextBundle {
    pub fn is_empty(&self) -> bool {
        self.rendered.is_empty()
    }

    /// Compose a bundle from fetched pieces under `budget_chars`.
    ///
    /// Render order is Infobox, extra source, intro; parts are joined by
    /// blank lines. The intro absorbs whatever budget remains. In the
    /// pathological case where the Infobox and extra source alone exceed
    /// the budget, the rendering is hard-clamped so the length invariant
    /// still holds.
    pub fn compose(
        intro: &str,
        infobox_json: &str,
        extra_source: Option<ExtraSource>,
        source_titles: Vec<String>,
        budget_chars: usize,
    ) -> ContextBundle {
        let mut fixed_parts: Vec<String> = Vec::new();
        let infobox_json = infobox_json.trim().to_string();
        if !infobox_json.is_empty() && infobox_json != "{}" {
            fixed_parts.push(alloc::format!("Infobox: {infobox_json}"));
        }
        if let Some(extra) = &extra_source {
            if !extra.text.is_empty() {
                fixed_parts.push(alloc::format!("{}: {}", extra.label, extra.text));
            }
        }
        let fixed = fixed_parts.join("\n\n");

        let intro = intro.trim();
        let mut truncated = false;
        let rendered;
        let intro_used;
        if intro.is_empty() {
            intro_used = String::new();
            rendered = fixed.clone();
        } else {
            let fixed_len = fixed.chars().count();
            let joiner_len = if fixed.is_empty() { 0 } else { 2 };
            let available = budget_chars.saturating_sub(fixed_len + joiner_len);
            let intro_len = intro.chars().count();
            if intro_len <= available {
                intro_used = intro.to_string();
            } else {
                truncated = true;
                intro_used = intro.chars().take(available).collect();
            }
            rendered = if intro_used.is_empty() {
                fixed.clone()
            } else if fixed.is_empty() {
                intro_used.clone()
            } else {
                alloc::format!("{fixed}\n\n{intro_used}")
            };
        }

        let rendered = if rendered.chars().count() > budget_chars {
            truncated = true;
            rendered.chars().take(budget_chars).collect()
        } else {
            rendered
        };

        ContextBundle {
            intro_text: intro_used,
            infobox_json: if infobox_json.is_empty() { "{}".to_string() } else { infobox_json },
            extra_source,
            source_titles,
            truncated,
            rendered,
        }
    }
}
