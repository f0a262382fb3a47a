//! Wikipedia page access for the retrieval-augmented setting: plain-text
//! intros via the extracts API and a best-effort flat JSON rendering of the
//! page's Infobox template, plus the snapshot-only IMDb episode-count table.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use serde::Deserialize;

use crate::http::{HttpError, HttpTransport};
use crate::store::{PageStore, StoreError};

pub const DEFAULT_API_URL: &str = "https://en.wikipedia.org/w/api.php";

const KIND_INTRO: &str = "intro";
const KIND_INFOBOX: &str = "infobox";

#[derive(Debug, thiserror::Error)]
pub enum PageError {
    #[error("malformed page payload: {detail}")]
    Malformed { detail: String },
    #[error(transparent)]
    Http(#[from] HttpError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

pub trait PageSource: Send + Sync {
    /// Plain-text introduction (content before the first heading); empty
    /// string when the page is missing.
    fn intro(&self, title: &str) -> Result<String, PageError>;

    /// Infobox fields as a flat JSON object string; `{}` when absent.
    fn infobox_json(&self, title: &str) -> Result<String, PageError>;
}

/// Live fetcher with write-through page cache. Titles that miss are retried
/// once through the site's title search.
pub struct LivePages {
    transport: Arc<dyn HttpTransport>,
    api_url: String,
    cache: Option<Mutex<PageStore>>,
    resolved_titles: Mutex<BTreeMap<String, String>>,
}

impl LivePages {
    pub fn new(transport: Arc<dyn HttpTransport>, api_url: &str, cache: Option<PageStore>) -> Self {
        LivePages {
            transport,
            api_url: api_url.to_string(),
            cache: cache.map(Mutex::new),
            resolved_titles: Mutex::new(BTreeMap::new()),
        }
    }

    fn cached(&self, kind: &str, title: &str) -> Option<String> {
        let cache = self.cache.as_ref()?;
        let store = cache.lock().expect("page cache poisoned");
        store.get(kind, title).map(String::from)
    }

    fn remember(&self, kind: &str, title: &str, text: &str) -> Result<(), PageError> {
        if let Some(cache) = &self.cache {
            let mut store = cache.lock().expect("page cache poisoned");
            store.record(kind, title, text)?;
        }
        Ok(())
    }

    fn fetch_extract(&self, title: &str) -> Result<Option<String>, PageError> {
        let response = self.transport.get(
            &self.api_url,
            &[
                ("action", "query"),
                ("prop", "extracts"),
                ("exintro", "1"),
                ("explaintext", "1"),
                ("redirects", "1"),
                ("format", "json"),
                ("formatversion", "2"),
                ("titles", title),
            ],
        )?;
        let parsed: serde_json::Value =
            serde_json::from_str(&response.body).map_err(|e| PageError::Malformed {
                detail: format!("extract response is not JSON: {e}"),
            })?;
        let page = &parsed["query"]["pages"][0];
        if page["missing"].as_bool() == Some(true) {
            return Ok(None);
        }
        Ok(page["extract"].as_str().map(|s| s.trim().to_string()))
    }

    fn fetch_wikitext(&self, title: &str) -> Result<Option<String>, PageError> {
        let response = self.transport.get(
            &self.api_url,
            &[
                ("action", "query"),
                ("prop", "revisions"),
                ("rvprop", "content"),
                ("rvslots", "main"),
                ("redirects", "1"),
                ("format", "json"),
                ("formatversion", "2"),
                ("titles", title),
            ],
        )?;
        let parsed: serde_json::Value =
            serde_json::from_str(&response.body).map_err(|e| PageError::Malformed {
                detail: format!("revision response is not JSON: {e}"),
            })?;
        let page = &parsed["query"]["pages"][0];
        if page["missing"].as_bool() == Some(true) {
            return Ok(None);
        }
        Ok(page["revisions"][0]["slots"]["main"]["content"]
            .as_str()
            .map(String::from))
    }

    /// On a miss, take the top title-search hit as the page to use.
    fn resolve_title(&self, title: &str) -> Result<Option<String>, PageError> {
        if let Some(hit) = self.resolved_titles.lock().unwrap().get(title) {
            return Ok(Some(hit.clone()));
        }
        let response = self.transport.get(
            &self.api_url,
            &[
                ("action", "query"),
                ("list", "search"),
                ("srsearch", title),
                ("srlimit", "1"),
                ("format", "json"),
                ("formatversion", "2"),
            ],
        )?;
        let parsed: serde_json::Value =
            serde_json::from_str(&response.body).map_err(|e| PageError::Malformed {
                detail: format!("title search response is not JSON: {e}"),
            })?;
        let hit = parsed["query"]["search"][0]["title"].as_str().map(String::from);
        if let Some(resolved) = &hit {
            log::info!("title `{title}` resolved to `{resolved}` via search");
            self.resolved_titles
                .lock()
                .unwrap()
                .insert(title.to_string(), resolved.clone());
        }
        Ok(hit)
    }
}

impl PageSource for LivePages {
    fn intro(&self, title: &str) -> Result<String, PageError> {
        if let Some(hit) = self.cached(KIND_INTRO, title) {
            return Ok(hit);
        }
        let mut text = self.fetch_extract(title)?;
        if text.as_deref().unwrap_or_default().is_empty() {
            if let Some(resolved) = self.resolve_title(title)? {
                if resolved != title {
                    text = self.fetch_extract(&resolved)?;
                }
            }
        }
        let text = text.unwrap_or_default();
        if text.is_empty() {
            log::warn!("no intro found for page `{title}`");
        }
        self.remember(KIND_INTRO, title, &text)?;
        Ok(text)
    }

    fn infobox_json(&self, title: &str) -> Result<String, PageError> {
        if let Some(hit) = self.cached(KIND_INFOBOX, title) {
            return Ok(hit);
        }
        let mut wikitext = self.fetch_wikitext(title)?;
        if wikitext.is_none() {
            if let Some(resolved) = self.resolve_title(title)? {
                if resolved != title {
                    wikitext = self.fetch_wikitext(&resolved)?;
                }
            }
        }
        let json = match wikitext {
            Some(text) => {
                let (json, clean) = extract_infobox_json(&text);
                if !clean {
                    log::warn!("best-effort Infobox parse for `{title}`");
                }
                json
            }
            None => "{}".to_string(),
        };
        self.remember(KIND_INFOBOX, title, &json)?;
        Ok(json)
    }
}

/// Replay source backed by a page store; a missing title degrades to the
/// empty result with a logged miss, matching live missing-page behavior.
pub struct SnapshotPages {
    store: PageStore,
}

impl SnapshotPages {
    pub fn new(store: PageStore) -> Self {
        SnapshotPages { store }
    }

    fn lookup(&self, kind: &str, title: &str, default: &str) -> String {
        match self.store.get(kind, title) {
            Some(text) => text.to_string(),
            None => {
                log::warn!("page snapshot has no `{kind}` entry for `{title}`");
                default.to_string()
            }
        }
    }
}

impl PageSource for SnapshotPages {
    fn intro(&self, title: &str) -> Result<String, PageError> {
        Ok(self.lookup(KIND_INTRO, title, ""))
    }

    fn infobox_json(&self, title: &str) -> Result<String, PageError> {
        Ok(self.lookup(KIND_INFOBOX, title, "{}"))
    }
}

/// Flatten the first `{{Infobox ...}}` template of a page into a JSON
/// object string. Returns the JSON and whether the parse looked clean
/// (balanced braces). Values are de-marked-up best effort: refs and
/// comments dropped, links reduced to their display text, nested templates
/// removed, whitespace collapsed.
pub fn extract_infobox_json(wikitext: &str) -> (String, bool) {
    let lower = wikitext.to_lowercase();
    let start = match lower.find("{{infobox") {
        Some(i) => i,
        None => return ("{}".to_string(), true),
    };
    let bytes: Vec<char> = wikitext.chars().collect();
    let char_start = wikitext[..start].chars().count();

    let mut depth = 0usize;
    let mut end = None;
    let mut i = char_start;
    while i < bytes.len() {
        if bytes[i] == '{' && i + 1 < bytes.len() && bytes[i + 1] == '{' {
            depth += 1;
            i += 2;
        } else if bytes[i] == '}' && i + 1 < bytes.len() && bytes[i + 1] == '}' {
            depth -= 1;
            i += 2;
            if depth == 0 {
                end = Some(i);
                break;
            }
        } else {
            i += 1;
        }
    }
    // Unbalanced markup: take what is there, flagged as a dirty parse.
    let (body_end, clean) = match end {
        Some(e) => (e - 2, true),
        None => (bytes.len(), false),
    };

    let body: String = bytes[char_start + 2..body_end.max(char_start + 2)].iter().collect();
    let mut fields = BTreeMap::new();
    for segment in split_top_level(&body, '|').into_iter().skip(1) {
        if let Some(eq) = segment.find('=') {
            let key = segment[..eq].trim().to_string();
            let value = clean_wikitext_value(&segment[eq + 1..]);
            if !key.is_empty() && !value.is_empty() {
                fields.insert(key, value);
            }
        }
    }
    (
        serde_json::to_string(&fields).expect("string map serializes"),
        clean,
    )
}

/// Split on `separator` at zero `{{ }}` and `[[ ]]` nesting depth.
fn split_top_level(text: &str, separator: char) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut parts = Vec::new();
    let mut current = String::new();
    let mut template_depth = 0usize;
    let mut link_depth = 0usize;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let next = chars.get(i + 1).copied();
        if c == '{' && next == Some('{') {
            template_depth += 1;
            current.push_str("{{");
            i += 2;
        } else if c == '}' && next == Some('}') {
            template_depth = template_depth.saturating_sub(1);
            current.push_str("}}");
            i += 2;
        } else if c == '[' && next == Some('[') {
            link_depth += 1;
            current.push_str("[[");
            i += 2;
        } else if c == ']' && next == Some(']') {
            link_depth = link_depth.saturating_sub(1);
            current.push_str("]]");
            i += 2;
        } else if c == separator && template_depth == 0 && link_depth == 0 {
            parts.push(std::mem::take(&mut current));
            i += 1;
        } else {
            current.push(c);
            i += 1;
        }
    }
    parts.push(current);
    parts
}

fn drop_between(text: &str, open: &str, close: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    loop {
        match rest.to_lowercase().find(&open.to_lowercase()) {
            Some(start) => {
                out.push_str(&rest[..start]);
                match rest[start..].to_lowercase().find(&close.to_lowercase()) {
                    Some(rel_end) => rest = &rest[start + rel_end + close.len()..],
                    None => return out, // unterminated: drop the tail
                }
            }
            None => {
                out.push_str(rest);
                return out;
            }
        }
    }
}

fn drop_nested_templates(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut depth = 0usize;
    let mut i = 0;
    while i < chars.len() {
        let next = chars.get(i + 1).copied();
        if chars[i] == '{' && next == Some('{') {
            depth += 1;
            i += 2;
        } else if chars[i] == '}' && next == Some('}') {
            depth = depth.saturating_sub(1);
            i += 2;
        } else {
            if depth == 0 {
                out.push(chars[i]);
            }
            i += 1;
        }
    }
    out
}

fn reduce_links(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("[[") {
        out.push_str(&rest[..start]);
        match rest[start..].find("]]") {
            Some(rel_end) => {
                let inner = &rest[start + 2..start + rel_end];
                let display = inner.rsplit('|').next().unwrap_or(inner);
                out.push_str(display);
                rest = &rest[start + rel_end + 2..];
            }
            None => {
                rest = &rest[start + 2..];
            }
        }
    }
    out.push_str(rest);
    out
}

fn clean_wikitext_value(raw: &str) -> String {
    let text = drop_between(raw, "<!--", "-->");
    let text = drop_between(&text, "<ref", "</ref>");
    let text = drop_between(&text, "<ref", "/>");
    let text = drop_nested_templates(&text);
    let text = reduce_links(&text);
    let text = text.replace("'''", "").replace("''", "");
    // <br> variants act as separators in list-ish fields.
    let text = text
        .replace("<br/>", ", ")
        .replace("<br />", ", ")
        .replace("<br>", ", ");
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Snapshot-only IMDb episode counts keyed by subject QID. This artifact
/// never scrapes IMDb live; the table is checked-in data.
#[derive(Debug, Default)]
pub struct ImdbTable {
    by_qid: BTreeMap<String, String>,
}

#[derive(Debug, Deserialize)]
struct ImdbRecord {
    subject_qid: String,
    episode_count: serde_json::Value,
}

impl ImdbTable {
    pub fn empty() -> Self {
        ImdbTable::default()
    }

    pub fn load(path: &std::path::Path) -> Result<Self, StoreError> {
        let text = std::fs::read_to_string(path).map_err(|source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut by_qid = BTreeMap::new();
        for (index, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: ImdbRecord =
                serde_json::from_str(line).map_err(|e| StoreError::Parse {
                    path: path.to_path_buf(),
                    line: index + 1,
                    detail: e.to_string(),
                })?;
            let count = match &record.episode_count {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            by_qid.insert(record.subject_qid, count);
        }
        Ok(ImdbTable { by_qid })
    }

    pub fn episode_count(&self, subject_qid: &str) -> Option<&str> {
        self.by_qid.get(subject_qid).map(String::as_str)
    }
}
