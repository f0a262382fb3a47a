//! Parsing of raw model replies into clean object-string lists.
//!
//! Replies are asked for as a bracketed, double-quoted list literal, but real
//! outputs wrap the list in prose, code fences, or single quotes. The parser
//! extracts the first bracketed span with quote-aware scanning and is total:
//! it never panics, returning a distinguished failure value instead.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

/// No bracketed list literal could be found in the reply.
///
/// The raw text is retained so the row can be logged and scored as an empty
/// prediction instead of being dropped.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no bracketed list literal found in model reply")]
pub struct ParseFailure {
    pub raw: String,
}

/// Extract the first bracketed list literal from `raw`.
///
/// Both `'` and `"` are accepted as element delimiters, unquoted atoms are
/// taken verbatim, elements are trimmed of outer whitespace, duplicates are
/// preserved, and empty-string elements are dropped, so `[""]` and `[]` both
/// yield the empty list. Nested lists are not interpreted; an inner bracket
/// only affects where the outer span closes.
pub fn parse_object_list(raw: &str) -> Result<Vec<String>, ParseFailure> {
    let chars: Vec<char> = raw.chars().collect();
    let start = match chars.iter().position(|&c| c == '[') {
        Some(i) => i,
        None => return Err(ParseFailure { raw: raw.to_string() }),
    };

    let mut depth = 0usize;
    let mut quote: Option<char> = None;
    let mut escaped = false;
    let mut end = None;
    for (i, &c) in chars.iter().enumerate().skip(start) {
        if let Some(q) = quote {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == q {
                quote = None;
            }
            continue;
        }
        match c {
            '\'' | '"' => quote = Some(c),
            '[' => depth += 1,
            ']' => {
                depth -= 1;
                if depth == 0 {
                    end = Some(i);
                    break;
                }
            }
            _ => {}
        }
    }
    let end = match end {
        Some(i) => i,
        None => return Err(ParseFailure { raw: raw.to_string() }),
    };

    let body = &chars[start + 1..end];
    let mut elements = Vec::new();
    let mut current = String::new();
    let mut depth = 0usize;
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for &c in body {
        if let Some(q) = quote {
            current.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == q {
                quote = None;
            }
            continue;
        }
        match c {
            '\'' | '"' => {
                quote = Some(c);
                current.push(c);
            }
            '[' => {
                depth += 1;
                current.push(c);
            }
            ']' => {
                depth = depth.saturating_sub(1);
                current.push(c);
            }
            ',' if depth == 0 => {
                elements.push(core::mem::take(&mut current));
                current = String::new();
            }
            _ => current.push(c),
        }
    }
    elements.push(current);

    Ok(elements
        .iter()
        .map(|e| unquote_element(e))
        .filter(|e| !e.is_empty())
        .collect())
}

fn unquote_element(element: &str) -> String {
    let t = element.trim();
    let mut chars = t.chars();
    let (first, last) = (chars.next(), chars.next_back());
    if t.chars().count() >= 2 && first == last && matches!(first, Some('"') | Some('\'')) {
        let inner: &str = &t[1..t.len() - 1];
        let mut out = String::with_capacity(inner.len());
        let mut escaped = false;
        for c in inner.chars() {
            if escaped {
                out.push(c);
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else {
                out.push(c);
            }
        }
        out.trim().to_string()
    } else {
        t.to_string()
    }
}

/// Canonicalize one number-valued element: take the first digit run (commas
/// between digits allowed) and strip leading zeros. Returns `None` when the
/// element contains no digits.
pub fn normalize_numeric(raw: &str) -> Option<String> {
    let chars: Vec<char> = raw.chars().collect();
    let start = chars.iter().position(|c| c.is_ascii_digit())?;
    let mut digits = String::new();
    let mut i = start;
    while i < chars.len() {
        let c = chars[i];
        if c.is_ascii_digit() {
            digits.push(c);
            i += 1;
        } else if c == ',' && i + 1 < chars.len() && chars[i + 1].is_ascii_digit() {
            i += 1;
        } else {
            break;
        }
    }
    let trimmed = digits.trim_start_matches('0');
    Some(if trimmed.is_empty() { "0".to_string() } else { trimmed.to_string() })
}

/// Render labels in the canonical bracketed form used for few-shot answers
/// and fixtures; the empty list renders as `[""]`.
pub fn render_object_list(labels: &[String]) -> String {
    if labels.is_empty() {
        return "[\"\"]".to_string();
    }
    let mut out = String::from("[");
    for (i, label) in labels.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push('"');
        out.push_str(label);
        out.push('"');
    }
    out.push(']');
    out
}
