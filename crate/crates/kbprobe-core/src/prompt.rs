//! Prompt construction for the three probing settings.
//!
//! Question prompts come verbatim from the per-relation template asset with
//! `{subject_entity}` spliced in. Triple prompts present the incomplete
//! triple plus the shared response-format instruction. The context setting
//! is a two-step exchange: the question prompt is asked first, then a
//! follow-up turn embeds the retrieved context and the model's own prior
//! answer. Demonstrations are packaged as alternating user/assistant turns
//! and appear only in the first turn of an exchange.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::parse::render_object_list;
use crate::record::{GroundTruthRecord, QueryRecord};
use crate::relation::RelationId;

/// Default JSON template table compiled into the crate.
pub const BUILTIN_TEMPLATES_JSON: &str = include_str!("../assets/templates.json");

/// The shared response-format sentence appended to triple queries (question
/// templates already carry it).
pub const FORMAT_INSTRUCTION: &str =
    "Format the response as a Python list such as [\"answer_a\", \"answer_b\"].";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub text: String,
}

impl ChatMessage {
    pub fn new(role: Role, text: impl Into<String>) -> Self {
        ChatMessage { role, text: text.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptSetting {
    Question,
    Triple,
    Context,
}

impl PromptSetting {
    pub fn as_str(&self) -> &'static str {
        match self {
            PromptSetting::Question => "question",
            PromptSetting::Triple => "triple",
            PromptSetting::Context => "context",
        }
    }
}

impl core::str::FromStr for PromptSetting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "question" => Ok(PromptSetting::Question),
            "triple" => Ok(PromptSetting::Triple),
            "context" => Ok(PromptSetting::Context),
            other => Err(alloc::format!("unknown prompt setting `{other}`")),
        }
    }
}

/// A fully built message list ready for a chat-completion request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub messages: Vec<ChatMessage>,
    pub setting: PromptSetting,
    pub relation: RelationId,
    pub subject_label: String,
}

/// One demonstration pair drawn from the training split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub query_text: String,
    /// Bracketed double-quoted list literal; `[""]` for empty answers.
    pub answer_text: String,
}

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("subject label is empty for {relation} ({subject_qid})")]
    EmptySubjectLabel {
        relation: RelationId,
        subject_qid: String,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum FewShotError {
    #[error("train split has {available} rows for {relation}, need {needed}")]
    NotEnoughRows {
        relation: RelationId,
        available: usize,
        needed: usize,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum TemplateError {
    #[error("template table is not valid JSON: {0}")]
    Json(String),
    #[error("template table has unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("template table is missing relation `{0}`")]
    MissingRelation(RelationId),
    #[error("template for `{0}` has no {{subject_entity}} placeholder")]
    MissingPlaceholder(RelationId),
}

/// The per-relation question templates, total over the relation enum.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    by_relation: BTreeMap<RelationId, String>,
}

impl TemplateSet {
    pub fn from_json(text: &str) -> Result<TemplateSet, TemplateError> {
        let raw: BTreeMap<String, String> =
            serde_json::from_str(text).map_err(|e| TemplateError::Json(e.to_string()))?;
        let mut by_relation = BTreeMap::new();
        for (name, template) in raw {
            let relation = RelationId::parse(&name)
                .map_err(|e| TemplateError::UnknownRelation(e.name))?;
            if !template.contains("{subject_entity}") {
                return Err(TemplateError::MissingPlaceholder(relation));
            }
            by_relation.insert(relation, template);
        }
        for relation in RelationId::ALL {
            if !by_relation.contains_key(&relation) {
                return Err(TemplateError::MissingRelation(relation));
            }
        }
        Ok(TemplateSet { by_relation })
    }

    pub fn builtin() -> TemplateSet {
        TemplateSet::from_json(BUILTIN_TEMPLATES_JSON)
            .expect("builtin template table must validate")
    }

    /// The question text for a relation with the subject spliced in
    /// literally (plain text substitution, no escaping).
    pub fn render(&self, relation: RelationId, subject_label: &str) -> String {
        self.by_relation
            .get(&relation)
            .expect("table validated total at construction")
            .replace("{subject_entity}", subject_label)
    }
}

/// The incomplete-triple query text, format instruction included.
pub fn triple_query_text(subject_label: &str, relation: RelationId) -> String {
    alloc::format!("{subject_label}, {relation}: {FORMAT_INSTRUCTION}")
}

fn demonstration_messages(examples: &[FewShotExample]) -> Vec<ChatMessage> {
    let mut messages = Vec::with_capacity(examples.len() * 2 + 2);
    for example in examples {
        messages.push(ChatMessage::new(Role::User, example.query_text.clone()));
        messages.push(ChatMessage::new(Role::Assistant, example.answer_text.clone()));
    }
    messages
}

fn assemble(
    system: Option<&str>,
    examples: &[FewShotExample],
    target_text: String,
    setting: PromptSetting,
    record: &QueryRecord,
) -> Prompt {
    let mut messages = Vec::new();
    if let Some(system_text) = system {
        messages.push(ChatMessage::new(Role::System, system_text));
    }
    messages.extend(demonstration_messages(examples));
    messages.push(ChatMessage::new(Role::User, target_text));
    Prompt {
        messages,
        setting,
        relation: record.relation,
        subject_label: record.subject_label.clone(),
    }
}

/// Build a question-setting prompt: demonstrations, then the templated
/// question for the target subject.
pub fn build_question_prompt(
    record: &QueryRecord,
    examples: &[FewShotExample],
    templates: &TemplateSet,
    system: Option<&str>,
) -> Prompt {
    let target = templates.render(record.relation, &record.subject_label);
    assemble(system, examples, target, PromptSetting::Question, record)
}

/// Build a triple-setting prompt. Rejects empty subject labels: an empty
/// triple stem carries no query at all.
pub fn build_triple_prompt(
    record: &QueryRecord,
    examples: &[FewShotExample],
    system: Option<&str>,
) -> Result<Prompt, PromptError> {
    if record.subject_label.trim().is_empty() {
        return Err(PromptError::EmptySubjectLabel {
            relation: record.relation,
            subject_qid: record.subject_qid.clone(),
        });
    }
    let target = triple_query_text(&record.subject_label, record.relation);
    Ok(assemble(system, examples, target, PromptSetting::Triple, record))
}

/// Build the second turn of the context-setting exchange.
///
/// The step-one conversation (demonstrations plus question) is retained, the
/// raw prior reply is appended uninterpreted as an assistant turn, and the
/// follow-up user turn embeds the retrieved context around the original
/// question. An empty `context_text` still yields a well-formed prompt; the
/// caller is expected to log that degenerate case.
pub fn build_context_followup_prompt(
    step_one: &Prompt,
    context_text: &str,
    prior_answer_text: &str,
) -> Prompt {
    let question = step_one
        .messages
        .last()
        .map(|m| m.text.clone())
        .unwrap_or_default();
    let mut messages = step_one.messages.clone();
    messages.push(ChatMessage::new(Role::Assistant, prior_answer_text));
    messages.push(ChatMessage::new(
        Role::User,
        alloc::format!(
            "Given the context: [{context_text}], compared and combined with the previous predictions, {question}"
        ),
    ));
    Prompt {
        messages,
        setting: PromptSetting::Context,
        relation: step_one.relation,
        subject_label: step_one.subject_label.clone(),
    }
}

/// Sort key placing QIDs in ascending numeric order; malformed IDs sort
/// after all well-formed ones, lexicographically.
fn qid_sort_key(qid: &str) -> (u64, String) {
    let numeric = qid
        .strip_prefix('Q')
        .and_then(|digits| digits.parse::<u64>().ok())
        .unwrap_or(u64::MAX);
    (numeric, qid.to_string())
}

/// Deterministically pick `k` demonstration rows for a relation.
///
/// Rule: sort the relation's train rows by subject QID ascending and take
/// the first `k`. For relations known to be nullable, when no selected row
/// has an empty answer and the train split contains one, the last slot is
/// replaced by the first empty-answer row so the empty return format is
/// demonstrated.
pub fn select_few_shot(
    train: &[GroundTruthRecord],
    relation: RelationId,
    k: usize,
    setting: PromptSetting,
    templates: &TemplateSet,
    nullable: bool,
) -> Result<Vec<FewShotExample>, FewShotError> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut rows: Vec<&GroundTruthRecord> =
        train.iter().filter(|r| r.relation == relation).collect();
    if rows.len() < k {
        return Err(FewShotError::NotEnoughRows {
            relation,
            available: rows.len(),
            needed: k,
        });
    }
    rows.sort_by_key(|r| qid_sort_key(&r.subject_qid));

    let mut selected: Vec<&GroundTruthRecord> = rows[..k].to_vec();
    if nullable && !selected.iter().any(|r| r.object_labels.is_empty()) {
        if let Some(empty_row) = rows.iter().find(|r| r.object_labels.is_empty()) {
            selected[k - 1] = empty_row;
        }
    }

    Ok(selected
        .into_iter()
        .map(|row| {
            let query_text = match setting {
                PromptSetting::Triple => triple_query_text(&row.subject_label, relation),
                // The context setting opens with question framing.
                PromptSetting::Question | PromptSetting::Context => {
                    templates.render(relation, &row.subject_label)
                }
            };
            FewShotExample {
                query_text,
                answer_text: render_object_list(&row.object_labels),
            }
        })
        .collect())
}
