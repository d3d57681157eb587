//! Deterministic stand-ins for the refiner, target and judge models.

use std::collections::BTreeMap;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use super::{BackendError, ChatMessage, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockKind {
    /// Returns the last user message verbatim.
    Echo,
    /// Deletes the banned substrings of every category named in the gradient.
    KeywordRefiner,
    /// Returns `RESPONSE(<first 40 chars of the prompt>)`.
    TemplateTarget,
    /// Returns the canned output.
    RubricJudge,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockSpec {
    pub kind: MockKind,
    /// Category name to lowercase banned substrings.
    #[serde(default)]
    pub keywords: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub canned: Option<String>,
}

impl MockSpec {
    pub fn new(kind: MockKind) -> Self {
        Self {
            kind,
            keywords: BTreeMap::new(),
            canned: None,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        for (category, words) in &self.keywords {
            if words.is_empty() {
                return Err(BackendError::Mock(format!(
                    "category {category:?} has an empty keyword list"
                )));
            }
            if let Some(w) = words
                .iter()
                .find(|w| w.is_empty() || w.to_lowercase() != **w)
            {
                return Err(BackendError::Mock(format!(
                    "keyword {w:?} of {category:?} must be non-empty and lowercase"
                )));
            }
        }
        if self.kind == MockKind::RubricJudge && self.canned.is_none() {
            return Err(BackendError::Mock(
                "rubric_judge needs a canned output".into(),
            ));
        }
        Ok(())
    }
}

fn last_user(messages: &[ChatMessage]) -> Result<&str, BackendError> {
    messages
        .iter()
        .rev()
        .find(|m| m.role == Role::User)
        .map(|m| m.content.as_str())
        .ok_or_else(|| BackendError::Mock("no user message".into()))
}

const PROMPT_HEAD: &str = "PROMPT:\n";
const GRADIENT_HEAD: &str = "\n\nRISK GRADIENT:\n";
const TAIL: &str = "\n\nRewrite the prompt now.";

fn split_refiner_message(content: &str) -> Result<(&str, &str), BackendError> {
    let drift = || BackendError::Mock("refiner message does not match the expected layout".into());
    let body = content
        .strip_prefix(PROMPT_HEAD)
        .and_then(|rest| rest.strip_suffix(TAIL))
        .ok_or_else(drift)?;
    let cut = body.rfind(GRADIENT_HEAD).ok_or_else(drift)?;
    Ok((&body[..cut], &body[cut + GRADIENT_HEAD.len()..]))
}

fn keyword_refine(spec: &MockSpec, content: &str) -> Result<String, BackendError> {
    let (prompt, gradient) = split_refiner_message(content)?;
    let category = Regex::new(r#"category="([^"]*)""#).expect("static regex");
    let mut cleaned = prompt.to_string();
    for caps in category.captures_iter(gradient) {
        let Some(words) = spec.keywords.get(&caps[1]) else {
            continue;
        };
        for word in words {
            let pattern = RegexBuilder::new(&regex::escape(word))
                .case_insensitive(true)
                .build()
                .map_err(|e| BackendError::Mock(e.to_string()))?;
            cleaned = pattern.replace_all(&cleaned, "").into_owned();
        }
    }
    while cleaned.contains("  ") {
        cleaned = cleaned.replace("  ", " ");
    }
    Ok(cleaned)
}

/// Pure function of `(messages, spec)`.
pub fn mock_complete(messages: &[ChatMessage], spec: &MockSpec) -> Result<String, BackendError> {
    if messages.is_empty() {
        return Err(BackendError::NoMessages);
    }
    match spec.kind {
        MockKind::Echo => Ok(last_user(messages)?.to_string()),
        MockKind::KeywordRefiner => keyword_refine(spec, last_user(messages)?),
        MockKind::TemplateTarget => {
            let prompt: String = last_user(messages)?.chars().take(40).collect();
            Ok(format!("RESPONSE({prompt})"))
        }
        MockKind::RubricJudge => spec
            .canned
            .clone()
            .ok_or_else(|| BackendError::Mock("rubric_judge needs a canned output".into())),
    }
}
