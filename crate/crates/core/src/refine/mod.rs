//! Risk-guided prompt refinement: effort grading, textual gradients and the
//! iterative rewrite loop.

mod looping;
mod scorer;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CategoryVocab;
use crate::llm_backend::{BackendError, ChatBackend, ChatMessage};
use crate::risk_model::{ModelError, RiskDistribution};

pub use looping::{refine_loop, RefineFailure, RefinementStep, RefinementTrace};
pub use scorer::{KeywordScorer, ModelScorer, RiskScorer, RiskSource};

pub const DEFAULT_SYSTEM_PROMPT: &str = "You are an expert AI Safety Optimizer. Rewrite the given prompt to eliminate the identified risks while preserving the user's benign intent, style, and specificity. Output only the rewritten prompt.";

/// Generic instruction used instead of the per-category gradient in coarse mode.
pub const COARSE_GRADIENT: &str =
    "This prompt may be unsafe. Rewrite it to be safe while preserving intent.";

pub const DEFAULT_LINE_FORMAT: &str =
    "[RISK] category=\"{name}\"; intensity={intensity}; effort={effort}; instruction={instruction}";

#[derive(Debug, Error)]
pub enum RefineError {
    #[error("invalid refine config: {0}")]
    Config(String),
    #[error("risk vector has {actual} entries but the vocabulary has {expected}")]
    Vocab { expected: usize, actual: usize },
    #[error("refusing to refine with an empty gradient")]
    EmptyGradient,
    #[error("refiner returned an empty prompt")]
    EmptyCompletion,
    #[error("{role} backend: {source}")]
    Backend {
        role: &'static str,
        #[source]
        source: BackendError,
    },
    #[error("scoring failed: {0}")]
    Scorer(#[from] ModelError),
    #[error("scorer produced an invalid risk vector: {0}")]
    Risk(#[from] crate::risk_model::InvalidRisk),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskThresholds {
    /// Refinement gate: category `j` is risky when `d_j >= tau`.
    pub tau: f64,
    pub tau_low: f64,
    pub tau_high: f64,
}

impl Default for RiskThresholds {
    fn default() -> Self {
        Self {
            tau: 0.3,
            tau_low: 0.5,
            tau_high: 0.8,
        }
    }
}

impl RiskThresholds {
    pub fn validate(&self) -> Result<(), RefineError> {
        let ok = 0.0 < self.tau
            && self.tau <= self.tau_low
            && self.tau_low <= self.tau_high
            && self.tau_high < 1.0;
        if ok {
            Ok(())
        } else {
            Err(RefineError::Config(format!(
                "thresholds must satisfy 0 < tau <= tau_low <= tau_high < 1, got {} / {} / {}",
                self.tau, self.tau_low, self.tau_high
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EffortLevel {
    Minor,
    Mild,
    Critical,
}

impl EffortLevel {
    pub fn label(self) -> &'static str {
        match self {
            Self::Critical => "CRITICAL",
            Self::Mild => "MILD",
            Self::Minor => "MINOR",
        }
    }
}

impl fmt::Display for EffortLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

pub fn effort_of(d: f64, thresholds: &RiskThresholds) -> EffortLevel {
    if d >= thresholds.tau_high {
        EffortLevel::Critical
    } else if d >= thresholds.tau_low {
        EffortLevel::Mild
    } else {
        EffortLevel::Minor
    }
}

/// Ascending indices with `d_j >= tau`.
pub fn risky_set(d: &RiskDistribution, tau: f64) -> Vec<usize> {
    d.as_slice()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v >= tau)
        .map(|(j, _)| j)
        .collect()
}

pub fn is_safe(d: &RiskDistribution, tau: f64) -> bool {
    d.as_slice().iter().all(|&v| v < tau)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradientTemplate {
    /// Placeholders: `{name}`, `{intensity}`, `{effort}`, `{instruction}`.
    pub line: String,
    pub critical: String,
    pub mild: String,
    pub minor: String,
}

impl Default for GradientTemplate {
    fn default() -> Self {
        Self {
            line: DEFAULT_LINE_FORMAT.into(),
            critical: "Remove or fundamentally rewrite all content enabling this risk.".into(),
            mild: "Rephrase the risky elements into a safe, educational framing.".into(),
            minor: "Lightly adjust wording to reduce this risk while preserving intent.".into(),
        }
    }
}

impl GradientTemplate {
    pub fn validate(&self) -> Result<(), RefineError> {
        for key in ["{name}", "{intensity}", "{effort}"] {
            if !self.line.contains(key) {
                return Err(RefineError::Config(format!(
                    "gradient line format lacks the {key} placeholder"
                )));
            }
        }
        Ok(())
    }

    pub fn instruction(&self, effort: EffortLevel) -> &str {
        match effort {
            EffortLevel::Critical => &self.critical,
            EffortLevel::Mild => &self.mild,
            EffortLevel::Minor => &self.minor,
        }
    }

    /// Renders one line. Substitution is single-pass, so placeholder-like
    /// text inside a category name is left as is.
    pub fn render_line(&self, name: &str, intensity: f64, effort: EffortLevel) -> String {
        let intensity = format!("{intensity:.2}");
        let mut out = String::with_capacity(self.line.len() + 96);
        let mut rest = self.line.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let tail = &rest[open..];
            let value = [
                ("{name}", name),
                ("{intensity}", intensity.as_str()),
                ("{effort}", effort.label()),
                ("{instruction}", self.instruction(effort)),
            ]
            .into_iter()
            .find(|(key, _)| tail.starts_with(key));
            match value {
                Some((key, value)) => {
                    out.push_str(value);
                    rest = &tail[key.len()..];
                }
                None => {
                    out.push('{');
                    rest = &tail[1..];
                }
            }
        }
        out.push_str(rest);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientPart {
    pub category: usize,
    pub intensity: f64,
    pub effort: EffortLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextGradient {
    pub text: String,
    /// Exactly the risky set, ascending. Empty for the coarse gradient.
    pub parts: Vec<GradientPart>,
}

impl TextGradient {
    pub fn coarse() -> Self {
        Self {
            text: COARSE_GRADIENT.into(),
            parts: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.text.is_empty()
    }
}

pub fn build_textgrad(
    d: &RiskDistribution,
    vocab: &CategoryVocab,
    thresholds: &RiskThresholds,
    template: &GradientTemplate,
) -> Result<TextGradient, RefineError> {
    if d.len() != vocab.len() {
        return Err(RefineError::Vocab {
            expected: vocab.len(),
            actual: d.len(),
        });
    }
    let parts: Vec<GradientPart> = risky_set(d, thresholds.tau)
        .into_iter()
        .map(|j| {
            let intensity = d.as_slice()[j];
            GradientPart {
                category: j,
                intensity,
                effort: effort_of(intensity, thresholds),
            }
        })
        .collect();
    let text = parts
        .iter()
        .map(|p| template.render_line(&vocab.names()[p.category], p.intensity, p.effort))
        .collect::<Vec<_>>()
        .join("\n");
    Ok(TextGradient { text, parts })
}

pub fn render_refiner_message(prompt: &str, gradient_text: &str) -> String {
    format!("PROMPT:\n{prompt}\n\nRISK GRADIENT:\n{gradient_text}\n\nRewrite the prompt now.")
}

/// One rewrite by the optimizer model.
pub fn refine_step(
    prompt: &str,
    gradient: &TextGradient,
    backend: &dyn ChatBackend,
    system_prompt: &str,
) -> Result<String, RefineError> {
    if gradient.is_empty() {
        return Err(RefineError::EmptyGradient);
    }
    let messages = [
        ChatMessage::system(system_prompt),
        ChatMessage::user(render_refiner_message(prompt, &gradient.text)),
    ];
    let out = backend
        .complete(&messages)
        .map_err(|source| RefineError::Backend {
            role: "refiner",
            source,
        })?;
    let trimmed = out.trim();
    if trimmed.is_empty() {
        return Err(RefineError::EmptyCompletion);
    }
    Ok(trimmed.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefineMode {
    #[default]
    FineGrained,
    Coarse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    pub thresholds: RiskThresholds,
    pub max_iters: usize,
    pub system_prompt: String,
    pub template: GradientTemplate,
    pub mode: RefineMode,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            thresholds: RiskThresholds::default(),
            max_iters: 5,
            system_prompt: DEFAULT_SYSTEM_PROMPT.into(),
            template: GradientTemplate::default(),
            mode: RefineMode::FineGrained,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<(), RefineError> {
        self.thresholds.validate()?;
        self.template.validate()?;
        if self.max_iters == 0 {
            return Err(RefineError::Config("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}
