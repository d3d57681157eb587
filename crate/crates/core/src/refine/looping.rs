use serde::{Serialize, Serializer};

use super::{
    build_textgrad, is_safe, refine_step, RefineConfig, RefineError, RefineMode, RiskScorer,
    TextGradient,
};
use crate::corpus::CategoryVocab;
use crate::llm_backend::{ChatBackend, ChatMessage};
use crate::risk_model::RiskDistribution;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementStep {
    pub t: usize,
    pub prompt: String,
    pub response: String,
    pub risk: RiskDistribution,
    /// `None` only on a step that was judged safe.
    #[serde(serialize_with = "gradient_text")]
    pub gradient: Option<TextGradient>,
}

fn gradient_text<S: Serializer>(g: &Option<TextGradient>, s: S) -> Result<S::Ok, S::Error> {
    g.as_ref().map(|g| g.text.as_str()).serialize(s)
}

/// Every scored iteration of one prompt, serialized as a JSON array.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(transparent)]
pub struct RefinementTrace {
    pub steps: Vec<RefinementStep>,
}

impl RefinementTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn last(&self) -> Option<&RefinementStep> {
        self.steps.last()
    }

    /// The loop stopped because the last prompt was judged safe.
    pub fn ended_safe(&self) -> bool {
        self.last().is_some_and(|s| s.gradient.is_none())
    }

    pub fn final_prompt(&self) -> Option<&str> {
        self.last().map(|s| s.prompt.as_str())
    }
}

/// A failed loop together with the steps completed before the failure.
#[derive(Debug)]
pub struct RefineFailure {
    pub error: RefineError,
    pub partial: RefinementTrace,
}

impl std::fmt::Display for RefineFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} step(s))", self.error, self.partial.len())
    }
}

impl std::error::Error for RefineFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Generate, score and rewrite until the prompt is safe or `max_iters`
/// rewrites have been spent. At the cap the last unsafe step still carries
/// its gradient; no further rewrite is requested.
pub fn refine_loop(
    prompt: &str,
    target: &dyn ChatBackend,
    refiner: &dyn ChatBackend,
    scorer: &dyn RiskScorer,
    vocab: &CategoryVocab,
    cfg: &RefineConfig,
) -> Result<RefinementTrace, Box<RefineFailure>> {
    let mut trace = RefinementTrace::default();
    let fail = |error: RefineError, trace: RefinementTrace| {
        Box::new(RefineFailure {
            error,
            partial: trace,
        })
    };
    if let Err(e) = cfg.validate() {
        return Err(fail(e, trace));
    }
    if scorer.categories() != vocab.len() {
        let e = RefineError::Vocab {
            expected: vocab.len(),
            actual: scorer.categories(),
        };
        return Err(fail(e, trace));
    }
    let mut current = prompt.to_string();
    for t in 0..=cfg.max_iters {
        let response = match target.complete(&[ChatMessage::user(current.clone())]) {
            Ok(r) => r,
            Err(source) => {
                return Err(fail(
                    RefineError::Backend {
                        role: "target",
                        source,
                    },
                    trace,
                ))
            }
        };
        let risk = match scorer.score(&current, &response) {
            Ok(d) => d,
            Err(e) => return Err(fail(e, trace)),
        };
        if is_safe(&risk, cfg.thresholds.tau) {
            trace.steps.push(RefinementStep {
                t,
                prompt: current,
                response,
                risk,
                gradient: None,
            });
            return Ok(trace);
        }
        let gradient = match cfg.mode {
            RefineMode::Coarse => TextGradient::coarse(),
            RefineMode::FineGrained => {
                match build_textgrad(&risk, vocab, &cfg.thresholds, &cfg.template) {
                    Ok(g) => g,
                    Err(e) => return Err(fail(e, trace)),
                }
            }
        };
        let next = if t < cfg.max_iters {
            Some(refine_step(
                &current,
                &gradient,
                refiner,
                &cfg.system_prompt,
            ))
        } else {
            None
        };
        trace.steps.push(RefinementStep {
            t,
            prompt: current,
            response,
            risk,
            gradient: Some(gradient),
        });
        match next {
            None => break,
            Some(Ok(p)) => current = p,
            Some(Err(e)) => return Err(fail(e, trace)),
        }
    }
    Ok(trace)
}
