use serde::{Deserialize, Serialize};

use super::RefineError;
use crate::corpus::{build_input, featurize, FeaturizerConfig};
use crate::risk_model::{RiskDistribution, RiskModel};

/// Maps a (prompt, response) pair to per-category risk.
pub trait RiskScorer: Send + Sync {
    fn categories(&self) -> usize;
    fn score(&self, prompt: &str, response: &str) -> Result<RiskDistribution, RefineError>;
}

/// Which model output plays the role of `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskSource {
    /// Clamped Beta mean.
    #[default]
    Latent,
    /// Decoded label probabilities `d′`.
    Decoded,
}

/// Trained model behind the hashing featurizer.
#[derive(Debug, Clone)]
pub struct ModelScorer {
    pub model: RiskModel,
    pub featurizer: FeaturizerConfig,
    pub source: RiskSource,
}

impl ModelScorer {
    pub fn new(
        model: RiskModel,
        featurizer: FeaturizerConfig,
        source: RiskSource,
    ) -> Result<Self, RefineError> {
        if featurizer.dim != model.config.input_dim {
            return Err(RefineError::Config(format!(
                "featurizer dim {} does not match model input_dim {}",
                featurizer.dim, model.config.input_dim
            )));
        }
        Ok(Self {
            model,
            featurizer,
            source,
        })
    }

    pub fn score_features(&self, h: &[f64]) -> Result<RiskDistribution, RefineError> {
        Ok(match self.source {
            RiskSource::Latent => self.model.predict_risk(h)?,
            RiskSource::Decoded => RiskDistribution::new(self.model.predict_with_decoded(h)?.1)?,
        })
    }
}

impl RiskScorer for ModelScorer {
    fn categories(&self) -> usize {
        self.model.config.categories
    }

    fn score(&self, prompt: &str, response: &str) -> Result<RiskDistribution, RefineError> {
        let h = featurize(&build_input(prompt, response), &self.featurizer);
        self.score_features(h.as_slice())
    }
}

/// Keyword-count stand-in: `d_j = 1 − 0.95·0.6^{n_j}`, where `n_j` counts
/// case-insensitive occurrences of category `j`'s keywords in the joined
/// prompt and response. No keywords gives 0.05, one gives 0.43.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordScorer {
    keywords: Vec<Vec<String>>,
}

impl KeywordScorer {
    pub fn new(keywords: Vec<Vec<String>>) -> Self {
        Self {
            keywords: keywords
                .into_iter()
                .map(|ws| {
                    ws.into_iter()
                        .map(|w| w.to_lowercase())
                        .filter(|w| !w.is_empty())
                        .collect()
                })
                .collect(),
        }
    }

    pub fn count(&self, text: &str) -> Vec<usize> {
        let lowered = text.to_lowercase();
        self.keywords
            .iter()
            .map(|ws| ws.iter().map(|w| lowered.matches(w.as_str()).count()).sum())
            .collect()
    }

    pub fn risk_of_count(n: usize) -> f64 {
        1.0 - 0.95 * 0.6f64.powi(n.min(i32::MAX as usize) as i32)
    }
}

impl RiskScorer for KeywordScorer {
    fn categories(&self) -> usize {
        self.keywords.len()
    }

    fn score(&self, prompt: &str, response: &str) -> Result<RiskDistribution, RefineError> {
        let counts = self.count(&build_input(prompt, response));
        Ok(RiskDistribution::new(
            counts.into_iter().map(Self::risk_of_count).collect(),
        )?)
    }
}

impl<T: RiskScorer + ?Sized> RiskScorer for &T {
    fn categories(&self) -> usize {
        (**self).categories()
    }

    fn score(&self, prompt: &str, response: &str) -> Result<RiskDistribution, RefineError> {
        (**self).score(prompt, response)
    }
}
