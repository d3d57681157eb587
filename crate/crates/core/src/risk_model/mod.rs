//! Disentangled variational risk model.
//!
//! A shared feature vector `h` feeds two independent heads: a Gaussian head
//! for the semantic latent `z` and a Beta head for the per-category risk
//! `d`. Two decoders reconstruct the labels (from `d`) and the features
//! (from `[z; d]`). The risk consumed downstream is the Beta mean
//! `α / (α + β)`, which is also the path used during training.

mod checkpoint;
mod loss;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffmath::{softplus, Activation, DenseLayer, ShapeError};
use crate::rng::SplitMix64;
use crate::specfun::{self, SpecFunError};

pub use checkpoint::{
    load_checkpoint, save_checkpoint, to_json as checkpoint_json, Checkpoint, CHECKPOINT_VERSION,
};
pub use loss::{LossBreakdown, LossMode, LossOutput};
pub use train::{train, EpochStats, TrainConfig, TrainExample};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    SpecFun(#[from] SpecFunError),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("non-finite {term} loss at epoch {epoch}, batch {batch}, example {example}")]
    NonFinite {
        term: &'static str,
        epoch: usize,
        batch: usize,
        example: usize,
    },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
    #[error("unsupported checkpoint version {found} (supported: {supported})")]
    Version { found: i64, supported: i64 },
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Feature dimension `H`.
    pub input_dim: usize,
    /// Semantic latent dimension `d_z`.
    pub latent_dim: usize,
    /// Number of rejection categories `c`.
    pub categories: usize,
    /// Hidden width of both decoder MLPs.
    pub hidden: usize,
    pub alpha_beta_floor: f64,
    pub prob_clamp: f64,
    /// Weight on the two KL terms.
    pub kl_weight: f64,
    /// Weight on the direct BCE between `d` and the labels.
    pub reg_weight: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_dim: 256,
            latent_dim: 16,
            categories: 14,
            hidden: 64,
            alpha_beta_floor: 1e-4,
            prob_clamp: 1e-7,
            kl_weight: 0.1,
            reg_weight: 1.0,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("input_dim", self.input_dim),
            ("latent_dim", self.latent_dim),
            ("categories", self.categories),
            ("hidden", self.hidden),
        ];
        for (name, value) in dims {
            if value == 0 {
                return Err(ModelError::Config(format!("{name} must be at least 1")));
            }
        }
        for (name, value) in [
            ("alpha_beta_floor", self.alpha_beta_floor),
            ("prob_clamp", self.prob_clamp),
        ] {
            if !(value > 0.0 && value < 0.1) {
                return Err(ModelError::Config(format!(
                    "{name} = {value} is outside (0, 0.1)"
                )));
            }
        }
        for (name, value) in [
            ("kl_weight", self.kl_weight),
            ("reg_weight", self.reg_weight),
        ] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(ModelError::Config(format!("{name} = {value} must be >= 0")));
            }
        }
        Ok(())
    }
}

/// All trainable layers. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// `H → 2·d_z`, producing `[μ; log σ²]`.
    pub head_semantic: DenseLayer,
    /// `H → 2·c`, producing pre-softplus `[α; β]`.
    pub head_rejection: DenseLayer,
    pub dec_rejection_hidden: DenseLayer,
    pub dec_rejection_out: DenseLayer,
    pub dec_semantic_hidden: DenseLayer,
    pub dec_semantic_out: DenseLayer,
}

pub const LAYER_NAMES: [&str; 6] = [
    "head_semantic",
    "head_rejection",
    "dec_rejection_hidden",
    "dec_rejection_out",
    "dec_semantic_hidden",
    "dec_semantic_out",
];

fn layer_shapes(cfg: &ModelConfig) -> [(usize, usize); 6] {
    let (h, dz, c, k) = (cfg.input_dim, cfg.latent_dim, cfg.categories, cfg.hidden);
    [(h, 2 * dz), (h, 2 * c), (c, k), (k, c), (dz + c, k), (k, h)]
}

impl ModelParams {
    fn build(cfg: &ModelConfig, mut make: impl FnMut(usize, usize) -> DenseLayer) -> Self {
        let [a, b, c, d, e, f] = layer_shapes(cfg).map(|(i, o)| make(i, o));
        Self {
            head_semantic: a,
            head_rejection: b,
            dec_rejection_hidden: c,
            dec_rejection_out: d,
            dec_semantic_hidden: e,
            dec_semantic_out: f,
        }
    }

    pub fn zeros(cfg: &ModelConfig) -> Self {
        Self::build(cfg, DenseLayer::zeros)
    }

    /// Glorot-uniform weights from the `"init"` stream of `cfg.seed`.
    pub fn init(cfg: &ModelConfig) -> Self {
        let mut rng = SplitMix64::derive(cfg.seed, "init");
        Self::build(cfg, |i, o| DenseLayer::glorot(i, o, &mut rng))
    }

    pub fn layers(&self) -> [&DenseLayer; 6] {
        [
            &self.head_semantic,
            &self.head_rejection,
            &self.dec_rejection_hidden,
            &self.dec_rejection_out,
            &self.dec_semantic_hidden,
            &self.dec_semantic_out,
        ]
    }

    pub fn layers_mut(&mut self) -> [&mut DenseLayer; 6] {
        [
            &mut self.head_semantic,
            &mut self.head_rejection,
            &mut self.dec_rejection_hidden,
            &mut self.dec_rejection_out,
            &mut self.dec_semantic_hidden,
            &mut self.dec_semantic_out,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|l| l.param_count()).sum()
    }

    /// Layer by layer, weights then bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        for layer in self.layers() {
            flat.extend_from_slice(&layer.weights);
            flat.extend_from_slice(&layer.bias);
        }
        flat
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(ShapeError::Length {
                what: "flat parameter vector",
                expected: self.param_count(),
                actual: flat.len(),
            }
            .into());
        }
        let mut offset = 0;
        for layer in self.layers_mut() {
            let nw = layer.weights.len();
            layer.weights.copy_from_slice(&flat[offset..offset + nw]);
            offset += nw;
            let nb = layer.bias.len();
            layer.bias.copy_from_slice(&flat[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }

    fn check_shapes(&self, cfg: &ModelConfig) -> Result<()> {
        for ((name, layer), (len_in, len_out)) in
            LAYER_NAMES.iter().zip(self.layers()).zip(layer_shapes(cfg))
        {
            if layer.len_in != len_in
                || layer.len_out != len_out
                || layer.weights.len() != len_in * len_out
                || layer.bias.len() != len_out
            {
                return Err(ModelError::Config(format!(
                    "layer {name} is {}x{}, config requires {len_out}x{len_in}",
                    layer.len_out, layer.len_in
                )));
            }
        }
        Ok(())
    }
}

/// Gaussian posterior over the semantic latent.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticPosterior {
    pub mu: Vec<f64>,
    pub log_var: Vec<f64>,
}

/// Per-category Beta posterior over the risk latent.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectionPosterior {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Per-category risk intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct RiskDistribution(Vec<f64>);

#[derive(Debug, Clone, PartialEq, Error)]
#[error("risk entry {index} = {value} is not a finite value in [0, 1]")]
pub struct InvalidRisk {
    pub index: usize,
    pub value: f64,
}

impl RiskDistribution {
    pub fn new(values: Vec<f64>) -> std::result::Result<Self, InvalidRisk> {
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= 0.0 && **v <= 1.0))
        {
            return Err(InvalidRisk { index, value });
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for RiskDistribution {
    type Error = InvalidRisk;

    fn try_from(values: Vec<f64>) -> std::result::Result<Self, InvalidRisk> {
        Self::new(values)
    }
}

impl From<RiskDistribution> for Vec<f64> {
    fn from(d: RiskDistribution) -> Self {
        d.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    Train,
    Eval,
}

/// Reparameterized draw `z = μ + exp(½ log σ²) ⊙ ε` in train mode, `z = μ` in eval mode.
pub fn sample_semantic(
    post: &SemanticPosterior,
    mode: SampleMode,
    rng: &mut SplitMix64,
) -> Vec<f64> {
    match mode {
        SampleMode::Eval => post.mu.clone(),
        SampleMode::Train => post
            .mu
            .iter()
            .zip(&post.log_var)
            .map(|(&m, &lv)| m + (0.5 * lv).exp() * rng.normal())
            .collect(),
    }
}

/// Beta mean `α / (α + β)` per category, clamped to `[eps, 1 − eps]`.
pub fn rejection_point(post: &RejectionPosterior, eps: f64) -> RiskDistribution {
    RiskDistribution(
        post.alpha
            .iter()
            .zip(&post.beta)
            .map(|(&a, &b)| (a / (a + b)).clamp(eps, 1.0 - eps))
            .collect(),
    )
}

/// `KL(N(μ, σ²) ‖ N(0, I))` and its gradients w.r.t. `μ` and `log σ²`.
pub fn kl_gaussian(post: &SemanticPosterior) -> (f64, Vec<f64>, Vec<f64>) {
    let mut kl = 0.0;
    let mut grad_mu = Vec::with_capacity(post.mu.len());
    let mut grad_lv = Vec::with_capacity(post.mu.len());
    for (&m, &lv) in post.mu.iter().zip(&post.log_var) {
        let var = lv.exp();
        kl += 0.5 * (m * m + var - lv - 1.0);
        grad_mu.push(m);
        grad_lv.push(0.5 * (var - 1.0));
    }
    (kl, grad_mu, grad_lv)
}

/// `Σ_j KL(Beta(α_j, β_j) ‖ Beta(1, 1))` and its gradients w.r.t. `α` and `β`.
pub fn kl_beta(post: &RejectionPosterior) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let mut kl = 0.0;
    let mut grad_a = Vec::with_capacity(post.alpha.len());
    let mut grad_b = Vec::with_capacity(post.alpha.len());
    for (&a, &b) in post.alpha.iter().zip(&post.beta) {
        let s = a + b;
        let psi_s = specfun::digamma(s)?;
        kl += -specfun::log_beta(a, b)?
            + (a - 1.0) * specfun::digamma(a)?
            + (b - 1.0) * specfun::digamma(b)?
            - (s - 2.0) * psi_s;
        let tri_s = specfun::trigamma(s)?;
        grad_a.push((a - 1.0) * specfun::trigamma(a)? - (s - 2.0) * tri_s);
        grad_b.push((b - 1.0) * specfun::trigamma(b)? - (s - 2.0) * tri_s);
    }
    Ok((kl, grad_a, grad_b))
}

/// Configuration plus parameters; the unit that is trained, saved and scored.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskModel {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl RiskModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let params = ModelParams::init(&config);
        Ok(Self { config, params })
    }

    pub fn from_parts(config: ModelConfig, params: ModelParams) -> Result<Self> {
        config.validate()?;
        params.check_shapes(&config)?;
        Ok(Self { config, params })
    }

    /// Runs both inference heads on `h`.
    pub fn infer(&self, h: &[f64]) -> Result<(SemanticPosterior, RejectionPosterior)> {
        let dz = self.config.latent_dim;
        let c = self.config.categories;
        let floor = self.config.alpha_beta_floor;
        let sem = self.params.head_semantic.forward(h)?;
        let rej = self.params.head_rejection.forward(h)?;
        let semantic = SemanticPosterior {
            mu: sem[..dz].to_vec(),
            log_var: sem[dz..].to_vec(),
        };
        let rejection = RejectionPosterior {
            alpha: rej[..c].iter().map(|&x| softplus(x) + floor).collect(),
            beta: rej[c..].iter().map(|&x| softplus(x) + floor).collect(),
        };
        Ok((semantic, rejection))
    }

    /// `d′ = sigmoid(MLP(d))`.
    pub fn decode_rejection(&self, d: &[f64]) -> Result<Vec<f64>> {
        let hidden = self.params.dec_rejection_hidden.forward(d)?;
        let out = self
            .params
            .dec_rejection_out
            .forward(&Activation::Relu.forward(&hidden))?;
        Ok(Activation::Sigmoid.forward(&out))
    }

    /// `x′ = MLP([z; d])`.
    pub fn decode_semantic(&self, z: &[f64], d: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.config.latent_dim {
            return Err(ShapeError::Length {
                what: "semantic latent",
                expected: self.config.latent_dim,
                actual: z.len(),
            }
            .into());
        }
        let joint: Vec<f64> = z.iter().chain(d).copied().collect();
        let hidden = self.params.dec_semantic_hidden.forward(&joint)?;
        Ok(self
            .params
            .dec_semantic_out
            .forward(&Activation::Relu.forward(&hidden))?)
    }

    /// Eval-mode risk: the clamped Beta mean.
    pub fn predict_risk(&self, h: &[f64]) -> Result<RiskDistribution> {
        let (_, rejection) = self.infer(h)?;
        Ok(rejection_point(&rejection, self.config.prob_clamp))
    }

    /// Latent risk `d` together with the decoded label probabilities `d′`.
    pub fn predict_with_decoded(&self, h: &[f64]) -> Result<(RiskDistribution, Vec<f64>)> {
        let d = self.predict_risk(h)?;
        let decoded = self.decode_rejection(d.as_slice())?;
        Ok((d, decoded))
    }
}
