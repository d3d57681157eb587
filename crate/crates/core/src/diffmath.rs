//! Dense layers, activations, losses and Adam with explicit backward passes.
//!
//! Every reduction sums left to right in index order, so results are
//! bitwise reproducible.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShapeError {
    #[error("{what}: expected length {expected}, got {actual}")]
    Length {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
}

fn expect_len(what: &'static str, expected: usize, actual: usize) -> Result<(), ShapeError> {
    if expected == actual {
        Ok(())
    } else {
        Err(ShapeError::Length {
            what,
            expected,
            actual,
        })
    }
}

/// Fully connected layer `out = W · in + b`, weights row-major `[out][in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub len_in: usize,
    pub len_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Gradients of a [`DenseLayer`], same layout as the layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub input: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(len_in: usize, len_out: usize) -> Self {
        Self {
            len_in,
            len_out,
            weights: vec![0.0; len_in * len_out],
            bias: vec![0.0; len_out],
        }
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot(len_in: usize, len_out: usize, rng: &mut SplitMix64) -> Self {
        let limit = (6.0 / (len_in + len_out) as f64).sqrt();
        let weights = (0..len_in * len_out)
            .map(|_| rng.uniform(-limit, limit))
            .collect();
        Self {
            len_in,
            len_out,
            weights,
            bias: vec![0.0; len_out],
        }
    }

    pub fn from_parts(
        len_in: usize,
        len_out: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self, ShapeError> {
        expect_len("dense weights", len_in * len_out, weights.len())?;
        expect_len("dense bias", len_out, bias.len())?;
        Ok(Self {
            len_in,
            len_out,
            weights,
            bias,
        })
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, ShapeError> {
        expect_len("dense input", self.len_in, input.len())?;
        let out = self
            .weights
            .chunks_exact(self.len_in)
            .zip(&self.bias)
            .map(|(row, &b)| {
                let mut acc = b;
                for (w, x) in row.iter().zip(input) {
                    acc += w * x;
                }
                acc
            })
            .collect();
        Ok(out)
    }

    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<DenseGrads, ShapeError> {
        expect_len("dense input", self.len_in, input.len())?;
        expect_len("dense upstream gradient", self.len_out, upstream.len())?;
        let mut weights = vec![0.0; self.weights.len()];
        let mut grad_in = vec![0.0; self.len_in];
        for (i, &g) in upstream.iter().enumerate() {
            let row = &self.weights[i * self.len_in..(i + 1) * self.len_in];
            let grow = &mut weights[i * self.len_in..(i + 1) * self.len_in];
            for k in 0..self.len_in {
                grow[k] = g * input[k];
                grad_in[k] += row[k] * g;
            }
        }
        Ok(DenseGrads {
            weights,
            bias: upstream.to_vec(),
            input: grad_in,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Softplus,
    Sigmoid,
    Relu,
}

/// `log(1 + e^x)`, overflow-stable. Never returns 0: below the subnormal
/// range the smallest positive double is returned.
pub fn softplus(x: f64) -> f64 {
    let v = x.max(0.0) + (-x.abs()).exp().ln_1p();
    if v == 0.0 {
        f64::from_bits(1)
    } else {
        v
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Self::Softplus => softplus(x),
            Self::Sigmoid => sigmoid(x),
            Self::Relu => x.max(0.0),
        }
    }

    /// Derivative with respect to the pre-activation input.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Self::Softplus => sigmoid(x),
            Self::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Self::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn forward(self, input: &[f64]) -> Vec<f64> {
        input.iter().map(|&x| self.apply(x)).collect()
    }

    /// Gradient w.r.t. the pre-activation input, given the upstream gradient.
    pub fn backward(self, input: &[f64], upstream: &[f64]) -> Result<Vec<f64>, ShapeError> {
        expect_len("activation upstream gradient", input.len(), upstream.len())?;
        Ok(input
            .iter()
            .zip(upstream)
            .map(|(&x, &g)| g * self.derivative(x))
            .collect())
    }
}

pub const PROB_CLAMP: f64 = 1e-7;

/// Summed binary cross-entropy and its gradient w.r.t. `pred`.
///
/// Predictions are clamped to `[eps, 1 - eps]`; the gradient is zero for
/// entries where the clamp is active.
pub fn bce(pred: &[f64], target: &[f64], eps: f64) -> Result<(f64, Vec<f64>), ShapeError> {
    expect_len("bce target", pred.len(), target.len())?;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.iter().zip(target) {
        let clamped = p.clamp(eps, 1.0 - eps);
        loss -= t * clamped.ln() + (1.0 - t) * (1.0 - clamped).ln();
        if clamped == p {
            grad.push(-t / p + (1.0 - t) / (1.0 - p));
        } else {
            grad.push(0.0);
        }
    }
    Ok((loss, grad))
}

/// Squared L2 distance `Σ (a − b)²` and its gradient w.r.t. `b`.
pub fn mse(a: &[f64], b: &[f64]) -> Result<(f64, Vec<f64>), ShapeError> {
    expect_len("mse operand", a.len(), b.len())?;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(a.len());
    for (&x, &y) in a.iter().zip(b) {
        let diff = y - x;
        loss += diff * diff;
        grad.push(2.0 * diff);
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam optimizer state over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
}

impl AdamState {
    pub fn new(config: AdamConfig, len: usize) -> Self {
        Self {
            config,
            step: 0,
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
        }
    }

    /// One bias-corrected Adam update, in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), ShapeError> {
        expect_len("adam params", self.first_moment.len(), params.len())?;
        expect_len("adam grads", self.first_moment.len(), grads.len())?;
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let correction1 = 1.0 - beta1.powi(t);
        let correction2 = 1.0 - beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.first_moment[i] = beta1 * self.first_moment[i] + (1.0 - beta1) * g;
            self.second_moment[i] = beta2 * self.second_moment[i] + (1.0 - beta2) * g * g;
            let m_hat = self.first_moment[i] / correction1;
            let v_hat = self.second_moment[i] / correction2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub numeric: Vec<f64>,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// Index of the parameter with the largest relative error.
    pub worst_index: usize,
    pub passed: bool,
}

/// Floor on the relative-error denominator, so exact zeros compare absolutely.
pub const REL_ERR_FLOOR: f64 = 1e-6;

/// Compares `analytic` against central differences of `loss` at `params`.
///
/// Relative error per parameter is `|a − n| / max(|a|, |n|, REL_ERR_FLOOR)`.
pub fn finite_diff_check<F>(
    mut loss: F,
    params: &[f64],
    analytic: &[f64],
    step: f64,
    tolerance: f64,
) -> GradCheckReport
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = params.to_vec();
    let mut numeric = Vec::with_capacity(params.len());
    let mut max_rel_err = 0.0f64;
    let mut max_abs_err = 0.0f64;
    let mut worst_index = 0;
    for i in 0..params.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let up = loss(&probe);
        probe[i] = orig - step;
        let down = loss(&probe);
        probe[i] = orig;
        let n = (up - down) / (2.0 * step);
        let a = analytic.get(i).copied().unwrap_or(f64::NAN);
        let abs = (a - n).abs();
        let rel = abs / a.abs().max(n.abs()).max(REL_ERR_FLOOR);
        if !max_rel_err.is_nan() && (rel.is_nan() || rel > max_rel_err) {
            max_rel_err = rel;
            worst_index = i;
        }
        max_abs_err = max_abs_err.max(abs);
        numeric.push(n);
    }
    let passed = analytic.len() == params.len() && max_rel_err <= tolerance;
    GradCheckReport {
        numeric,
        max_rel_err,
        max_abs_err,
        worst_index,
        passed,
    }
}
