//! Per-example training objective and its exact parameter gradient.

use serde::{Deserialize, Serialize};

use super::{
    kl_beta, kl_gaussian, ModelParams, RejectionPosterior, Result, RiskModel, SemanticPosterior,
};
use crate::diffmath::{bce, mse, sigmoid, softplus, Activation, ShapeError};

/// How the semantic latent is formed inside the loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossMode<'a> {
    /// `z = μ`.
    Eval,
    /// `z = μ + σ ⊙ noise`, with the standard-normal draws supplied by the caller.
    Train(&'a [f64]),
}

/// The five loss terms and their weighted total.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// `‖h − x′‖²`
    pub sem: f64,
    /// BCE between decoded `d′` and the labels.
    pub rej: f64,
    pub kl_gauss: f64,
    pub kl_beta: f64,
    /// BCE between the latent `d` and the labels.
    pub reg: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// Negative ELBO: reconstruction terms plus both KL terms, unweighted.
    pub fn negative_elbo(&self) -> f64 {
        self.sem + self.rej + self.kl_gauss + self.kl_beta
    }

    /// First non-finite term, by name.
    pub fn non_finite_term(&self) -> Option<&'static str> {
        [
            ("sem", self.sem),
            ("rej", self.rej),
            ("kl_gauss", self.kl_gauss),
            ("kl_beta", self.kl_beta),
            ("reg", self.reg),
            ("total", self.total),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(name, _)| name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub breakdown: LossBreakdown,
    /// Same layout as [`ModelParams`].
    pub grads: ModelParams,
}

impl RiskModel {
    /// Loss for one example and the gradient w.r.t. every parameter.
    pub fn loss(&self, h: &[f64], labels: &[f64], mode: LossMode<'_>) -> Result<LossOutput> {
        let cfg = &self.config;
        let p = &self.params;
        let dz = cfg.latent_dim;
        let c = cfg.categories;
        let eps = cfg.prob_clamp;
        if labels.len() != c {
            return Err(ShapeError::Length {
                what: "labels",
                expected: c,
                actual: labels.len(),
            }
            .into());
        }
        if let LossMode::Train(noise) = mode {
            if noise.len() != dz {
                return Err(ShapeError::Length {
                    what: "reparameterization noise",
                    expected: dz,
                    actual: noise.len(),
                }
                .into());
            }
        }

        // inference heads
        let sem_out = p.head_semantic.forward(h)?;
        let rej_pre = p.head_rejection.forward(h)?;
        let semantic = SemanticPosterior {
            mu: sem_out[..dz].to_vec(),
            log_var: sem_out[dz..].to_vec(),
        };
        let rejection = RejectionPosterior {
            alpha: rej_pre[..c]
                .iter()
                .map(|&x| softplus(x) + cfg.alpha_beta_floor)
                .collect(),
            beta: rej_pre[c..]
                .iter()
                .map(|&x| softplus(x) + cfg.alpha_beta_floor)
                .collect(),
        };
        let raw_d: Vec<f64> = rejection
            .alpha
            .iter()
            .zip(&rejection.beta)
            .map(|(a, b)| a / (a + b))
            .collect();
        let d: Vec<f64> = raw_d.iter().map(|v| v.clamp(eps, 1.0 - eps)).collect();
        let sigma: Vec<f64> = semantic.log_var.iter().map(|lv| (0.5 * lv).exp()).collect();
        let z: Vec<f64> = match mode {
            LossMode::Eval => semantic.mu.clone(),
            LossMode::Train(noise) => (0..dz)
                .map(|k| semantic.mu[k] + sigma[k] * noise[k])
                .collect(),
        };

        // rejection decoder
        let r_hidden = p.dec_rejection_hidden.forward(&d)?;
        let r_act = Activation::Relu.forward(&r_hidden);
        let r_out = p.dec_rejection_out.forward(&r_act)?;
        let decoded = Activation::Sigmoid.forward(&r_out);

        // semantic decoder
        let joint: Vec<f64> = z.iter().chain(&d).copied().collect();
        let s_hidden = p.dec_semantic_hidden.forward(&joint)?;
        let s_act = Activation::Relu.forward(&s_hidden);
        let recon = p.dec_semantic_out.forward(&s_act)?;

        let (sem, g_recon) = mse(h, &recon)?;
        let (rej, g_decoded) = bce(&decoded, labels, eps)?;
        let (kl_g, g_mu_kl, g_lv_kl) = kl_gaussian(&semantic);
        // non-finite shape parameters surface as a NaN term for the caller to report
        let finite = rejection
            .alpha
            .iter()
            .chain(&rejection.beta)
            .all(|v| v.is_finite());
        let (kl_b, g_alpha_kl, g_beta_kl) = if finite {
            kl_beta(&rejection)?
        } else {
            (f64::NAN, vec![f64::NAN; c], vec![f64::NAN; c])
        };
        let (reg, g_d_reg) = bce(&d, labels, eps)?;
        let total = (sem + rej) + cfg.kl_weight * (kl_g + kl_b) + cfg.reg_weight * reg;

        // backward: semantic decoder
        let g_out = p.dec_semantic_out.backward(&s_act, &g_recon)?;
        let g_s_hidden = Activation::Relu.backward(&s_hidden, &g_out.input)?;
        let g_hid = p.dec_semantic_hidden.backward(&joint, &g_s_hidden)?;
        let (g_z, g_d_sem) = g_hid.input.split_at(dz);

        // backward: rejection decoder
        let g_r_out = Activation::Sigmoid.backward(&r_out, &g_decoded)?;
        let g_rout = p.dec_rejection_out.backward(&r_act, &g_r_out)?;
        let g_r_hidden = Activation::Relu.backward(&r_hidden, &g_rout.input)?;
        let g_rhid = p.dec_rejection_hidden.backward(&d, &g_r_hidden)?;

        // backward: Beta mean, softplus, rejection head
        let mut g_rej_pre = vec![0.0; 2 * c];
        for j in 0..c {
            let a = rejection.alpha[j];
            let b = rejection.beta[j];
            let mut g_d = g_d_sem[j] + g_rhid.input[j] + cfg.reg_weight * g_d_reg[j];
            if d[j] != raw_d[j] {
                g_d = 0.0;
            }
            let s2 = (a + b) * (a + b);
            let g_a = g_d * b / s2 + cfg.kl_weight * g_alpha_kl[j];
            let g_b = -g_d * a / s2 + cfg.kl_weight * g_beta_kl[j];
            g_rej_pre[j] = g_a * sigmoid(rej_pre[j]);
            g_rej_pre[c + j] = g_b * sigmoid(rej_pre[c + j]);
        }
        let g_head_rej = p.head_rejection.backward(h, &g_rej_pre)?;

        // backward: reparameterization, semantic head
        let mut g_sem_out = vec![0.0; 2 * dz];
        for k in 0..dz {
            g_sem_out[k] = g_z[k] + cfg.kl_weight * g_mu_kl[k];
            let through_sample = match mode {
                LossMode::Eval => 0.0,
                LossMode::Train(noise) => g_z[k] * noise[k] * 0.5 * sigma[k],
            };
            g_sem_out[dz + k] = through_sample + cfg.kl_weight * g_lv_kl[k];
        }
        let g_head_sem = p.head_semantic.backward(h, &g_sem_out)?;

        let mut grads = ModelParams::zeros(cfg);
        for (dst, src) in grads
            .layers_mut()
            .into_iter()
            .zip([g_head_sem, g_head_rej, g_rhid, g_rout, g_hid, g_out])
        {
            dst.weights = src.weights;
            dst.bias = src.bias;
        }

        Ok(LossOutput {
            breakdown: LossBreakdown {
                sem,
                rej,
                kl_gauss: kl_g,
                kl_beta: kl_b,
                reg,
                total,
            },
            grads,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::ModelConfig;
    use super::*;
    use crate::diffmath::finite_diff_check;
    use crate::rng::SplitMix64;

    fn tiny(seed: u64) -> (RiskModel, Vec<f64>, Vec<f64>, Vec<f64>) {
        let cfg = ModelConfig {
            input_dim: 32,
            latent_dim: 4,
            categories: 3,
            hidden: 8,
            seed,
            ..ModelConfig::default()
        };
        let mut model = RiskModel::new(cfg).unwrap();
        let mut rng = SplitMix64::new(seed ^ 0x5eed);
        for layer in model.params.layers_mut() {
            for b in &mut layer.bias {
                *b = rng.uniform(-0.3, 0.3);
            }
        }
        let h: Vec<f64> = (0..32).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let labels: Vec<f64> = (0..3).map(|_| (rng.next_u64() & 1) as f64).collect();
        let noise: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
        (model, h, labels, noise)
    }

    #[test]
    fn weight_zeroing_leaves_reconstruction() {
        let (mut model, h, labels, noise) = tiny(1);
        model.config.kl_weight = 0.0;
        model.config.reg_weight = 0.0;
        let out = model.loss(&h, &labels, LossMode::Train(&noise)).unwrap();
        let b = out.breakdown;
        assert_eq!(b.total, b.sem + b.rej);
    }

    #[test]
    fn every_term_non_negative() {
        for seed in 0..20 {
            let (model, h, labels, noise) = tiny(seed);
            let b = model
                .loss(&h, &labels, LossMode::Train(&noise))
                .unwrap()
                .breakdown;
            for v in [b.sem, b.rej, b.kl_gauss, b.reg] {
                assert!(v >= 0.0);
            }
            assert!(b.kl_beta >= -1e-9);
            assert!(b.non_finite_term().is_none());
            assert!((b.negative_elbo() - (b.sem + b.rej + b.kl_gauss + b.kl_beta)).abs() == 0.0);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..5 {
            for train in [true, false] {
                let (model, h, labels, noise) = tiny(seed);
                let mode = if train {
                    LossMode::Train(&noise)
                } else {
                    LossMode::Eval
                };
                let out = model.loss(&h, &labels, mode).unwrap();
                let analytic = out.grads.to_flat();
                let mut probe = model.clone();
                let report = finite_diff_check(
                    |flat| {
                        probe.params.set_flat(flat).unwrap();
                        probe.loss(&h, &labels, mode).unwrap().breakdown.total
                    },
                    &model.params.to_flat(),
                    &analytic,
                    1e-5,
                    1e-3,
                );
                assert!(
                    report.passed,
                    "seed {seed} train {train}: rel {} at {}",
                    report.max_rel_err, report.worst_index
                );
            }
        }
    }

    #[test]
    fn shape_errors() {
        let (model, h, labels, noise) = tiny(0);
        assert!(model.loss(&h[..4], &labels, LossMode::Eval).is_err());
        assert!(model.loss(&h, &labels[..2], LossMode::Eval).is_err());
        assert!(model
            .loss(&h, &labels, LossMode::Train(&noise[..1]))
            .is_err());
    }
}
