//! Built-in numerical checks run by `riskgrad selftest`.

use std::time::Instant;

use serde::Serialize;

use crate::diffmath::finite_diff_check;
use crate::quadrature;
use crate::risk_model::{
    kl_beta, kl_gaussian, LossMode, ModelConfig, RejectionPosterior, RiskModel, SemanticPosterior,
};
use crate::rng::SplitMix64;
use crate::specfun::{self, SpecFunError};

type ScalarFn = fn(f64) -> Result<f64, SpecFunError>;

/// The special functions under test. Swappable so a broken implementation
/// can be shown to fail.
#[derive(Debug, Clone, Copy)]
pub struct SpecialFns {
    pub lgamma: ScalarFn,
    pub digamma: ScalarFn,
    pub trigamma: ScalarFn,
}

impl Default for SpecialFns {
    fn default() -> Self {
        Self {
            lgamma: specfun::lgamma,
            digamma: specfun::digamma,
            trigamma: specfun::trigamma,
        }
    }
}

impl SpecialFns {
    /// `KL(Beta(a, b) ‖ Beta(1, 1))` from the closed form.
    pub fn kl_beta_uniform(&self, a: f64, b: f64) -> Result<f64, SpecFunError> {
        let log_b = (self.lgamma)(a)? + (self.lgamma)(b)? - (self.lgamma)(a + b)?;
        Ok(
            -log_b + (a - 1.0) * (self.digamma)(a)? + (b - 1.0) * (self.digamma)(b)?
                - (a + b - 2.0) * (self.digamma)(a + b)?,
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelftestReport {
    pub checks: Vec<CheckResult>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&CheckResult> {
        self.checks.iter().find(|c| !c.passed)
    }
}

pub const BETA_GRID: [f64; 6] = [0.5, 1.0, 1.5, 2.0, 3.0, 5.0];
pub const GAUSS_MU: [f64; 3] = [-2.0, 0.0, 2.0];
pub const GAUSS_SIGMA: [f64; 3] = [0.5, 1.0, 2.0];

/// `(passed, detail)`; a special-function error counts as a failure.
type Outcome = Result<(bool, String), SpecFunError>;

pub fn recurrence_grid() -> impl Iterator<Item = f64> {
    (0..1000).map(|i| 0.1 + (100.0 - 0.1) * i as f64 / 999.0)
}

pub fn check_digamma_recurrence(f: &SpecialFns) -> Outcome {
    let mut worst = 0.0f64;
    for x in recurrence_grid() {
        let err = ((f.digamma)(x + 1.0)? - (f.digamma)(x)? - 1.0 / x).abs();
        worst = worst.max(err);
    }
    Ok((
        worst <= 1e-9,
        format!("max |ψ(x+1) − ψ(x) − 1/x| = {worst:.3e}"),
    ))
}

pub fn check_trigamma_recurrence(f: &SpecialFns) -> Outcome {
    let mut worst = 0.0f64;
    for x in recurrence_grid() {
        let err = ((f.trigamma)(x + 1.0)? - (f.trigamma)(x)? + 1.0 / (x * x)).abs();
        worst = worst.max(err);
    }
    Ok((
        worst <= 1e-9,
        format!("max |ψ′(x+1) − ψ′(x) + 1/x²| = {worst:.3e}"),
    ))
}

/// Central differences of lgamma; the relative error uses a 1e-3 floor on
/// `|ψ|` because ψ has a root near 1.4616.
pub fn check_digamma_vs_lgamma(f: &SpecialFns) -> Outcome {
    let h = 1e-5;
    let mut worst = 0.0f64;
    for x in recurrence_grid() {
        let fd = ((f.lgamma)(x + h)? - (f.lgamma)(x - h)?) / (2.0 * h);
        let psi = (f.digamma)(x)?;
        worst = worst.max((fd - psi).abs() / psi.abs().max(1e-3));
    }
    Ok((worst <= 1e-5, format!("max rel err = {worst:.3e}")))
}

pub fn check_beta_kl_quadrature(f: &SpecialFns) -> Outcome {
    let mut worst = 0.0f64;
    for &a in &BETA_GRID {
        for &b in &BETA_GRID {
            let analytic = f.kl_beta_uniform(a, b)?;
            worst = worst.max((analytic - quadrature::beta_kl_uniform(a, b)).abs());
        }
    }
    let uniform = f.kl_beta_uniform(1.0, 1.0)? + 0.0;
    Ok((
        worst <= 1e-6 && uniform == 0.0,
        format!("max |analytic − quadrature| = {worst:.3e}; KL at (1,1) = {uniform:e}"),
    ))
}

pub fn check_gaussian_kl_quadrature() -> (bool, String) {
    let mut worst = 0.0f64;
    for &mu in &GAUSS_MU {
        for &sigma in &GAUSS_SIGMA {
            let post = SemanticPosterior {
                mu: vec![mu],
                log_var: vec![2.0 * sigma.ln()],
            };
            let analytic = kl_gaussian(&post).0;
            worst = worst.max((analytic - quadrature::gaussian_kl_standard(mu, sigma)).abs());
        }
    }
    let zero = kl_gaussian(&SemanticPosterior {
        mu: vec![0.0],
        log_var: vec![0.0],
    })
    .0;
    (
        worst <= 1e-6 && zero == 0.0,
        format!("max |analytic − quadrature| = {worst:.3e}; KL at N(0,1) = {zero:e}"),
    )
}

/// The model's vectorized Beta KL must agree with the scalar closed form.
pub fn check_model_kl_beta(f: &SpecialFns) -> Outcome {
    let mut alpha = Vec::new();
    let mut beta = Vec::new();
    for &a in &BETA_GRID {
        for &b in &BETA_GRID {
            alpha.push(a);
            beta.push(b);
        }
    }
    let mut expected = 0.0;
    for (&a, &b) in alpha.iter().zip(&beta) {
        expected += f.kl_beta_uniform(a, b)?;
    }
    let got = match kl_beta(&RejectionPosterior { alpha, beta }) {
        Ok((kl, _, _)) => kl,
        Err(e) => return Ok((false, e.to_string())),
    };
    let err = (got - expected).abs();
    Ok((err <= 1e-9, format!("|model − closed form| = {err:.3e}")))
}

pub fn gradient_check_config(seed: u64) -> ModelConfig {
    ModelConfig {
        input_dim: 32,
        latent_dim: 4,
        categories: 3,
        hidden: 8,
        seed,
        ..ModelConfig::default()
    }
}

/// Max relative error of the full loss gradient against central
/// differences (step 1e-5) for one seed, in both sampling modes.
pub fn gradient_check_seed(seed: u64) -> Result<f64, String> {
    let cfg = gradient_check_config(seed);
    let model = RiskModel::new(cfg.clone()).map_err(|e| e.to_string())?;
    let mut rng = SplitMix64::derive(seed, "gradcheck");
    let h: Vec<f64> = (0..cfg.input_dim).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let labels: Vec<f64> = (0..cfg.categories)
        .map(|_| (rng.next_u64() & 1) as f64)
        .collect();
    let noise: Vec<f64> = (0..cfg.latent_dim).map(|_| rng.normal()).collect();
    let mut worst = 0.0f64;
    for mode in [LossMode::Train(&noise), LossMode::Eval] {
        let out = model.loss(&h, &labels, mode).map_err(|e| e.to_string())?;
        let mut probe = model.clone();
        let report = finite_diff_check(
            |flat| {
                probe.params.set_flat(flat).expect("same layout");
                probe
                    .loss(&h, &labels, mode)
                    .map(|o| o.breakdown.total)
                    .unwrap_or(f64::NAN)
            },
            &model.params.to_flat(),
            &out.grads.to_flat(),
            1e-5,
            1e-3,
        );
        if !report.max_rel_err.is_finite() {
            return Err(format!(
                "non-finite gradient error at index {}",
                report.worst_index
            ));
        }
        worst = worst.max(report.max_rel_err);
    }
    Ok(worst)
}

pub fn check_gradients(seeds: u64) -> (bool, String) {
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        match gradient_check_seed(seed) {
            Ok(e) => worst = worst.max(e),
            Err(msg) => return (false, format!("seed {seed}: {msg}")),
        }
    }
    (
        worst <= 1e-3,
        format!("max rel err over {seeds} seeds = {worst:.3e}"),
    )
}

fn timed(name: &'static str, run: impl FnOnce() -> Outcome) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = match run() {
        Ok(r) => r,
        Err(e) => (false, e.to_string()),
    };
    CheckResult {
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

pub fn run_selftest(fns: &SpecialFns) -> SelftestReport {
    let checks = vec![
        timed("digamma_recurrence", || check_digamma_recurrence(fns)),
        timed("trigamma_recurrence", || check_trigamma_recurrence(fns)),
        timed("digamma_vs_lgamma_fd", || check_digamma_vs_lgamma(fns)),
        timed("beta_kl_quadrature", || check_beta_kl_quadrature(fns)),
        timed("gaussian_kl_quadrature", || {
            Ok(check_gaussian_kl_quadrature())
        }),
        timed("model_kl_beta", || check_model_kl_beta(fns)),
        timed("gradient_check", || Ok(check_gradients(20))),
    ];
    SelftestReport { checks }
}

/// Digamma with a small multiplicative error, for exercising failure paths.
pub fn faulty_digamma(x: f64) -> Result<f64, SpecFunError> {
    Ok(specfun::digamma(x)? * (1.0 + 1e-6))
}
