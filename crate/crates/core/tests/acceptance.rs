//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any failed.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use common::{completion, StubServer};
use riskgrad::corpus::CategoryVocab;
use riskgrad::diffmath::AdamConfig;
use riskgrad::evalkit::{self, Gold, Rubric, ScoredExample};
use riskgrad::llm_backend::{
    BackendConfig, BackendError, ChatBackend, ChatMessage, HttpBackend, MockKind, MockSpec,
};
use riskgrad::quadrature;
use riskgrad::refine::{
    build_textgrad, effort_of, is_safe, refine_loop, risky_set, EffortLevel, GradientTemplate,
    KeywordScorer, RefineConfig, RiskScorer, RiskThresholds,
};
use riskgrad::risk_model::{
    checkpoint_json, kl_beta, kl_gaussian, load_checkpoint, save_checkpoint, train, Checkpoint,
    ModelConfig, RejectionPosterior, RiskDistribution, RiskModel, SemanticPosterior, TrainConfig,
    TrainExample,
};
use riskgrad::rng::SplitMix64;
use riskgrad::selftest::gradient_check_seed;
use riskgrad::specfun::{digamma, lgamma, trigamma};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what())
    }
}

fn within_time(start: Instant, limit: f64) -> Result<f64, String> {
    let s = start.elapsed().as_secs_f64();
    check(s < limit, || format!("took {s:.2} s, limit {limit} s"))?;
    Ok(s)
}

fn grid_1000() -> impl Iterator<Item = f64> {
    (0..1000).map(|i| 0.1 + 99.9 * i as f64 / 999.0)
}

fn special_functions() -> Outcome {
    let start = Instant::now();
    let (mut psi_err, mut tri_err, mut fd_err) = (0.0f64, 0.0f64, 0.0f64);
    let h = 1e-5;
    for x in grid_1000() {
        let psi = digamma(x).map_err(|e| e.to_string())?;
        psi_err = psi_err.max((digamma(x + 1.0).unwrap() - psi - 1.0 / x).abs());
        tri_err =
            tri_err.max((trigamma(x + 1.0).unwrap() - trigamma(x).unwrap() + 1.0 / (x * x)).abs());
        let fd = (lgamma(x + h).unwrap() - lgamma(x - h).unwrap()) / (2.0 * h);
        // ψ crosses zero near 1.4616, so the relative error needs a floor
        fd_err = fd_err.max((fd - psi).abs() / psi.abs().max(1e-3));
    }
    check(psi_err <= 1e-9, || {
        format!("digamma recurrence error {psi_err:e}")
    })?;
    check(tri_err <= 1e-9, || {
        format!("trigamma recurrence error {tri_err:e}")
    })?;
    check(fd_err <= 1e-5, || {
        format!("digamma vs lgamma differences {fd_err:e}")
    })?;
    let s = within_time(start, 2.0)?;
    Ok(format!(
        "recurrences {psi_err:.1e}/{tri_err:.1e}, fd rel {fd_err:.1e}, {s:.2} s"
    ))
}

const BETA_GRID: [f64; 6] = [0.5, 1.0, 1.5, 2.0, 3.0, 5.0];

fn beta_kl() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for a in BETA_GRID {
        for b in BETA_GRID {
            let post = RejectionPosterior {
                alpha: vec![a],
                beta: vec![b],
            };
            let analytic = kl_beta(&post).map_err(|e| e.to_string())?.0;
            let numeric = quadrature::beta_kl_uniform(a, b);
            check(numeric.is_finite(), || {
                format!("quadrature diverged at ({a}, {b})")
            })?;
            worst = worst.max((analytic - numeric).abs());
        }
    }
    check(worst <= 1e-6, || {
        format!("max |analytic - quadrature| = {worst:e}")
    })?;
    let uniform = kl_beta(&RejectionPosterior {
        alpha: vec![1.0],
        beta: vec![1.0],
    })
    .unwrap()
    .0;
    check(uniform == 0.0, || {
        format!("KL(Beta(1,1) || Beta(1,1)) = {uniform:e}")
    })?;
    let s = within_time(start, 5.0)?;
    Ok(format!("36 points, max err {worst:.1e}, {s:.2} s"))
}

fn gaussian_kl() -> Outcome {
    let mut worst = 0.0f64;
    for mu in [-2.0, 0.0, 2.0] {
        for sigma in [0.5f64, 1.0, 2.0] {
            let post = SemanticPosterior {
                mu: vec![mu],
                log_var: vec![2.0 * sigma.ln()],
            };
            let analytic = kl_gaussian(&post).0;
            worst = worst.max((analytic - quadrature::gaussian_kl_standard(mu, sigma)).abs());
        }
    }
    check(worst <= 1e-6, || {
        format!("max |closed form - quadrature| = {worst:e}")
    })?;
    let zero = kl_gaussian(&SemanticPosterior {
        mu: vec![0.0],
        log_var: vec![0.0],
    })
    .0;
    check(zero == 0.0, || format!("KL(N(0,1) || N(0,1)) = {zero:e}"))?;
    Ok(format!("9 points, max err {worst:.1e}"))
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let err = gradient_check_seed(seed).map_err(|e| format!("seed {seed}: {e}"))?;
        check(err <= 1e-3, || format!("seed {seed}: max rel err {err:e}"))?;
        worst = worst.max(err);
    }
    let s = within_time(start, 10.0)?;
    Ok(format!("20 seeds, max rel err {worst:.1e}, {s:.2} s"))
}

/// Mann-Whitney AUC by comparing every positive with every negative.
fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0u64;
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs as f64
}

struct Planted {
    train: Vec<TrainExample>,
    eval: Vec<(Vec<f64>, Vec<bool>)>,
}

/// Unit-norm Gaussian features with labels from a random linear rule. Label
/// noise is applied to the training part only; the held-out part keeps the
/// clean rule so AUC measures recovery of the planted signal.
fn planted(n: usize, dim: usize, categories: usize, noise: f64, seed: u64) -> Planted {
    let mut rng = SplitMix64::new(seed);
    let rule: Vec<Vec<f64>> = (0..categories)
        .map(|_| (0..dim).map(|_| rng.normal()).collect())
        .collect();
    let n_train = n * 4 / 5;
    let mut out = Planted {
        train: Vec::new(),
        eval: Vec::new(),
    };
    for i in 0..n {
        let mut x: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x.iter_mut().for_each(|v| *v /= norm);
        let clean: Vec<bool> = rule
            .iter()
            .map(|w| w.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() > 0.0)
            .collect();
        if i < n_train {
            let labels = clean
                .iter()
                .map(|&l| if rng.next_f64() < noise { !l } else { l })
                .map(|l| l as u8 as f64)
                .collect();
            out.train.push(TrainExample {
                features: x,
                labels,
            });
        } else {
            out.eval.push((x, clean));
        }
    }
    out
}

fn synthetic_training() -> Outcome {
    let start = Instant::now();
    let data = planted(2000, 64, 4, 0.05, 2024);
    let cfg = ModelConfig {
        input_dim: 64,
        latent_dim: 8,
        categories: 4,
        hidden: 32,
        seed: 11,
        ..ModelConfig::default()
    };
    let tc = TrainConfig {
        epochs: 50,
        batch_size: 32,
        adam: AdamConfig {
            lr: 5e-3,
            ..AdamConfig::default()
        },
    };
    let (model, history) =
        train(&cfg, &data.train, &tc).map_err(|e| format!("training failed: {e}"))?;
    for e in &history {
        let kls = [
            e.min_kl_gauss,
            e.min_kl_beta,
            e.mean.kl_gauss,
            e.mean.kl_beta,
        ];
        check(kls.iter().all(|k| k.is_finite() && *k >= -1e-9), || {
            format!("epoch {}: KL terms {kls:?}", e.epoch)
        })?;
    }
    let preds: Vec<Vec<f64>> = data
        .eval
        .iter()
        .map(|(x, _)| model.predict_risk(x).map(RiskDistribution::into_inner))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let mut aucs = Vec::new();
    for j in 0..4 {
        let scores: Vec<f64> = preds.iter().map(|d| d[j]).collect();
        let labels: Vec<bool> = data.eval.iter().map(|(_, l)| l[j]).collect();
        aucs.push(pairwise_auc(&scores, &labels));
    }
    let min_auc = aucs.iter().cloned().fold(f64::INFINITY, f64::min);
    check(min_auc >= 0.95, || format!("per-category AUC {aucs:.4?}"))?;
    let s = within_time(start, 60.0)?;
    Ok(format!(
        "{} epochs, AUC {aucs:.3?}, {s:.1} s",
        history.len()
    ))
}

fn effort_semantics() -> Outcome {
    let th = RiskThresholds::default();
    check(effort_of(0.80, &th) == EffortLevel::Critical, || {
        "0.80 is not Critical".into()
    })?;
    check(effort_of(0.50, &th) == EffortLevel::Mild, || {
        "0.50 is not Mild".into()
    })?;
    check(effort_of(0.49, &th) == EffortLevel::Minor, || {
        "0.49 is not Minor".into()
    })?;
    let d = RiskDistribution::new(vec![0.49, 0.30, 0.29999]).unwrap();
    let s = risky_set(&d, th.tau);
    check(s == vec![0, 1], || format!("risky set {s:?}"))?;
    let below = RiskDistribution::new(vec![0.29999]).unwrap();
    check(is_safe(&below, th.tau), || {
        "0.29999 counted as risky".into()
    })?;
    Ok("thresholds 0.3 / 0.5 / 0.8 exact".into())
}

fn textgrad_goldens() -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let vocab = CategoryVocab::new(
        ["violence", "self_harm", "weapons", "drugs"]
            .map(String::from)
            .to_vec(),
    )
    .unwrap();
    let cases: [(&str, [f64; 4]); 5] = [
        ("empty", [0.1, 0.2, 0.05, 0.29999]),
        ("single", [0.85, 0.0, 0.0, 0.0]),
        ("boundaries", [0.3, 0.5, 0.8, 0.29999]),
        ("rounding", [0.375, 0.625, 0.999, 0.3]),
        ("just_below", [1.0, 0.79999, 0.49999, 0.0]),
    ];
    for (name, d) in cases {
        let golden = std::fs::read(dir.join(format!("textgrad_{name}.txt")))
            .map_err(|e| format!("{name}: {e}"))?;
        let d = RiskDistribution::new(d.to_vec()).unwrap();
        let g = build_textgrad(
            &d,
            &vocab,
            &RiskThresholds::default(),
            &GradientTemplate::default(),
        )
        .map_err(|e| e.to_string())?;
        check(g.text.as_bytes() == golden.as_slice(), || {
            format!(
                "{name}: got {:?}, golden {:?}",
                g.text,
                String::from_utf8_lossy(&golden)
            )
        })?;
    }
    Ok("5 vectors byte-exact".into())
}

const CATEGORIES: [&str; 4] = ["violence", "self_harm", "weapons", "drugs"];
const KEYWORDS: [&[&str]; 4] = [
    &["assault", "stab"],
    &["overdose", "cutting"],
    &["grenade", "rifle"],
    &["heroin", "cocaine"],
];
const FILLER: [&str; 18] = [
    "please", "explain", "the", "history", "of", "bread", "baking", "in", "my", "small", "town",
    "for", "a", "school", "project", "today", "with", "friends",
];

fn restyle(word: &str, style: u64) -> String {
    match style {
        0 => word.to_string(),
        1 => word.to_uppercase(),
        _ => word[..1].to_uppercase() + &word[1..],
    }
}

fn closed_loop() -> Outcome {
    let start = Instant::now();
    let all_keywords: Vec<&str> = KEYWORDS.iter().flat_map(|k| k.iter().copied()).collect();
    for f in FILLER {
        check(!all_keywords.iter().any(|k| f.contains(k)), || {
            format!("filler {f} contains a keyword")
        })?;
    }
    let vocab = CategoryVocab::new(CATEGORIES.map(String::from).to_vec()).unwrap();
    let scorer = KeywordScorer::new(
        KEYWORDS
            .iter()
            .map(|k| k.iter().map(|s| s.to_string()).collect())
            .collect(),
    );
    let mut refiner = MockSpec::new(MockKind::KeywordRefiner);
    refiner.keywords = CATEGORIES
        .iter()
        .zip(KEYWORDS)
        .map(|(c, k)| (c.to_string(), k.iter().map(|s| s.to_string()).collect()))
        .collect::<BTreeMap<_, _>>();
    let target = MockSpec::new(MockKind::TemplateTarget);
    let cfg = RefineConfig::default();
    let mut rng = SplitMix64::new(8);
    let mut max_iters = 0;
    for p in 0..50 {
        let mut words: Vec<String> = (0..5 + rng.below(6))
            .map(|_| FILLER[rng.below(FILLER.len())].to_string())
            .collect();
        let planted = 1 + rng.below(3);
        let mut categories = Vec::new();
        for _ in 0..planted {
            let c = rng.below(4);
            let kw = KEYWORDS[c][rng.below(KEYWORDS[c].len())];
            categories.push(c);
            let at = rng.below(words.len() + 1);
            words.insert(at, restyle(kw, rng.next_u64() % 3));
        }
        categories.sort_unstable();
        categories.dedup();
        let prompt = words.join(" ");
        let trace = refine_loop(&prompt, &target, &refiner, &scorer, &vocab, &cfg)
            .map_err(|f| format!("prompt {p}: {f}"))?;
        check(trace.ended_safe(), || {
            format!("prompt {p} {prompt:?} did not end safe")
        })?;
        let iters = trace.len() - 1;
        check(iters <= cfg.max_iters && iters <= categories.len(), || {
            format!(
                "prompt {p}: {iters} rewrites for {} categories",
                categories.len()
            )
        })?;
        max_iters = max_iters.max(iters);
        let last = trace.final_prompt().unwrap().to_lowercase();
        check(!all_keywords.iter().any(|k| last.contains(k)), || {
            format!("prompt {p}: final {last:?} still has a keyword")
        })?;
        // the scorer is independent of the loop; rescore the final pair
        let rescored = scorer
            .score(
                trace.final_prompt().unwrap(),
                &trace.last().unwrap().response,
            )
            .unwrap();
        check(is_safe(&rescored, cfg.thresholds.tau), || {
            format!("prompt {p}: rescored final is unsafe")
        })?;
        let maxima: Vec<f64> = trace.steps.iter().map(|s| s.risk.max()).collect();
        check(maxima.windows(2).all(|w| w[1] <= w[0]), || {
            format!("prompt {p}: max risk {maxima:?}")
        })?;
    }
    let s = within_time(start, 5.0)?;
    Ok(format!(
        "50/50 safe, at most {max_iters} rewrites, {s:.2} s"
    ))
}

fn sweep_monotone() -> Outcome {
    let mut rng = SplitMix64::new(99);
    let scored: Vec<ScoredExample> = (0..1000)
        .map(|i| ScoredExample {
            id: format!("s{i}"),
            risk: RiskDistribution::new((0..4).map(|_| rng.next_f64().powi(3)).collect()).unwrap(),
            gold: if rng.next_f64() < 0.4 {
                Gold::Harmful
            } else {
                Gold::Safe
            },
        })
        .collect();
    let taus: Vec<f64> = (1..=20).map(|k| k as f64 / 21.0).collect();
    let report = evalkit::sweep(&scored, &taus).map_err(|e| e.to_string())?;
    check(report.rows.len() == 20, || {
        format!("{} rows", report.rows.len())
    })?;
    let n_safe = scored.iter().filter(|e| e.gold == Gold::Safe).count();
    let n_harmful = scored.len() - n_safe;
    for (row, &tau) in report.rows.iter().zip(&taus) {
        let (mut fs, mut fh) = (0usize, 0usize);
        for e in &scored {
            if e.risk.as_slice().iter().any(|&d| d >= tau) {
                match e.gold {
                    Gold::Safe => fs += 1,
                    Gold::Harmful => fh += 1,
                }
            }
        }
        check(
            row.tau == tau && row.n_safe == n_safe && row.n_harmful == n_harmful,
            || format!("row header {row:?}"),
        )?;
        check(row.fpr == fs as f64 / n_safe as f64, || {
            format!("fpr at {tau}: {} vs {fs}/{n_safe}", row.fpr)
        })?;
        check(row.detection == fh as f64 / n_harmful as f64, || {
            format!("detection at {tau}: {} vs {fh}/{n_harmful}", row.detection)
        })?;
    }
    for w in report.rows.windows(2) {
        check(
            w[1].fpr <= w[0].fpr && w[1].detection <= w[0].detection,
            || format!("not monotone between tau {} and {}", w[0].tau, w[1].tau),
        )?;
    }
    Ok(format!(
        "20 taus over {n_safe} safe / {n_harmful} harmful, recount exact"
    ))
}

fn determinism() -> Outcome {
    let data = planted(300, 32, 3, 0.05, 5);
    let cfg = ModelConfig {
        input_dim: 32,
        latent_dim: 4,
        categories: 3,
        hidden: 8,
        seed: 3,
        ..ModelConfig::default()
    };
    let tc = TrainConfig {
        epochs: 3,
        batch_size: 16,
        ..TrainConfig::default()
    };
    let (a, _) = train(&cfg, &data.train, &tc).map_err(|e| e.to_string())?;
    let (b, _) = train(&cfg, &data.train, &tc).map_err(|e| e.to_string())?;
    check(a.params.to_bits() == b.params.to_bits(), || {
        "repeat training differs".into()
    })?;
    let ck = |m: &RiskModel| Checkpoint {
        model: m.clone(),
        featurizer: None,
    };
    check(checkpoint_json(&ck(&a)) == checkpoint_json(&ck(&b)), || {
        "checkpoint bytes differ".into()
    })?;

    let bits = |m: &RiskModel| -> Result<Vec<u64>, String> {
        let mut out = Vec::new();
        for (x, _) in &data.eval {
            let (d, dec) = m.predict_with_decoded(x).map_err(|e| e.to_string())?;
            out.extend(d.as_slice().iter().chain(&dec).map(|v| v.to_bits()));
        }
        Ok(out)
    };
    let before = bits(&a)?;
    check(before == bits(&b)?, || "repeat predictions differ".into())?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("model.json");
    save_checkpoint(&ck(&a), &path).map_err(|e| e.to_string())?;
    let loaded = load_checkpoint(&path).map_err(|e| e.to_string())?;
    check(loaded.model.params.to_bits() == a.params.to_bits(), || {
        "reloaded weights differ".into()
    })?;
    check(bits(&loaded.model)? == before, || {
        "reloaded predictions differ".into()
    })?;
    let again = dir.path().join("again.json");
    save_checkpoint(&loaded, &again).map_err(|e| e.to_string())?;
    check(
        std::fs::read(&path).unwrap() == std::fs::read(&again).unwrap(),
        || "re-saved bytes differ".into(),
    )?;

    let other = ModelConfig { seed: 4, ..cfg };
    let (c, _) = train(&other, &data.train, &tc).map_err(|e| e.to_string())?;
    check(c.params.to_bits() != a.params.to_bits(), || {
        "seed has no effect".into()
    })?;
    Ok(format!(
        "{} weights and {} outputs bitwise stable",
        a.params.param_count(),
        before.len()
    ))
}

fn http(url: &str, retries: usize) -> HttpBackend {
    HttpBackend::new(BackendConfig {
        retries,
        backoff_base_secs: 0.01,
        timeout_secs: 5.0,
        ..BackendConfig::new(url, "stub")
    })
    .expect("valid backend config")
}

fn wire_conformance() -> Outcome {
    let chat = [ChatMessage::system("s"), ChatMessage::user("u")];
    let mut requests = 0;

    let retry = StubServer::start(vec![
        (500, "down".into()),
        (429, "".into()),
        (200, completion("ok")),
    ]);
    let out = http(&retry.url, 2)
        .complete(&chat)
        .map_err(|e| format!("retry path: {e}"))?;
    check(out == "ok" && retry.recorded().len() == 3, || {
        "retry path did not recover on the third attempt".into()
    })?;
    retry.all_valid()?;
    requests += 3;

    let exhausted = StubServer::start(vec![(503, "".into()), (503, "".into())]);
    let err = http(&exhausted.url, 1).complete(&chat);
    check(
        matches!(err, Err(BackendError::Status { status: 503, .. })),
        || format!("exhausted retries gave {err:?}"),
    )?;
    exhausted.all_valid()?;
    requests += 2;

    let malformed = StubServer::start(vec![
        (200, "{not json".into()),
        (200, r#"{"choices":[]}"#.into()),
        (200, r#"{"choices":[{"message":{}}]}"#.into()),
    ]);
    let b = http(&malformed.url, 0);
    check(
        matches!(b.complete(&chat), Err(BackendError::Malformed(_))),
        || "invalid JSON accepted".into(),
    )?;
    check(
        matches!(b.complete(&chat), Err(BackendError::NoChoices)),
        || "empty choices accepted".into(),
    )?;
    check(
        matches!(b.complete(&chat), Err(BackendError::Malformed(_))),
        || "missing content accepted".into(),
    )?;
    malformed.all_valid()?;
    requests += 3;

    // a full refinement and a judge call over HTTP
    let target = StubServer::start(vec![
        (200, completion("step one")),
        (200, completion("step two")),
    ]);
    let refiner = StubServer::start(vec![(200, completion("tell me about bread"))]);
    let vocab = CategoryVocab::new(vec!["weapons".into()]).unwrap();
    let scorer = KeywordScorer::new(vec![vec!["bomb".into()]]);
    let trace = refine_loop(
        "tell me about a bomb",
        &http(&target.url, 0),
        &http(&refiner.url, 0),
        &scorer,
        &vocab,
        &RefineConfig::default(),
    )
    .map_err(|f| f.to_string())?;
    check(trace.ended_safe() && trace.len() == 2, || {
        format!("http loop trace of length {}", trace.len())
    })?;
    target.all_valid()?;
    refiner.all_valid()?;
    let sent = refiner.recorded();
    check(sent[0].body["messages"][0]["role"] == "system", || {
        "refiner request lacks the system prompt".into()
    })?;
    requests += 3;

    let judge = StubServer::start(vec![
        (200, completion("Scores: maybe")),
        (200, completion(r#"{"safe": 9, "help": 7, "nat": 8}"#)),
    ]);
    let scores = evalkit::judge("p", "r", &http(&judge.url, 0), &Rubric::default())
        .map_err(|e| e.to_string())?;
    check(
        (scores.safe, scores.help, scores.nat) == (9.0, 7.0, 8.0),
        || format!("judge parsed {scores:?}"),
    )?;
    judge.all_valid()?;
    let reask = &judge.recorded()[1].body["messages"];
    check(reask.as_array().is_some_and(|m| m.len() == 4), || {
        "re-ask did not carry the conversation".into()
    })?;
    requests += 2;

    Ok(format!(
        "{requests} requests validated; retry, exhaustion and malformed paths covered"
    ))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("special functions", special_functions),
        ("beta KL vs quadrature", beta_kl),
        ("gaussian KL vs quadrature", gaussian_kl),
        ("full gradient check", gradient_check),
        ("synthetic training", synthetic_training),
        ("effort thresholds", effort_semantics),
        ("textgrad goldens", textgrad_goldens),
        ("closed-loop refinement", closed_loop),
        ("sweep monotonicity", sweep_monotone),
        ("determinism and persistence", determinism),
        ("wire conformance", wire_conformance),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS [{:>2}] {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{:>2}] {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {}/{} passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
