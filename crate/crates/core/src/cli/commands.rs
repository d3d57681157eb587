use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CliError, Fault, EXIT_ALL_FAILED, EXIT_OK, EXIT_SELFTEST};
use crate::config::{RunConfig, ScorerSpec};
use crate::corpus::{
    build_input, featurize, load_embeddings, load_jsonl, parse_jsonl, split_and_batch,
    CategoryVocab, EmbeddingTable, FeaturizerConfig, LabeledExample,
};
use crate::evalkit::{self, EvalError, Gold, ReportFormat, Rubric, ScoredExample, DEFAULT_TAUS};
use crate::llm_backend::{BackendSpec, ChatBackend};
use crate::refine::{
    refine_loop, KeywordScorer, ModelScorer, RefinementTrace, RiskScorer, RiskSource,
};
use crate::risk_model::{
    load_checkpoint, save_checkpoint, train as fit, Checkpoint, EpochStats, LossBreakdown,
    LossMode, ModelError, RiskDistribution, RiskModel, TrainExample,
};
use crate::rng::SplitMix64;
use crate::selftest::{faulty_digamma, run_selftest, SpecialFns};

type CmdResult = Result<i32, CliError>;

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn write_or_print(path: Option<&Path>, content: &str) -> Result<(), CliError> {
    match path {
        Some(p) => {
            std::fs::write(p, content).map_err(|e| CliError::data(format!("{}: {e}", p.display())))
        }
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))
}

fn required<'a>(value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, CliError> {
    value
        .as_deref()
        .ok_or_else(|| CliError::config(format!("{key} is not set")))
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(CliError::config)
}

/// Order-preserving parallel map.
fn par_map<T: Sync, R: Send>(
    jobs: usize,
    items: &[T],
    f: impl Fn(&T) -> R + Sync + Send,
) -> Result<Vec<R>, CliError> {
    Ok(pool(jobs)?.install(|| items.par_iter().map(&f).collect()))
}

fn model_error(e: ModelError) -> CliError {
    match e {
        ModelError::NonFinite { .. } => CliError::numeric(e),
        ModelError::Config(_) | ModelError::Shape(_) => CliError::config(e),
        _ => CliError::data(e),
    }
}

fn load_vocab(cfg: &RunConfig, categories: usize) -> Result<CategoryVocab, CliError> {
    let vocab = match &cfg.paths.vocab {
        Some(p) => CategoryVocab::load(p).map_err(CliError::data)?,
        None => CategoryVocab::placeholder(categories),
    };
    if vocab.len() != categories {
        return Err(CliError::config(format!(
            "vocabulary has {} categories but the model expects {categories}",
            vocab.len()
        )));
    }
    Ok(vocab)
}

/// Turns text pairs into model inputs.
enum Features {
    Hashing(FeaturizerConfig),
    Embeddings(EmbeddingTable),
}

impl Features {
    fn for_training(cfg: &RunConfig) -> Result<Self, CliError> {
        match &cfg.paths.embeddings {
            Some(p) => Self::embeddings(p, cfg.model.input_dim),
            None => {
                if cfg.featurizer.dim != cfg.model.input_dim {
                    return Err(CliError::config(format!(
                        "featurizer.dim {} differs from model.input_dim {}",
                        cfg.featurizer.dim, cfg.model.input_dim
                    )));
                }
                Ok(Self::Hashing(cfg.featurizer))
            }
        }
    }

    fn for_checkpoint(cfg: &RunConfig, ckpt: &Checkpoint) -> Result<Self, CliError> {
        match ckpt.featurizer {
            Some(fz) => Ok(Self::Hashing(fz)),
            None => {
                let path = required(
                    &cfg.paths.embeddings,
                    "paths.embeddings (checkpoint was trained on embeddings)",
                )?;
                Self::embeddings(path, ckpt.model.config.input_dim)
            }
        }
    }

    fn embeddings(path: &Path, dim: usize) -> Result<Self, CliError> {
        let table = load_embeddings(path).map_err(CliError::data)?;
        if table.dim != dim {
            return Err(CliError::config(format!(
                "embeddings have dimension {} but model.input_dim is {dim}",
                table.dim
            )));
        }
        Ok(Self::Embeddings(table))
    }

    fn vector(&self, id: &str, prompt: &str, response: &str) -> Result<Vec<f64>, CliError> {
        match self {
            Self::Hashing(fz) => Ok(featurize(&build_input(prompt, response), fz).into_inner()),
            Self::Embeddings(table) => table
                .get(id)
                .map(|v| v.as_slice().to_vec())
                .ok_or_else(|| CliError::data(format!("no embedding for id {id:?}"))),
        }
    }

    fn featurizer(&self) -> Option<FeaturizerConfig> {
        match self {
            Self::Hashing(fz) => Some(*fz),
            Self::Embeddings(_) => None,
        }
    }
}

#[derive(Serialize)]
struct TrainReport<'a> {
    n_train: usize,
    n_eval: usize,
    epochs: &'a [EpochStats],
    eval: Option<LossBreakdown>,
}

fn mean_loss(
    model: &RiskModel,
    examples: &[TrainExample],
) -> Result<Option<LossBreakdown>, CliError> {
    if examples.is_empty() {
        return Ok(None);
    }
    let mut sum = LossBreakdown::default();
    for ex in examples {
        let b = model
            .loss(&ex.features, &ex.labels, LossMode::Eval)
            .map_err(model_error)?
            .breakdown;
        sum.sem += b.sem;
        sum.rej += b.rej;
        sum.kl_gauss += b.kl_gauss;
        sum.kl_beta += b.kl_beta;
        sum.reg += b.reg;
        sum.total += b.total;
    }
    let n = examples.len() as f64;
    Ok(Some(LossBreakdown {
        sem: sum.sem / n,
        rej: sum.rej / n,
        kl_gauss: sum.kl_gauss / n,
        kl_beta: sum.kl_beta / n,
        reg: sum.reg / n,
        total: sum.total / n,
    }))
}

pub fn train(cfg: &RunConfig) -> CmdResult {
    let model_cfg = cfg.model_config();
    let vocab = load_vocab(cfg, model_cfg.categories)?;
    let dataset = required(&cfg.paths.dataset, "paths.dataset")?;
    let checkpoint_path = match (&cfg.paths.checkpoint, &cfg.paths.output_dir) {
        (Some(p), _) => p.clone(),
        (None, Some(dir)) => dir.join("model.json"),
        (None, None) => return Err(CliError::config("set paths.checkpoint or paths.output_dir")),
    };
    let features = Features::for_training(cfg)?;
    let examples = load_jsonl(dataset, &vocab).map_err(CliError::data)?;
    let items = examples
        .iter()
        .map(|ex| {
            Ok(TrainExample {
                features: features.vector(&ex.id, &ex.prompt, &ex.response)?,
                labels: ex.labels_f64(),
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let split_seed = SplitMix64::derive(cfg.seed, "split").next_u64();
    let split = split_and_batch(
        &items,
        cfg.train.train_fraction,
        cfg.train.batch_size,
        split_seed,
    )
    .map_err(CliError::data)?;
    let n_train = split.train_len();
    let train_items: Vec<TrainExample> = split.train_batches.into_iter().flatten().collect();
    let (model, stats) =
        fit(&model_cfg, &train_items, &cfg.train.train_config()).map_err(model_error)?;
    let eval = mean_loss(&model, &split.eval)?;

    if let Some(parent) = checkpoint_path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
    {
        ensure_dir(parent)?;
    }
    let ckpt = Checkpoint {
        model,
        featurizer: features.featurizer(),
    };
    save_checkpoint(&ckpt, &checkpoint_path).map_err(CliError::data)?;
    let report = TrainReport {
        n_train,
        n_eval: split.eval.len(),
        epochs: &stats,
        eval,
    };
    let mut json = serde_json::to_string_pretty(&report).map_err(CliError::numeric)?;
    json.push('\n');
    match &cfg.paths.output_dir {
        Some(dir) => {
            ensure_dir(dir)?;
            write_or_print(Some(&dir.join("train_stats.json")), &json)?;
        }
        None => write_or_print(None, &json)?,
    }
    let last = stats.last().map_or(f64::NAN, |s| s.mean.total);
    eprintln!(
        "trained on {n_train} examples for {} epochs (final mean loss {last:.6}); checkpoint {}",
        stats.len(),
        checkpoint_path.display()
    );
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, Deserialize)]
struct InputRecord {
    id: String,
    prompt: String,
    #[serde(default)]
    response: String,
}

fn parse_records(path: &Path) -> Result<Vec<InputRecord>, CliError> {
    let text = read_text(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| CliError::data(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn load_model(cfg: &RunConfig) -> Result<Checkpoint, CliError> {
    let path = required(&cfg.paths.checkpoint, "paths.checkpoint")?;
    load_checkpoint(path).map_err(model_error)
}

fn predict(
    model: &RiskModel,
    source: RiskSource,
    h: &[f64],
) -> Result<(RiskDistribution, Vec<f64>), CliError> {
    let (d, decoded) = model.predict_with_decoded(h).map_err(model_error)?;
    match source {
        RiskSource::Latent => Ok((d, decoded)),
        RiskSource::Decoded => {
            let as_risk = RiskDistribution::new(decoded.clone()).map_err(CliError::numeric)?;
            Ok((as_risk, decoded))
        }
    }
}

#[derive(Serialize)]
struct ScoreLine<'a> {
    id: &'a str,
    d: &'a [f64],
    d_prime: &'a [f64],
}

pub fn score(cfg: &RunConfig, input: &Path, output: Option<&Path>) -> CmdResult {
    let ckpt = load_model(cfg)?;
    let features = Features::for_checkpoint(cfg, &ckpt)?;
    let records = parse_records(input)?;
    let lines = par_map(cfg.jobs, &records, |r| -> Result<String, CliError> {
        let h = features.vector(&r.id, &r.prompt, &r.response)?;
        let (d, decoded) = ckpt.model.predict_with_decoded(&h).map_err(model_error)?;
        let line = ScoreLine {
            id: &r.id,
            d: d.as_slice(),
            d_prime: &decoded,
        };
        serde_json::to_string(&line).map_err(CliError::numeric)
    })?;
    let mut out = String::new();
    for line in lines {
        out.push_str(&line?);
        out.push('\n');
    }
    write_or_print(output, &out)?;
    Ok(EXIT_OK)
}

fn build_backend(spec: &Option<BackendSpec>, role: &str) -> Result<Box<dyn ChatBackend>, CliError> {
    spec.as_ref()
        .ok_or_else(|| CliError::config(format!("backends.{role} is not configured")))?
        .build()
        .map_err(|e| CliError::config(format!("backends.{role}: {e}")))
}

fn build_scorer(cfg: &RunConfig) -> Result<Box<dyn RiskScorer>, CliError> {
    match &cfg.scorer {
        ScorerSpec::Keywords(lists) => Ok(Box::new(KeywordScorer::new(lists.clone()))),
        ScorerSpec::Model => {
            let ckpt = load_model(cfg)?;
            let fz = ckpt.featurizer.ok_or_else(|| {
                CliError::config(
                    "refinement needs a checkpoint trained with the hashing featurizer",
                )
            })?;
            let scorer =
                ModelScorer::new(ckpt.model, fz, cfg.risk_source).map_err(CliError::config)?;
            Ok(Box::new(scorer))
        }
    }
}

#[derive(Serialize)]
#[serde(rename_all = "snake_case")]
enum Outcome {
    Safe,
    Capped,
    Failed,
}

#[derive(Serialize)]
struct TraceRecord {
    id: String,
    outcome: Outcome,
    error: Option<String>,
    trace: RefinementTrace,
}

pub fn refine(cfg: &RunConfig, input: &Path, output: Option<&Path>) -> CmdResult {
    let scorer = build_scorer(cfg)?;
    let vocab = load_vocab(cfg, scorer.categories())?;
    let target = build_backend(&cfg.backends.target, "target")?;
    let refiner = build_backend(&cfg.backends.refiner, "refiner")?;
    let records = parse_records(input)?;
    let results = par_map(cfg.jobs, &records, |r| {
        match refine_loop(
            &r.prompt,
            target.as_ref(),
            refiner.as_ref(),
            scorer.as_ref(),
            &vocab,
            &cfg.refine,
        ) {
            Ok(trace) => TraceRecord {
                id: r.id.clone(),
                outcome: if trace.ended_safe() {
                    Outcome::Safe
                } else {
                    Outcome::Capped
                },
                error: None,
                trace,
            },
            Err(failure) => {
                eprintln!("prompt {}: {failure}", r.id);
                TraceRecord {
                    id: r.id.clone(),
                    outcome: Outcome::Failed,
                    error: Some(failure.error.to_string()),
                    trace: failure.partial,
                }
            }
        }
    })?;
    let failed = results
        .iter()
        .filter(|r| matches!(r.outcome, Outcome::Failed))
        .count();
    let mut json = serde_json::to_string_pretty(&results).map_err(CliError::numeric)?;
    json.push('\n');
    let target_path = output
        .map(Path::to_path_buf)
        .or_else(|| cfg.paths.output_dir.as_ref().map(|d| d.join("traces.json")));
    if let Some(dir) = target_path
        .as_deref()
        .and_then(Path::parent)
        .filter(|p| !p.as_os_str().is_empty())
    {
        ensure_dir(dir)?;
    }
    write_or_print(target_path.as_deref(), &json)?;
    eprintln!("refined {} prompt(s), {failed} failed", results.len());
    if !results.is_empty() && failed == results.len() {
        return Ok(EXIT_ALL_FAILED);
    }
    Ok(EXIT_OK)
}

fn scored_input(cfg: &RunConfig, path: &Path) -> Result<Vec<ScoredExample>, CliError> {
    let text = read_text(path)?;
    let first = text.lines().find(|l| !l.trim().is_empty());
    let pre_scored = first
        .and_then(|l| serde_json::from_str::<serde_json::Value>(l).ok())
        .is_some_and(|v| v.get("risk").is_some());
    if pre_scored || first.is_none() {
        return text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l)
                    .map_err(|e| CliError::data(format!("{}:{}: {e}", path.display(), i + 1)))
            })
            .collect();
    }
    let ckpt = load_model(cfg)?;
    let features = Features::for_checkpoint(cfg, &ckpt)?;
    let vocab = load_vocab(cfg, ckpt.model.config.categories)?;
    let examples: Vec<LabeledExample> = parse_jsonl(&text, &vocab).map_err(CliError::data)?;
    par_map(cfg.jobs, &examples, |ex| {
        let h = features.vector(&ex.id, &ex.prompt, &ex.response)?;
        let (risk, _) = predict(&ckpt.model, cfg.risk_source, &h)?;
        Ok(ScoredExample {
            id: ex.id.clone(),
            risk,
            gold: if ex.is_harmful() {
                Gold::Harmful
            } else {
                Gold::Safe
            },
        })
    })?
    .into_iter()
    .collect()
}

pub fn sweep(cfg: &RunConfig, input: &Path, taus: Option<&[f64]>) -> CmdResult {
    let taus = taus.unwrap_or(&DEFAULT_TAUS);
    let scored = scored_input(cfg, input)?;
    let report = evalkit::sweep(&scored, taus).map_err(|e| match e {
        EvalError::Tau(_) | EvalError::TauOrder { .. } => CliError::config(e),
        other => CliError::data(other),
    })?;
    match &cfg.paths.output_dir {
        Some(dir) => {
            ensure_dir(dir)?;
            for (format, name) in [
                (ReportFormat::Csv, "sweep.csv"),
                (ReportFormat::Json, "sweep.json"),
            ] {
                evalkit::emit_report(&report, format, &dir.join(name)).map_err(CliError::data)?;
            }
        }
        None => write_or_print(None, &report.to_csv())?,
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct JudgeLine<'a> {
    id: &'a str,
    #[serde(flatten)]
    scores: Option<evalkit::JudgeScores>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

pub fn judge(cfg: &RunConfig, input: &Path, output: Option<&Path>) -> CmdResult {
    let backend = build_backend(&cfg.backends.judge, "judge")?;
    let rubric = match &cfg.paths.rubric {
        Some(p) => Rubric::load(p).map_err(CliError::config)?,
        None => Rubric::default(),
    };
    let records = parse_records(input)?;
    let results = par_map(cfg.jobs, &records, |r| {
        evalkit::judge(&r.prompt, &r.response, backend.as_ref(), &rubric)
    })?;
    let mut out = String::new();
    let mut failed = 0;
    for (r, res) in records.iter().zip(results) {
        let line = match res {
            Ok(scores) => JudgeLine {
                id: &r.id,
                scores: Some(scores),
                error: None,
            },
            Err(e) => {
                failed += 1;
                eprintln!("judge {}: {e}", r.id);
                JudgeLine {
                    id: &r.id,
                    scores: None,
                    error: Some(e.to_string()),
                }
            }
        };
        out.push_str(&serde_json::to_string(&line).map_err(CliError::numeric)?);
        out.push('\n');
    }
    write_or_print(output, &out)?;
    if !records.is_empty() && failed == records.len() {
        return Ok(EXIT_ALL_FAILED);
    }
    Ok(EXIT_OK)
}

pub fn selftest(fault: Option<Fault>) -> i32 {
    let fns = match fault {
        None => SpecialFns::default(),
        Some(Fault::Digamma) => SpecialFns {
            digamma: faulty_digamma,
            ..SpecialFns::default()
        },
    };
    let report = run_selftest(&fns);
    for c in &report.checks {
        let mark = if c.passed { "PASS" } else { "FAIL" };
        eprintln!("{mark} {:<24} {:>7.3}s  {}", c.name, c.seconds, c.detail);
    }
    match report.first_failure() {
        None => {
            eprintln!("selftest passed");
            EXIT_OK
        }
        Some(c) => {
            eprintln!("selftest failed: {}", c.name);
            EXIT_SELFTEST
        }
    }
}
