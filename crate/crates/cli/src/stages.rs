//! The four pipeline stages.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use indexmap::IndexMap;
use lir_core::data::{self, DatasetKind, DatasetSpec};
use lir_core::encode::{load_model, save_model, BiEncoder, Model, ModelConfig, MODEL_META_FILE, MODEL_PARAMS_FILE};
use lir_core::eval::{evaluate, metrics_report, Metric};
use lir_core::index::{build_index, load_index, save_index, INDEX_DOCIDS_FILE, INDEX_META_FILE, INDEX_PAYLOAD_FILE};
use lir_core::rerank::re_rank;
use lir_core::search::batch_search;
use lir_core::train::{fit, write_loss_trace};
use lir_core::{DocRecord, QueryRecord, Run, TrainSample};

use crate::config::{
    load_yaml_files, parse_config, parse_override_value, propagate_seed, set_dotted, BiConfigBlock, Callback,
    CrossConfigBlock, InferenceDataset, ModelBlock, PipelineConfig, RunArgs, TrainDataset,
};
use crate::error::CliError;

pub const EFFECTIVE_CONFIG_FILE: &str = "effective-config.yaml";
pub const LOSS_TRACE_FILE: &str = "loss.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Fit,
    Index,
    Search,
    ReRank,
}

#[derive(Debug, Clone, Default)]
pub struct Invocation {
    pub configs: Vec<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub force: bool,
    /// Dotted `key=value` overrides, applied in order after the files.
    pub overrides: Vec<(String, String)>,
}

/// Merges config files, applies overrides and the seed flag, and parses
/// the result. Precedence: flag > YAML > default.
pub fn resolve(inv: &Invocation) -> Result<PipelineConfig, CliError> {
    if inv.configs.is_empty() {
        return Err(CliError::invalid_config("at least one --config file is required"));
    }
    let mut value = load_yaml_files(&inv.configs)?;
    for (k, v) in &inv.overrides {
        set_dotted(&mut value, k, parse_override_value(v))?;
    }
    propagate_seed(&mut value, inv.seed);
    parse_config(value)
}

pub fn run(stage: Stage, inv: &Invocation) -> Result<()> {
    let config = resolve(inv)?;
    let work = || match stage {
        Stage::Fit => cmd_fit(&config, inv.force),
        Stage::Index => cmd_index(&config, inv.force),
        Stage::Search => cmd_search(&config, inv.force),
        Stage::ReRank => cmd_re_rank(&config, inv.force),
    };
    match inv.threads {
        Some(0) => Err(CliError::invalid_config("--threads must be at least 1").into()),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("building the worker pool")?
            .install(work),
        None => work(),
    }
}

fn missing(key: &str) -> CliError {
    CliError::invalid_config(format!("`{key}` is required for this stage"))
}

fn require_exists(key: &str, path: &Path) -> Result<(), CliError> {
    if !path.exists() {
        return Err(CliError::invalid_config(format!(
            "`{key}`: path `{}` does not exist",
            path.display()
        )));
    }
    Ok(())
}

/// Refuses to overwrite existing outputs unless forced.
fn check_outputs(dir: &Path, files: &[String], force: bool) -> Result<(), CliError> {
    if force {
        return Ok(());
    }
    for f in files {
        let path = dir.join(f);
        if path.exists() {
            return Err(CliError::new(
                "output_exists",
                format!("`{}` already exists; pass --force to overwrite", path.display()),
            ));
        }
    }
    Ok(())
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_effective_config(dir: &Path, config: &PipelineConfig) -> Result<()> {
    let text = serde_yaml::to_string(config).context("serializing the effective configuration")?;
    write_file(&dir.join(EFFECTIVE_CONFIG_FILE), text.as_bytes())?;
    Ok(())
}

fn model_class(block: &ModelBlock) -> &'static str {
    match block {
        ModelBlock::BiEncoderModule(_) => "BiEncoderModule",
        ModelBlock::CrossEncoderModule(_) => "CrossEncoderModule",
    }
}

/// Loads the saved model or initialises one from the inline config.
fn build_model(block: &ModelBlock) -> Result<Model> {
    let (path, config) = match block {
        ModelBlock::BiEncoderModule(a) => (
            a.model_name_or_path.as_deref(),
            a.config.as_ref().map(|BiConfigBlock::BiEncoderConfig(c)| ModelConfig::BiEncoder(c.clone())),
        ),
        ModelBlock::CrossEncoderModule(a) => (
            a.model_name_or_path.as_deref(),
            a.config.as_ref().map(|CrossConfigBlock::CrossEncoderConfig(c)| ModelConfig::CrossEncoder(c.clone())),
        ),
    };
    let model = match (path, config) {
        (Some(_), Some(_)) => {
            return Err(CliError::conflict(
                "`model.model_name_or_path` and `model.config` are mutually exclusive",
            )
            .into())
        }
        (Some(path), None) => {
            require_exists("model.model_name_or_path", path)?;
            load_model(path).with_context(|| format!("loading model from {}", path.display()))?
        }
        (None, Some(config)) => Model::init(config)?,
        (None, None) => return Err(missing("model.config` or `model.model_name_or_path").into()),
    };
    let matches = matches!(
        (block, &model),
        (ModelBlock::BiEncoderModule(_), Model::Bi(_)) | (ModelBlock::CrossEncoderModule(_), Model::Cross(_))
    );
    if !matches {
        return Err(CliError::conflict(format!(
            "`model` is a {} but the saved model is a {}",
            model_class(block),
            model.name()
        ))
        .into());
    }
    Ok(model)
}

fn bi_encoder(model: Model, stage: &str) -> Result<BiEncoder> {
    match model {
        Model::Bi(bi) => Ok(bi),
        Model::Cross(_) => Err(CliError::conflict(format!("{stage} needs a bi-encoder; cross-encoders only re-rank")).into()),
    }
}

fn text_lookup(kind: DatasetKind, key: &str, path: &Path) -> Result<IndexMap<String, String>> {
    require_exists(key, path)?;
    let spec = DatasetSpec::new(kind, path, None)?;
    let mut out = IndexMap::new();
    match kind {
        DatasetKind::Doc => {
            for r in data::read_docs(&spec)? {
                let r: DocRecord = r.with_context(|| format!("reading {}", path.display()))?;
                out.insert(r.doc_id, r.text);
            }
        }
        _ => {
            for r in data::read_queries(&spec)? {
                let r: QueryRecord = r.with_context(|| format!("reading {}", path.display()))?;
                out.insert(r.query_id, r.text);
            }
        }
    }
    Ok(out)
}

fn read_run_dataset(args: &RunArgs, key: &str) -> Result<Run> {
    require_exists(key, &args.path)?;
    let run = data::read_run(&args.path).with_context(|| format!("reading {}", args.path.display()))?;
    Ok(match args.depth {
        Some(0) => return Err(CliError::invalid_config(format!("`{key}.depth` must be at least 1")).into()),
        Some(d) => run.truncated(d),
        None => run,
    })
}

fn training_samples(config: &PipelineConfig, seed: u64) -> Result<Vec<TrainSample>> {
    let dataset = config
        .data
        .args()
        .train_dataset
        .as_ref()
        .ok_or_else(|| missing("data.train_dataset"))?;
    match dataset {
        TrainDataset::TupleDataset(args) => {
            require_exists("data.train_dataset.path", &args.path)?;
            let spec = DatasetSpec::new(DatasetKind::Tuple, &args.path, None)?;
            data::read_tuples(&spec)?
                .collect::<lir_core::Result<Vec<_>>>()
                .with_context(|| format!("reading {}", args.path.display()))
        }
        TrainDataset::RunDataset(args) => {
            let key = "data.train_dataset";
            let run = read_run_dataset(args, key)?;
            let qrels_path = args.qrels_path.as_ref().ok_or_else(|| missing("data.train_dataset.qrels_path"))?;
            require_exists("data.train_dataset.qrels_path", qrels_path)?;
            let qrels = data::read_qrels(qrels_path)?;
            let docs_path = args.docs_path.as_ref().ok_or_else(|| missing("data.train_dataset.docs_path"))?;
            let queries_path = args.queries_path.as_ref().ok_or_else(|| missing("data.train_dataset.queries_path"))?;
            let docs = text_lookup(DatasetKind::Doc, "data.train_dataset.docs_path", docs_path)?;
            let queries = text_lookup(DatasetKind::Query, "data.train_dataset.queries_path", queries_path)?;
            let n = args.sample_size.unwrap_or(2);
            Ok(data::tuples_from_run(&run, &qrels, n, seed, &docs, &queries)?)
        }
    }
}

pub fn cmd_fit(config: &PipelineConfig, force: bool) -> Result<()> {
    let train_config = config
        .trainer
        .train_config
        .as_ref()
        .ok_or_else(|| missing("trainer.train_config"))?;
    let out = config.trainer.output_dir.as_ref().ok_or_else(|| missing("trainer.output_dir"))?;
    if config.trainer.logger == Some(true) {
        return Err(CliError::invalid_config("`trainer.logger`: no logging backends are available").into());
    }
    let samples = training_samples(config, train_config.seed)?;
    if samples.is_empty() {
        return Err(CliError::new("invalid_sample", "the training dataset produced no samples").into());
    }
    let model = build_model(&config.model)?;
    let outputs = [MODEL_META_FILE, MODEL_PARAMS_FILE, LOSS_TRACE_FILE, EFFECTIVE_CONFIG_FILE].map(String::from);
    check_outputs(out, &outputs, force)?;

    let (trained, report) = fit(&model, &samples, train_config)?;
    create_dir(out)?;
    save_model(&trained, out)?;
    write_loss_trace(&report, &out.join(LOSS_TRACE_FILE))?;
    write_effective_config(out, config)?;
    let first = report.epoch_losses.first().copied().unwrap_or(f64::NAN);
    let last = report.epoch_losses.last().copied().unwrap_or(f64::NAN);
    eprintln!(
        "fit: {} samples, {} steps, mean loss {first:.6} -> {last:.6}, saved to {}",
        samples.len(),
        report.steps,
        out.display()
    );
    Ok(())
}

fn single_callback<'a, T>(config: &'a PipelineConfig, name: &str, pick: impl Fn(&'a Callback) -> Option<&'a T>) -> Result<&'a T> {
    let found: Vec<&T> = config.trainer.callbacks.iter().filter_map(pick).collect();
    match found.len() {
        0 => Err(missing(&format!("trainer.callbacks[{name}]")).into()),
        1 => Ok(found[0]),
        n => Err(CliError::conflict(format!("{n} {name} blocks; expected exactly one")).into()),
    }
}

pub fn cmd_index(config: &PipelineConfig, force: bool) -> Result<()> {
    let cb = single_callback(config, "IndexCallback", |c| match c {
        Callback::IndexCallback(a) => Some(a),
        _ => None,
    })?;
    let docs: Vec<&crate::config::TextArgs> = config
        .data
        .args()
        .inference_datasets
        .iter()
        .filter_map(|d| match d {
            InferenceDataset::DocDataset(a) => Some(a),
            _ => None,
        })
        .collect();
    let dataset = match docs.as_slice() {
        [] => return Err(missing("data.inference_datasets[DocDataset]").into()),
        [one] => *one,
        _ => return Err(CliError::conflict("index takes exactly one DocDataset").into()),
    };
    require_exists("data.inference_datasets.path", &dataset.path)?;
    let model = bi_encoder(build_model(&config.model)?, "index")?;
    let outputs = [INDEX_META_FILE, INDEX_PAYLOAD_FILE, INDEX_DOCIDS_FILE, EFFECTIVE_CONFIG_FILE].map(String::from);
    check_outputs(&cb.index_dir, &outputs, force)?;

    let spec = DatasetSpec::new(DatasetKind::Doc, &dataset.path, dataset.format)?;
    let corpus = data::read_docs(&spec)?
        .collect::<lir_core::Result<Vec<_>>>()
        .with_context(|| format!("reading {}", dataset.path.display()))?;
    let index = build_index(&corpus, &model)?;
    save_index(&index, &cb.index_dir)?;
    write_effective_config(&cb.index_dir, config)?;
    eprintln!("index: {} docs -> {}", corpus.len(), cb.index_dir.display());
    Ok(())
}

/// Output name of a dataset: its file stem.
fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into())
}

fn unique_names(paths: &[&Path]) -> Result<Vec<String>> {
    let names: Vec<String> = paths.iter().map(|p| dataset_name(p)).collect();
    let mut seen = HashSet::new();
    for n in &names {
        if !seen.insert(n) {
            return Err(CliError::conflict(format!("two datasets would both write `{n}.run`")).into());
        }
    }
    Ok(names)
}

fn run_outputs(names: &[String], with_metrics: &[bool]) -> Vec<String> {
    let mut out = vec![EFFECTIVE_CONFIG_FILE.to_string()];
    for (n, &m) in names.iter().zip(with_metrics) {
        out.push(format!("{n}.run"));
        if m {
            out.push(format!("{n}.metrics.tsv"));
        }
    }
    out
}

/// Writes the run and, with qrels and metrics, the metric report.
fn emit(run: &Run, dir: &Path, name: &str, qrels_path: Option<&Path>, metrics: &[Metric]) -> Result<()> {
    data::write_run(run, &dir.join(format!("{name}.run")))?;
    if let (Some(qrels_path), false) = (qrels_path, metrics.is_empty()) {
        let qrels = data::read_qrels(qrels_path)?;
        let results = metrics
            .iter()
            .map(|&m| evaluate(run, &qrels, m))
            .collect::<lir_core::Result<Vec<_>>>()?;
        let report = metrics_report(&results);
        write_file(&dir.join(format!("{name}.metrics.tsv")), report.as_bytes())?;
        print!("{report}");
    }
    Ok(())
}

pub fn cmd_search(config: &PipelineConfig, force: bool) -> Result<()> {
    let cb = single_callback(config, "SearchCallback", |c| match c {
        Callback::SearchCallback(a) => Some(a),
        _ => None,
    })?;
    cb.search_config.validate()?;
    let datasets: Vec<&crate::config::QueryArgs> = config
        .data
        .args()
        .inference_datasets
        .iter()
        .filter_map(|d| match d {
            InferenceDataset::QueryDataset(a) => Some(a),
            _ => None,
        })
        .collect();
    if datasets.is_empty() {
        return Err(missing("data.inference_datasets[QueryDataset]").into());
    }
    for d in &datasets {
        require_exists("data.inference_datasets.path", &d.path)?;
        if let Some(q) = &d.qrels_path {
            require_exists("data.inference_datasets.qrels_path", q)?;
        }
    }
    require_exists("trainer.callbacks.SearchCallback.index_dir", &cb.index_dir)?;
    let model = build_model(&config.model)?;
    let tag = model.name();
    let model = bi_encoder(model, "search")?;
    let metrics = config.model.evaluation_metrics();
    let names = unique_names(&datasets.iter().map(|d| d.path.as_path()).collect::<Vec<_>>())?;
    let with_metrics: Vec<bool> = datasets.iter().map(|d| d.qrels_path.is_some() && !metrics.is_empty()).collect();
    check_outputs(&cb.save_dir, &run_outputs(&names, &with_metrics), force)?;

    let index = load_index(&cb.index_dir)?;
    create_dir(&cb.save_dir)?;
    for (dataset, name) in datasets.iter().zip(&names) {
        let spec = DatasetSpec::new(DatasetKind::Query, &dataset.path, dataset.format)?;
        let queries = data::read_queries(&spec)?
            .collect::<lir_core::Result<Vec<_>>>()
            .with_context(|| format!("reading {}", dataset.path.display()))?;
        let out = batch_search(&index, &queries, &model, &cb.search_config, &tag)?;
        if !out.skipped.is_empty() {
            eprintln!(
                "warning: {} queries without tokens skipped: {}",
                out.skipped.len(),
                out.skipped.join(", ")
            );
        }
        emit(&out.run, &cb.save_dir, name, dataset.qrels_path.as_deref(), metrics)?;
        eprintln!("search: {} queries -> {}", out.run.num_queries(), cb.save_dir.join(format!("{name}.run")).display());
    }
    write_effective_config(&cb.save_dir, config)?;
    Ok(())
}

pub fn cmd_re_rank(config: &PipelineConfig, force: bool) -> Result<()> {
    let cb = single_callback(config, "ReRankCallback", |c| match c {
        Callback::ReRankCallback(a) => Some(a),
        _ => None,
    })?;
    if cb.depth == Some(0) {
        return Err(CliError::invalid_config("`trainer.callbacks.ReRankCallback.depth` must be at least 1").into());
    }
    let datasets: Vec<&RunArgs> = config
        .data
        .args()
        .inference_datasets
        .iter()
        .filter_map(|d| match d {
            InferenceDataset::RunDataset(a) => Some(a),
            _ => None,
        })
        .collect();
    if datasets.is_empty() {
        return Err(missing("data.inference_datasets[RunDataset]").into());
    }
    for d in &datasets {
        require_exists("data.inference_datasets.path", &d.path)?;
        d.docs_path.as_ref().ok_or_else(|| missing("data.inference_datasets.docs_path"))?;
        d.queries_path.as_ref().ok_or_else(|| missing("data.inference_datasets.queries_path"))?;
        if let Some(q) = &d.qrels_path {
            require_exists("data.inference_datasets.qrels_path", q)?;
        }
    }
    let model = build_model(&config.model)?;
    let metrics = config.model.evaluation_metrics();
    let names = unique_names(&datasets.iter().map(|d| d.path.as_path()).collect::<Vec<_>>())?;
    let with_metrics: Vec<bool> = datasets.iter().map(|d| d.qrels_path.is_some() && !metrics.is_empty()).collect();
    check_outputs(&cb.save_dir, &run_outputs(&names, &with_metrics), force)?;

    create_dir(&cb.save_dir)?;
    for (dataset, name) in datasets.iter().zip(&names) {
        let run = read_run_dataset(dataset, "data.inference_datasets")?;
        let docs = text_lookup(DatasetKind::Doc, "data.inference_datasets.docs_path", dataset.docs_path.as_ref().unwrap())?;
        let queries = text_lookup(
            DatasetKind::Query,
            "data.inference_datasets.queries_path",
            dataset.queries_path.as_ref().unwrap(),
        )?;
        let out = re_rank(&run, &docs, &queries, &model, cb.depth, &model.name())?;
        emit(&out, &cb.save_dir, name, dataset.qrels_path.as_deref(), metrics)?;
        eprintln!("re_rank: {} queries -> {}", out.num_queries(), cb.save_dir.join(format!("{name}.run")).display());
    }
    write_effective_config(&cb.save_dir, config)?;
    Ok(())
}
