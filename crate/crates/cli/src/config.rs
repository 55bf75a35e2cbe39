//! Pipeline configuration: YAML files merged in order, dotted-key
//! overrides, seed propagation, and the typed schema.
//!
//! Blocks follow a `class_path` / `init_args` nesting:
//!
//! ```yaml
//! seed: 7
//! model:
//!   class_path: BiEncoderModule
//!   init_args:
//!     config:
//!       class_path: BiEncoderConfig
//!       init_args: {embedding_dim: 32}
//! data:
//!   class_path: DataModule
//!   init_args:
//!     train_dataset:
//!       class_path: TupleDataset
//!       init_args: {path: data/train.tsv}
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use lir_core::data::DataFormat;
use lir_core::encode::{BiEncoderConfig, CrossEncoderConfig};
use lir_core::eval::Metric;
use lir_core::search::SearchConfig;
use lir_core::train::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_yaml::{Mapping, Value};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub trainer: TrainerSection,
    pub model: ModelBlock,
    #[serde(default)]
    pub data: DataBlock,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerSection {
    /// Only `false` is accepted; there are no logging backends.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logger: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_config: Option<TrainConfig>,
    /// Where `fit` saves the trained model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub callbacks: Vec<Callback>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class_path", content = "init_args", deny_unknown_fields)]
pub enum ModelBlock {
    BiEncoderModule(ModuleArgs<BiConfigBlock>),
    CrossEncoderModule(ModuleArgs<CrossConfigBlock>),
}

impl ModelBlock {
    pub fn evaluation_metrics(&self) -> &[Metric] {
        match self {
            ModelBlock::BiEncoderModule(a) => &a.evaluation_metrics,
            ModelBlock::CrossEncoderModule(a) => &a.evaluation_metrics,
        }
    }

    pub fn model_path(&self) -> Option<&Path> {
        match self {
            ModelBlock::BiEncoderModule(a) => a.model_name_or_path.as_deref(),
            ModelBlock::CrossEncoderModule(a) => a.model_name_or_path.as_deref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "C: Deserialize<'de>", serialize = "C: Serialize"))]
pub struct ModuleArgs<C> {
    /// Directory of a saved model. Without it the model is initialised
    /// from `config`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_name_or_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<C>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub evaluation_metrics: Vec<Metric>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class_path", content = "init_args", deny_unknown_fields)]
pub enum BiConfigBlock {
    BiEncoderConfig(BiEncoderConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class_path", content = "init_args", deny_unknown_fields)]
pub enum CrossConfigBlock {
    CrossEncoderConfig(CrossEncoderConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class_path", content = "init_args", deny_unknown_fields)]
pub enum DataBlock {
    DataModule(DataArgs),
}

impl Default for DataBlock {
    fn default() -> Self {
        DataBlock::DataModule(DataArgs::default())
    }
}

impl DataBlock {
    pub fn args(&self) -> &DataArgs {
        match self {
            DataBlock::DataModule(a) => a,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataArgs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_dataset: Option<TrainDataset>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inference_datasets: Vec<InferenceDataset>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class_path", content = "init_args", deny_unknown_fields)]
pub enum TrainDataset {
    TupleDataset(TupleArgs),
    RunDataset(RunArgs),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class_path", content = "init_args", deny_unknown_fields)]
pub enum InferenceDataset {
    DocDataset(TextArgs),
    QueryDataset(QueryArgs),
    RunDataset(RunArgs),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TupleArgs {
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextArgs {
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<DataFormat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryArgs {
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<DataFormat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qrels_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunArgs {
    pub path: PathBuf,
    /// Documents kept per query when reading.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qrels_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub docs_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub queries_path: Option<PathBuf>,
    /// Tuple size when sampling training samples from the run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class_path", content = "init_args", deny_unknown_fields)]
pub enum Callback {
    IndexCallback(IndexArgs),
    SearchCallback(SearchArgs),
    ReRankCallback(ReRankArgs),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexArgs {
    pub index_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchArgs {
    pub index_dir: PathBuf,
    pub save_dir: PathBuf,
    #[serde(default = "default_search_config")]
    pub search_config: SearchConfig,
}

fn default_search_config() -> SearchConfig {
    SearchConfig::new(10)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReRankArgs {
    pub save_dir: PathBuf,
    /// Documents re-scored per query; all when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
}

/// Recursively merges `over` into `base`: mappings merge key by key,
/// anything else is replaced.
pub fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Mapping(b), Value::Mapping(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

pub fn load_yaml_files(paths: &[PathBuf]) -> Result<Value, CliError> {
    let mut merged = Value::Mapping(Mapping::new());
    for path in paths {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let value: Value = serde_yaml::from_str(&text)
            .map_err(|e| CliError::invalid_config(format!("{}: {e}", path.display())))?;
        match value {
            Value::Null => {}
            Value::Mapping(_) => merge(&mut merged, value),
            _ => {
                return Err(CliError::invalid_config(format!(
                    "{}: top level must be a mapping",
                    path.display()
                )))
            }
        }
    }
    Ok(merged)
}

fn key(s: &str) -> Value {
    Value::String(s.to_string())
}

fn is_block(map: &Mapping) -> bool {
    map.contains_key(key("class_path"))
}

/// Sets `path` (dot-separated) to `value`. Keys under a `class_path`
/// block resolve inside its `init_args` unless the key is `class_path` or
/// `init_args` itself; numeric segments index into sequences.
pub fn set_dotted(root: &mut Value, path: &str, value: Value) -> Result<(), CliError> {
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(CliError::invalid_config(format!("malformed override key `{path}`")));
    }
    let mut node = root;
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        if node.is_null() {
            *node = Value::Mapping(Mapping::new());
        }
        node = match node {
            Value::Sequence(items) => {
                let idx: usize = seg
                    .parse()
                    .map_err(|_| CliError::invalid_config(format!("`{path}`: `{seg}` is not a list index")))?;
                let len = items.len();
                items.get_mut(idx).ok_or_else(|| {
                    CliError::invalid_config(format!("`{path}`: index {idx} out of range (list has {len} items)"))
                })?
            }
            Value::Mapping(map) => {
                let map = if is_block(map) && *seg != "class_path" && *seg != "init_args" {
                    if matches!(map.get(key("init_args")), None | Some(Value::Null)) {
                        map.insert(key("init_args"), Value::Mapping(Mapping::new()));
                    }
                    match map.get_mut(key("init_args")) {
                        Some(Value::Mapping(inner)) => inner,
                        _ => {
                            return Err(CliError::invalid_config(format!(
                                "`{path}`: init_args is not a mapping"
                            )))
                        }
                    }
                } else {
                    map
                };
                if last {
                    map.insert(key(seg), value);
                    return Ok(());
                }
                map.entry(key(seg)).or_insert(Value::Null)
            }
            _ => {
                return Err(CliError::invalid_config(format!(
                    "`{path}`: cannot descend into scalar at `{seg}`"
                )))
            }
        };
        if last {
            *node = value;
            return Ok(());
        }
    }
    Ok(())
}

/// Parses an override value as a YAML scalar or flow collection.
pub fn parse_override_value(raw: &str) -> Value {
    serde_yaml::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn get_mut<'a>(root: &'a mut Value, path: &[&str]) -> Option<&'a mut Value> {
    let mut node = root;
    for seg in path {
        node = node.as_mapping_mut()?.get_mut(key(seg))?;
    }
    Some(node)
}

/// Nested seeds that default to the pipeline seed.
const SEED_SLOTS: [&[&str]; 2] = [
    &["model", "init_args", "config", "init_args"],
    &["trainer", "train_config"],
];

/// Fills unset nested seeds from the top-level `seed`; a `--seed` flag
/// (`force`) replaces them all.
pub fn propagate_seed(root: &mut Value, flag: Option<u64>) {
    if let Some(seed) = flag {
        if let Some(map) = root.as_mapping_mut() {
            map.insert(key("seed"), Value::from(seed));
        }
    }
    let seed = root
        .get("seed")
        .cloned()
        .unwrap_or(Value::from(0u64));
    for slot in SEED_SLOTS {
        if let Some(Value::Mapping(map)) = get_mut(root, slot) {
            if flag.is_some() || !map.contains_key(key("seed")) {
                map.insert(key("seed"), seed.clone());
            }
        }
    }
}

/// `a.init_args.b.init_args.c` reads as `a.b.c`.
fn display_path(path: &serde_path_to_error::Path) -> String {
    path.iter()
        .filter_map(|seg| match seg {
            serde_path_to_error::Segment::Map { key } if key == "init_args" => None,
            serde_path_to_error::Segment::Map { key } => Some(key.clone()),
            serde_path_to_error::Segment::Seq { index } => Some(index.to_string()),
            serde_path_to_error::Segment::Enum { variant } => Some(variant.clone()),
            serde_path_to_error::Segment::Unknown => None,
        })
        .collect::<Vec<_>>()
        .join(".")
}

pub fn parse_config(value: Value) -> Result<PipelineConfig, CliError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = display_path(e.path());
        let inner = e.into_inner().to_string();
        let location = match inner.strip_prefix("missing field `").and_then(|s| s.split('`').next()) {
            Some(field) if path.is_empty() => field.to_string(),
            Some(field) => format!("{path}.{field}"),
            None => path,
        };
        if location.is_empty() {
            CliError::invalid_config(inner)
        } else {
            CliError::invalid_config(format!("`{location}`: {inner}"))
        }
    })
}
