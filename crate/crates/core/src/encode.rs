//! Encoders: a pluggable token-feature backbone, pooling, and the bi-/cross-
//! encoder heads that turn token features into embeddings or scores.
//!
//! The bundled backbone is a deterministic hash embedding: every token maps
//! to a fixed pseudorandom vector derived from its FNV-1a hash and the model
//! seed. It is non-contextual, so identical tokens get identical rows no
//! matter where they occur. The trainable part of every model is a linear
//! projection on top of those features (plus a scoring head for
//! cross-encoders).

use std::fs;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::types::{DenseEmbedding, Embedding, Matrix, MultiEmbedding, SparseEmbedding};

/// Lowercased maximal runs of alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a, 64-bit.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Uniform in `[0, 1)` from the top 24 bits of one `u32` draw.
pub(crate) fn unit_f32(rng: &mut impl RngCore) -> f32 {
    (rng.next_u32() >> 8) as f32 * (1.0 / (1u32 << 24) as f32)
}

/// Uniform in `[-1, 1)`.
fn symmetric_f32(rng: &mut impl RngCore) -> f32 {
    2.0 * unit_f32(rng) - 1.0
}

/// Per-token feature rows produced by a backbone.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenFeatures {
    pub tokens: Vec<String>,
    pub matrix: Matrix,
}

/// Reference backbone: row `t` is drawn from a ChaCha8 stream seeded with
/// `seed ^ fnv1a64(token_t)`, entries uniform in `[-1, 1)` scaled by
/// `1/sqrt(backbone_dim)`.
pub fn backbone_features(tokens: &[String], seed: u64, backbone_dim: usize) -> Result<TokenFeatures> {
    if backbone_dim == 0 {
        return Err(Error::InvalidConfig("backbone_dim must be positive".into()));
    }
    let scale = 1.0 / (backbone_dim as f32).sqrt();
    let mut matrix = Matrix::zeros(tokens.len(), backbone_dim);
    for (t, token) in tokens.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(token.as_bytes()));
        for v in matrix.row_mut(t) {
            *v = symmetric_f32(&mut rng) * scale;
        }
    }
    Ok(TokenFeatures {
        tokens: tokens.to_vec(),
        matrix,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PoolingStrategy {
    None,
    First,
    Mean,
    Max,
}

impl PoolingStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            PoolingStrategy::None => "none",
            PoolingStrategy::First => "first",
            PoolingStrategy::Mean => "mean",
            PoolingStrategy::Max => "max",
        }
    }
}

impl Serialize for PoolingStrategy {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

// `null` (or a missing value) means no pooling.
impl<'de> Deserialize<'de> for PoolingStrategy {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw: Option<String> = Option::deserialize(d)?;
        match raw.as_deref().map(str::to_ascii_lowercase).as_deref() {
            None | Some("none") | Some("null") => Ok(PoolingStrategy::None),
            Some("first") | Some("cls") => Ok(PoolingStrategy::First),
            Some("mean") => Ok(PoolingStrategy::Mean),
            Some("max") => Ok(PoolingStrategy::Max),
            Some(other) => Err(serde::de::Error::custom(format!(
                "unknown pooling strategy `{other}` (expected none, first, mean or max)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Pooled {
    Vector(Vec<f32>),
    Matrix(Matrix),
}

pub fn pool(features: &Matrix, strategy: PoolingStrategy) -> Result<Pooled> {
    if features.is_empty() {
        return Err(Error::EmptyText(None));
    }
    let cols = features.cols();
    Ok(match strategy {
        PoolingStrategy::None => Pooled::Matrix(features.clone()),
        PoolingStrategy::First => Pooled::Vector(features.row(0).to_vec()),
        PoolingStrategy::Mean => {
            let mut acc = vec![0f64; cols];
            for row in features.iter_rows() {
                for (a, &v) in acc.iter_mut().zip(row) {
                    *a += f64::from(v);
                }
            }
            let n = features.rows() as f64;
            Pooled::Vector(acc.into_iter().map(|a| (a / n) as f32).collect())
        }
        PoolingStrategy::Max => {
            let mut out = features.row(0).to_vec();
            for row in features.iter_rows().skip(1) {
                for (o, &v) in out.iter_mut().zip(row) {
                    if v > *o {
                        *o = v;
                    }
                }
            }
            Pooled::Vector(out)
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Similarity {
    Dot,
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    SingleVector,
    MultiVector,
    Sparse,
}

impl OutputKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OutputKind::SingleVector => "single_vector",
            OutputKind::MultiVector => "multi_vector",
            OutputKind::Sparse => "sparse",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sparsification {
    None,
    Log1pRelu,
}

pub const DEFAULT_BACKBONE_DIM: usize = 64;

/// How a bi-encoder turns backbone features into embeddings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawBiEncoderConfig")]
pub struct BiEncoderConfig {
    pub similarity_function: Similarity,
    pub query_pooling_strategy: PoolingStrategy,
    pub doc_pooling_strategy: PoolingStrategy,
    pub embedding_dim: usize,
    pub backbone_dim: usize,
    pub output_kind: OutputKind,
    pub sparsification: Sparsification,
    /// Only meaningful for sparse models.
    pub vocab_size: usize,
    pub seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBiEncoderConfig {
    #[serde(default, alias = "similarty_function")]
    similarity_function: Option<Similarity>,
    #[serde(default = "default_pooling")]
    query_pooling_strategy: PoolingStrategy,
    #[serde(default = "default_pooling")]
    doc_pooling_strategy: PoolingStrategy,
    #[serde(default)]
    embedding_dim: Option<usize>,
    #[serde(default)]
    backbone_dim: Option<usize>,
    #[serde(default)]
    output_kind: Option<OutputKind>,
    #[serde(default)]
    sparsification: Option<Sparsification>,
    #[serde(default)]
    vocab_size: Option<usize>,
    #[serde(default)]
    seed: u64,
}

fn default_pooling() -> PoolingStrategy {
    PoolingStrategy::Mean
}

impl TryFrom<RawBiEncoderConfig> for BiEncoderConfig {
    type Error = Error;

    fn try_from(raw: RawBiEncoderConfig) -> Result<Self> {
        let both_none = raw.query_pooling_strategy == PoolingStrategy::None
            && raw.doc_pooling_strategy == PoolingStrategy::None;
        let output_kind = raw.output_kind.unwrap_or(if both_none {
            OutputKind::MultiVector
        } else if raw.sparsification == Some(Sparsification::Log1pRelu) {
            OutputKind::Sparse
        } else {
            OutputKind::SingleVector
        });
        let sparse = output_kind == OutputKind::Sparse;
        let config = BiEncoderConfig {
            similarity_function: raw.similarity_function.unwrap_or(Similarity::Dot),
            query_pooling_strategy: raw.query_pooling_strategy,
            doc_pooling_strategy: raw.doc_pooling_strategy,
            embedding_dim: raw.embedding_dim.unwrap_or(128),
            backbone_dim: raw.backbone_dim.unwrap_or(DEFAULT_BACKBONE_DIM),
            output_kind,
            sparsification: raw.sparsification.unwrap_or(if sparse {
                Sparsification::Log1pRelu
            } else {
                Sparsification::None
            }),
            vocab_size: raw.vocab_size.unwrap_or(0),
            seed: raw.seed,
        };
        config.validate()?;
        Ok(config)
    }
}

impl BiEncoderConfig {
    pub fn single_vector(embedding_dim: usize, pooling: PoolingStrategy, similarity: Similarity) -> Self {
        Self {
            similarity_function: similarity,
            query_pooling_strategy: pooling,
            doc_pooling_strategy: pooling,
            embedding_dim,
            backbone_dim: DEFAULT_BACKBONE_DIM,
            output_kind: OutputKind::SingleVector,
            sparsification: Sparsification::None,
            vocab_size: 0,
            seed: 0,
        }
    }

    pub fn multi_vector(embedding_dim: usize, similarity: Similarity) -> Self {
        Self {
            query_pooling_strategy: PoolingStrategy::None,
            doc_pooling_strategy: PoolingStrategy::None,
            output_kind: OutputKind::MultiVector,
            ..Self::single_vector(embedding_dim, PoolingStrategy::Mean, similarity)
        }
    }

    pub fn sparse(vocab_size: usize) -> Self {
        Self {
            output_kind: OutputKind::Sparse,
            sparsification: Sparsification::Log1pRelu,
            vocab_size,
            query_pooling_strategy: PoolingStrategy::Max,
            doc_pooling_strategy: PoolingStrategy::Max,
            ..Self::single_vector(vocab_size, PoolingStrategy::Max, Similarity::Dot)
        }
    }

    pub fn with_backbone_dim(mut self, backbone_dim: usize) -> Self {
        self.backbone_dim = backbone_dim;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.embedding_dim == 0 {
            return bad("embedding_dim must be positive");
        }
        if self.backbone_dim == 0 {
            return bad("backbone_dim must be positive");
        }
        let q_none = self.query_pooling_strategy == PoolingStrategy::None;
        let d_none = self.doc_pooling_strategy == PoolingStrategy::None;
        let multi = self.output_kind == OutputKind::MultiVector;
        if multi && !(q_none && d_none) {
            return bad("multi_vector models require both pooling strategies to be none");
        }
        if !multi && (q_none || d_none) {
            return bad("pooling strategy `none` is only valid for multi_vector models");
        }
        match self.output_kind {
            OutputKind::Sparse => {
                if self.sparsification != Sparsification::Log1pRelu {
                    return bad("sparse models require sparsification log1p_relu");
                }
                if self.similarity_function != Similarity::Dot {
                    return bad("sparse models require similarity_function dot");
                }
                if self.vocab_size == 0 {
                    return bad("sparse models require a positive vocab_size");
                }
                if u32::try_from(self.vocab_size).is_err() {
                    return bad("vocab_size must fit in 32 bits");
                }
            }
            _ => {
                if self.sparsification != Sparsification::None {
                    return bad("sparsification is only valid for sparse models");
                }
            }
        }
        Ok(())
    }

    /// Width of the projection output: `vocab_size` for sparse models,
    /// `embedding_dim` otherwise.
    pub fn projection_dim(&self) -> usize {
        match self.output_kind {
            OutputKind::Sparse => self.vocab_size,
            _ => self.embedding_dim,
        }
    }

    pub fn pooling(&self, side: Side) -> PoolingStrategy {
        match side {
            Side::Query => self.query_pooling_strategy,
            Side::Doc => self.doc_pooling_strategy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoringMode {
    Pointwise,
    Listwise,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossEncoderConfig {
    #[serde(default = "default_scoring_mode")]
    pub scoring_mode: ScoringMode,
    pub embedding_dim: usize,
    #[serde(default = "default_backbone_dim")]
    pub backbone_dim: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_scoring_mode() -> ScoringMode {
    ScoringMode::Pointwise
}

fn default_backbone_dim() -> usize {
    DEFAULT_BACKBONE_DIM
}

impl CrossEncoderConfig {
    pub fn new(scoring_mode: ScoringMode, embedding_dim: usize) -> Self {
        Self {
            scoring_mode,
            embedding_dim,
            backbone_dim: DEFAULT_BACKBONE_DIM,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 || self.backbone_dim == 0 {
            return Err(Error::InvalidConfig(
                "embedding_dim and backbone_dim must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Query,
    Doc,
}

/// Cross-encoder scoring head over `[q, d, q*d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossHead {
    pub weights: Vec<f32>,
    pub bias: f32,
}

/// Trainable parameters: `weight` is `input_dim x output_dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionParams {
    pub input_dim: usize,
    pub output_dim: usize,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
    pub head: Option<CrossHead>,
}

impl ProjectionParams {
    /// Weights uniform in `[-1/sqrt(input_dim), 1/sqrt(input_dim))`, zero
    /// bias; head weights uniform in `[-1/sqrt(3*output_dim), ..)`.
    pub fn init(input_dim: usize, output_dim: usize, with_head: bool, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (input_dim as f32).sqrt();
        let weight = (0..input_dim * output_dim)
            .map(|_| symmetric_f32(&mut rng) * scale)
            .collect();
        let head = with_head.then(|| {
            let scale = 1.0 / ((3 * output_dim) as f32).sqrt();
            CrossHead {
                weights: (0..3 * output_dim)
                    .map(|_| symmetric_f32(&mut rng) * scale)
                    .collect(),
                bias: 0.0,
            }
        });
        Self {
            input_dim,
            output_dim,
            weight,
            bias: vec![0.0; output_dim],
            head,
        }
    }

    pub fn for_bi(config: &BiEncoderConfig) -> Self {
        Self::init(config.backbone_dim, config.projection_dim(), false, config.seed)
    }

    pub fn for_cross(config: &CrossEncoderConfig) -> Self {
        Self::init(config.backbone_dim, config.embedding_dim, true, config.seed)
    }

    fn check_shape(&self, input_dim: usize, output_dim: usize, with_head: bool) -> Result<()> {
        let mismatch = |expected: usize, found: usize| Err(Error::DimMismatch { expected, found });
        if self.input_dim != input_dim {
            return mismatch(input_dim, self.input_dim);
        }
        if self.output_dim != output_dim {
            return mismatch(output_dim, self.output_dim);
        }
        if self.weight.len() != input_dim * output_dim {
            return mismatch(input_dim * output_dim, self.weight.len());
        }
        if self.bias.len() != output_dim {
            return mismatch(output_dim, self.bias.len());
        }
        match (&self.head, with_head) {
            (Some(h), true) if h.weights.len() != 3 * output_dim => mismatch(3 * output_dim, h.weights.len()),
            (Some(_), true) | (None, false) => Ok(()),
            (None, true) => Err(Error::InvalidConfig("cross-encoder params need a head".into())),
            (Some(_), false) => Err(Error::InvalidConfig("bi-encoder params must not have a head".into())),
        }
    }

    /// `features * weight + bias`, accumulated in 64-bit.
    pub fn project(&self, features: &Matrix) -> Result<Matrix> {
        if features.cols() != self.input_dim {
            return Err(Error::DimMismatch {
                expected: self.input_dim,
                found: features.cols(),
            });
        }
        let out_dim = self.output_dim;
        let mut out = Matrix::zeros(features.rows(), out_dim);
        let mut acc = vec![0f64; out_dim];
        for (t, row) in features.iter_rows().enumerate() {
            acc.iter_mut()
                .zip(&self.bias)
                .for_each(|(a, &b)| *a = f64::from(b));
            for (k, &f) in row.iter().enumerate() {
                let f = f64::from(f);
                let w = &self.weight[k * out_dim..(k + 1) * out_dim];
                for (a, &wv) in acc.iter_mut().zip(w) {
                    *a += f * f64::from(wv);
                }
            }
            for (o, &a) in out.row_mut(t).iter_mut().zip(&acc) {
                *o = a as f32;
            }
        }
        Ok(out)
    }

    fn tensors(&self) -> Vec<(&'static str, Vec<u64>, &[f32])> {
        let mut out = vec![
            ("weight", vec![self.input_dim as u64, self.output_dim as u64], self.weight.as_slice()),
            ("bias", vec![self.output_dim as u64], self.bias.as_slice()),
        ];
        if let Some(head) = &self.head {
            out.push(("head_weights", vec![head.weights.len() as u64], head.weights.as_slice()));
            out.push(("head_bias", vec![], std::slice::from_ref(&head.bias)));
        }
        out
    }

    /// Serializes to the `params.bin` layout (see `save_model`).
    pub fn to_bytes(&self) -> Vec<u8> {
        let tensors = self.tensors();
        let mut w = Writer::new();
        w.bytes(PARAMS_MAGIC);
        w.u32(PARAMS_VERSION);
        w.u32(tensors.len() as u32);
        for (name, shape, data) in tensors {
            w.str(name);
            w.u32(shape.len() as u32);
            for d in shape {
                w.u64(d);
            }
            w.f32s(data);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read(bytes).map_err(Error::CorruptModel)
    }

    fn read(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader::new(bytes);
        r.expect(PARAMS_MAGIC)?;
        let version = r.u32()?;
        if version != PARAMS_VERSION {
            return Err(format!("unsupported params version {version}"));
        }
        let count = r.u32()?;
        let mut weight = None;
        let mut bias = None;
        let mut head_weights = None;
        let mut head_bias = None;
        for _ in 0..count {
            let name = r.str()?;
            let ndim = r.u32()? as usize;
            if ndim > 2 {
                return Err(format!("tensor `{name}` has rank {ndim}"));
            }
            let shape = (0..ndim).map(|_| r.len_u64()).collect::<std::result::Result<Vec<_>, _>>()?;
            let numel = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| format!("tensor `{name}` is too large"))?;
            let data = r.f32s(numel)?;
            let slot = match name.as_str() {
                "weight" => &mut weight,
                "bias" => &mut bias,
                "head_weights" => &mut head_weights,
                "head_bias" => &mut head_bias,
                other => return Err(format!("unknown tensor `{other}`")),
            };
            if slot.replace((shape, data)).is_some() {
                return Err(format!("duplicate tensor `{name}`"));
            }
        }
        r.finish()?;
        let (wshape, weight) = weight.ok_or("missing tensor `weight`")?;
        let (_, bias) = bias.ok_or("missing tensor `bias`")?;
        if wshape.len() != 2 {
            return Err("tensor `weight` must be 2-dimensional".into());
        }
        let head = match (head_weights, head_bias) {
            (Some((_, weights)), Some((_, b))) if b.len() == 1 => Some(CrossHead { weights, bias: b[0] }),
            (None, None) => None,
            _ => return Err("incomplete cross-encoder head".into()),
        };
        let params = Self {
            input_dim: wshape[0],
            output_dim: wshape[1],
            weight,
            bias,
            head,
        };
        let with_head = params.head.is_some();
        params
            .check_shape(params.input_dim, params.output_dim, with_head)
            .map_err(|e| e.to_string())?;
        Ok(params)
    }
}

const PARAMS_MAGIC: &[u8; 8] = b"LIRPARAM";
const PARAMS_VERSION: u32 = 1;

fn features_for(text: &str, seed: u64, backbone_dim: usize) -> Result<TokenFeatures> {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(Error::EmptyText(None));
    }
    backbone_features(&tokens, seed, backbone_dim)
}

/// Sparse activation: `max_t log(1 + relu(x[t, c]))` per column.
pub(crate) fn sparsify(projected: &Matrix) -> SparseEmbedding {
    let mut best = vec![0f32; projected.cols()];
    for row in projected.iter_rows() {
        for (b, &x) in best.iter_mut().zip(row) {
            let a = x.max(0.0).ln_1p();
            if a > *b {
                *b = a;
            }
        }
    }
    SparseEmbedding::from_dense(&best)
}

pub fn encode_bi(text: &str, config: &BiEncoderConfig, params: &ProjectionParams, side: Side) -> Result<Embedding> {
    let features = features_for(text, config.seed, config.backbone_dim)?;
    let projected = params.project(&features.matrix)?;
    Ok(match config.output_kind {
        OutputKind::SingleVector => match pool(&projected, config.pooling(side))? {
            Pooled::Vector(v) => Embedding::Dense(DenseEmbedding::new(v)),
            Pooled::Matrix(_) => unreachable!("validated config never pools single vectors with `none`"),
        },
        OutputKind::MultiVector => Embedding::Multi(MultiEmbedding::new(projected)?),
        OutputKind::Sparse => Embedding::Sparse(sparsify(&projected)),
    })
}

fn mean_projection(text: &str, config: &CrossEncoderConfig, params: &ProjectionParams) -> Result<Vec<f32>> {
    let features = features_for(text, config.seed, config.backbone_dim)?;
    match pool(&params.project(&features.matrix)?, PoolingStrategy::Mean)? {
        Pooled::Vector(v) => Ok(v),
        Pooled::Matrix(_) => unreachable!(),
    }
}

/// Scores a pair with the head over `[mean(q), mean(d), mean(q) * mean(d)]`.
pub fn encode_cross(query: &str, doc: &str, config: &CrossEncoderConfig, params: &ProjectionParams) -> Result<f32> {
    let head = params
        .head
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("cross-encoder params need a head".into()))?;
    let q = mean_projection(query, config, params)?;
    let d = mean_projection(doc, config, params)?;
    let dim = q.len();
    let (wq, rest) = head.weights.split_at(dim);
    let (wd, wp) = rest.split_at(dim);
    let mut acc = f64::from(head.bias);
    for i in 0..dim {
        let prod = q[i] * d[i];
        acc += f64::from(wq[i]) * f64::from(q[i]);
        acc += f64::from(wd[i]) * f64::from(d[i]);
        acc += f64::from(wp[i]) * f64::from(prod);
    }
    Ok(acc as f32)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiEncoder {
    pub config: BiEncoderConfig,
    pub params: ProjectionParams,
}

impl BiEncoder {
    pub fn new(config: BiEncoderConfig, params: ProjectionParams) -> Result<Self> {
        config.validate()?;
        params.check_shape(config.backbone_dim, config.projection_dim(), false)?;
        Ok(Self { config, params })
    }

    /// Fresh model with seeded initial parameters.
    pub fn init(config: BiEncoderConfig) -> Result<Self> {
        let params = ProjectionParams::for_bi(&config);
        Self::new(config, params)
    }

    pub fn encode(&self, text: &str, side: Side) -> Result<Embedding> {
        encode_bi(text, &self.config, &self.params, side)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossEncoder {
    pub config: CrossEncoderConfig,
    pub params: ProjectionParams,
}

impl CrossEncoder {
    pub fn new(config: CrossEncoderConfig, params: ProjectionParams) -> Result<Self> {
        config.validate()?;
        params.check_shape(config.backbone_dim, config.embedding_dim, true)?;
        Ok(Self { config, params })
    }

    pub fn init(config: CrossEncoderConfig) -> Result<Self> {
        let params = ProjectionParams::for_cross(&config);
        Self::new(config, params)
    }

    pub fn score(&self, query: &str, doc: &str) -> Result<f32> {
        encode_cross(query, doc, &self.config, &self.params)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Bi(BiEncoder),
    Cross(CrossEncoder),
}

impl Model {
    /// Short identifier used to tag runs.
    pub fn name(&self) -> String {
        match self {
            Model::Bi(m) => format!("bi-{}", m.config.output_kind.as_str()),
            Model::Cross(m) => match m.config.scoring_mode {
                ScoringMode::Pointwise => "cross-pointwise".into(),
                ScoringMode::Listwise => "cross-listwise".into(),
            },
        }
    }

    pub fn params(&self) -> &ProjectionParams {
        match self {
            Model::Bi(m) => &m.params,
            Model::Cross(m) => &m.params,
        }
    }

    pub fn params_mut(&mut self) -> &mut ProjectionParams {
        match self {
            Model::Bi(m) => &mut m.params,
            Model::Cross(m) => &mut m.params,
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        match self {
            Model::Bi(m) => ModelConfig::BiEncoder(m.config.clone()),
            Model::Cross(m) => ModelConfig::CrossEncoder(m.config.clone()),
        }
    }

    pub fn init(config: ModelConfig) -> Result<Self> {
        match config {
            ModelConfig::BiEncoder(c) => BiEncoder::init(c).map(Model::Bi),
            ModelConfig::CrossEncoder(c) => CrossEncoder::init(c).map(Model::Cross),
        }
    }

    pub fn with_params(config: ModelConfig, params: ProjectionParams) -> Result<Self> {
        match config {
            ModelConfig::BiEncoder(c) => BiEncoder::new(c, params).map(Model::Bi),
            ModelConfig::CrossEncoder(c) => CrossEncoder::new(c, params).map(Model::Cross),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "config", rename_all = "snake_case")]
pub enum ModelConfig {
    BiEncoder(BiEncoderConfig),
    CrossEncoder(CrossEncoderConfig),
}

#[derive(Serialize, Deserialize)]
struct ModelMeta {
    format_version: u32,
    #[serde(flatten)]
    model: ModelConfig,
}

pub const MODEL_META_FILE: &str = "model.yaml";
pub const MODEL_PARAMS_FILE: &str = "params.bin";

/// Writes `model.yaml` (format version, kind and config) and `params.bin`
/// into `dir`.
///
/// `params.bin` layout, all integers little-endian:
///
/// ```text
/// magic "LIRPARAM" | u32 version | u32 tensor count
/// per tensor: u32 name length | name bytes | u32 rank | u64 dims[rank] | f32 data (row-major)
/// ```
pub fn save_model(model: &Model, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = ModelMeta {
        format_version: PARAMS_VERSION,
        model: model.model_config(),
    };
    let yaml = serde_yaml::to_string(&meta).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let meta_path = dir.join(MODEL_META_FILE);
    fs::write(&meta_path, yaml).map_err(|e| Error::io(meta_path, e))?;
    let params_path = dir.join(MODEL_PARAMS_FILE);
    fs::write(&params_path, model.params().to_bytes()).map_err(|e| Error::io(params_path, e))
}

pub fn load_model(dir: &Path) -> Result<Model> {
    let meta_path = dir.join(MODEL_META_FILE);
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: ModelMeta =
        serde_yaml::from_str(&text).map_err(|e| Error::CorruptModel(format!("{}: {e}", meta_path.display())))?;
    if meta.format_version != PARAMS_VERSION {
        return Err(Error::CorruptModel(format!(
            "unsupported model format version {}",
            meta.format_version
        )));
    }
    let params_path = dir.join(MODEL_PARAMS_FILE);
    let bytes = fs::read(&params_path).map_err(|e| Error::io(&params_path, e))?;
    let params = ProjectionParams::from_bytes(&bytes)?;
    Model::with_params(meta.model, params)
}
