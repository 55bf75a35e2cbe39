//! Fine-tuning: ranking losses, closed-form gradients through the
//! projection (and cross-encoder head), and a seeded SGD loop.
//!
//! Training runs in 64-bit. Parameters are widened from their stored 32-bit
//! values on entry and narrowed again when the trained model is returned.
//! Subgradients at ties pick the lowest index; relu has gradient 0 at 0.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encode::{
    backbone_features, tokenize, BiEncoderConfig, CrossEncoderConfig, CrossHead, Model, ModelConfig, OutputKind,
    PoolingStrategy, ProjectionParams, Side, Similarity,
};
use crate::error::{Error, Result};
use crate::types::TrainSample;

fn default_temperature() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossKind {
    Infonce {
        #[serde(default = "default_temperature")]
        temperature: f64,
    },
    Ranknet,
    ListwiseCe,
}

impl LossKind {
    pub fn infonce() -> Self {
        LossKind::Infonce { temperature: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if let LossKind::Infonce { temperature } = *self {
            if !(temperature.is_finite() && temperature > 0.0) {
                return Err(Error::InvalidConfig("infonce temperature must be finite and positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        // lr = 0 is accepted: it leaves parameters untouched.
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be finite and non-negative".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("epochs and batch_size must be positive".into()));
        }
        Ok(())
    }
}

fn check_inputs(scores: &[f64], labels: &[f64]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::DimMismatch {
            expected: scores.len(),
            found: labels.len(),
        });
    }
    if scores.len() < 2 {
        return Err(Error::InvalidSample("losses need at least two scores".into()));
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(Error::NoPreference);
    }
    Ok(())
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m.is_infinite() {
        return m;
    }
    m + z.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(z);
    z.iter().map(|&v| (v - lse).exp()).collect()
}

/// `log(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn argmax_lowest(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn label_distribution(labels: &[f64]) -> Result<Vec<f64>> {
    if labels.iter().any(|&l| l < 0.0) {
        return Err(Error::InvalidSample("listwise_ce needs non-negative labels".into()));
    }
    let total: f64 = labels.iter().sum();
    Ok(labels.iter().map(|&l| l / total).collect())
}

/// Loss value and its gradient with respect to `scores`.
pub fn loss_and_gradient(kind: LossKind, scores: &[f64], labels: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_inputs(scores, labels)?;
    kind.validate()?;
    match kind {
        LossKind::Infonce { temperature } => {
            let pos = argmax_lowest(labels);
            let z: Vec<f64> = scores.iter().map(|&s| s / temperature).collect();
            let loss = log_sum_exp(&z) - z[pos];
            let mut grad = softmax(&z);
            grad[pos] -= 1.0;
            grad.iter_mut().for_each(|g| *g /= temperature);
            Ok((loss, grad))
        }
        LossKind::Ranknet => {
            let n = scores.len();
            let mut grad = vec![0.0; n];
            let mut loss = 0.0;
            let mut pairs = 0usize;
            for i in 0..n {
                for j in 0..n {
                    if labels[i] > labels[j] {
                        let diff = scores[i] - scores[j];
                        loss += softplus(-diff);
                        let s = sigmoid(-diff);
                        grad[i] -= s;
                        grad[j] += s;
                        pairs += 1;
                    }
                }
            }
            let p = pairs as f64;
            grad.iter_mut().for_each(|g| *g /= p);
            Ok((loss / p, grad))
        }
        LossKind::ListwiseCe => {
            let target = label_distribution(labels)?;
            let lse = log_sum_exp(scores);
            let loss = -target
                .iter()
                .zip(scores)
                .filter(|(&p, _)| p > 0.0)
                .map(|(&p, &s)| p * (s - lse))
                .sum::<f64>();
            let grad = softmax(scores).iter().zip(&target).map(|(q, p)| q - p).collect();
            Ok((loss, grad))
        }
    }
}

pub fn loss_value(kind: LossKind, scores: &[f64], labels: &[f64]) -> Result<f64> {
    loss_and_gradient(kind, scores, labels).map(|(l, _)| l)
}

pub fn loss_gradient(kind: LossKind, scores: &[f64], labels: &[f64]) -> Result<Vec<f64>> {
    loss_and_gradient(kind, scores, labels).map(|(_, g)| g)
}

/// 64-bit working copy of [`ProjectionParams`]; also used for gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Params64 {
    pub input_dim: usize,
    pub output_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    /// Empty for bi-encoders.
    pub head_weights: Vec<f64>,
    pub head_bias: f64,
}

impl Params64 {
    pub fn from_params(p: &ProjectionParams) -> Self {
        let widen = |v: &[f32]| v.iter().map(|&x| f64::from(x)).collect::<Vec<_>>();
        Self {
            input_dim: p.input_dim,
            output_dim: p.output_dim,
            weight: widen(&p.weight),
            bias: widen(&p.bias),
            head_weights: p.head.as_ref().map(|h| widen(&h.weights)).unwrap_or_default(),
            head_bias: p.head.as_ref().map_or(0.0, |h| f64::from(h.bias)),
        }
    }

    pub fn to_params(&self, with_head: bool) -> ProjectionParams {
        let narrow = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Vec<_>>();
        ProjectionParams {
            input_dim: self.input_dim,
            output_dim: self.output_dim,
            weight: narrow(&self.weight),
            bias: narrow(&self.bias),
            head: with_head.then(|| CrossHead {
                weights: narrow(&self.head_weights),
                bias: self.head_bias as f32,
            }),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            input_dim: self.input_dim,
            output_dim: self.output_dim,
            weight: vec![0.0; self.weight.len()],
            bias: vec![0.0; self.bias.len()],
            head_weights: vec![0.0; self.head_weights.len()],
            head_bias: 0.0,
        }
    }

    pub fn num_values(&self) -> usize {
        self.weight.len() + self.bias.len() + self.head_weights.len() + usize::from(!self.head_weights.is_empty())
    }

    /// Mutable view of every scalar, in the order weight, bias, head
    /// weights, head bias.
    pub fn values_mut(&mut self) -> Vec<&mut f64> {
        let has_head = !self.head_weights.is_empty();
        let mut out: Vec<&mut f64> = self
            .weight
            .iter_mut()
            .chain(self.bias.iter_mut())
            .chain(self.head_weights.iter_mut())
            .collect();
        if has_head {
            out.push(&mut self.head_bias);
        }
        out
    }

    pub fn values(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .weight
            .iter()
            .chain(&self.bias)
            .chain(&self.head_weights)
            .copied()
            .collect();
        if !self.head_weights.is_empty() {
            out.push(self.head_bias);
        }
        out
    }

    fn add_scaled(&mut self, other: &Params64, scale: f64) {
        let axpy = |dst: &mut [f64], src: &[f64]| dst.iter_mut().zip(src).for_each(|(d, s)| *d += scale * s);
        axpy(&mut self.weight, &other.weight);
        axpy(&mut self.bias, &other.bias);
        axpy(&mut self.head_weights, &other.head_weights);
        self.head_bias += scale * other.head_bias;
    }
}

/// Row-major 64-bit matrix used inside the training graph.
struct Rows {
    n: usize,
    dim: usize,
    data: Vec<f64>,
}

impl Rows {
    fn zeros(n: usize, dim: usize) -> Self {
        Self {
            n,
            dim,
            data: vec![0.0; n * dim],
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }
}

struct TextGraph {
    features: Rows,
    projected: Rows,
}

fn text_graph(text: &str, seed: u64, backbone_dim: usize, params: &Params64) -> Result<TextGraph> {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(Error::EmptyText(None));
    }
    let feats = backbone_features(&tokens, seed, backbone_dim)?.matrix;
    if feats.cols() != params.input_dim {
        return Err(Error::DimMismatch {
            expected: params.input_dim,
            found: feats.cols(),
        });
    }
    let features = Rows {
        n: feats.rows(),
        dim: feats.cols(),
        data: feats.as_slice().iter().map(|&v| f64::from(v)).collect(),
    };
    let out = params.output_dim;
    let mut projected = Rows::zeros(features.n, out);
    for t in 0..features.n {
        let dst = projected.row_mut(t);
        dst.copy_from_slice(&params.bias);
        for (k, &f) in features.row(t).iter().enumerate() {
            let w = &params.weight[k * out..(k + 1) * out];
            dst.iter_mut().zip(w).for_each(|(d, &wv)| *d += f * wv);
        }
    }
    Ok(TextGraph { features, projected })
}

/// Accumulates `features^T * grad_projected` into the weight gradient and
/// the row sums into the bias gradient.
fn backprop_projection(graph: &TextGraph, grad_projected: &Rows, grad: &mut Params64) {
    let out = grad.output_dim;
    for t in 0..graph.features.n {
        let gp = grad_projected.row(t);
        for (b, &g) in grad.bias.iter_mut().zip(gp) {
            *b += g;
        }
        for (k, &f) in graph.features.row(t).iter().enumerate() {
            if f == 0.0 {
                continue;
            }
            let gw = &mut grad.weight[k * out..(k + 1) * out];
            gw.iter_mut().zip(gp).for_each(|(w, &g)| *w += f * g);
        }
    }
}

/// Pooled vector plus, for max pooling, the source row of every column.
struct PooledVec {
    values: Vec<f64>,
    argmax: Vec<usize>,
}

fn pool_forward(p: &Rows, strategy: PoolingStrategy) -> PooledVec {
    match strategy {
        PoolingStrategy::First => PooledVec {
            values: p.row(0).to_vec(),
            argmax: Vec::new(),
        },
        PoolingStrategy::Mean => {
            let mut values = vec![0.0; p.dim];
            for t in 0..p.n {
                values.iter_mut().zip(p.row(t)).for_each(|(v, &x)| *v += x);
            }
            values.iter_mut().for_each(|v| *v /= p.n as f64);
            PooledVec {
                values,
                argmax: Vec::new(),
            }
        }
        PoolingStrategy::Max => {
            let mut values = p.row(0).to_vec();
            let mut argmax = vec![0; p.dim];
            for t in 1..p.n {
                for (c, &x) in p.row(t).iter().enumerate() {
                    if x > values[c] {
                        values[c] = x;
                        argmax[c] = t;
                    }
                }
            }
            PooledVec { values, argmax }
        }
        PoolingStrategy::None => unreachable!("single-vector configs never use `none` pooling"),
    }
}

fn pool_backward(pooled: &PooledVec, strategy: PoolingStrategy, g: &[f64], out: &mut Rows) {
    match strategy {
        PoolingStrategy::First => out.row_mut(0).iter_mut().zip(g).for_each(|(o, &gv)| *o += gv),
        PoolingStrategy::Mean => {
            let inv = 1.0 / out.n as f64;
            for t in 0..out.n {
                out.row_mut(t).iter_mut().zip(g).for_each(|(o, &gv)| *o += gv * inv);
            }
        }
        PoolingStrategy::Max => {
            for (c, &gv) in g.iter().enumerate() {
                let t = pooled.argmax[c];
                out.row_mut(t)[c] += gv;
            }
        }
        PoolingStrategy::None => unreachable!(),
    }
}

/// `max_t log(1 + relu(p[t, c]))`; `argmax[c]` is `None` when every entry
/// of the column is non-positive.
struct SparseVec {
    values: Vec<f64>,
    argmax: Vec<Option<usize>>,
}

fn sparse_forward(p: &Rows) -> SparseVec {
    let mut values = vec![0.0; p.dim];
    let mut argmax = vec![None; p.dim];
    for t in 0..p.n {
        for (c, &x) in p.row(t).iter().enumerate() {
            let a = x.max(0.0).ln_1p();
            if a > values[c] {
                values[c] = a;
                argmax[c] = Some(t);
            }
        }
    }
    SparseVec { values, argmax }
}

fn sparse_backward(s: &SparseVec, p: &Rows, g: &[f64], out: &mut Rows) {
    for (c, &gv) in g.iter().enumerate() {
        if let Some(t) = s.argmax[c] {
            out.row_mut(t)[c] += gv / (1.0 + p.row(t)[c]);
        }
    }
}

fn dot64(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Similarity and its gradients with respect to both inputs.
fn sim_with_grad(sim: Similarity, a: &[f64], b: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    match sim {
        Similarity::Dot => (dot64(a, b), b.to_vec(), a.to_vec()),
        Similarity::Cosine => {
            let na = dot64(a, a).sqrt();
            let nb = dot64(b, b).sqrt();
            if na == 0.0 || nb == 0.0 {
                return (0.0, vec![0.0; a.len()], vec![0.0; b.len()]);
            }
            let s = dot64(a, b) / (na * nb);
            let da = a.iter().zip(b).map(|(&x, &y)| y / (na * nb) - s * x / (na * na)).collect();
            let db = a.iter().zip(b).map(|(&x, &y)| x / (na * nb) - s * y / (nb * nb)).collect();
            (s, da, db)
        }
    }
}

fn sim_value(sim: Similarity, a: &[f64], b: &[f64]) -> f64 {
    match sim {
        Similarity::Dot => dot64(a, b),
        Similarity::Cosine => {
            let na = dot64(a, a).sqrt();
            let nb = dot64(b, b).sqrt();
            if na == 0.0 || nb == 0.0 {
                0.0
            } else {
                dot64(a, b) / (na * nb)
            }
        }
    }
}

enum BiRep {
    Vector(PooledVec),
    Tokens,
    Sparse(SparseVec),
}

fn bi_forward(graph: &TextGraph, config: &BiEncoderConfig, side: Side) -> BiRep {
    match config.output_kind {
        OutputKind::SingleVector => BiRep::Vector(pool_forward(&graph.projected, config.pooling(side))),
        OutputKind::MultiVector => BiRep::Tokens,
        OutputKind::Sparse => BiRep::Sparse(sparse_forward(&graph.projected)),
    }
}

fn bi_vector(rep: &BiRep) -> &[f64] {
    match rep {
        BiRep::Vector(p) => &p.values,
        BiRep::Sparse(s) => &s.values,
        BiRep::Tokens => unreachable!(),
    }
}

/// Score of one (query, doc) pair; when `upstream` is given, also pushes
/// `upstream * d score` into the per-token projection gradients.
fn bi_pair(
    config: &BiEncoderConfig,
    q: (&TextGraph, &BiRep),
    d: (&TextGraph, &BiRep),
    upstream: Option<(f64, &mut Rows, &mut Rows)>,
) -> f64 {
    let sim = config.similarity_function;
    match config.output_kind {
        OutputKind::MultiVector => {
            let (qp, dp) = (&q.0.projected, &d.0.projected);
            let mut total = 0.0;
            let mut grads = upstream;
            for i in 0..qp.n {
                let mut best = 0;
                let mut best_s = f64::NEG_INFINITY;
                for j in 0..dp.n {
                    let s = sim_value(sim, qp.row(i), dp.row(j));
                    if s > best_s {
                        best_s = s;
                        best = j;
                    }
                }
                total += best_s;
                if let Some((g, gq, gd)) = grads.as_mut() {
                    let (_, da, db) = sim_with_grad(sim, qp.row(i), dp.row(best));
                    gq.row_mut(i).iter_mut().zip(&da).for_each(|(o, &v)| *o += *g * v);
                    gd.row_mut(best).iter_mut().zip(&db).for_each(|(o, &v)| *o += *g * v);
                }
            }
            total
        }
        _ => {
            let (qv, dv) = (bi_vector(q.1), bi_vector(d.1));
            let (s, da, db) = sim_with_grad(sim, qv, dv);
            if let Some((g, gq, gd)) = upstream {
                let gqv: Vec<f64> = da.iter().map(|v| g * v).collect();
                let gdv: Vec<f64> = db.iter().map(|v| g * v).collect();
                vector_backward(q, &gqv, gq, config, Side::Query);
                vector_backward(d, &gdv, gd, config, Side::Doc);
            }
            s
        }
    }
}

fn vector_backward(x: (&TextGraph, &BiRep), g: &[f64], out: &mut Rows, config: &BiEncoderConfig, side: Side) {
    match x.1 {
        BiRep::Vector(p) => pool_backward(p, config.pooling(side), g, out),
        BiRep::Sparse(s) => sparse_backward(s, &x.0.projected, g, out),
        BiRep::Tokens => unreachable!(),
    }
}

fn bi_objective(
    config: &BiEncoderConfig,
    params: &Params64,
    sample: &TrainSample,
    loss: LossKind,
    want_grad: bool,
) -> Result<(f64, Option<Params64>)> {
    let seed = config.seed;
    let bdim = config.backbone_dim;
    let qg = text_graph(&sample.query.text, seed, bdim, params)
        .map_err(|e| with_id(e, &sample.query.query_id))?;
    let qrep = bi_forward(&qg, config, Side::Query);
    let mut docs = Vec::with_capacity(sample.docs.len());
    for doc in &sample.docs {
        let g = text_graph(&doc.text, seed, bdim, params).map_err(|e| with_id(e, &doc.doc_id))?;
        let rep = bi_forward(&g, config, Side::Doc);
        docs.push((g, rep));
    }
    let scores: Vec<f64> = docs
        .iter()
        .map(|(g, rep)| bi_pair(config, (&qg, &qrep), (g, rep), None))
        .collect();
    let labels: Vec<f64> = sample.labels.iter().map(|&l| f64::from(l)).collect();
    let (value, gscores) = loss_and_gradient(loss, &scores, &labels)?;
    if !want_grad {
        return Ok((value, None));
    }
    let mut grad = params.zeros_like();
    let mut gq = Rows::zeros(qg.projected.n, qg.projected.dim);
    for ((g, rep), &gs) in docs.iter().zip(&gscores) {
        let mut gd = Rows::zeros(g.projected.n, g.projected.dim);
        bi_pair(config, (&qg, &qrep), (g, rep), Some((gs, &mut gq, &mut gd)));
        backprop_projection(g, &gd, &mut grad);
    }
    backprop_projection(&qg, &gq, &mut grad);
    Ok((value, Some(grad)))
}

fn cross_objective(
    config: &CrossEncoderConfig,
    params: &Params64,
    sample: &TrainSample,
    loss: LossKind,
    want_grad: bool,
) -> Result<(f64, Option<Params64>)> {
    let dim = params.output_dim;
    if params.head_weights.len() != 3 * dim {
        return Err(Error::DimMismatch {
            expected: 3 * dim,
            found: params.head_weights.len(),
        });
    }
    let (wq, rest) = params.head_weights.split_at(dim);
    let (wd, wp) = rest.split_at(dim);
    let qg = text_graph(&sample.query.text, config.seed, config.backbone_dim, params)
        .map_err(|e| with_id(e, &sample.query.query_id))?;
    let qv = pool_forward(&qg.projected, PoolingStrategy::Mean);
    let mut docs = Vec::with_capacity(sample.docs.len());
    let mut scores = Vec::with_capacity(sample.docs.len());
    for doc in &sample.docs {
        let g = text_graph(&doc.text, config.seed, config.backbone_dim, params)
            .map_err(|e| with_id(e, &doc.doc_id))?;
        let dv = pool_forward(&g.projected, PoolingStrategy::Mean);
        let mut s = params.head_bias;
        for i in 0..dim {
            let (q, d) = (qv.values[i], dv.values[i]);
            s += wq[i] * q + wd[i] * d + wp[i] * q * d;
        }
        scores.push(s);
        docs.push((g, dv));
    }
    let labels: Vec<f64> = sample.labels.iter().map(|&l| f64::from(l)).collect();
    let (value, gscores) = loss_and_gradient(loss, &scores, &labels)?;
    if !want_grad {
        return Ok((value, None));
    }
    let mut grad = params.zeros_like();
    let mut gqv = vec![0.0; dim];
    for ((g, dv), &gs) in docs.iter().zip(&gscores) {
        let mut gdv = vec![0.0; dim];
        for i in 0..dim {
            let (q, d) = (qv.values[i], dv.values[i]);
            grad.head_weights[i] += gs * q;
            grad.head_weights[dim + i] += gs * d;
            grad.head_weights[2 * dim + i] += gs * q * d;
            gqv[i] += gs * (wq[i] + wp[i] * d);
            gdv[i] = gs * (wd[i] + wp[i] * q);
        }
        grad.head_bias += gs;
        let mut gd = Rows::zeros(g.projected.n, dim);
        pool_backward(dv, PoolingStrategy::Mean, &gdv, &mut gd);
        backprop_projection(g, &gd, &mut grad);
    }
    let mut gq = Rows::zeros(qg.projected.n, dim);
    pool_backward(&qv, PoolingStrategy::Mean, &gqv, &mut gq);
    backprop_projection(&qg, &gq, &mut grad);
    Ok((value, Some(grad)))
}

fn with_id(err: Error, id: &str) -> Error {
    match err {
        Error::EmptyText(None) => Error::EmptyText(Some(id.to_string())),
        other => other,
    }
}

fn objective(
    config: &ModelConfig,
    params: &Params64,
    sample: &TrainSample,
    loss: LossKind,
    want_grad: bool,
) -> Result<(f64, Option<Params64>)> {
    match config {
        ModelConfig::BiEncoder(c) => bi_objective(c, params, sample, loss, want_grad),
        ModelConfig::CrossEncoder(c) => cross_objective(c, params, sample, loss, want_grad),
    }
}

/// Loss of one sample under 64-bit parameters.
pub fn sample_loss(config: &ModelConfig, params: &Params64, sample: &TrainSample, loss: LossKind) -> Result<f64> {
    objective(config, params, sample, loss, false).map(|(l, _)| l)
}

/// Loss of one sample and its gradient with respect to every parameter.
pub fn sample_loss_and_gradient(
    config: &ModelConfig,
    params: &Params64,
    sample: &TrainSample,
    loss: LossKind,
) -> Result<(f64, Params64)> {
    let (l, g) = objective(config, params, sample, loss, true)?;
    Ok((l, g.expect("gradient requested")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    /// Mean training loss of each epoch, measured before each batch update.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
}

/// Mini-batch SGD over `samples`. Each sample's documents act as its own
/// negatives; the batch gradient is the mean over the batch's samples.
/// Sample order is reshuffled every epoch from `config.seed`.
pub fn fit(model: &Model, samples: &[TrainSample], config: &TrainConfig) -> Result<(Model, FitReport)> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidSample("no training samples".into()));
    }
    let model_config = model.model_config();
    let with_head = matches!(model, Model::Cross(_));
    let mut params = Params64::from_params(model.params());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut steps = 0;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut grad = params.zeros_like();
            for &i in batch {
                let (l, g) = sample_loss_and_gradient(&model_config, &params, &samples[i], config.loss)?;
                if !l.is_finite() {
                    return Err(Error::Diverged { epoch });
                }
                total += l;
                grad.add_scaled(&g, 1.0);
            }
            if config.learning_rate != 0.0 {
                params.add_scaled(&grad, -config.learning_rate / batch.len() as f64);
            }
            steps += 1;
        }
        let mean = total / samples.len() as f64;
        if !mean.is_finite() || params.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        epoch_losses.push(mean);
    }
    let trained = Model::with_params(model_config, params.to_params(with_head))?;
    Ok((trained, FitReport { epoch_losses, steps }))
}

/// `epoch,mean_loss` CSV, epochs numbered from 1.
pub fn loss_trace_csv(report: &FitReport) -> String {
    let mut out = String::from("epoch,mean_loss\n");
    for (i, l) in report.epoch_losses.iter().enumerate() {
        writeln!(out, "{},{}", i + 1, l).unwrap();
    }
    out
}

pub fn write_loss_trace(report: &FitReport, path: &Path) -> Result<()> {
    fs::write(path, loss_trace_csv(report)).map_err(|e| Error::io(path, e))
}
