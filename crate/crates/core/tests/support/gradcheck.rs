//! Finite-difference oracle and random instances for gradient checks.

use lir_core::encode::{
    BiEncoderConfig, CrossEncoderConfig, ModelConfig, PoolingStrategy, ProjectionParams, ScoringMode, Similarity,
};
use lir_core::train::{sample_loss, LossKind, Params64};
use lir_core::{DocRecord, QueryRecord, TrainSample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-3;

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate.
pub fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Below this norm a gradient counts as zero; keeps round-off on exactly
/// flat objectives from dominating the ratio.
pub const GRAD_NORM_FLOOR: f64 = 1e-8;

/// `||a - b|| / max(||a||, ||b||, GRAD_NORM_FLOOR)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(GRAD_NORM_FLOOR)
}

pub fn with_values(params: &Params64, values: &[f64]) -> Params64 {
    let mut p = params.clone();
    for (slot, &v) in p.values_mut().into_iter().zip(values) {
        *slot = v;
    }
    p
}

/// Numerical gradient of the sample loss with respect to all parameters.
pub fn numeric_param_grad(config: &ModelConfig, params: &Params64, sample: &TrainSample, loss: LossKind) -> Vec<f64> {
    central_diff(
        |x| sample_loss(config, &with_values(params, x), sample, loss).unwrap(),
        &params.values(),
        FD_STEP,
    )
}

const WORDS: [&str; 10] = ["alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta", "iota", "kappa"];

fn text(rng: &mut ChaCha8Rng, max_tokens: usize) -> String {
    let n = rng.gen_range(1..=max_tokens);
    (0..n).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

pub fn random_loss(rng: &mut ChaCha8Rng) -> LossKind {
    match rng.gen_range(0..3) {
        0 => LossKind::Infonce {
            temperature: rng.gen_range(0.5..2.0),
        },
        1 => LossKind::Ranknet,
        _ => LossKind::ListwiseCe,
    }
}

pub fn random_labels(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    loop {
        let graded = rng.gen_bool(0.5);
        let labels: Vec<f32> = if graded {
            (0..n).map(|_| rng.gen_range(0..4) as f32).collect()
        } else {
            let pos = rng.gen_range(0..n);
            (0..n).map(|i| if i == pos { 1.0 } else { 0.0 }).collect()
        };
        if labels.iter().any(|&l| l != labels[0]) {
            return labels;
        }
    }
}

pub fn random_sample(rng: &mut ChaCha8Rng, max_docs: usize) -> TrainSample {
    let ndocs = rng.gen_range(2..=max_docs);
    let docs = (0..ndocs)
        .map(|i| DocRecord::new(format!("d{i}"), text(rng, 4)).unwrap())
        .collect();
    TrainSample::new(QueryRecord::new("q", text(rng, 3)).unwrap(), docs, random_labels(rng, ndocs)).unwrap()
}

/// Which model family a random instance belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Single,
    Multi,
    Sparse,
    Cross,
}

pub fn random_model(rng: &mut ChaCha8Rng, family: Family) -> (ModelConfig, Params64) {
    let dim = rng.gen_range(1..=8);
    let backbone = rng.gen_range(2..=8);
    let seed = rng.gen();
    let sim = if rng.gen_bool(0.5) { Similarity::Dot } else { Similarity::Cosine };
    let pooling = |rng: &mut ChaCha8Rng| match rng.gen_range(0..3) {
        0 => PoolingStrategy::First,
        1 => PoolingStrategy::Mean,
        _ => PoolingStrategy::Max,
    };
    let config = match family {
        Family::Single => {
            let mut c = BiEncoderConfig::single_vector(dim, pooling(rng), sim);
            c.doc_pooling_strategy = pooling(rng);
            ModelConfig::BiEncoder(c.with_backbone_dim(backbone).with_seed(seed))
        }
        Family::Multi => ModelConfig::BiEncoder(BiEncoderConfig::multi_vector(dim, sim).with_backbone_dim(backbone).with_seed(seed)),
        Family::Sparse => ModelConfig::BiEncoder(BiEncoderConfig::sparse(dim).with_backbone_dim(backbone).with_seed(seed)),
        Family::Cross => {
            let mode = if rng.gen_bool(0.5) { ScoringMode::Pointwise } else { ScoringMode::Listwise };
            let mut c = CrossEncoderConfig::new(mode, dim);
            c.backbone_dim = backbone;
            c.seed = seed;
            ModelConfig::CrossEncoder(c)
        }
    };
    let with_head = family == Family::Cross;
    let mut params = Params64::from_params(&ProjectionParams::init(backbone, dim, with_head, rng.gen()));
    // scale up weights so projections are not tiny; random bias moves relu/max away from trivial regimes
    params.weight.iter_mut().for_each(|w| *w *= 3.0);
    params.bias.iter_mut().for_each(|b| *b = rng.gen_range(-0.3..0.3));
    if with_head {
        params.head_bias = rng.gen_range(-1.0..1.0);
    }
    (config, params)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Smallest distance of the instance from a non-differentiable point
/// (relu at zero, ties in max pooling or MaxSim), measured on the projected
/// token rows. Identical tokens share rows and move together, so they are
/// compared once.
pub fn kink_margin(config: &ModelConfig, params: &Params64, sample: &TrainSample) -> f64 {
    use lir_core::encode::{backbone_features, tokenize, OutputKind};

    let (seed, backbone) = match config {
        ModelConfig::BiEncoder(c) => (c.seed, c.backbone_dim),
        ModelConfig::CrossEncoder(_) => return f64::INFINITY,
    };
    let ModelConfig::BiEncoder(bi) = config else { unreachable!() };
    let project = |text: &str| -> Vec<Vec<f64>> {
        let mut toks = tokenize(text);
        toks.sort();
        toks.dedup();
        let f = backbone_features(&toks, seed, backbone).unwrap().matrix;
        (0..f.rows())
            .map(|t| {
                (0..params.output_dim)
                    .map(|c| {
                        params.bias[c]
                            + (0..backbone)
                                .map(|k| f.row(t)[k] as f64 * params.weight[k * params.output_dim + c])
                                .sum::<f64>()
                    })
                    .collect()
            })
            .collect()
    };
    let column_gap = |rows: &[Vec<f64>], c: usize| -> f64 {
        let mut vals: Vec<f64> = rows.iter().map(|r| r[c]).collect();
        vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
        if vals.len() < 2 { f64::INFINITY } else { vals[0] - vals[1] }
    };
    let texts: Vec<&str> = std::iter::once(sample.query.text.as_str())
        .chain(sample.docs.iter().map(|d| d.text.as_str()))
        .collect();
    let mut margin = f64::INFINITY;
    match bi.output_kind {
        OutputKind::Sparse => {
            for t in &texts {
                let rows = project(t);
                for c in 0..params.output_dim {
                    for r in &rows {
                        margin = margin.min(r[c].abs());
                    }
                    let positive: Vec<Vec<f64>> = rows.iter().filter(|r| r[c] > 0.0).cloned().collect();
                    margin = margin.min(column_gap(&positive, c));
                }
            }
        }
        OutputKind::SingleVector => {
            for (i, t) in texts.iter().enumerate() {
                let side_pool = if i == 0 { bi.query_pooling_strategy } else { bi.doc_pooling_strategy };
                if side_pool == PoolingStrategy::Max {
                    let rows = project(t);
                    for c in 0..params.output_dim {
                        margin = margin.min(column_gap(&rows, c));
                    }
                }
            }
        }
        OutputKind::MultiVector => {
            let q = project(texts[0]);
            for d in &texts[1..] {
                let drows = project(d);
                for qr in &q {
                    let mut sims: Vec<f64> = drows
                        .iter()
                        .map(|dr| {
                            let dot: f64 = qr.iter().zip(dr).map(|(a, b)| a * b).sum();
                            match bi.similarity_function {
                                Similarity::Dot => dot,
                                Similarity::Cosine => {
                                    let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
                                    dot / (n(qr) * n(dr))
                                }
                            }
                        })
                        .collect();
                    sims.sort_by(|a, b| b.partial_cmp(a).unwrap());
                    if sims.len() > 1 {
                        margin = margin.min(sims[0] - sims[1]);
                    }
                }
            }
        }
    }
    margin
}

/// Minimum kink margin accepted for finite-difference comparisons.
pub const KINK_MARGIN: f64 = 1e-2;

/// Draws random (config, params, sample, loss) instances, skipping those too
/// close to a kink, until `count` are collected.
pub fn smooth_instances(
    base_seed: u64,
    count: usize,
    families: &[Family],
) -> Vec<(Family, ModelConfig, Params64, TrainSample, LossKind)> {
    let mut out = Vec::with_capacity(count);
    let mut seed = base_seed;
    while out.len() < count {
        let mut rng = rng(seed);
        seed += 1;
        let family = families[out.len() % families.len()];
        let (config, params) = random_model(&mut rng, family);
        let sample = random_sample(&mut rng, 4);
        let loss = random_loss(&mut rng);
        if kink_margin(&config, &params, &sample) < KINK_MARGIN {
            continue;
        }
        out.push((family, config, params, sample, loss));
    }
    out
}
