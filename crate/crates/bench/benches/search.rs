use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lir_core::encode::{BiEncoder, BiEncoderConfig, PoolingStrategy, Side, Similarity};
use lir_core::index::{DenseFlatIndex, MultiVectorIndex, SparseInvertedIndex};
use lir_core::score::max_sim;
use lir_core::search::{search_dense, search_multi, search_sparse};
use lir_core::{DenseEmbedding, MultiEmbedding, SparseEmbedding};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const K: usize = 10;

fn vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn sparse(rng: &mut ChaCha8Rng, vocab: u32, nnz: usize) -> SparseEmbedding {
    SparseEmbedding::from_pairs((0..nnz).map(|_| (rng.gen_range(0..vocab), rng.gen_range(0.01..2.0))))
}

fn multi(rng: &mut ChaCha8Rng, tokens: usize, dim: usize) -> MultiEmbedding {
    MultiEmbedding::from_rows(&(0..tokens).map(|_| vector(rng, dim)).collect::<Vec<_>>()).unwrap()
}

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("doc{i}")).collect()
}

fn bench_dense(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut group = c.benchmark_group("search_dense");
    for n in [1_000, 10_000] {
        let docs: Vec<DenseEmbedding> = (0..n).map(|_| DenseEmbedding::new(vector(&mut rng, 32))).collect();
        let index = DenseFlatIndex::new(ids(n), &docs, Similarity::Dot).unwrap();
        let q = DenseEmbedding::new(vector(&mut rng, 32));
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| black_box(search_dense(&index, &q, K).unwrap()))
        });
    }
    group.finish();
}

fn bench_sparse(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut group = c.benchmark_group("search_sparse");
    for n in [1_000, 10_000] {
        let docs: Vec<SparseEmbedding> = (0..n).map(|_| sparse(&mut rng, 256, 24)).collect();
        let index = SparseInvertedIndex::new(ids(n), &docs, 256).unwrap();
        let q = sparse(&mut rng, 256, 8);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| black_box(search_sparse(&index, &q, K).unwrap()))
        });
    }
    group.finish();
}

fn bench_multi(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let docs: Vec<MultiEmbedding> = (0..2_000).map(|_| multi(&mut rng, 8, 16)).collect();
    let index = MultiVectorIndex::new(ids(docs.len()), &docs, Similarity::Cosine).unwrap();
    let q = multi(&mut rng, 4, 16);
    let total = index.num_tokens();
    let mut group = c.benchmark_group("search_multi");
    for candidate_k in [10 * K, total] {
        group.bench_with_input(BenchmarkId::new("candidate_k", candidate_k), &candidate_k, |b, &ck| {
            b.iter(|| black_box(search_multi(&index, &q, K, ck).unwrap()))
        });
    }
    group.finish();

    let d = multi(&mut rng, 32, 128);
    let q = multi(&mut rng, 8, 128);
    c.bench_function("max_sim/8x32x128", |b| {
        b.iter(|| black_box(max_sim(&q, &d, Similarity::Dot).unwrap()))
    });
}

fn bench_encode(c: &mut Criterion) {
    let text = "the columbia river was named after the ship of robert gray who explored the pacific northwest";
    let single = BiEncoder::init(BiEncoderConfig::single_vector(128, PoolingStrategy::Mean, Similarity::Dot)).unwrap();
    let sparse = BiEncoder::init(BiEncoderConfig::sparse(1024)).unwrap();
    let mut group = c.benchmark_group("encode");
    group.bench_function("single_vector", |b| b.iter(|| black_box(single.encode(text, Side::Doc).unwrap())));
    group.bench_function("sparse", |b| b.iter(|| black_box(sparse.encode(text, Side::Doc).unwrap())));
    group.finish();
}

criterion_group!(benches, bench_dense, bench_sparse, bench_multi, bench_encode);
criterion_main!(benches);
