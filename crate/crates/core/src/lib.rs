//! Neural retrieval pipeline: fine-tuning, indexing, searching, re-ranking
//! and evaluation over single-vector, multi-vector and sparse bi-encoders
//! and pointwise/listwise cross-encoders.

mod binio;
pub mod data;
pub mod encode;
pub mod error;
pub mod eval;
pub mod index;
pub mod rerank;
pub mod score;
pub mod search;
pub mod train;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    rank_order, DenseEmbedding, DocRecord, Embedding, Matrix, MultiEmbedding, QueryRecord, Qrels, Run, ScoredDoc,
    SparseEmbedding, TrainSample,
};
