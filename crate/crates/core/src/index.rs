//! Exact indexes for the three bi-encoder output kinds, and their on-disk
//! format.
//!
//! An index directory holds:
//!
//! * `meta.txt`: `key: value` lines (format version, kind, similarity,
//!   dimension or vocabulary size, counts)
//! * `payload.bin`: little-endian binary, `magic "LIRINDEX" | u32 version |
//!   u32 kind`, followed by length-prefixed sections (`4-byte tag | u64 byte
//!   length | body`):
//!   - `DOCS`: `u64 count`, then per doc `u32 length | UTF-8 id`
//!   - dense: `VECS`: `u64 rows | u64 cols | f32 row-major data`
//!   - sparse: `PSTG`: `u64 vocab_size | u64 offsets[vocab_size + 1] |
//!     (u32 doc_index, f32 weight) per posting`
//!   - multi-vector: `OFFS`: `u64 count | (u64 start, u64 len) per doc`,
//!     then `VECS` for the concatenated token matrix
//! * `docids.txt`: one doc id per line, corpus order.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::binio::{Reader, Writer};
use crate::encode::{BiEncoder, OutputKind, Side, Similarity};
use crate::error::{Error, Result};
use crate::types::{DenseEmbedding, DocRecord, Embedding, Matrix, MultiEmbedding, SparseEmbedding};

fn unique_ids(doc_ids: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(doc_ids.len());
    for id in doc_ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateDoc(id.clone()));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseFlatIndex {
    doc_ids: Vec<String>,
    vectors: Matrix,
    similarity: Similarity,
}

impl DenseFlatIndex {
    pub fn new(doc_ids: Vec<String>, embeddings: &[DenseEmbedding], similarity: Similarity) -> Result<Self> {
        if doc_ids.len() != embeddings.len() {
            return Err(Error::DimMismatch {
                expected: doc_ids.len(),
                found: embeddings.len(),
            });
        }
        unique_ids(&doc_ids)?;
        let rows: Vec<Vec<f32>> = embeddings.iter().map(|e| e.as_slice().to_vec()).collect();
        Ok(Self {
            doc_ids,
            vectors: Matrix::from_rows(&rows)?,
            similarity,
        })
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn similarity(&self) -> Similarity {
        self.similarity
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posting {
    pub doc: u32,
    pub weight: f32,
}

/// Term-major postings, each list sorted by document index.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseInvertedIndex {
    doc_ids: Vec<String>,
    vocab_size: usize,
    postings: Vec<Vec<Posting>>,
}

impl SparseInvertedIndex {
    pub fn new(doc_ids: Vec<String>, embeddings: &[SparseEmbedding], vocab_size: usize) -> Result<Self> {
        if doc_ids.len() != embeddings.len() {
            return Err(Error::DimMismatch {
                expected: doc_ids.len(),
                found: embeddings.len(),
            });
        }
        unique_ids(&doc_ids)?;
        let mut postings = vec![Vec::new(); vocab_size];
        for (doc, emb) in embeddings.iter().enumerate() {
            if let Some(t) = emb.max_term() {
                if t as usize >= vocab_size {
                    return Err(Error::DimMismatch {
                        expected: vocab_size,
                        found: t as usize + 1,
                    });
                }
            }
            for &(term, weight) in emb.entries() {
                postings[term as usize].push(Posting {
                    doc: doc as u32,
                    weight,
                });
            }
        }
        Ok(Self {
            doc_ids,
            vocab_size,
            postings,
        })
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn postings(&self, term: u32) -> &[Posting] {
        self.postings.get(term as usize).map_or(&[], Vec::as_slice)
    }

    pub fn num_postings(&self) -> usize {
        self.postings.iter().map(Vec::len).sum()
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    /// Per-document term weights rebuilt from the postings.
    pub fn doc_embedding(&self, doc: usize) -> SparseEmbedding {
        let mut map = BTreeMap::new();
        for (term, list) in self.postings.iter().enumerate() {
            if let Ok(i) = list.binary_search_by_key(&(doc as u32), |p| p.doc) {
                map.insert(term as u32, list[i].weight);
            }
        }
        SparseEmbedding::from_map(&map)
    }
}

/// Concatenated token vectors with per-document `(start, len)` row ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiVectorIndex {
    doc_ids: Vec<String>,
    similarity: Similarity,
    tokens: Matrix,
    offsets: Vec<(usize, usize)>,
    owners: Vec<u32>,
}

impl MultiVectorIndex {
    pub fn new(doc_ids: Vec<String>, embeddings: &[MultiEmbedding], similarity: Similarity) -> Result<Self> {
        if doc_ids.len() != embeddings.len() {
            return Err(Error::DimMismatch {
                expected: doc_ids.len(),
                found: embeddings.len(),
            });
        }
        unique_ids(&doc_ids)?;
        let dim = embeddings.first().map_or(0, MultiEmbedding::dim);
        let mut data = Vec::new();
        let mut offsets = Vec::with_capacity(embeddings.len());
        let mut start = 0;
        for emb in embeddings {
            if emb.dim() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: emb.dim(),
                });
            }
            data.extend_from_slice(emb.matrix().as_slice());
            offsets.push((start, emb.num_tokens()));
            start += emb.num_tokens();
        }
        Self::from_parts(doc_ids, similarity, Matrix::new(start, dim, data)?, offsets)
    }

    fn from_parts(
        doc_ids: Vec<String>,
        similarity: Similarity,
        tokens: Matrix,
        offsets: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let mut owners = Vec::with_capacity(tokens.rows());
        for (doc, &(start, len)) in offsets.iter().enumerate() {
            if start != owners.len() || len == 0 {
                return Err(Error::CorruptIndex(format!(
                    "offsets of doc {doc} do not partition the token matrix"
                )));
            }
            owners.extend(std::iter::repeat_n(doc as u32, len));
        }
        if owners.len() != tokens.rows() {
            return Err(Error::CorruptIndex("offsets do not cover every token row".into()));
        }
        Ok(Self {
            doc_ids,
            similarity,
            tokens,
            offsets,
            owners,
        })
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn similarity(&self) -> Similarity {
        self.similarity
    }

    pub fn dim(&self) -> usize {
        self.tokens.cols()
    }

    pub fn tokens(&self) -> &Matrix {
        &self.tokens
    }

    pub fn num_tokens(&self) -> usize {
        self.tokens.rows()
    }

    pub fn offsets(&self) -> &[(usize, usize)] {
        &self.offsets
    }

    /// Document index owning token row `row`.
    pub fn owner(&self, row: usize) -> usize {
        self.owners[row] as usize
    }

    /// Flat row-major token vectors of one document.
    pub fn doc_tokens(&self, doc: usize) -> &[f32] {
        let (start, len) = self.offsets[doc];
        let dim = self.dim();
        &self.tokens.as_slice()[start * dim..(start + len) * dim]
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Index {
    Dense(DenseFlatIndex),
    Sparse(SparseInvertedIndex),
    Multi(MultiVectorIndex),
}

impl Index {
    pub fn kind(&self) -> OutputKind {
        match self {
            Index::Dense(_) => OutputKind::SingleVector,
            Index::Sparse(_) => OutputKind::Sparse,
            Index::Multi(_) => OutputKind::MultiVector,
        }
    }

    pub fn doc_ids(&self) -> &[String] {
        match self {
            Index::Dense(i) => i.doc_ids(),
            Index::Sparse(i) => i.doc_ids(),
            Index::Multi(i) => i.doc_ids(),
        }
    }

    pub fn similarity(&self) -> Similarity {
        match self {
            Index::Dense(i) => i.similarity(),
            Index::Sparse(_) => Similarity::Dot,
            Index::Multi(i) => i.similarity(),
        }
    }

    /// Embedding width (vocabulary size for sparse indexes).
    pub fn dim(&self) -> usize {
        match self {
            Index::Dense(i) => i.dim(),
            Index::Sparse(i) => i.vocab_size(),
            Index::Multi(i) => i.dim(),
        }
    }
}

/// Encodes every document (in parallel) and builds the index matching the
/// model's output kind. Document order in the index is corpus order.
pub fn build_index(corpus: &[DocRecord], model: &BiEncoder) -> Result<Index> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let doc_ids: Vec<String> = corpus.iter().map(|d| d.doc_id.clone()).collect();
    unique_ids(&doc_ids)?;
    let encoded: Vec<Result<Embedding>> = corpus
        .par_iter()
        .map(|d| {
            model.encode(&d.text, Side::Doc).map_err(|e| match e {
                Error::EmptyText(None) => Error::EmptyText(Some(d.doc_id.clone())),
                other => other,
            })
        })
        .collect();
    let embeddings = encoded.into_iter().collect::<Result<Vec<_>>>()?;
    let config = &model.config;
    Ok(match config.output_kind {
        OutputKind::SingleVector => {
            let dense: Vec<DenseEmbedding> = embeddings
                .into_iter()
                .map(|e| match e {
                    Embedding::Dense(d) => d,
                    _ => unreachable!(),
                })
                .collect();
            Index::Dense(DenseFlatIndex::new(doc_ids, &dense, config.similarity_function)?)
        }
        OutputKind::Sparse => {
            let sparse: Vec<SparseEmbedding> = embeddings
                .into_iter()
                .map(|e| match e {
                    Embedding::Sparse(s) => s,
                    _ => unreachable!(),
                })
                .collect();
            Index::Sparse(SparseInvertedIndex::new(doc_ids, &sparse, config.vocab_size)?)
        }
        OutputKind::MultiVector => {
            let multi: Vec<MultiEmbedding> = embeddings
                .into_iter()
                .map(|e| match e {
                    Embedding::Multi(m) => m,
                    _ => unreachable!(),
                })
                .collect();
            Index::Multi(MultiVectorIndex::new(doc_ids, &multi, config.similarity_function)?)
        }
    })
}

pub const INDEX_META_FILE: &str = "meta.txt";
pub const INDEX_PAYLOAD_FILE: &str = "payload.bin";
pub const INDEX_DOCIDS_FILE: &str = "docids.txt";

const INDEX_MAGIC: &[u8; 8] = b"LIRINDEX";
const INDEX_VERSION: u32 = 1;

fn kind_name(kind: OutputKind) -> &'static str {
    match kind {
        OutputKind::SingleVector => "dense",
        OutputKind::Sparse => "sparse",
        OutputKind::MultiVector => "multi_vector",
    }
}

fn kind_code(kind: OutputKind) -> u32 {
    match kind {
        OutputKind::SingleVector => 1,
        OutputKind::Sparse => 2,
        OutputKind::MultiVector => 3,
    }
}

fn similarity_name(sim: Similarity) -> &'static str {
    match sim {
        Similarity::Dot => "dot",
        Similarity::Cosine => "cosine",
    }
}

fn write_matrix(w: &mut Writer, m: &Matrix) {
    let mut body = Writer::new();
    body.u64(m.rows() as u64);
    body.u64(m.cols() as u64);
    body.f32s(m.as_slice());
    w.section(b"VECS", body);
}

fn read_matrix(r: &mut Reader) -> std::result::Result<Matrix, String> {
    let mut s = r.section(b"VECS")?;
    let rows = s.len_u64()?;
    let cols = s.len_u64()?;
    let n = rows.checked_mul(cols).ok_or("matrix shape overflows")?;
    let data = s.f32s(n)?;
    s.finish()?;
    if data.iter().any(|v| !v.is_finite()) {
        return Err("non-finite value in matrix".into());
    }
    Matrix::new(rows, cols, data).map_err(|e| e.to_string())
}

/// Metadata lines for `meta.txt`.
pub fn index_meta(index: &Index) -> String {
    let mut lines = vec![
        format!("format_version: {INDEX_VERSION}"),
        format!("kind: {}", kind_name(index.kind())),
        format!("similarity: {}", similarity_name(index.similarity())),
    ];
    match index {
        Index::Dense(i) => lines.push(format!("dim: {}", i.dim())),
        Index::Sparse(i) => {
            lines.push(format!("vocab_size: {}", i.vocab_size()));
            lines.push(format!("num_postings: {}", i.num_postings()));
        }
        Index::Multi(i) => {
            lines.push(format!("dim: {}", i.dim()));
            lines.push(format!("num_tokens: {}", i.num_tokens()));
        }
    }
    lines.push(format!("num_docs: {}", index.doc_ids().len()));
    lines.join("\n") + "\n"
}

pub fn index_payload(index: &Index) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(INDEX_MAGIC);
    w.u32(INDEX_VERSION);
    w.u32(kind_code(index.kind()));
    let mut docs = Writer::new();
    docs.u64(index.doc_ids().len() as u64);
    for id in index.doc_ids() {
        docs.str(id);
    }
    w.section(b"DOCS", docs);
    match index {
        Index::Dense(i) => write_matrix(&mut w, &i.vectors),
        Index::Sparse(i) => {
            let mut body = Writer::new();
            body.u64(i.vocab_size as u64);
            let mut offset = 0u64;
            body.u64(0);
            for list in &i.postings {
                offset += list.len() as u64;
                body.u64(offset);
            }
            for p in i.postings.iter().flatten() {
                body.u32(p.doc);
                body.f32s(&[p.weight]);
            }
            w.section(b"PSTG", body);
        }
        Index::Multi(i) => {
            let mut body = Writer::new();
            body.u64(i.offsets.len() as u64);
            for &(start, len) in &i.offsets {
                body.u64(start as u64);
                body.u64(len as u64);
            }
            w.section(b"OFFS", body);
            write_matrix(&mut w, &i.tokens);
        }
    }
    w.finish()
}

fn parse_payload(bytes: &[u8]) -> std::result::Result<Index, String> {
    let mut r = Reader::new(bytes);
    r.expect(INDEX_MAGIC)?;
    let version = r.u32()?;
    if version != INDEX_VERSION {
        return Err(format!("unsupported index format version {version}"));
    }
    let kind = r.u32()?;
    let mut docs = r.section(b"DOCS")?;
    let n = docs.len_u64()?;
    let mut doc_ids = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        doc_ids.push(docs.str()?);
    }
    docs.finish()?;
    unique_ids(&doc_ids).map_err(|e| e.to_string())?;
    let index = match kind {
        1 | 3 => {
            let offsets = if kind == 3 {
                let mut s = r.section(b"OFFS")?;
                let count = s.len_u64()?;
                if count != n {
                    return Err(format!("{count} offset entries for {n} documents"));
                }
                let mut offsets = Vec::with_capacity(count);
                for _ in 0..count {
                    offsets.push((s.len_u64()?, s.len_u64()?));
                }
                s.finish()?;
                Some(offsets)
            } else {
                None
            };
            let matrix = read_matrix(&mut r)?;
            // the kind code carries the similarity only in meta.txt; patched by the caller
            match offsets {
                None => {
                    if matrix.rows() != n {
                        return Err(format!("{} vectors for {n} documents", matrix.rows()));
                    }
                    Index::Dense(DenseFlatIndex {
                        doc_ids,
                        vectors: matrix,
                        similarity: Similarity::Dot,
                    })
                }
                Some(offsets) => Index::Multi(
                    MultiVectorIndex::from_parts(doc_ids, Similarity::Dot, matrix, offsets)
                        .map_err(|e| e.to_string())?,
                ),
            }
        }
        2 => {
            let mut s = r.section(b"PSTG")?;
            let vocab_size = s.len_u64()?;
            let mut offsets = Vec::with_capacity(vocab_size.min(1 << 24) + 1);
            for _ in 0..=vocab_size {
                offsets.push(s.len_u64()?);
            }
            if offsets[0] != 0 || offsets.windows(2).any(|w| w[0] > w[1]) {
                return Err("posting offsets are not monotone".into());
            }
            let mut postings = Vec::with_capacity(vocab_size);
            for w in offsets.windows(2) {
                let mut list = Vec::with_capacity(w[1] - w[0]);
                for _ in w[0]..w[1] {
                    let doc = s.u32()?;
                    let weight = f32::from_le_bytes(s.take(4)?.try_into().unwrap());
                    if doc as usize >= n {
                        return Err(format!("posting references doc {doc} of {n}"));
                    }
                    if !(weight > 0.0 && weight.is_finite()) {
                        return Err(format!("non-positive posting weight {weight}"));
                    }
                    if list.last().is_some_and(|p: &Posting| p.doc >= doc) {
                        return Err("postings not strictly sorted by document".into());
                    }
                    list.push(Posting { doc, weight });
                }
                postings.push(list);
            }
            s.finish()?;
            Index::Sparse(SparseInvertedIndex {
                doc_ids,
                vocab_size,
                postings,
            })
        }
        other => return Err(format!("unknown index kind code {other}")),
    };
    r.finish()?;
    Ok(index)
}

fn parse_meta(text: &str) -> std::result::Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once(':')
            .ok_or_else(|| format!("meta line {} is not `key: value`", i + 1))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn check_meta(meta: &BTreeMap<String, String>, index: &mut Index) -> std::result::Result<(), String> {
    let get = |k: &str| meta.get(k).map(String::as_str).ok_or(format!("meta.txt lacks `{k}`"));
    if get("format_version")? != INDEX_VERSION.to_string() {
        return Err(format!("meta format_version {} unsupported", get("format_version")?));
    }
    if get("kind")? != kind_name(index.kind()) {
        return Err(format!(
            "meta kind `{}` disagrees with payload kind `{}`",
            get("kind")?,
            kind_name(index.kind())
        ));
    }
    let similarity = match get("similarity")? {
        "dot" => Similarity::Dot,
        "cosine" => Similarity::Cosine,
        other => return Err(format!("unknown similarity `{other}`")),
    };
    match index {
        Index::Dense(i) => i.similarity = similarity,
        Index::Multi(i) => i.similarity = similarity,
        Index::Sparse(_) if similarity != Similarity::Dot => return Err("sparse index must use dot".into()),
        Index::Sparse(_) => {}
    }
    let expected = index_meta(index);
    let actual: BTreeMap<String, String> = parse_meta(&expected)?;
    if &actual != meta {
        return Err("meta.txt disagrees with payload".into());
    }
    Ok(())
}

pub fn save_index(index: &Index, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, bytes: &[u8]| {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(path, e))
    };
    write(INDEX_META_FILE, index_meta(index).as_bytes())?;
    write(INDEX_PAYLOAD_FILE, &index_payload(index))?;
    let mut ids = index.doc_ids().join("\n");
    ids.push('\n');
    write(INDEX_DOCIDS_FILE, ids.as_bytes())
}

pub fn load_index(dir: &Path) -> Result<Index> {
    let meta_path = dir.join(INDEX_META_FILE);
    let meta_text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let payload_path = dir.join(INDEX_PAYLOAD_FILE);
    let payload = fs::read(&payload_path).map_err(|e| Error::io(&payload_path, e))?;
    let corrupt = |msg: String| Error::CorruptIndex(format!("{}: {msg}", dir.display()));
    let meta = parse_meta(&meta_text).map_err(corrupt)?;
    let mut index = parse_payload(&payload).map_err(corrupt)?;
    check_meta(&meta, &mut index).map_err(corrupt)?;
    let ids_path = dir.join(INDEX_DOCIDS_FILE);
    if ids_path.exists() {
        let ids = fs::read_to_string(&ids_path).map_err(|e| Error::io(&ids_path, e))?;
        if !ids.lines().eq(index.doc_ids().iter().map(String::as_str)) {
            return Err(corrupt("docids.txt disagrees with payload".into()));
        }
    }
    Ok(index)
}
