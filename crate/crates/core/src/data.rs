//! Document, query, tuple and run datasets, plus TREC run/qrels files.
//!
//! Readers are single-pass iterators that preserve file order. Every parse
//! error carries a 1-based line number.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Lines, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rerank::TextLookup;
use crate::types::{DocRecord, QueryRecord, Qrels, Run, TrainSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Doc,
    Query,
    Tuple,
    Run,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    Tsv,
    Jsonl,
    TrecRun,
    TrecQrels,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub path: PathBuf,
    pub format: DataFormat,
}

impl DatasetSpec {
    /// Without an explicit format, `.jsonl`/`.json` files are JSONL, runs are
    /// TREC runs and everything else is TSV.
    pub fn new(kind: DatasetKind, path: impl Into<PathBuf>, format: Option<DataFormat>) -> Result<Self> {
        let path = path.into();
        let format = format.unwrap_or_else(|| match kind {
            DatasetKind::Run => DataFormat::TrecRun,
            _ => match path.extension().and_then(|e| e.to_str()) {
                Some("jsonl" | "json") => DataFormat::Jsonl,
                _ => DataFormat::Tsv,
            },
        });
        let compatible = matches!(
            (kind, format),
            (DatasetKind::Doc | DatasetKind::Query, DataFormat::Tsv | DataFormat::Jsonl)
                | (DatasetKind::Tuple, DataFormat::Tsv)
                | (DatasetKind::Run, DataFormat::TrecRun)
        );
        if !compatible {
            return Err(Error::InvalidConfig(format!(
                "{kind:?} datasets cannot be read as {format:?} ({})",
                path.display()
            )));
        }
        Ok(Self { kind, path, format })
    }

    fn expect(&self, kind: DatasetKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::InvalidConfig(format!(
                "expected a {kind:?} dataset, got {:?} ({})",
                self.kind,
                self.path.display()
            )));
        }
        Ok(())
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

/// Numbered lines with `\r\n` and `\n` endings stripped.
struct NumberedLines<R> {
    lines: Lines<R>,
    line_no: usize,
}

impl<R: BufRead> NumberedLines<R> {
    fn new(reader: R) -> Self {
        Self {
            lines: reader.lines(),
            line_no: 0,
        }
    }
}

impl<R: BufRead> Iterator for NumberedLines<R> {
    type Item = Result<(usize, String)>;

    fn next(&mut self) -> Option<Self::Item> {
        let line = self.lines.next()?;
        self.line_no += 1;
        Some(
            line.map(|l| (self.line_no, l))
                .map_err(|e| Error::parse(self.line_no, e.to_string())),
        )
    }
}

/// A record with an id and a text, read from TSV or JSONL.
pub trait TextRecord: Sized {
    const ID_FIELD: &'static str;
    fn build(id: String, text: String) -> Result<Self>;
    fn id(&self) -> &str;
    fn duplicate(id: String) -> Error;
}

impl TextRecord for DocRecord {
    const ID_FIELD: &'static str = "doc_id";

    fn build(id: String, text: String) -> Result<Self> {
        DocRecord::new(id, text)
    }

    fn id(&self) -> &str {
        &self.doc_id
    }

    fn duplicate(id: String) -> Error {
        Error::DuplicateDoc(id)
    }
}

impl TextRecord for QueryRecord {
    const ID_FIELD: &'static str = "query_id";

    fn build(id: String, text: String) -> Result<Self> {
        QueryRecord::new(id, text)
    }

    fn id(&self) -> &str {
        &self.query_id
    }

    fn duplicate(id: String) -> Error {
        Error::DuplicateQuery(id)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum JsonId {
    Str(String),
    Int(i64),
}

fn parse_json_record<T: TextRecord>(line: &str) -> std::result::Result<(String, String), String> {
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let obj = value.as_object().ok_or("expected a JSON object")?;
    let id = obj
        .get(T::ID_FIELD)
        .ok_or_else(|| format!("missing `{}`", T::ID_FIELD))?;
    let id = match JsonId::deserialize(id).map_err(|_| format!("`{}` must be a string or integer", T::ID_FIELD))? {
        JsonId::Str(s) => s,
        JsonId::Int(i) => i.to_string(),
    };
    let text = obj
        .get("text")
        .and_then(serde_json::Value::as_str)
        .ok_or("missing string field `text`")?;
    Ok((id, text.to_string()))
}

/// Streams doc or query records; stops after the first error.
pub struct RecordReader<T, R> {
    lines: NumberedLines<R>,
    format: DataFormat,
    seen: HashSet<String>,
    done: bool,
    _record: PhantomData<T>,
}

impl<T: TextRecord, R: BufRead> RecordReader<T, R> {
    pub fn new(reader: R, format: DataFormat) -> Self {
        Self {
            lines: NumberedLines::new(reader),
            format,
            seen: HashSet::new(),
            done: false,
            _record: PhantomData,
        }
    }

    fn parse(&mut self, line_no: usize, line: &str) -> Result<T> {
        let (id, text) = match self.format {
            DataFormat::Jsonl => parse_json_record::<T>(line).map_err(|m| Error::parse(line_no, m))?,
            _ => {
                let (id, text) = line
                    .split_once('\t')
                    .ok_or_else(|| Error::parse(line_no, "expected `id<TAB>text`"))?;
                (id.to_string(), text.to_string())
            }
        };
        let record = T::build(id, text).map_err(|e| Error::parse(line_no, e.to_string()))?;
        if !self.seen.insert(record.id().to_string()) {
            return Err(T::duplicate(record.id().to_string()));
        }
        Ok(record)
    }
}

impl<T: TextRecord, R: BufRead> Iterator for RecordReader<T, R> {
    type Item = Result<T>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        loop {
            let item = match self.lines.next()? {
                Ok((_, line)) if line.trim().is_empty() => continue,
                Ok((line_no, line)) => self.parse(line_no, &line),
                Err(e) => Err(e),
            };
            self.done = item.is_err();
            return Some(item);
        }
    }
}

pub fn read_docs(spec: &DatasetSpec) -> Result<RecordReader<DocRecord, BufReader<File>>> {
    spec.expect(DatasetKind::Doc)?;
    Ok(RecordReader::new(open(&spec.path)?, spec.format))
}

pub fn read_queries(spec: &DatasetSpec) -> Result<RecordReader<QueryRecord, BufReader<File>>> {
    spec.expect(DatasetKind::Query)?;
    Ok(RecordReader::new(open(&spec.path)?, spec.format))
}

/// Streams `query<TAB>positive<TAB>negative[<TAB>negative...]` lines as
/// samples labelled `[1, 0, ...]`, with ids `q{line}` and `d{line}_{column}`.
pub struct TupleReader<R> {
    lines: NumberedLines<R>,
    done: bool,
}

impl<R: BufRead> TupleReader<R> {
    pub fn new(reader: R) -> Self {
        Self {
            lines: NumberedLines::new(reader),
            done: false,
        }
    }
}

fn parse_tuple(line_no: usize, line: &str) -> Result<TrainSample> {
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() < 3 {
        return Err(Error::parse(
            line_no,
            format!("expected query, positive and at least one negative, found {} columns", cols.len()),
        ));
    }
    if let Some(c) = cols.iter().position(|c| c.trim().is_empty()) {
        return Err(Error::parse(line_no, format!("column {} is empty", c + 1)));
    }
    let query = QueryRecord::new(format!("q{line_no}"), cols[0])?;
    let docs = cols[1..]
        .iter()
        .enumerate()
        .map(|(i, t)| DocRecord::new(format!("d{line_no}_{}", i + 1), *t))
        .collect::<Result<Vec<_>>>()?;
    let mut labels = vec![0.0; docs.len()];
    labels[0] = 1.0;
    TrainSample::new(query, docs, labels).map_err(|e| Error::parse(line_no, e.to_string()))
}

impl<R: BufRead> Iterator for TupleReader<R> {
    type Item = Result<TrainSample>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        loop {
            let item = match self.lines.next()? {
                Ok((_, line)) if line.trim().is_empty() => continue,
                Ok((line_no, line)) => parse_tuple(line_no, &line),
                Err(e) => Err(e),
            };
            self.done = item.is_err();
            return Some(item);
        }
    }
}

pub fn read_tuples(spec: &DatasetSpec) -> Result<TupleReader<BufReader<File>>> {
    spec.expect(DatasetKind::Tuple)?;
    Ok(TupleReader::new(open(&spec.path)?))
}

/// Parses a TREC run (`qid Q0 docid rank score tag`). Input ranks are
/// ignored: each query's docs are re-sorted and re-ranked. The tag of the
/// first line becomes the run tag.
pub fn parse_run(reader: impl BufRead) -> Result<Run> {
    let mut tag = None;
    let mut lists: IndexMap<String, Vec<(String, f32)>> = IndexMap::new();
    let mut seen = HashSet::new();
    for line in NumberedLines::new(reader) {
        let (line_no, line) = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        let [qid, _, doc_id, rank, score, run_tag] = cols[..] else {
            return Err(Error::parse(line_no, format!("expected 6 columns, found {}", cols.len())));
        };
        rank.parse::<u64>()
            .map_err(|_| Error::parse(line_no, format!("rank `{rank}` is not a non-negative integer")))?;
        let score: f32 = score
            .parse()
            .map_err(|_| Error::parse(line_no, format!("score `{score}` is not a number")))?;
        if score.is_nan() {
            return Err(Error::parse(line_no, "score is NaN"));
        }
        if !seen.insert((qid.to_string(), doc_id.to_string())) {
            return Err(Error::parse(line_no, format!("duplicate entry for query `{qid}`, doc `{doc_id}`")));
        }
        tag.get_or_insert_with(|| run_tag.to_string());
        lists
            .entry(qid.to_string())
            .or_default()
            .push((doc_id.to_string(), score));
    }
    let mut run = Run::new(tag.unwrap_or_default());
    for (qid, docs) in lists {
        run.insert(qid, docs)?;
    }
    Ok(run)
}

pub fn read_run(path: &Path) -> Result<Run> {
    parse_run(open(path)?)
}

/// TREC run lines. Scores use the shortest decimal form that reads back
/// to the same 32-bit value.
pub fn format_run(run: &Run, out: &mut impl Write) -> std::io::Result<()> {
    let tag = if run.tag().is_empty() { "run" } else { run.tag() };
    let tag: String = tag.chars().map(|c| if c.is_whitespace() { '_' } else { c }).collect();
    for (qid, docs) in run.iter() {
        for d in docs {
            writeln!(out, "{qid} Q0 {} {} {} {tag}", d.doc_id, d.rank, d.score)?;
        }
    }
    Ok(())
}

pub fn write_run(run: &Run, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    format_run(run, &mut out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

/// Parses TREC qrels (`qid 0 docid grade`).
pub fn parse_qrels(reader: impl BufRead) -> Result<Qrels> {
    let mut qrels = Qrels::new();
    for line in NumberedLines::new(reader) {
        let (line_no, line) = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        let [qid, _, doc_id, grade] = cols[..] else {
            return Err(Error::parse(line_no, format!("expected 4 columns, found {}", cols.len())));
        };
        let grade: i64 = grade
            .parse()
            .map_err(|_| Error::parse(line_no, format!("grade `{grade}` is not an integer")))?;
        let grade = u32::try_from(grade)
            .map_err(|_| Error::parse(line_no, format!("grade {grade} must be a non-negative 32-bit integer")))?;
        if !qrels.insert(qid, doc_id, grade) {
            return Err(Error::parse(line_no, format!("duplicate judgment for query `{qid}`, doc `{doc_id}`")));
        }
    }
    Ok(qrels)
}

pub fn read_qrels(path: &Path) -> Result<Qrels> {
    parse_qrels(open(path)?)
}

pub fn format_qrels(qrels: &Qrels, out: &mut impl Write) -> std::io::Result<()> {
    for (qid, judged) in qrels.iter() {
        for (doc_id, grade) in judged {
            writeln!(out, "{qid} 0 {doc_id} {grade}")?;
        }
    }
    Ok(())
}

pub fn write_qrels(qrels: &Qrels, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    format_qrels(qrels, &mut out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

/// Samples one `n`-tuple per query from the run: a positive drawn uniformly
/// from docs graded ≥ 1, then `n - 1` distinct negatives drawn uniformly
/// from docs graded 0 or unjudged. Labels are the grades. Queries without
/// a positive or with too few negatives are skipped.
pub fn tuples_from_run(
    run: &Run,
    qrels: &Qrels,
    n: usize,
    seed: u64,
    docs: &impl TextLookup,
    queries: &impl TextLookup,
) -> Result<Vec<TrainSample>> {
    if n < 2 {
        return Err(Error::InvalidConfig(format!("tuple size must be at least 2, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut any_large_enough = false;
    for (qid, list) in run.iter() {
        any_large_enough |= list.len() >= n;
        let grade = |doc: &str| qrels.grade(qid, doc).unwrap_or(0);
        let (positives, negatives): (Vec<_>, Vec<_>) = list.iter().partition(|d| grade(&d.doc_id) >= 1);
        if positives.is_empty() || negatives.len() < n - 1 {
            continue;
        }
        let mut picked = vec![positives[rng.gen_range(0..positives.len())]];
        picked.extend(sample(&mut rng, negatives.len(), n - 1).into_iter().map(|i| negatives[i]));

        let query_text = queries.text(qid).ok_or_else(|| Error::MissingText(qid.to_string()))?;
        let query = QueryRecord::new(qid, query_text)?;
        let mut records = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for d in picked {
            let text = docs.text(&d.doc_id).ok_or_else(|| Error::MissingText(d.doc_id.clone()))?;
            records.push(DocRecord::new(d.doc_id.as_str(), text)?);
            labels.push(grade(&d.doc_id) as f32);
        }
        out.push(TrainSample::new(query, records, labels)?);
    }
    if out.is_empty() && !any_large_enough {
        return Err(Error::InsufficientDocs { needed: n });
    }
    Ok(out)
}
