//! Seeded synthetic corpus: every query carries three key tokens of its
//! positive document plus two filler tokens the positive does not contain,
//! so the positive shares exactly three tokens with it and every other
//! document at most two.

use rand::seq::{index::sample, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use lir_core::{DocRecord, QueryRecord, Qrels, TrainSample};

pub const NUM_DOCS: usize = 64;
pub const NUM_TEST_QUERIES: usize = 16;
pub const FILLER: usize = 24;
pub const DOC_FILLER: usize = 6;
pub const QUERY_FILLER: usize = 2;
pub const TRAIN_QUERIES_PER_DOC: usize = 4;
pub const NEGATIVES: usize = 3;

pub struct Corpus {
    pub docs: Vec<DocRecord>,
    /// Filler words of each doc, for drawing query noise.
    filler: Vec<Vec<usize>>,
    keys: Vec<[String; 3]>,
    pub test_queries: Vec<QueryRecord>,
    pub qrels: Qrels,
    pub train: Vec<TrainSample>,
}

fn filler_word(i: usize) -> String {
    format!("f{i:02}")
}

fn query_text(rng: &mut ChaCha8Rng, keys: &[String; 3], doc_filler: &[usize]) -> String {
    let pool: Vec<usize> = (0..FILLER).filter(|f| !doc_filler.contains(f)).collect();
    let mut words: Vec<String> = keys.to_vec();
    words.extend(sample(rng, pool.len(), QUERY_FILLER).into_iter().map(|i| filler_word(pool[i])));
    words.shuffle(rng);
    words.join(" ")
}

impl Corpus {
    pub fn generate(seed: u64) -> Corpus {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut docs = Vec::new();
        let mut filler = Vec::new();
        let mut keys = Vec::new();
        for d in 0..NUM_DOCS {
            let k: [String; 3] = std::array::from_fn(|j| format!("k{d:02}x{j}"));
            let f: Vec<usize> = sample(&mut rng, FILLER, DOC_FILLER).into_vec();
            let mut words: Vec<String> = k.to_vec();
            words.extend(f.iter().map(|&i| filler_word(i)));
            words.shuffle(&mut rng);
            docs.push(DocRecord::new(format!("d{d:02}"), words.join(" ")).unwrap());
            filler.push(f);
            keys.push(k);
        }
        let mut corpus = Corpus { docs, filler, keys, test_queries: Vec::new(), qrels: Qrels::new(), train: Vec::new() };

        let mut seen = std::collections::HashSet::new();
        for d in 0..NUM_DOCS {
            for t in 0..TRAIN_QUERIES_PER_DOC {
                let text = query_text(&mut rng, &corpus.keys[d], &corpus.filler[d]);
                seen.insert(text.clone());
                let mut negatives: Vec<usize> = (0..NUM_DOCS).filter(|&o| o != d).collect();
                negatives.shuffle(&mut rng);
                let mut sample_docs = vec![corpus.docs[d].clone()];
                sample_docs.extend(negatives[..NEGATIVES].iter().map(|&o| corpus.docs[o].clone()));
                let mut labels = vec![0.0; NEGATIVES + 1];
                labels[0] = 1.0;
                let q = QueryRecord::new(format!("t{d:02}_{t}"), text).unwrap();
                corpus.train.push(TrainSample::new(q, sample_docs, labels).unwrap());
            }
        }
        let mut targets: Vec<usize> = (0..NUM_DOCS).collect();
        targets.shuffle(&mut rng);
        for (i, &d) in targets[..NUM_TEST_QUERIES].iter().enumerate() {
            let text = loop {
                let t = query_text(&mut rng, &corpus.keys[d], &corpus.filler[d]);
                if !seen.contains(&t) {
                    break t;
                }
            };
            let qid = format!("q{i:02}");
            corpus.qrels.insert(qid.clone(), corpus.docs[d].doc_id.clone(), 1);
            corpus.test_queries.push(QueryRecord::new(qid, text).unwrap());
        }
        corpus
    }
}

/// Seed of the committed toy dataset.
pub const TOY_SEED: u64 = 2024;

impl Corpus {
    pub fn docs_tsv(&self) -> String {
        self.docs.iter().map(|d| format!("{}\t{}\n", d.doc_id, d.text)).collect()
    }

    pub fn queries_tsv(&self) -> String {
        self.test_queries.iter().map(|q| format!("{}\t{}\n", q.query_id, q.text)).collect()
    }

    pub fn qrels_txt(&self) -> String {
        let mut out = Vec::new();
        lir_core::data::format_qrels(&self.qrels, &mut out).unwrap();
        String::from_utf8(out).unwrap()
    }

    /// `query<TAB>positive<TAB>negatives...` lines.
    pub fn train_tsv(&self) -> String {
        self.train
            .iter()
            .map(|s| {
                let mut cols = vec![s.query.text.as_str()];
                cols.extend(s.docs.iter().map(|d| d.text.as_str()));
                cols.join("\t") + "\n"
            })
            .collect()
    }
}
