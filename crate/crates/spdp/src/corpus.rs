//! Grouped document collections: loading, tokenization, train/held-out
//! splits, and training-set duplication.
//!
//! Group files are UTF-8 text with one document per line and
//! whitespace-separated tokens. Stopword files have one word per line with
//! `#` comment lines ignored. Vocabulary ids are dense and assigned in
//! first-occurrence order across the whole load, so every document (held-out
//! ones included) indexes the same id space.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// One word position (group, document-within-group, token offset).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Position {
    pub group: u32,
    pub doc: u32,
    pub token: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    pub name: String,
    /// Token-id sequences, one per document; every document is non-empty.
    pub documents: Vec<Vec<u32>>,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub groups: Vec<Group>,
    vocabulary: Arc<Vec<String>>,
    doc_offsets: Vec<usize>,
    position_offsets: Vec<usize>,
    total_positions: usize,
}

impl Corpus {
    pub fn new(groups: Vec<Group>, vocabulary: Arc<Vec<String>>) -> Result<Self> {
        let v = vocabulary.len() as u32;
        let mut names = HashSet::new();
        for g in &groups {
            if !names.insert(g.name.clone()) {
                return Err(Error::Data(format!("duplicate group name '{}'", g.name)));
            }
            for d in &g.documents {
                if d.is_empty() {
                    return Err(Error::Data(format!("empty document in group '{}'", g.name)));
                }
                if let Some(&w) = d.iter().find(|&&w| w >= v) {
                    return Err(Error::Data(format!(
                        "token id {w} out of range (vocabulary size {v})"
                    )));
                }
            }
        }
        let mut doc_offsets = Vec::with_capacity(groups.len() + 1);
        let mut position_offsets = Vec::new();
        let mut docs = 0usize;
        let mut pos = 0usize;
        for g in &groups {
            doc_offsets.push(docs);
            for d in &g.documents {
                position_offsets.push(pos);
                pos += d.len();
            }
            docs += g.documents.len();
        }
        doc_offsets.push(docs);
        Ok(Self {
            groups,
            vocabulary,
            doc_offsets,
            position_offsets,
            total_positions: pos,
        })
    }

    pub fn vocabulary(&self) -> &Arc<Vec<String>> {
        &self.vocabulary
    }

    /// Vocabulary size V.
    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    /// Number of groups I.
    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn doc_count(&self) -> usize {
        *self.doc_offsets.last().unwrap()
    }

    pub fn token_count(&self) -> usize {
        self.total_positions
    }

    pub fn doc(&self, group: usize, doc: usize) -> &[u32] {
        &self.groups[group].documents[doc]
    }

    /// Flat document index across groups.
    pub fn flat_doc(&self, group: usize, doc: usize) -> usize {
        self.doc_offsets[group] + doc
    }

    /// Flat position index in corpus order.
    pub fn flat_position(&self, pos: Position) -> usize {
        self.position_offsets[self.flat_doc(pos.group as usize, pos.doc as usize)]
            + pos.token as usize
    }

    pub fn word_at(&self, pos: Position) -> u32 {
        self.groups[pos.group as usize].documents[pos.doc as usize][pos.token as usize]
    }

    /// All positions in corpus order (group-major, then document, then token).
    pub fn positions(&self) -> impl Iterator<Item = Position> + '_ {
        self.groups.iter().enumerate().flat_map(|(i, g)| {
            g.documents.iter().enumerate().flat_map(move |(d, doc)| {
                (0..doc.len()).map(move |l| Position {
                    group: i as u32,
                    doc: d as u32,
                    token: l as u32,
                })
            })
        })
    }

    /// Largest per-group total frequency of any single word. Cells of the
    /// sampler state never hold more customers than this, so it bounds the
    /// Stirling table size: pre-size to this plus two.
    pub fn max_word_group_frequency(&self) -> usize {
        let mut freq = vec![0usize; self.vocab_size()];
        let mut best = 0;
        for g in &self.groups {
            freq.iter_mut().for_each(|f| *f = 0);
            for d in &g.documents {
                for &w in d {
                    freq[w as usize] += 1;
                }
            }
            best = best.max(freq.iter().copied().max().unwrap_or(0));
        }
        best
    }

    /// Order-sensitive fingerprint of vocabulary, group names and documents.
    /// Snapshots store it so that evaluation commands can verify they were
    /// given the same training corpus.
    pub fn fingerprint(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64; // FNV-1a offset basis
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x1000_0000_01b3);
            }
        };
        for w in self.vocabulary.iter() {
            eat(w.as_bytes());
            eat(&[0xff]);
        }
        for g in &self.groups {
            eat(g.name.as_bytes());
            eat(&[0xfe]);
            for d in &g.documents {
                for &w in d {
                    eat(&w.to_le_bytes());
                }
                eat(&[0xfd]);
            }
        }
        h
    }
}

// ---------------------------------------------------------------------------
// Tokenization
// ---------------------------------------------------------------------------

/// Lowercase, split on whitespace, strip leading/trailing non-alphanumerics;
/// drop tokens that become empty, are purely numeric, or are stopwords.
/// Plural forms are deliberately left distinct from singular forms.
pub fn tokenize(raw_text: &str, stopwords: &HashSet<String>) -> Vec<String> {
    raw_text
        .split_whitespace()
        .filter_map(|tok| {
            let lower = tok.to_lowercase();
            let trimmed = lower.trim_matches(|c: char| !c.is_alphanumeric());
            if trimmed.is_empty()
                || trimmed.chars().all(|c| c.is_numeric())
                || stopwords.contains(trimmed)
            {
                None
            } else {
                Some(trimmed.to_string())
            }
        })
        .collect()
}

pub fn load_stopwords(path: &Path) -> Result<HashSet<String>> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.to_lowercase())
        .collect())
}

/// Load group files (one document per line), building a shared vocabulary in
/// first-seen order. Documents that tokenize to nothing are dropped.
pub fn load_corpus(
    group_paths: &[(String, std::path::PathBuf)],
    stopword_path: Option<&Path>,
) -> Result<Corpus> {
    let stopwords = match stopword_path {
        Some(p) => load_stopwords(p)?,
        None => HashSet::new(),
    };
    let mut vocab: Vec<String> = Vec::new();
    let mut ids: HashMap<String, u32> = HashMap::new();
    let mut groups = Vec::with_capacity(group_paths.len());
    for (name, path) in group_paths {
        let file = File::open(path).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        let mut reader = BufReader::new(file);
        let mut documents = Vec::new();
        let mut buf = Vec::new();
        let mut line_no = 0usize;
        loop {
            buf.clear();
            let read = reader
                .read_until(b'\n', &mut buf)
                .map_err(|source| Error::Io {
                    path: path.clone(),
                    source,
                })?;
            if read == 0 {
                break;
            }
            line_no += 1;
            let line = std::str::from_utf8(&buf).map_err(|_| Error::Utf8 {
                path: path.clone(),
                line: line_no,
            })?;
            let tokens = tokenize(line, &stopwords);
            if tokens.is_empty() {
                continue;
            }
            let doc: Vec<u32> = tokens
                .into_iter()
                .map(|tok| {
                    *ids.entry(tok.clone()).or_insert_with(|| {
                        vocab.push(tok);
                        (vocab.len() - 1) as u32
                    })
                })
                .collect();
            documents.push(doc);
        }
        groups.push(Group {
            name: name.clone(),
            documents,
        });
    }
    Corpus::new(groups, Arc::new(vocab))
}

// ---------------------------------------------------------------------------
// Holdout split and duplication
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct HoldoutSplit {
    pub train: Corpus,
    pub test: Corpus,
    pub fraction: f64,
    pub seed: u64,
}

/// Per-group uniform selection without replacement of round(fraction * D_i)
/// documents into the test side. Train and test share the vocabulary.
pub fn split_holdout(corpus: &Corpus, fraction: f64, seed: u64) -> Result<HoldoutSplit> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Data(format!(
            "holdout fraction must be in (0,1), got {fraction}"
        )));
    }
    let mut rng = RngStream::derived(seed, stream_tags::SPLIT, 0);
    let mut train_groups = Vec::with_capacity(corpus.groups.len());
    let mut test_groups = Vec::with_capacity(corpus.groups.len());
    for g in &corpus.groups {
        let d = g.documents.len();
        if d < 2 {
            return Err(Error::Data(format!(
                "group '{}' has {d} documents; need at least 2 to split",
                g.name
            )));
        }
        let n_test = (fraction * d as f64).round() as usize;
        if n_test == 0 {
            return Err(Error::Data(format!(
                "group '{}' is too small to hold out any document at fraction {fraction}",
                g.name
            )));
        }
        if n_test >= d {
            return Err(Error::Data(format!(
                "group '{}' would lose all documents at fraction {fraction}",
                g.name
            )));
        }
        // partial Fisher-Yates over document indices
        let mut idx: Vec<usize> = (0..d).collect();
        for j in 0..n_test {
            let pick = j + rng.below((d - j) as u64) as usize;
            idx.swap(j, pick);
        }
        let test_set: HashSet<usize> = idx[..n_test].iter().copied().collect();
        let mut train_docs = Vec::with_capacity(d - n_test);
        let mut test_docs = Vec::with_capacity(n_test);
        for (j, doc) in g.documents.iter().enumerate() {
            if test_set.contains(&j) {
                test_docs.push(doc.clone());
            } else {
                train_docs.push(doc.clone());
            }
        }
        train_groups.push(Group {
            name: g.name.clone(),
            documents: train_docs,
        });
        test_groups.push(Group {
            name: g.name.clone(),
            documents: test_docs,
        });
    }
    Ok(HoldoutSplit {
        train: Corpus::new(train_groups, corpus.vocabulary().clone())?,
        test: Corpus::new(test_groups, corpus.vocabulary().clone())?,
        fraction,
        seed,
    })
}

/// Repeat every document `copies` times; duplicated documents are independent
/// documents with their own topic counts. copies = 1 is the identity. This is
/// a training-side operation; held-out corpora must never be duplicated.
pub fn duplicate_training(corpus: &Corpus, copies: u32) -> Result<Corpus> {
    if copies == 0 {
        return Err(Error::Data("duplicate copies must be >= 1".into()));
    }
    if copies == 1 {
        return Ok(corpus.clone());
    }
    let groups = corpus
        .groups
        .iter()
        .map(|g| Group {
            name: g.name.clone(),
            documents: g
                .documents
                .iter()
                .flat_map(|d| std::iter::repeat_n(d.clone(), copies as usize))
                .collect(),
        })
        .collect();
    Corpus::new(groups, corpus.vocabulary().clone())
}

/// Stream-id tags keeping the crate's derived random streams disjoint.
pub mod stream_tags {
    pub const SPLIT: u64 = 0x0053_504c_4954;
    pub const INIT: u64 = 0x494e_4954;
    pub const SWEEP: u64 = 0x0053_5745_4550;
    pub const POSITION: u64 = 0x0050_4f53;
    pub const PARTITION: u64 = 0x5041_5254;
    pub const FOLD_IN: u64 = 0x464f_4c44;
    pub const SYNTH: u64 = 0x53_594e;
}
