//! Versioned text snapshots of the sampler state. Only the canonical content
//! is serialized (assignments, indicator bits, dish lists, priors, corpus
//! fingerprint); every count is regenerated on load and verified, so a
//! snapshot can never disagree with itself.
//!
//! Layout: a `HEADER` section (K, V, I, fingerprint, priors), a `Z` section
//! with one line of topic ids per document, an `R` section with one
//! indicator bitstring per document, and a `VLISTS` section with one line
//! per occupied cell: `i k w  v...`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::model::{CountState, Hyperparameters};

const MAGIC: &str = "SPDPSNAP v1";

#[derive(Debug, Clone)]
pub struct RawSnapshot {
    pub topics: usize,
    pub vocab: usize,
    pub groups: usize,
    pub fingerprint: u64,
    pub hyper: Hyperparameters,
    /// Topic ids per document, in corpus order.
    pub z_docs: Vec<Vec<u32>>,
    /// Indicator bits per document, in corpus order.
    pub r_docs: Vec<Vec<bool>>,
    /// (group, topic, word, dishes) per occupied cell, sorted.
    pub lists: Vec<(u32, u32, u32, Vec<u32>)>,
}

fn fmt_floats(out: &mut String, xs: &[f64]) {
    for (j, x) in xs.iter().enumerate() {
        if j > 0 {
            out.push(' ');
        }
        write!(out, "{x}").unwrap();
    }
    out.push('\n');
}

/// Render a state to the snapshot text. The indicator bits must be in
/// canonical form (they are after every sweep, init, and correction pass).
pub fn snapshot_string(state: &CountState, corpus: &Corpus, hyper: &Hyperparameters) -> String {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    out.push_str("HEADER\n");
    writeln!(out, "topics {}", state.topics()).unwrap();
    writeln!(out, "vocab {}", state.vocab_size()).unwrap();
    writeln!(out, "groups {}", state.group_count()).unwrap();
    writeln!(out, "fingerprint {:016x}", corpus.fingerprint()).unwrap();
    for row in &hyper.alpha {
        out.push_str("alpha ");
        fmt_floats(&mut out, row);
    }
    out.push_str("beta ");
    fmt_floats(&mut out, &hyper.beta);
    out.push_str("discount ");
    fmt_floats(&mut out, &hyper.discount);
    out.push_str("concentration ");
    fmt_floats(&mut out, &hyper.concentration);

    out.push_str("Z\n");
    for (i, g) in corpus.groups.iter().enumerate() {
        for d in 0..g.documents.len() {
            let len = g.documents[d].len();
            let start = corpus.flat_position(crate::corpus::Position {
                group: i as u32,
                doc: d as u32,
                token: 0,
            });
            let mut line = String::with_capacity(len * 3);
            for l in 0..len {
                if l > 0 {
                    line.push(' ');
                }
                write!(line, "{}", state.z[start + l]).unwrap();
            }
            out.push_str(&line);
            out.push('\n');
        }
    }

    out.push_str("R\n");
    for (i, g) in corpus.groups.iter().enumerate() {
        for d in 0..g.documents.len() {
            let len = g.documents[d].len();
            let start = corpus.flat_position(crate::corpus::Position {
                group: i as u32,
                doc: d as u32,
                token: 0,
            });
            let mut line = String::with_capacity(len);
            for l in 0..len {
                line.push(if state.indicators()[start + l] {
                    '1'
                } else {
                    '0'
                });
            }
            out.push_str(&line);
            out.push('\n');
        }
    }

    out.push_str("VLISTS\n");
    let topics = state.topics();
    let vocab = state.vocab_size();
    for (cell, dishes) in state.canonical_lists() {
        let cell = cell as usize;
        let w = cell % vocab;
        let k = (cell / vocab) % topics;
        let i = cell / (vocab * topics);
        let mut line = format!("{i} {k} {w}");
        for v in dishes {
            write!(line, " {v}").unwrap();
        }
        out.push_str(&line);
        out.push('\n');
    }
    out.push_str("END\n");
    out
}

pub fn write_snapshot(
    path: &Path,
    state: &CountState,
    corpus: &Corpus,
    hyper: &Hyperparameters,
) -> Result<()> {
    fs::write(path, snapshot_string(state, corpus, hyper)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn integrity(section: &str, msg: impl std::fmt::Display) -> Error {
    Error::Integrity(format!("snapshot {section} section: {msg}"))
}

fn parse_floats(section: &str, text: &str) -> Result<Vec<f64>> {
    text.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| integrity(section, format!("bad float '{tok}'")))
        })
        .collect()
}

pub fn parse_snapshot(text: &str) -> Result<RawSnapshot> {
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(integrity("HEADER", "missing or wrong magic line"));
    }
    if lines.next() != Some("HEADER") {
        return Err(integrity("HEADER", "expected HEADER"));
    }
    let mut topics = None;
    let mut vocab = None;
    let mut groups = None;
    let mut fingerprint = None;
    let mut alpha: Vec<Vec<f64>> = Vec::new();
    let mut beta = None;
    let mut discount = None;
    let mut concentration = None;
    let mut line = lines.next();
    while let Some(l) = line {
        if l == "Z" {
            break;
        }
        let (key, rest) = l.split_once(' ').unwrap_or((l, ""));
        match key {
            "topics" => topics = Some(rest.parse::<usize>().map_err(|e| integrity("HEADER", e))?),
            "vocab" => vocab = Some(rest.parse::<usize>().map_err(|e| integrity("HEADER", e))?),
            "groups" => groups = Some(rest.parse::<usize>().map_err(|e| integrity("HEADER", e))?),
            "fingerprint" => {
                fingerprint =
                    Some(u64::from_str_radix(rest, 16).map_err(|e| integrity("HEADER", e))?)
            }
            "alpha" => alpha.push(parse_floats("HEADER", rest)?),
            "beta" => beta = Some(parse_floats("HEADER", rest)?),
            "discount" => discount = Some(parse_floats("HEADER", rest)?),
            "concentration" => concentration = Some(parse_floats("HEADER", rest)?),
            other => return Err(integrity("HEADER", format!("unknown key '{other}'"))),
        }
        line = lines.next();
    }
    let topics = topics.ok_or_else(|| integrity("HEADER", "missing topics"))?;
    let vocab = vocab.ok_or_else(|| integrity("HEADER", "missing vocab"))?;
    let groups = groups.ok_or_else(|| integrity("HEADER", "missing groups"))?;
    let fingerprint = fingerprint.ok_or_else(|| integrity("HEADER", "missing fingerprint"))?;
    if alpha.len() != groups {
        return Err(integrity("HEADER", "alpha row count != groups"));
    }
    let hyper = Hyperparameters::new(
        topics,
        alpha,
        beta.ok_or_else(|| integrity("HEADER", "missing beta"))?,
        discount.ok_or_else(|| integrity("HEADER", "missing discount"))?,
        concentration.ok_or_else(|| integrity("HEADER", "missing concentration"))?,
    )
    .map_err(|e| integrity("HEADER", e))?;
    if hyper.beta.len() != vocab {
        return Err(integrity("HEADER", "beta length != vocab"));
    }

    let mut z_docs = Vec::new();
    let mut line = lines.next();
    while let Some(l) = line {
        if l == "R" {
            break;
        }
        let row: Vec<u32> = l
            .split_whitespace()
            .map(|tok| tok.parse::<u32>().map_err(|e| integrity("Z", e)))
            .collect::<Result<_>>()?;
        if row.iter().any(|&k| k as usize >= topics) {
            return Err(integrity("Z", "topic id out of range"));
        }
        z_docs.push(row);
        line = lines.next();
    }
    if line.is_none() {
        return Err(integrity("R", "section missing"));
    }

    let mut r_docs = Vec::new();
    let mut line = lines.next();
    while let Some(l) = line {
        if l == "VLISTS" {
            break;
        }
        let row: Vec<bool> = l
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(integrity("R", format!("bad bit '{other}'"))),
            })
            .collect::<Result<_>>()?;
        r_docs.push(row);
        line = lines.next();
    }
    if line.is_none() {
        return Err(integrity("VLISTS", "section missing"));
    }
    if r_docs.len() != z_docs.len() {
        return Err(integrity("R", "document count differs from Z"));
    }
    for (zd, rd) in z_docs.iter().zip(&r_docs) {
        if zd.len() != rd.len() {
            return Err(integrity("R", "bitstring length differs from Z line"));
        }
    }

    let mut lists = Vec::new();
    let mut saw_end = false;
    for l in lines {
        if l == "END" {
            saw_end = true;
            break;
        }
        let fields: Vec<&str> = l.split_whitespace().collect();
        if fields.len() < 4 {
            return Err(integrity("VLISTS", format!("short line '{l}'")));
        }
        let i: u32 = fields[0].parse().map_err(|e| integrity("VLISTS", e))?;
        let k: u32 = fields[1].parse().map_err(|e| integrity("VLISTS", e))?;
        let w: u32 = fields[2].parse().map_err(|e| integrity("VLISTS", e))?;
        if i as usize >= groups || k as usize >= topics || w as usize >= vocab {
            return Err(integrity(
                "VLISTS",
                format!("cell ({i},{k},{w}) out of range"),
            ));
        }
        let dishes: Vec<u32> = fields[3..]
            .iter()
            .map(|tok| tok.parse::<u32>().map_err(|e| integrity("VLISTS", e)))
            .collect::<Result<_>>()?;
        lists.push((i, k, w, dishes));
    }
    if !saw_end {
        return Err(integrity("VLISTS", "missing END marker"));
    }

    Ok(RawSnapshot {
        topics,
        vocab,
        groups,
        fingerprint,
        hyper,
        z_docs,
        r_docs,
        lists,
    })
}

pub fn read_snapshot(path: &Path) -> Result<RawSnapshot> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_snapshot(&text)
}

impl RawSnapshot {
    /// Rebuild the full state against the training corpus; counts are
    /// regenerated from (z, r, v-lists) and the consistency predicate is
    /// enforced before the state is handed out.
    pub fn into_state(self, corpus: &Corpus) -> Result<CountState> {
        if corpus.fingerprint() != self.fingerprint {
            return Err(Error::Data(format!(
                "corpus fingerprint {:016x} does not match snapshot {:016x}",
                corpus.fingerprint(),
                self.fingerprint
            )));
        }
        if corpus.doc_count() != self.z_docs.len() {
            return Err(integrity("Z", "document count differs from corpus"));
        }
        let mut z = Vec::with_capacity(corpus.token_count());
        let mut r = Vec::with_capacity(corpus.token_count());
        let mut cursor = 0usize;
        for g in &corpus.groups {
            for doc in &g.documents {
                if self.z_docs[cursor].len() != doc.len() {
                    return Err(integrity(
                        "Z",
                        format!("line {cursor} length differs from corpus"),
                    ));
                }
                z.extend_from_slice(&self.z_docs[cursor]);
                r.extend(self.r_docs[cursor].iter().copied());
                cursor += 1;
            }
        }
        let mut lists: HashMap<u64, Vec<u32>> = HashMap::new();
        for (i, k, w, dishes) in self.lists {
            let cell = ((i as usize * self.topics + k as usize) * self.vocab + w as usize) as u64;
            if lists.insert(cell, dishes).is_some() {
                return Err(integrity("VLISTS", format!("duplicate cell ({i},{k},{w})")));
            }
        }
        let state = CountState::from_parts(corpus, self.topics, z, &r, lists)
            .map_err(|e| integrity("VLISTS", e))?;
        state.check_consistency(corpus)?;
        Ok(state)
    }
}
