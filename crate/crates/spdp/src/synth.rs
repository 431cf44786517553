//! Synthetic grouped corpora drawn from a known topic mixture, for demos,
//! benchmarks, and recovery checks.

use std::sync::Arc;

use crate::corpus::{stream_tags, Corpus, Group};
use crate::error::Result;
use crate::numerics::RngStream;

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub groups: usize,
    pub docs_per_group: usize,
    pub doc_len: usize,
    pub topics: usize,
    pub vocab: usize,
    /// Probability mass a topic concentrates on its own word block.
    pub block_mass: f64,
    /// Symmetric Dirichlet parameter for per-document topic mixtures.
    pub mix_alpha: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            groups: 2,
            docs_per_group: 100,
            doc_len: 60,
            topics: 8,
            vocab: 400,
            block_mass: 0.9,
            mix_alpha: 0.2,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    pub corpus: Corpus,
    /// The generating word distributions, topics x vocab.
    pub topic_word: Vec<Vec<f64>>,
}

/// Each planted topic spreads `block_mass` uniformly over its own contiguous
/// word block and the rest uniformly over the whole vocabulary; documents mix
/// topics through a symmetric Dirichlet draw.
pub fn planted_corpus(spec: &SyntheticSpec) -> Result<PlantedCorpus> {
    let block = spec.vocab / spec.topics;
    assert!(block >= 1, "vocab must be at least topics");
    let mut topic_word = Vec::with_capacity(spec.topics);
    for k in 0..spec.topics {
        let lo = k * block;
        let hi = if k == spec.topics - 1 {
            spec.vocab
        } else {
            lo + block
        };
        let inside = spec.block_mass / (hi - lo) as f64;
        let outside = (1.0 - spec.block_mass) / spec.vocab as f64;
        let row: Vec<f64> = (0..spec.vocab)
            .map(|v| {
                if v >= lo && v < hi {
                    inside + outside
                } else {
                    outside
                }
            })
            .collect();
        topic_word.push(row);
    }

    let mut rng = RngStream::derived(spec.seed, stream_tags::SYNTH, 0);
    let mut groups = Vec::with_capacity(spec.groups);
    for i in 0..spec.groups {
        let mut documents = Vec::with_capacity(spec.docs_per_group);
        for _ in 0..spec.docs_per_group {
            let mixture = dirichlet(&mut rng, spec.topics, spec.mix_alpha);
            let len = spec.doc_len.max(1);
            let mut doc = Vec::with_capacity(len);
            for _ in 0..len {
                let k = draw(&mixture, &mut rng);
                let w = draw(&topic_word[k], &mut rng);
                doc.push(w as u32);
            }
            documents.push(doc);
        }
        groups.push(Group {
            name: format!("group{i}"),
            documents,
        });
    }
    let vocab: Vec<String> = (0..spec.vocab).map(|v| format!("w{v:04}")).collect();
    Ok(PlantedCorpus {
        corpus: Corpus::new(groups, Arc::new(vocab))?,
        topic_word,
    })
}

fn draw(dist: &[f64], rng: &mut RngStream) -> usize {
    let target = rng.next_f64();
    let mut acc = 0.0;
    for (i, &p) in dist.iter().enumerate() {
        acc += p;
        if acc > target {
            return i;
        }
    }
    dist.len() - 1
}

/// Marsaglia-Tsang gamma draws normalized into a Dirichlet sample.
fn dirichlet(rng: &mut RngStream, len: usize, alpha: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..len).map(|_| gamma(rng, alpha)).collect();
    let sum: f64 = v.iter().sum();
    if sum <= 0.0 {
        return vec![1.0 / len as f64; len];
    }
    v.iter_mut().for_each(|x| *x /= sum);
    v
}

fn gamma(rng: &mut RngStream, shape: f64) -> f64 {
    if shape < 1.0 {
        let u = rng.next_f64().max(1e-300);
        return gamma(rng, shape + 1.0) * u.powf(1.0 / shape);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = standard_normal(rng);
        let v = (1.0 + c * x).powi(3);
        if v <= 0.0 {
            continue;
        }
        let u = rng.next_f64().max(1e-300);
        if u.ln() < 0.5 * x * x + d - d * v + d * v.ln() {
            return d * v;
        }
    }
}

fn standard_normal(rng: &mut RngStream) -> f64 {
    // Box-Muller
    let u1 = rng.next_f64().max(1e-300);
    let u2 = rng.next_f64();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
