//! Held-out perplexity with fold-in, Hellinger-distance topic comparison
//! with alignment, and ranked topic tables.

use crate::corpus::{stream_tags, Corpus};
use crate::error::{Error, Result};
use crate::model::{Hyperparameters, ModelEstimate};
use crate::numerics::RngStream;

pub const DEFAULT_FOLD_IN_ITERATIONS: usize = 10;

#[derive(Debug, Clone)]
pub struct PerplexityReport {
    /// exp of the negative mean held-out log-likelihood per token.
    pub overall: f64,
    /// (group name, perplexity over that group's test documents).
    pub per_group: Vec<(String, f64)>,
    pub total_tokens: usize,
}

/// Topic proportions for one held-out document: a short Gibbs pass over its
/// tokens with the group's word distributions frozen as likelihoods, then the
/// Dirichlet posterior mean. Zero iterations returns the prior mean.
pub fn fold_in(
    doc: &[u32],
    phi_group_topic: &[Vec<f64>],
    alpha: &[f64],
    iterations: usize,
    rng: &mut RngStream,
) -> Vec<f64> {
    let topics = alpha.len();
    let mut counts = vec![0u32; topics];
    let mut assign = vec![0u32; doc.len()];
    let mut weights = vec![0.0f64; topics];
    for sweep in 0..iterations {
        for (l, &w) in doc.iter().enumerate() {
            if sweep > 0 {
                counts[assign[l] as usize] -= 1;
            }
            let mut total = 0.0;
            for k in 0..topics {
                let lik = phi_group_topic[k][w as usize];
                weights[k] = (alpha[k] + counts[k] as f64) * lik;
                total += weights[k];
            }
            let target = rng.next_f64() * total;
            let mut acc = 0.0;
            let mut pick = topics - 1;
            for (k, &wt) in weights.iter().enumerate() {
                acc += wt;
                if acc > target {
                    pick = k;
                    break;
                }
            }
            assign[l] = pick as u32;
            counts[pick] += 1;
        }
    }
    let denom: f64 = alpha.iter().sum::<f64>() + counts.iter().sum::<u32>() as f64;
    (0..topics)
        .map(|k| (alpha[k] + counts[k] as f64) / denom)
        .collect()
}

/// Held-out perplexity of a test corpus under a trained estimate, with
/// per-document theta obtained by fold-in (deterministic given the seed).
pub fn perplexity(
    test: &Corpus,
    est: &ModelEstimate,
    hyper: &Hyperparameters,
    fold_iterations: usize,
    seed: u64,
) -> Result<PerplexityReport> {
    if test.vocab_size() != est.vocab {
        return Err(Error::Data(format!(
            "test vocabulary size {} does not match model {}",
            test.vocab_size(),
            est.vocab
        )));
    }
    let mut total_ll = 0.0f64;
    let mut total_tokens = 0usize;
    let mut per_group = Vec::with_capacity(test.group_count());
    for (i, g) in test.groups.iter().enumerate() {
        let phi = &est.phi_group[i];
        let alpha = hyper.alpha_row(i);
        let mut group_ll = 0.0f64;
        let mut group_tokens = 0usize;
        for (d, doc) in g.documents.iter().enumerate() {
            let mut rng =
                RngStream::derived(seed, stream_tags::FOLD_IN ^ (i as u64) << 32, d as u64);
            let theta = fold_in(doc, phi, alpha, fold_iterations, &mut rng);
            group_ll += doc_log_likelihood(doc, phi, &theta);
            group_tokens += doc.len();
        }
        per_group.push((
            g.name.clone(),
            if group_tokens > 0 {
                (-group_ll / group_tokens as f64).exp()
            } else {
                f64::NAN
            },
        ));
        total_ll += group_ll;
        total_tokens += group_tokens;
    }
    Ok(PerplexityReport {
        overall: (-total_ll / total_tokens.max(1) as f64).exp(),
        per_group,
        total_tokens,
    })
}

/// Sum over tokens of ln Σ_k φ_{k,w} θ_k.
pub fn doc_log_likelihood(doc: &[u32], phi_group_topic: &[Vec<f64>], theta: &[f64]) -> f64 {
    doc.iter()
        .map(|&w| {
            let p: f64 = theta
                .iter()
                .enumerate()
                .map(|(k, &th)| th * phi_group_topic[k][w as usize])
                .sum();
            p.ln()
        })
        .sum()
}

/// Perplexity from externally supplied per-document theta rows.
pub fn perplexity_with_theta(
    test: &Corpus,
    est: &ModelEstimate,
    thetas: &[Vec<f64>],
) -> Result<PerplexityReport> {
    if thetas.len() != test.doc_count() {
        return Err(Error::Data(
            "theta row count does not match test corpus".into(),
        ));
    }
    let mut total_ll = 0.0;
    let mut total_tokens = 0usize;
    let mut per_group = Vec::new();
    let mut cursor = 0usize;
    for (i, g) in test.groups.iter().enumerate() {
        let phi = &est.phi_group[i];
        let mut group_ll = 0.0;
        let mut group_tokens = 0usize;
        for doc in &g.documents {
            group_ll += doc_log_likelihood(doc, phi, &thetas[cursor]);
            group_tokens += doc.len();
            cursor += 1;
        }
        per_group.push((
            g.name.clone(),
            (-group_ll / group_tokens.max(1) as f64).exp(),
        ));
        total_ll += group_ll;
        total_tokens += group_tokens;
    }
    Ok(PerplexityReport {
        overall: (-total_ll / total_tokens.max(1) as f64).exp(),
        per_group,
        total_tokens,
    })
}

// ---------------------------------------------------------------------------
// Hellinger distance and topic alignment
// ---------------------------------------------------------------------------

/// H(p, q) = sqrt(1 - Σ sqrt(p_v q_v)), clamped into [0, 1].
pub fn hellinger(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Data(format!(
            "hellinger length mismatch: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    let bc: f64 = p.iter().zip(q).map(|(&a, &b)| (a * b).sqrt()).sum();
    Ok((1.0 - bc).max(0.0).sqrt().clamp(0.0, 1.0))
}

#[derive(Debug, Clone)]
pub struct TopicAlignment {
    /// permutation[k] is the model-B topic matched to model-A topic k.
    pub permutation: Vec<usize>,
    /// Pairwise Hellinger distances, rows = A topics, columns = B topics.
    pub distances: Vec<Vec<f64>>,
    /// Mean distance along the matched diagonal.
    pub mean_matched: f64,
}

/// Pairwise Hellinger matrix on the base word-topic rows plus a greedy
/// minimum-distance matching. The matched sum never exceeds the identity
/// matching's sum; if greedy pairing would (possible on adversarial
/// matrices), the identity permutation is returned instead.
pub fn align_and_heatmap(a: &ModelEstimate, b: &ModelEstimate) -> Result<TopicAlignment> {
    if a.topics != b.topics {
        return Err(Error::Data(format!(
            "topic count mismatch: {} vs {}",
            a.topics, b.topics
        )));
    }
    if a.vocab != b.vocab {
        return Err(Error::Data(format!(
            "vocabulary mismatch: {} vs {}",
            a.vocab, b.vocab
        )));
    }
    let k_count = a.topics;
    let mut distances = vec![vec![0.0f64; k_count]; k_count];
    for i in 0..k_count {
        for j in 0..k_count {
            distances[i][j] = hellinger(&a.phi0[i], &b.phi0[j])?;
        }
    }
    align_rows(distances)
}

/// Greedy alignment of an arbitrary distance matrix (exposed for per-group
/// comparisons and the planted-topic checks).
pub fn align_rows(distances: Vec<Vec<f64>>) -> Result<TopicAlignment> {
    let k_count = distances.len();
    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(k_count * k_count);
    for i in 0..k_count {
        for j in 0..k_count {
            pairs.push((i, j));
        }
    }
    pairs.sort_by(|&(i1, j1), &(i2, j2)| {
        distances[i1][j1]
            .partial_cmp(&distances[i2][j2])
            .unwrap()
            .then((i1, j1).cmp(&(i2, j2)))
    });
    let mut permutation = vec![usize::MAX; k_count];
    let mut used_b = vec![false; k_count];
    let mut assigned = 0;
    for (i, j) in pairs {
        if permutation[i] == usize::MAX && !used_b[j] {
            permutation[i] = j;
            used_b[j] = true;
            assigned += 1;
            if assigned == k_count {
                break;
            }
        }
    }
    let matched: f64 = (0..k_count).map(|i| distances[i][permutation[i]]).sum();
    let identity: f64 = (0..k_count).map(|i| distances[i][i]).sum();
    if matched > identity {
        permutation = (0..k_count).collect();
    }
    let mean_matched = (0..k_count)
        .map(|i| distances[i][permutation[i]])
        .sum::<f64>()
        / k_count.max(1) as f64;
    Ok(TopicAlignment {
        permutation,
        distances,
        mean_matched,
    })
}

/// Heatmap text: first line K, then K rows of K space-separated reals.
pub fn heatmap_text(alignment: &TopicAlignment) -> String {
    use std::fmt::Write;
    let k_count = alignment.distances.len();
    let mut out = String::new();
    writeln!(out, "{k_count}").unwrap();
    for row in &alignment.distances {
        let mut line = String::new();
        for (j, x) in row.iter().enumerate() {
            if j > 0 {
                line.push(' ');
            }
            write!(line, "{x:.6}").unwrap();
        }
        out.push_str(&line);
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// Topic tables
// ---------------------------------------------------------------------------

/// Words of (group, topic) sorted by probability descending, ties broken by
/// ascending word id.
pub fn top_words(est: &ModelEstimate, group: usize, topic: usize, n: usize) -> Vec<(u32, f64)> {
    let row = &est.phi_group[group][topic];
    let mut idx: Vec<u32> = (0..row.len() as u32).collect();
    idx.sort_by(|&a, &b| {
        row[b as usize]
            .partial_cmp(&row[a as usize])
            .unwrap()
            .then(a.cmp(&b))
    });
    idx.truncate(n.min(row.len()));
    idx.into_iter().map(|w| (w, row[w as usize])).collect()
}

/// Rank of a topic within its group by topic probability (1 = most probable,
/// ties broken by topic id).
pub fn topic_rank(est: &ModelEstimate, group: usize, topic: usize) -> usize {
    let weights = &est.topic_weight[group];
    let mine = weights[topic];
    1 + weights
        .iter()
        .enumerate()
        .filter(|&(k, &w)| w > mine || (w == mine && k < topic))
        .count()
}
