//! Point estimates read out of a converged state: doc-topic proportions,
//! the shared base word distribution per topic, and per-group word
//! distributions through the transform.

use crate::corpus::Corpus;
use crate::model::{CountState, Hyperparameters, TransformMatrix};

#[derive(Debug, Clone)]
pub struct ModelEstimate {
    pub topics: usize,
    pub vocab: usize,
    pub groups: usize,
    /// Doc-topic proportions, one row of length K per flat document.
    pub theta: Vec<Vec<f64>>,
    /// Base word-topic distributions, K rows of length V.
    pub phi0: Vec<Vec<f64>>,
    /// Per-group word-topic distributions, [group][topic] rows of length V.
    pub phi_group: Vec<Vec<Vec<f64>>>,
    /// Per-group topic probability: document-length-weighted mean of theta.
    pub topic_weight: Vec<Vec<f64>>,
}

/// theta from the Dirichlet posterior mean, phi0 from the base-measure
/// posterior over table dishes, and the per-group rows from the
/// Pitman-Yor posterior with the transform-smoothed base. The second mixing
/// weight carries the concentration term so that every row sums to one.
pub fn estimate(
    state: &CountState,
    corpus: &Corpus,
    hyper: &Hyperparameters,
    transform: &TransformMatrix,
) -> ModelEstimate {
    let topics = state.topics();
    let vocab = state.vocab_size();
    let groups = state.group_count();

    let mut theta = Vec::with_capacity(state.doc_count());
    for (i, g) in corpus.groups.iter().enumerate() {
        let alpha = hyper.alpha_row(i);
        for d in 0..g.documents.len() {
            let flat_doc = corpus.flat_doc(i, d);
            let mut row: Vec<f64> = (0..topics)
                .map(|k| alpha[k] + state.doc_topic_count(flat_doc, k) as f64)
                .collect();
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= sum);
            theta.push(row);
        }
    }

    let beta_sum = hyper.beta_sum();
    let mut phi0 = Vec::with_capacity(topics);
    for k in 0..topics {
        let denom = beta_sum + state.topic_table_total(k) as f64;
        phi0.push(
            (0..vocab)
                .map(|v| (hyper.beta[v] + state.base_table_count(k, v) as f64) / denom)
                .collect::<Vec<f64>>(),
        );
    }

    let mut phi_group = Vec::with_capacity(groups);
    for i in 0..groups {
        let mut per_topic = Vec::with_capacity(topics);
        for k in 0..topics {
            let a_k = hyper.discount[k];
            let b_k = hyper.concentration[k];
            let denom = b_k + state.restaurant_customer_count(i, k) as f64;
            let mix = (b_k + a_k * state.restaurant_table_count(i, k) as f64) / denom;
            let mut row = vec![0.0f64; vocab];
            let mut support = Vec::with_capacity(transform.max_support());
            for w in 0..vocab {
                let m = state.customers_at(i, k, w) as f64;
                let t = state.tables_at(i, k, w) as f64;
                transform.support_into(w as u32, &mut support);
                let base: f64 = support.iter().map(|&(v, p)| p * phi0[k][v as usize]).sum();
                row[w] = (m - a_k * t) / denom + mix * base;
            }
            per_topic.push(row);
        }
        phi_group.push(per_topic);
    }

    let mut topic_weight = Vec::with_capacity(groups);
    let mut doc_cursor = 0usize;
    for g in &corpus.groups {
        let mut weights = vec![0.0f64; topics];
        let mut total_len = 0.0f64;
        for doc in &g.documents {
            let len = doc.len() as f64;
            for (k, w) in weights.iter_mut().enumerate() {
                *w += len * theta[doc_cursor][k];
            }
            total_len += len;
            doc_cursor += 1;
        }
        if total_len > 0.0 {
            weights.iter_mut().for_each(|w| *w /= total_len);
        } else {
            weights.iter_mut().for_each(|w| *w = 1.0 / topics as f64);
        }
        topic_weight.push(weights);
    }

    ModelEstimate {
        topics,
        vocab,
        groups,
        theta,
        phi0,
        phi_group,
        topic_weight,
    }
}

impl ModelEstimate {
    /// Row-sum sanity for tests: every distribution sums to 1 within tol.
    pub fn rows_are_distributions(&self, tol: f64) -> bool {
        let ok = |row: &Vec<f64>| {
            (row.iter().sum::<f64>() - 1.0).abs() <= tol && row.iter().all(|&x| x > 0.0)
        };
        self.theta.iter().all(ok)
            && self.phi0.iter().all(ok)
            && self.phi_group.iter().flatten().all(ok)
    }
}
