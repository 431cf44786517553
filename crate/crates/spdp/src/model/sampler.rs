//! Blocked Gibbs sweep: per word position, jointly resample (topic,
//! table-indicator, dish) from the exact conditional, entirely in log space.

use crate::corpus::{stream_tags, Corpus, Position};
use crate::error::{Error, Result};
use crate::model::{Choice, CountState, Hyperparameters, TransformMatrix};
use crate::numerics::{
    ln_beta_multi, ln_binomial, pochhammer_log, sample_categorical, RngStream, StirlingBank,
    NEG_INF,
};

/// Proposal weights for one removed word, in the canonical order: for each
/// topic k, first (k, join-existing-table), then (k, open-table, v) for every
/// v in the transform row's support.
#[derive(Debug, Clone)]
pub struct Proposals {
    pub choices: Vec<Choice>,
    pub log_weights: Vec<f64>,
}

/// Reusable per-position buffers. Both the sequential sweep and the parallel
/// workgroups fill one of these (the latter from a clamped snapshot) and run
/// the same weight computation, which is what makes the single-worker
/// parallel run bit-identical to the sequential sampler.
#[derive(Debug, Clone)]
pub struct ProposalScratch {
    topics: usize,
    pub(crate) doc_topic: Vec<u32>,
    pub(crate) m_cell: Vec<u32>,
    pub(crate) t_cell: Vec<u32>,
    pub(crate) m_rest: Vec<u32>,
    pub(crate) t_rest: Vec<u32>,
    pub(crate) topic_tables: Vec<u32>,
    /// Base-table counts for each (topic, support slot), K x S.
    pub(crate) base_support: Vec<u32>,
    pub(crate) support: Vec<(u32, f64)>,
    pub log_weights: Vec<f64>,
    pub choices: Vec<Choice>,
}

impl ProposalScratch {
    pub fn new(topics: usize, max_support: usize) -> Self {
        Self {
            topics,
            doc_topic: vec![0; topics],
            m_cell: vec![0; topics],
            t_cell: vec![0; topics],
            m_rest: vec![0; topics],
            t_rest: vec![0; topics],
            topic_tables: vec![0; topics],
            base_support: vec![0; topics * max_support.max(1)],
            support: Vec::with_capacity(max_support.max(1)),
            log_weights: Vec::with_capacity(topics * (1 + max_support)),
            choices: Vec::with_capacity(topics * (1 + max_support)),
        }
    }

    /// Copy the counts relevant to (group, doc, word) out of an exact state.
    pub(crate) fn fill_from_state(
        &mut self,
        state: &CountState,
        transform: &TransformMatrix,
        group: usize,
        flat_doc: usize,
        word: u32,
    ) {
        transform.support_into(word, &mut self.support);
        let s = self.support.len();
        for k in 0..self.topics {
            self.doc_topic[k] = state.doc_topic_count(flat_doc, k);
            self.m_cell[k] = state.customers_at(group, k, word as usize);
            self.t_cell[k] = state.tables_at(group, k, word as usize);
            self.m_rest[k] = state.restaurant_customer_count(group, k);
            self.t_rest[k] = state.restaurant_table_count(group, k);
            self.topic_tables[k] = state.topic_table_total(k);
            for (j, &(v, _)) in self.support.iter().enumerate() {
                self.base_support[k * s + j] = state.base_table_count(k, v as usize);
            }
        }
    }

    /// Log-weights for every (topic, indicator, dish) choice given counts
    /// with the word already removed.
    ///
    /// A removal can leave the word's own cell holding customers but no
    /// table, a zero-probability configuration; the only moves with nonzero
    /// conditional probability are then the ones that reopen a table in that
    /// cell, and the weights reflect exactly that.
    pub(crate) fn compute_weights(
        &mut self,
        hyper: &Hyperparameters,
        group: usize,
        bank: &StirlingBank,
    ) -> Result<()> {
        let k_count = self.topics;
        let s = self.support.len();
        let alpha = hyper.alpha_row(group);
        let beta_sum = hyper.beta_sum();
        self.log_weights.clear();
        self.choices.clear();

        let mut damaged: Option<usize> = None;
        for k in 0..k_count {
            if self.m_cell[k] >= 1 && self.t_cell[k] == 0 {
                if damaged.is_some() {
                    return Err(Error::Integrity(
                        "more than one cell with customers but no table".into(),
                    ));
                }
                damaged = Some(k);
            }
        }

        for k in 0..k_count {
            let a_k = hyper.discount[k];
            let b_k = hyper.concentration[k];
            let cache = bank.for_topic(k);
            let m = self.m_cell[k] as u64;
            let t = self.t_cell[k] as u64;
            let ln_alpha_n = (alpha[k] + self.doc_topic[k] as f64).ln();
            let ln_b_m_rest = (b_k + self.m_rest[k] as f64).ln();

            // join an existing table of the cell: r = 0
            let w0 = match damaged {
                Some(_) => NEG_INF,
                None => {
                    let stirling = cache.stirling_log(m + 1, t)? - cache.stirling_log(m, t)?;
                    if stirling == NEG_INF {
                        NEG_INF
                    } else {
                        ln_alpha_n - ln_b_m_rest + ((m - t + 1) as f64).ln() - ((m + 1) as f64).ln()
                            + stirling
                    }
                }
            };
            self.log_weights.push(w0);
            self.choices.push(Choice {
                topic: k as u32,
                open: false,
                dish: None,
            });

            // open a new table with dish v: r = 1
            let restorable = damaged == Some(k);
            let common = if damaged.is_none() {
                let stirling = cache.stirling_log(m + 1, t + 1)? - cache.stirling_log(m, t)?;
                ln_alpha_n + (b_k + a_k * self.t_rest[k] as f64).ln() - ln_b_m_rest
                    + ((t + 1) as f64).ln()
                    - ((m + 1) as f64).ln()
                    + stirling
            } else if restorable {
                // Stirling and table ratios of the damaged cell drop out:
                // they are shared by every admissible move.
                ln_alpha_n + (b_k + a_k * self.t_rest[k] as f64).ln() - ln_b_m_rest
            } else {
                NEG_INF
            };
            let ln_beta_t = (beta_sum + self.topic_tables[k] as f64).ln();
            for (j, &(v, p_wv)) in self.support.iter().enumerate() {
                let w1 = if common == NEG_INF {
                    NEG_INF
                } else {
                    common
                        + p_wv.ln()
                        + (hyper.beta[v as usize] + self.base_support[k * s + j] as f64).ln()
                        - ln_beta_t
                };
                self.log_weights.push(w1);
                self.choices.push(Choice {
                    topic: k as u32,
                    open: true,
                    dish: Some(v),
                });
            }
        }
        Ok(())
    }
}

/// Proposal log-weights over {(k, r=0)} and {(k, r=1, v) : P^i[w][v] > 0} for
/// a word that has been removed from the counts.
pub fn compute_proposals(
    state: &CountState,
    corpus: &Corpus,
    hyper: &Hyperparameters,
    transform: &TransformMatrix,
    bank: &StirlingBank,
    pos: Position,
) -> Result<Proposals> {
    let mut scratch = ProposalScratch::new(state.topics(), transform.max_support());
    let group = pos.group as usize;
    let flat_doc = corpus.flat_doc(group, pos.doc as usize);
    scratch.fill_from_state(state, transform, group, flat_doc, corpus.word_at(pos));
    scratch.compute_weights(hyper, group, bank)?;
    Ok(Proposals {
        choices: scratch.choices,
        log_weights: scratch.log_weights,
    })
}

/// One blocked Gibbs step for a single position: remove, propose, sample, add.
pub fn resample_position(
    state: &mut CountState,
    corpus: &Corpus,
    hyper: &Hyperparameters,
    transform: &TransformMatrix,
    bank: &StirlingBank,
    scratch: &mut ProposalScratch,
    pos: Position,
    rng: &mut RngStream,
) -> Result<()> {
    state.remove_word(corpus, pos, rng)?;
    let group = pos.group as usize;
    let flat_doc = corpus.flat_doc(group, pos.doc as usize);
    scratch.fill_from_state(state, transform, group, flat_doc, corpus.word_at(pos));
    scratch.compute_weights(hyper, group, bank)?;
    let idx = sample_categorical(&scratch.log_weights, rng)?;
    let choice = scratch.choices[idx];
    state.add_word(corpus, transform, pos, &choice)
}

/// One full sweep in corpus order.
pub fn gibbs_sweep(
    state: &mut CountState,
    corpus: &Corpus,
    hyper: &Hyperparameters,
    transform: &TransformMatrix,
    bank: &StirlingBank,
    rng: &mut RngStream,
) -> Result<()> {
    let mut scratch = ProposalScratch::new(state.topics(), transform.max_support());
    for pos in corpus.positions() {
        resample_position(
            state,
            corpus,
            hyper,
            transform,
            bank,
            &mut scratch,
            pos,
            rng,
        )?;
    }
    state.refresh_table_indicators(corpus);
    Ok(())
}

/// One sweep visiting positions in an explicit order, with an independent
/// stream per schedule slot. The single-worker parallel iteration reproduces
/// this exactly.
pub fn gibbs_sweep_ordered(
    state: &mut CountState,
    corpus: &Corpus,
    hyper: &Hyperparameters,
    transform: &TransformMatrix,
    bank: &StirlingBank,
    schedule: &[Position],
    seed: u64,
    iteration: u64,
) -> Result<()> {
    let mut scratch = ProposalScratch::new(state.topics(), transform.max_support());
    for (sidx, &pos) in schedule.iter().enumerate() {
        let mut rng = position_stream(seed, iteration, sidx as u64);
        resample_position(
            state,
            corpus,
            hyper,
            transform,
            bank,
            &mut scratch,
            pos,
            &mut rng,
        )?;
    }
    state.refresh_table_indicators(corpus);
    Ok(())
}

/// The per-position stream used by ordered sweeps and parallel workgroups.
pub fn position_stream(seed: u64, iteration: u64, schedule_index: u64) -> RngStream {
    RngStream::derived(
        seed,
        stream_tags::POSITION ^ iteration.rotate_left(17),
        schedule_index,
    )
}

/// Random topics, then one sequential seating pass: the first customer of a
/// cell always opens a table; later customers open with the generative
/// probability (b + a*T)/(b + N) on their restaurant's current counts,
/// drawing the dish from the transform row when they do.
pub fn init_state(
    corpus: &Corpus,
    hyper: &Hyperparameters,
    transform: &TransformMatrix,
    rng: &mut RngStream,
) -> Result<CountState> {
    let topics = hyper.topics;
    let mut state = CountState::empty(corpus, topics);
    for pos in corpus.positions() {
        let flat = corpus.flat_position(pos);
        state.z[flat] = rng.below(topics as u64) as u32;
    }
    let mut support = Vec::with_capacity(transform.max_support());
    let z_init = state.z.clone();
    for pos in corpus.positions() {
        let flat = corpus.flat_position(pos);
        let group = pos.group as usize;
        let word = corpus.word_at(pos);
        let k = z_init[flat] as usize;
        let m_cell = state.customers_at(group, k, word as usize);
        let open = if m_cell == 0 {
            true
        } else {
            let b = hyper.concentration[k];
            let a = hyper.discount[k];
            let t_rest = state.restaurant_table_count(group, k) as f64;
            let m_rest = state.restaurant_customer_count(group, k) as f64;
            rng.bernoulli((b + a * t_rest) / (b + m_rest))
        };
        let dish = if open {
            transform.support_into(word, &mut support);
            Some(draw_from_support(&support, rng))
        } else {
            None
        };
        state.add_word(
            corpus,
            transform,
            pos,
            &Choice {
                topic: k as u32,
                open,
                dish,
            },
        )?;
    }
    state.refresh_table_indicators(corpus);
    Ok(state)
}

fn draw_from_support(support: &[(u32, f64)], rng: &mut RngStream) -> u32 {
    let target = rng.next_f64();
    let mut acc = 0.0;
    for &(v, p) in support {
        acc += p;
        if acc > target {
            return v;
        }
    }
    support.last().expect("transform rows are non-empty").0
}

/// Log of the collapsed joint p(W, Z, V, R | priors): transform factors,
/// doc-topic Dirichlet evidence, restaurant Pochhammer ratios, base-measure
/// Dirichlet evidence, and per-cell Stirling/binomial factors. Returns -inf
/// for structurally coherent but zero-probability configurations.
pub fn joint_log_prob(
    state: &CountState,
    corpus: &Corpus,
    hyper: &Hyperparameters,
    transform: &TransformMatrix,
    bank: &StirlingBank,
) -> Result<f64> {
    state.verify_structure(corpus)?;
    let topics = state.topics();
    let vocab = state.vocab_size();
    let mut total = 0.0;

    // dish-association factors: sum over tables of ln p_{w,v}
    for (i, k, w) in state.occupied_cells() {
        for &v in state.table_list(i, k, w) {
            let p = transform.prob(w as u32, v);
            if p <= 0.0 {
                return Ok(NEG_INF);
            }
            total += p.ln();
        }
    }

    // doc-topic Dirichlet evidence
    for (i, g) in corpus.groups.iter().enumerate() {
        let alpha = hyper.alpha_row(i);
        let prior = ln_beta_multi(alpha.iter().copied());
        for d in 0..g.documents.len() {
            let flat_doc = corpus.flat_doc(i, d);
            let post = ln_beta_multi(
                (0..topics).map(|k| alpha[k] + state.doc_topic_count(flat_doc, k) as f64),
            );
            total += post - prior;
        }
    }

    // restaurant-level Pochhammer ratios
    for k in 0..topics {
        let a_k = hyper.discount[k];
        let b_k = hyper.concentration[k];
        for i in 0..state.group_count() {
            let t_rest = state.restaurant_table_count(i, k) as u64;
            let m_rest = state.restaurant_customer_count(i, k) as u64;
            total += pochhammer_log(b_k, a_k, t_rest)? - pochhammer_log(b_k, 1.0, m_rest)?;
        }
    }

    // base-measure Dirichlet evidence over table dishes
    let beta_sum = hyper.beta_sum();
    for k in 0..topics {
        let t_total = state.topic_table_total(k) as f64;
        if t_total == 0.0 {
            continue;
        }
        for v in 0..vocab {
            let q = state.base_table_count(k, v);
            if q > 0 {
                let b_v = hyper.beta[v];
                total += ln_gamma_ratio(b_v, q);
            }
        }
        total +=
            crate::numerics::ln_gamma(beta_sum) - crate::numerics::ln_gamma(beta_sum + t_total);
    }

    // per-cell table-configuration factors
    for (i, k, w) in state.occupied_cells() {
        let m = state.customers_at(i, k, w) as u64;
        let t = state.tables_at(i, k, w) as u64;
        let stirling = bank.for_topic(k).stirling_log(m, t)?;
        if stirling == NEG_INF {
            return Ok(NEG_INF);
        }
        total += stirling - ln_binomial(m, t);
    }

    Ok(total)
}

// lnΓ(x + q) − lnΓ(x) for integer q, as a short product; exact and cheap for
// the small q values that occur per (topic, word).
fn ln_gamma_ratio(x: f64, q: u32) -> f64 {
    if q <= 32 {
        (0..q).map(|j| (x + j as f64).ln()).sum()
    } else {
        crate::numerics::ln_gamma(x + q as f64) - crate::numerics::ln_gamma(x)
    }
}
