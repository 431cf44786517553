//! Differential topic modelling with a non-identity transform: two groups
//! express the same topics with different surface words (synonym pairs), and
//! a sparse doubly-stochastic transform lets tables associate either surface
//! form with a shared base word. The base distributions carry both forms;
//! each group's own rows keep its preferred form. The sequential sampler
//! supports arbitrary sparse transforms (the parallel path is identity-only).
//!
//!     cargo run --release --example differential_transform

use std::sync::Arc;

use spdp::corpus::{stream_tags, Corpus, Group};
use spdp::model::{estimate, gibbs_sweep, init_state, Hyperparameters, TransformMatrix};
use spdp::numerics::{RngStream, StirlingBank};

// words 0..8: shared core of topic 0; 8..16: shared core of topic 1;
// synonym pairs (16,17) and (18,19) belong to topic 0, (20,21) and (22,23)
// to topic 1; group 0 uses the even member of each pair, group 1 the odd one
const VOCAB: usize = 24;
const PAIRS: [(u32, u32); 4] = [(16, 17), (18, 19), (20, 21), (22, 23)];

fn lexicon(group: usize, topic: usize) -> Vec<u32> {
    let mut words: Vec<u32> = if topic == 0 {
        (0..8).collect()
    } else {
        (8..16).collect()
    };
    let pair_range = if topic == 0 { 0..2 } else { 2..4 };
    for p in pair_range {
        let (even, odd) = PAIRS[p];
        words.push(if group == 0 { even } else { odd });
    }
    words
}

fn build_corpus() -> spdp::Result<Corpus> {
    let mut rng = RngStream::new(77, 0);
    let mut groups = Vec::new();
    for g in 0..2usize {
        let documents = (0..60)
            .map(|d| {
                let lex = lexicon(g, d % 2);
                (0..30)
                    .map(|_| lex[rng.below(lex.len() as u64) as usize])
                    .collect()
            })
            .collect();
        groups.push(Group {
            name: format!("g{g}"),
            documents,
        });
    }
    let words: Vec<String> = (0..VOCAB).map(|v| format!("w{v:02}")).collect();
    Corpus::new(groups, Arc::new(words))
}

fn synonym_transform() -> spdp::Result<TransformMatrix> {
    let mut rows: Vec<Vec<(u32, f64)>> = (0..VOCAB as u32).map(|v| vec![(v, 1.0)]).collect();
    for &(a, b) in &PAIRS {
        rows[a as usize] = vec![(a, 0.5), (b, 0.5)];
        rows[b as usize] = vec![(a, 0.5), (b, 0.5)];
    }
    TransformMatrix::from_rows(VOCAB, rows, 2)
}

fn main() -> spdp::Result<()> {
    let corpus = build_corpus()?;
    let transform = synonym_transform()?;
    let topics = 2;
    let seed = 4;
    let hyper = Hyperparameters::default_for(topics, 2, VOCAB);
    let bank = StirlingBank::new(&hyper.discount, corpus.max_word_group_frequency() + 2)?;

    let mut rng = RngStream::derived(seed, stream_tags::INIT, 0);
    let mut state = init_state(&corpus, &hyper, &transform, &mut rng)?;
    for iteration in 1..=150u64 {
        let mut sweep_rng = RngStream::derived(seed, stream_tags::SWEEP, iteration);
        gibbs_sweep(
            &mut state,
            &corpus,
            &hyper,
            &transform,
            &bank,
            &mut sweep_rng,
        )?;
    }
    state.check_consistency(&corpus)?;
    let est = estimate(&state, &corpus, &hyper, &transform);

    // find which learned topic carries each synonym pair
    for &(even, odd) in &PAIRS {
        let k = (0..topics)
            .max_by(|&a, &b| {
                let ma = est.phi0[a][even as usize] + est.phi0[a][odd as usize];
                let mb = est.phi0[b][even as usize] + est.phi0[b][odd as usize];
                ma.partial_cmp(&mb).unwrap()
            })
            .unwrap();
        println!("pair (w{even:02}, w{odd:02}) lives in topic {k}:");
        println!(
            "  base      phi0: w{even:02} {:.4}  w{odd:02} {:.4}",
            est.phi0[k][even as usize], est.phi0[k][odd as usize]
        );
        for g in 0..2 {
            println!(
                "  group g{g}  phi:  w{even:02} {:.4}  w{odd:02} {:.4}   (sees the other form only through the transform)",
                est.phi_group[g][k][even as usize], est.phi_group[g][k][odd as usize]
            );
        }
    }
    Ok(())
}
