//! Train two independent chains on the same corpus and align their topics by
//! Hellinger distance: a low matched diagonal means both found the same
//! structure up to a permutation.
//!
//!     cargo run --release --example compare_runs

use spdp::corpus::stream_tags;
use spdp::eval::{align_and_heatmap, heatmap_text};
use spdp::model::{estimate, gibbs_sweep, init_state, Hyperparameters, TransformMatrix};
use spdp::numerics::{RngStream, StirlingBank};
use spdp::synth::{planted_corpus, SyntheticSpec};

fn main() -> spdp::Result<()> {
    let planted = planted_corpus(&SyntheticSpec {
        groups: 2,
        docs_per_group: 80,
        doc_len: 60,
        topics: 4,
        vocab: 120,
        block_mass: 0.95,
        mix_alpha: 0.08,
        seed: 15,
    })?;
    let corpus = planted.corpus;
    let topics = 4;
    let hyper = Hyperparameters::default_for(topics, corpus.group_count(), corpus.vocab_size());
    let bank = StirlingBank::new(&hyper.discount, corpus.max_word_group_frequency() + 2)?;
    let transform = TransformMatrix::identity(corpus.vocab_size());

    let train = |seed: u64| -> spdp::Result<_> {
        let mut rng = RngStream::derived(seed, stream_tags::INIT, 0);
        let mut state = init_state(&corpus, &hyper, &transform, &mut rng)?;
        for iteration in 1..=120u64 {
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
        Ok(estimate(&state, &corpus, &hyper, &transform))
    };
    let est_a = train(100)?;
    let est_b = train(200)?;

    let alignment = align_and_heatmap(&est_a, &est_b)?;
    println!("pairwise Hellinger distances (rows: run A, columns: run B):");
    print!("{}", heatmap_text(&alignment));
    println!("permutation of run-B topics: {:?}", alignment.permutation);
    println!("mean matched Hellinger: {:.4}", alignment.mean_matched);
    Ok(())
}
