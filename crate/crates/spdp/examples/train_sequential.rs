//! Train the exact sequential sampler on a synthetic grouped corpus and
//! print the per-group topic tables it recovers.
//!
//!     cargo run --release --example train_sequential

use spdp::corpus::stream_tags;
use spdp::eval::{top_words, topic_rank};
use spdp::model::{estimate, gibbs_sweep, init_state, Hyperparameters, TransformMatrix};
use spdp::numerics::{RngStream, StirlingBank};
use spdp::synth::{planted_corpus, SyntheticSpec};

fn main() -> spdp::Result<()> {
    let planted = planted_corpus(&SyntheticSpec {
        groups: 2,
        docs_per_group: 80,
        doc_len: 50,
        topics: 4,
        vocab: 120,
        seed: 11,
        ..Default::default()
    })?;
    let corpus = planted.corpus;
    let topics = 4;
    let seed = 7;

    let hyper = Hyperparameters::default_for(topics, corpus.group_count(), corpus.vocab_size());
    let bank = StirlingBank::new(&hyper.discount, corpus.max_word_group_frequency() + 2)?;
    let transform = TransformMatrix::identity(corpus.vocab_size());

    let mut rng = RngStream::derived(seed, stream_tags::INIT, 0);
    let mut state = init_state(&corpus, &hyper, &transform, &mut rng)?;
    println!("training on {} tokens, K = {topics}", corpus.token_count());
    for iteration in 1..=100u64 {
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
    let vocab = corpus.vocabulary();
    for k in 0..topics {
        println!("topic {k}");
        for (i, g) in corpus.groups.iter().enumerate() {
            let words: Vec<String> = top_words(&est, i, k, 8)
                .into_iter()
                .map(|(w, p)| format!("{}:{:.3}", vocab[w as usize], p))
                .collect();
            println!(
                "  group {:<8} probability {:.4}  rank {}  {}",
                g.name,
                est.topic_weight[i][k],
                topic_rank(&est, i, k),
                words.join(" ")
            );
        }
    }
    Ok(())
}
