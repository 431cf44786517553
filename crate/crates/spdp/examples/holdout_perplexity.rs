//! Hold out a fraction of each group, train, and watch held-out perplexity
//! fall as the sampler converges.
//!
//!     cargo run --release --example holdout_perplexity

use spdp::corpus::{split_holdout, stream_tags};
use spdp::eval::perplexity;
use spdp::model::{estimate, gibbs_sweep, init_state, Hyperparameters, TransformMatrix};
use spdp::numerics::{RngStream, StirlingBank};
use spdp::synth::{planted_corpus, SyntheticSpec};

fn main() -> spdp::Result<()> {
    let planted = planted_corpus(&SyntheticSpec {
        groups: 2,
        docs_per_group: 100,
        doc_len: 60,
        topics: 5,
        vocab: 150,
        seed: 9,
        ..Default::default()
    })?;
    // 10% of every group held out from training
    let split = split_holdout(&planted.corpus, 0.1, 42)?;
    let train = &split.train;
    let test = &split.test;
    println!(
        "train: {} docs / {} tokens, held out: {} docs / {} tokens",
        train.doc_count(),
        train.token_count(),
        test.doc_count(),
        test.token_count()
    );

    let topics = 5;
    let seed = 13;
    let hyper = Hyperparameters::default_for(topics, train.group_count(), train.vocab_size());
    let bank = StirlingBank::new(&hyper.discount, train.max_word_group_frequency() + 2)?;
    let transform = TransformMatrix::identity(train.vocab_size());

    let mut rng = RngStream::derived(seed, stream_tags::INIT, 0);
    let mut state = init_state(train, &hyper, &transform, &mut rng)?;
    println!(
        "iteration,overall,{}",
        test.groups
            .iter()
            .map(|g| g.name.as_str())
            .collect::<Vec<_>>()
            .join(",")
    );
    for iteration in 1..=80u64 {
        let mut sweep_rng = RngStream::derived(seed, stream_tags::SWEEP, iteration);
        gibbs_sweep(&mut state, train, &hyper, &transform, &bank, &mut sweep_rng)?;
        if iteration == 1 || iteration % 10 == 0 {
            let est = estimate(&state, train, &hyper, &transform);
            let report = perplexity(test, &est, &hyper, 10, seed)?;
            let groups: Vec<String> = report
                .per_group
                .iter()
                .map(|(_, p)| format!("{p:.2}"))
                .collect();
            println!("{iteration},{:.2},{}", report.overall, groups.join(","));
        }
    }
    Ok(())
}
