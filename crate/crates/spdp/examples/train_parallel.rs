//! Run the approximate parallel sampler (worker pools over shared atomic
//! counts) and compare its wall-clock and held-out fit against the exact
//! sequential sampler on the same data.
//!
//!     cargo run --release --example train_parallel

use std::time::Instant;

use spdp::corpus::{split_holdout, stream_tags};
use spdp::eval::perplexity;
use spdp::model::{estimate, gibbs_sweep, init_state, Hyperparameters, TransformMatrix};
use spdp::numerics::{RngStream, StirlingBank};
use spdp::parallel::{plan_stream, run_parallel_iteration, MergeMode, ParallelConfig, WorkPlan};
use spdp::synth::{planted_corpus, SyntheticSpec};

fn main() -> spdp::Result<()> {
    let planted = planted_corpus(&SyntheticSpec {
        groups: 2,
        docs_per_group: 120,
        doc_len: 60,
        topics: 6,
        vocab: 200,
        seed: 3,
        ..Default::default()
    })?;
    let split = split_holdout(&planted.corpus, 0.1, 5)?;
    let train = &split.train;
    let topics = 6;
    let seed = 21;
    let iterations = 60u64;

    let hyper = Hyperparameters::default_for(topics, train.group_count(), train.vocab_size());
    let bank = StirlingBank::new(&hyper.discount, train.max_word_group_frequency() + 2)?;
    let transform = TransformMatrix::identity(train.vocab_size());

    // exact sequential reference
    let mut rng = RngStream::derived(seed, stream_tags::INIT, 0);
    let mut seq_state = init_state(train, &hyper, &transform, &mut rng)?;
    let started = Instant::now();
    for iteration in 1..=iterations {
        let mut sweep_rng = RngStream::derived(seed, stream_tags::SWEEP, iteration);
        gibbs_sweep(
            &mut seq_state,
            train,
            &hyper,
            &transform,
            &bank,
            &mut sweep_rng,
        )?;
    }
    let seq_seconds = started.elapsed().as_secs_f64();
    let seq_est = estimate(&seq_state, train, &hyper, &transform);
    let seq_perplexity = perplexity(&split.test, &seq_est, &hyper, 10, seed)?.overall;

    // approximate parallel run: 4 workers per device, 2 logical devices
    let cfg = ParallelConfig {
        workers: 4,
        wave_budget: 4096,
        merge_mode: MergeMode::Shared,
    };
    let devices = 2;
    let mut rng = RngStream::derived(seed, stream_tags::INIT, 0);
    let mut par_state = init_state(train, &hyper, &transform, &mut rng)?;
    // one exact warm-start sweep before the approximate loop
    let mut warm_rng = RngStream::derived(seed, stream_tags::SWEEP, 0);
    gibbs_sweep(
        &mut par_state,
        train,
        &hyper,
        &transform,
        &bank,
        &mut warm_rng,
    )?;
    let started = Instant::now();
    let mut corrections = 0usize;
    for iteration in 1..=iterations {
        let mut plan_rng = plan_stream(seed, iteration);
        let plan = WorkPlan::new(
            train,
            topics,
            &transform,
            devices,
            cfg.wave_budget,
            &mut plan_rng,
        )?;
        let report = run_parallel_iteration(
            &mut par_state,
            train,
            &plan,
            &hyper,
            &transform,
            &bank,
            &cfg,
            seed,
            iteration,
        )?;
        corrections += report.tables_clamped;
    }
    let par_seconds = started.elapsed().as_secs_f64();
    par_state.check_consistency(train)?;
    let par_est = estimate(&par_state, train, &hyper, &transform);
    let par_perplexity = perplexity(&split.test, &par_est, &hyper, 10, seed)?.overall;

    println!("tokens: {}", train.token_count());
    println!(
        "sequential: {seq_seconds:.2}s ({:.0} tokens/s), held-out perplexity {seq_perplexity:.2}",
        iterations as f64 * train.token_count() as f64 / seq_seconds
    );
    println!(
        "parallel (W=4, G=2): {par_seconds:.2}s ({:.0} tokens/s), held-out perplexity {par_perplexity:.2}",
        iterations as f64 * train.token_count() as f64 / par_seconds
    );
    println!("table counts clamped back into range across {iterations} iterations: {corrections}");
    Ok(())
}
