//! Batch front end used by the `spdp` binary: train (sequential or
//! parallel), export topic tables from a snapshot, and compare two
//! snapshots. Every artifact is plain text so runs diff cleanly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::{Mode, RunConfig};
use crate::corpus::{self, stream_tags, Corpus};
use crate::error::{Error, Result};
use crate::eval;
use crate::model::{self, snapshot, Hyperparameters, ModelEstimate, TransformMatrix};
use crate::numerics::{RngStream, StirlingBank};
use crate::parallel::{self, ParallelConfig, WorkPlan};

pub struct PreparedData {
    pub train: Corpus,
    pub test: Option<Corpus>,
}

/// Load, split, and duplicate according to the config. The held-out side is
/// never duplicated.
pub fn prepare_corpus(cfg: &RunConfig) -> Result<PreparedData> {
    let full = corpus::load_corpus(&cfg.corpus, cfg.stopwords.as_deref())?;
    let (train, test) = if cfg.holdout > 0.0 {
        let split = corpus::split_holdout(&full, cfg.holdout, cfg.seed)?;
        (split.train, Some(split.test))
    } else {
        (full, None)
    };
    let train = corpus::duplicate_training(&train, cfg.duplicate)?;
    Ok(PreparedData { train, test })
}

fn hyper_for(cfg: &RunConfig, train: &Corpus) -> Result<Hyperparameters> {
    Hyperparameters::symmetric(
        cfg.topics,
        train.group_count(),
        train.vocab_size(),
        cfg.alpha,
        cfg.beta,
        cfg.discount,
        cfg.concentration,
    )
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn append_text(path: &Path, text: &str) -> Result<()> {
    use std::io::Write;
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
    f.write_all(text.as_bytes()).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn estimate_text(est: &ModelEstimate) -> String {
    let mut out = String::new();
    out.push_str("TOPICWEIGHT\n");
    for (i, row) in est.topic_weight.iter().enumerate() {
        write!(out, "{i}").unwrap();
        for x in row {
            write!(out, " {x:.8}").unwrap();
        }
        out.push('\n');
    }
    out.push_str("PHI0\n");
    for (k, row) in est.phi0.iter().enumerate() {
        write!(out, "{k}").unwrap();
        for x in row {
            write!(out, " {x:.8}").unwrap();
        }
        out.push('\n');
    }
    out.push_str("PHIGROUP\n");
    for (i, per_topic) in est.phi_group.iter().enumerate() {
        for (k, row) in per_topic.iter().enumerate() {
            write!(out, "{i} {k}").unwrap();
            for x in row {
                write!(out, " {x:.8}").unwrap();
            }
            out.push('\n');
        }
    }
    out.push_str("THETA\n");
    for (d, row) in est.theta.iter().enumerate() {
        write!(out, "{d}").unwrap();
        for x in row {
            write!(out, " {x:.8}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Train per the config; writes config.txt, perplexity.csv, timings.csv,
/// periodic and final snapshots, and the final estimate dump into the output
/// directory. Returns the path of the final snapshot.
pub fn cmd_train(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let data = prepare_corpus(cfg)?;
    let train = &data.train;
    if train.token_count() == 0 {
        return Err(Error::Data("training corpus is empty".into()));
    }
    let hyper = hyper_for(cfg, train)?;
    let bank = StirlingBank::new(&hyper.discount, train.max_word_group_frequency() + 2)?;
    let transform = TransformMatrix::identity(train.vocab_size());

    fs::create_dir_all(&cfg.out).map_err(|source| Error::Io {
        path: cfg.out.clone(),
        source,
    })?;
    write_text(&cfg.out.join("config.txt"), &cfg.to_file_string())?;

    let mut init_rng = RngStream::derived(cfg.seed, stream_tags::INIT, 0);
    let mut state = model::init_state(train, &hyper, &transform, &mut init_rng)?;
    if cfg.mode == Mode::Parallel && cfg.iterations > 0 {
        // one exact sweep before the approximate loop stabilizes the counts
        // the workgroups will snapshot
        let mut warm_rng = RngStream::derived(cfg.seed, stream_tags::SWEEP, 0);
        model::gibbs_sweep(&mut state, train, &hyper, &transform, &bank, &mut warm_rng)?;
    }

    let perplexity_path = cfg.out.join("perplexity.csv");
    if let Some(test) = &data.test {
        let mut header = String::from("iteration,overall");
        for g in &test.groups {
            write!(header, ",group:{}", g.name).unwrap();
        }
        header.push('\n');
        write_text(&perplexity_path, &header)?;
    }
    let timings_path = cfg.out.join("timings.csv");
    write_text(&timings_path, "iteration,seconds\n")?;

    let pcfg = ParallelConfig {
        workers: cfg.workers,
        wave_budget: cfg.wave_budget,
        merge_mode: cfg.merge_mode,
    };

    for iter in 1..=cfg.iterations as u64 {
        let started = Instant::now();
        match cfg.mode {
            Mode::Sequential => {
                let mut rng = RngStream::derived(cfg.seed, stream_tags::SWEEP, iter);
                model::gibbs_sweep(&mut state, train, &hyper, &transform, &bank, &mut rng)?;
            }
            Mode::Parallel => {
                let mut rng = parallel::plan_stream(cfg.seed, iter);
                let plan = WorkPlan::new(
                    train,
                    cfg.topics,
                    &transform,
                    cfg.devices,
                    cfg.wave_budget,
                    &mut rng,
                )?;
                parallel::run_parallel_iteration(
                    &mut state, train, &plan, &hyper, &transform, &bank, &pcfg, cfg.seed, iter,
                )?;
            }
        }
        let seconds = started.elapsed().as_secs_f64();
        append_text(&timings_path, &format!("{iter},{seconds:.6}\n"))?;

        if let Some(test) = &data.test {
            if iter % cfg.eval_every as u64 == 0 {
                let est = model::estimate(&state, train, &hyper, &transform);
                let report = eval::perplexity(
                    test,
                    &est,
                    &hyper,
                    eval::DEFAULT_FOLD_IN_ITERATIONS,
                    cfg.seed,
                )?;
                let mut row = format!("{iter},{:.6}", report.overall);
                for (_, p) in &report.per_group {
                    write!(row, ",{p:.6}").unwrap();
                }
                row.push('\n');
                append_text(&perplexity_path, &row)?;
            }
        }
        if iter % cfg.snapshot_every as u64 == 0 {
            let path = cfg.out.join(format!("snapshot_iter{iter:06}.txt"));
            snapshot::write_snapshot(&path, &state, train, &hyper)?;
        }
    }

    let final_path = cfg.out.join("snapshot_final.txt");
    snapshot::write_snapshot(&final_path, &state, train, &hyper)?;
    let est = model::estimate(&state, train, &hyper, &transform);
    write_text(&cfg.out.join("estimate.txt"), &estimate_text(&est))?;
    Ok(final_path)
}

/// Topic table text for a snapshot: per topic, one row per group with the
/// group's topic probability, its rank within the group, and the top-n words.
pub fn cmd_topics(snapshot_path: &Path, cfg: &RunConfig, top_n: usize) -> Result<String> {
    let raw = snapshot::read_snapshot(snapshot_path)?;
    let data = prepare_corpus(cfg)?;
    let train = data.train;
    let hyper = raw.hyper.clone();
    let state = raw.into_state(&train)?;
    let transform = TransformMatrix::identity(train.vocab_size());
    let est = model::estimate(&state, &train, &hyper, &transform);
    let vocab = train.vocabulary();

    let mut out = String::new();
    for k in 0..est.topics {
        writeln!(out, "topic {k}").unwrap();
        for (i, g) in train.groups.iter().enumerate() {
            let rank = eval::topic_rank(&est, i, k);
            let words = eval::top_words(&est, i, k, top_n);
            let mut line = format!(
                "  group {}  probability {:.6}  rank {}  words:",
                g.name, est.topic_weight[i][k], rank
            );
            for (w, _) in words {
                write!(line, " {}", vocab[w as usize]).unwrap();
            }
            out.push_str(&line);
            out.push('\n');
        }
    }
    Ok(out)
}

fn phi0_from_snapshot(raw: &snapshot::RawSnapshot) -> Vec<Vec<f64>> {
    let topics = raw.topics;
    let vocab = raw.vocab;
    let mut base_tables = vec![0u64; topics * vocab];
    for (_, k, _, dishes) in &raw.lists {
        for &v in dishes {
            base_tables[*k as usize * vocab + v as usize] += 1;
        }
    }
    let beta_sum: f64 = raw.hyper.beta.iter().sum();
    (0..topics)
        .map(|k| {
            let total: u64 = base_tables[k * vocab..(k + 1) * vocab].iter().sum();
            let denom = beta_sum + total as f64;
            (0..vocab)
                .map(|v| (raw.hyper.beta[v] + base_tables[k * vocab + v] as f64) / denom)
                .collect()
        })
        .collect()
}

pub struct CompareOutcome {
    pub alignment: eval::TopicAlignment,
    pub heatmap_path: PathBuf,
    pub summary: String,
}

/// Hellinger comparison of two snapshots' base word-topic distributions;
/// emits the K x K heatmap text and an alignment summary.
pub fn cmd_compare(snapshot_a: &Path, snapshot_b: &Path, out_dir: &Path) -> Result<CompareOutcome> {
    let a = snapshot::read_snapshot(snapshot_a)?;
    let b = snapshot::read_snapshot(snapshot_b)?;
    if a.fingerprint != b.fingerprint {
        return Err(Error::Data(format!(
            "snapshots were trained on different corpora (fingerprints {:016x} vs {:016x})",
            a.fingerprint, b.fingerprint
        )));
    }
    if a.topics != b.topics {
        return Err(Error::Data(format!(
            "topic count mismatch: {} vs {}",
            a.topics, b.topics
        )));
    }
    if a.vocab != b.vocab {
        return Err(Error::Data(format!(
            "vocabulary size mismatch: {} vs {}",
            a.vocab, b.vocab
        )));
    }
    let phi_a = phi0_from_snapshot(&a);
    let phi_b = phi0_from_snapshot(&b);
    let mut distances = vec![vec![0.0f64; a.topics]; a.topics];
    for i in 0..a.topics {
        for j in 0..a.topics {
            distances[i][j] = eval::hellinger(&phi_a[i], &phi_b[j])?;
        }
    }
    let alignment = eval::align_rows(distances)?;
    fs::create_dir_all(out_dir).map_err(|source| Error::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let heatmap_path = out_dir.join("heatmap.txt");
    write_text(&heatmap_path, &eval::heatmap_text(&alignment))?;

    let mut summary = String::new();
    writeln!(summary, "topics {}", a.topics).unwrap();
    write!(summary, "permutation").unwrap();
    for &j in &alignment.permutation {
        write!(summary, " {j}").unwrap();
    }
    summary.push('\n');
    writeln!(
        summary,
        "mean_matched_hellinger {:.6}",
        alignment.mean_matched
    )
    .unwrap();
    Ok(CompareOutcome {
        alignment,
        heatmap_path,
        summary,
    })
}
