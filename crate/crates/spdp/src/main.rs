use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spdp::config::RunConfig;
use spdp::Error;

#[derive(Parser)]
#[command(
    name = "spdp",
    about = "Differential topic modelling: train, export topics, compare runs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Flat key=value config file; flags below override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Group corpus file as name=path (repeatable).
    #[arg(long, value_name = "NAME=PATH")]
    corpus: Vec<String>,
    #[arg(long)]
    stopwords: Option<PathBuf>,
    #[arg(long)]
    topics: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    discount: Option<f64>,
    #[arg(long)]
    concentration: Option<f64>,
    /// sequential or parallel
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    devices: Option<usize>,
    #[arg(long = "wave-budget")]
    wave_budget: Option<usize>,
    /// shared or delta
    #[arg(long = "merge-mode")]
    merge_mode: Option<String>,
    #[arg(long)]
    duplicate: Option<u32>,
    #[arg(long)]
    holdout: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long = "eval-every")]
    eval_every: Option<usize>,
    #[arg(long = "snapshot-every")]
    snapshot_every: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write snapshots, perplexity and timing logs.
    Train(ConfigArgs),
    /// Print ranked topic tables from a snapshot.
    Topics {
        #[arg(long)]
        snapshot: PathBuf,
        /// Words per topic row.
        #[arg(long, default_value_t = 50)]
        top: usize,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Compare two snapshots: Hellinger heatmap plus alignment summary.
    Compare {
        #[arg(long = "snapshot-a")]
        snapshot_a: PathBuf,
        #[arg(long = "snapshot-b")]
        snapshot_b: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn build_config(args: &ConfigArgs) -> Result<RunConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig {
            corpus: Vec::new(),
            ..RunConfig::default()
        },
    };
    if !args.corpus.is_empty() {
        cfg.corpus.clear();
        for entry in &args.corpus {
            let (name, path) = entry.split_once('=').ok_or_else(|| {
                Error::Config(format!("--corpus entries are name=path, got '{entry}'"))
            })?;
            cfg.corpus.push((name.to_string(), PathBuf::from(path)));
        }
    }
    if let Some(v) = &args.stopwords {
        cfg.stopwords = Some(v.clone());
    }
    if let Some(v) = args.topics {
        cfg.topics = v;
    }
    if let Some(v) = args.iterations {
        cfg.iterations = v;
    }
    if let Some(v) = args.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = args.beta {
        cfg.beta = v;
    }
    if let Some(v) = args.discount {
        cfg.discount = v;
    }
    if let Some(v) = args.concentration {
        cfg.concentration = v;
    }
    if let Some(v) = &args.mode {
        cfg.mode = v.parse()?;
    }
    if let Some(v) = args.workers {
        cfg.workers = v;
    }
    if let Some(v) = args.devices {
        cfg.devices = v;
    }
    if let Some(v) = args.wave_budget {
        cfg.wave_budget = v;
    }
    if let Some(v) = &args.merge_mode {
        cfg.merge_mode = v.parse()?;
    }
    if let Some(v) = args.duplicate {
        cfg.duplicate = v;
    }
    if let Some(v) = args.holdout {
        cfg.holdout = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = &args.out {
        cfg.out = v.clone();
    }
    if let Some(v) = args.eval_every {
        cfg.eval_every = v;
    }
    if let Some(v) = args.snapshot_every {
        cfg.snapshot_every = v;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Train(args) => {
            let cfg = build_config(&args)?;
            let final_snapshot = spdp::cli::cmd_train(&cfg)?;
            println!("final snapshot: {}", final_snapshot.display());
            Ok(())
        }
        Command::Topics {
            snapshot,
            top,
            config,
        } => {
            let cfg = build_config(&config)?;
            let table = spdp::cli::cmd_topics(&snapshot, &cfg, top)?;
            print!("{table}");
            Ok(())
        }
        Command::Compare {
            snapshot_a,
            snapshot_b,
            out,
        } => {
            let outcome = spdp::cli::cmd_compare(&snapshot_a, &snapshot_b, &out)?;
            print!("{}", outcome.summary);
            println!("heatmap: {}", outcome.heatmap_path.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
