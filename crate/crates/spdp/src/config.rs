//! Run configuration: a flat key=value text file plus flag overrides. The
//! file format round-trips losslessly so every run can be reproduced from
//! the config it writes into its output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::parallel::MergeMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Sequential,
    Parallel,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(Mode::Sequential),
            "parallel" => Ok(Mode::Parallel),
            other => Err(Error::Config(format!("unknown mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Sequential => "sequential",
            Mode::Parallel => "parallel",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub corpus: Vec<(String, PathBuf)>,
    pub stopwords: Option<PathBuf>,
    pub topics: usize,
    pub iterations: usize,
    pub eval_every: usize,
    pub snapshot_every: usize,
    pub alpha: f64,
    pub beta: f64,
    pub discount: f64,
    pub concentration: f64,
    pub mode: Mode,
    pub workers: usize,
    pub devices: usize,
    pub wave_budget: usize,
    pub merge_mode: MergeMode,
    pub duplicate: u32,
    /// Held-out fraction; 0 disables the split (and perplexity rows).
    pub holdout: f64,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus: Vec::new(),
            stopwords: None,
            topics: 16,
            iterations: 2000,
            eval_every: 50,
            snapshot_every: 500,
            alpha: crate::model::Hyperparameters::DEFAULT_ALPHA,
            beta: crate::model::Hyperparameters::DEFAULT_BETA,
            discount: crate::model::Hyperparameters::DEFAULT_DISCOUNT,
            concentration: crate::model::Hyperparameters::DEFAULT_CONCENTRATION,
            mode: Mode::Sequential,
            workers: 1,
            devices: 1,
            wave_budget: 1 << 20,
            merge_mode: MergeMode::Shared,
            duplicate: 1,
            holdout: 0.1,
            seed: 1,
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.corpus.is_empty() {
            return Err(Error::Config(
                "at least one --corpus name=path is required".into(),
            ));
        }
        if self.topics == 0 {
            return Err(Error::Config("topics must be >= 1".into()));
        }
        if self.eval_every == 0 || self.snapshot_every == 0 {
            return Err(Error::Config(
                "eval-every and snapshot-every must be >= 1".into(),
            ));
        }
        if !(self.alpha > 0.0) || !(self.beta > 0.0) {
            return Err(Error::Config("alpha and beta must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::Config("discount must be in [0,1)".into()));
        }
        if !(self.concentration > 0.0) {
            return Err(Error::Config("concentration must be > 0".into()));
        }
        if self.workers == 0 || self.devices == 0 || self.wave_budget == 0 {
            return Err(Error::Config(
                "workers, devices and wave-budget must be >= 1".into(),
            ));
        }
        if self.duplicate == 0 {
            return Err(Error::Config("duplicate must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.holdout) {
            return Err(Error::Config("holdout must be in [0,1)".into()));
        }
        Ok(())
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for (name, path) in &self.corpus {
            writeln!(out, "corpus = {}={}", name, path.display()).unwrap();
        }
        if let Some(sw) = &self.stopwords {
            writeln!(out, "stopwords = {}", sw.display()).unwrap();
        }
        writeln!(out, "topics = {}", self.topics).unwrap();
        writeln!(out, "iterations = {}", self.iterations).unwrap();
        writeln!(out, "eval_every = {}", self.eval_every).unwrap();
        writeln!(out, "snapshot_every = {}", self.snapshot_every).unwrap();
        writeln!(out, "alpha = {}", self.alpha).unwrap();
        writeln!(out, "beta = {}", self.beta).unwrap();
        writeln!(out, "discount = {}", self.discount).unwrap();
        writeln!(out, "concentration = {}", self.concentration).unwrap();
        writeln!(out, "mode = {}", self.mode).unwrap();
        writeln!(out, "workers = {}", self.workers).unwrap();
        writeln!(out, "devices = {}", self.devices).unwrap();
        writeln!(out, "wave_budget = {}", self.wave_budget).unwrap();
        writeln!(out, "merge_mode = {}", self.merge_mode).unwrap();
        writeln!(out, "duplicate = {}", self.duplicate).unwrap();
        writeln!(out, "holdout = {}", self.holdout).unwrap();
        writeln!(out, "seed = {}", self.seed).unwrap();
        writeln!(out, "out = {}", self.out.display()).unwrap();
        out
    }

    pub fn apply_line(&mut self, line: &str) -> Result<()> {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            return Ok(());
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key = value, got '{line}'")))?;
        let key = key.trim();
        let value = value.trim();
        let parse_usize = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| Error::Config(format!("bad integer '{v}' for {key}")))
        };
        let parse_f64 = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number '{v}' for {key}")))
        };
        match key {
            "corpus" => {
                let (name, path) = value.split_once('=').ok_or_else(|| {
                    Error::Config(format!("corpus entries are name=path, got '{value}'"))
                })?;
                self.corpus
                    .push((name.trim().to_string(), PathBuf::from(path.trim())));
            }
            "stopwords" => self.stopwords = Some(PathBuf::from(value)),
            "topics" => self.topics = parse_usize(value)?,
            "iterations" => self.iterations = parse_usize(value)?,
            "eval_every" => self.eval_every = parse_usize(value)?,
            "snapshot_every" => self.snapshot_every = parse_usize(value)?,
            "alpha" => self.alpha = parse_f64(value)?,
            "beta" => self.beta = parse_f64(value)?,
            "discount" => self.discount = parse_f64(value)?,
            "concentration" => self.concentration = parse_f64(value)?,
            "mode" => self.mode = value.parse()?,
            "workers" => self.workers = parse_usize(value)?,
            "devices" => self.devices = parse_usize(value)?,
            "wave_budget" => self.wave_budget = parse_usize(value)?,
            "merge_mode" => self.merge_mode = value.parse()?,
            "duplicate" => {
                self.duplicate = value
                    .parse::<u32>()
                    .map_err(|_| Error::Config(format!("bad integer '{value}' for duplicate")))?
            }
            "holdout" => self.holdout = parse_f64(value)?,
            "seed" => {
                self.seed = value
                    .parse::<u64>()
                    .map_err(|_| Error::Config(format!("bad integer '{value}' for seed")))?
            }
            "out" => self.out = PathBuf::from(value),
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self {
            corpus: Vec::new(),
            ..Self::default()
        };
        for line in text.lines() {
            cfg.apply_line(line)?;
        }
        Ok(cfg)
    }

    pub fn parse_string(text: &str) -> Result<Self> {
        let mut cfg = Self {
            corpus: Vec::new(),
            ..Self::default()
        };
        for line in text.lines() {
            cfg.apply_line(line)?;
        }
        Ok(cfg)
    }
}
