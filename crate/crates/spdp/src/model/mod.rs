//! Model state, the exact sequential blocked Gibbs sweep, joint
//! log-probability, and point estimators.

mod estimate;
mod sampler;
pub mod snapshot;
mod state;


pub use estimate::{estimate, ModelEstimate};
pub use sampler::{
    compute_proposals, gibbs_sweep, gibbs_sweep_ordered, init_state, joint_log_prob,
    position_stream, resample_position, ProposalScratch, Proposals,
};
pub use state::{Choice, CountState, RemovalRecord};

use crate::error::{Error, Result};

/// Per-topic / per-group priors. Defaults follow the values reported as
/// optimal for blog data: alpha = 0.1, beta = 0.1, discount a = 0.7,
/// concentration b = 100.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparameters {
    pub topics: usize,
    /// Doc-topic Dirichlet, one row of length K per group.
    pub alpha: Vec<Vec<f64>>,
    /// Base-measure Dirichlet over the vocabulary.
    pub beta: Vec<f64>,
    /// Per-topic discount a_k in [0, 1).
    pub discount: Vec<f64>,
    /// Per-topic concentration b_k > 0.
    pub concentration: Vec<f64>,
}

impl Hyperparameters {
    pub const DEFAULT_ALPHA: f64 = 0.1;
    pub const DEFAULT_BETA: f64 = 0.1;
    pub const DEFAULT_DISCOUNT: f64 = 0.7;
    pub const DEFAULT_CONCENTRATION: f64 = 100.0;

    pub fn symmetric(
        topics: usize,
        groups: usize,
        vocab: usize,
        alpha: f64,
        beta: f64,
        discount: f64,
        concentration: f64,
    ) -> Result<Self> {
        Self::new(
            topics,
            vec![vec![alpha; topics]; groups],
            vec![beta; vocab],
            vec![discount; topics],
            vec![concentration; topics],
        )
    }

    pub fn default_for(topics: usize, groups: usize, vocab: usize) -> Self {
        Self::symmetric(
            topics,
            groups,
            vocab,
            Self::DEFAULT_ALPHA,
            Self::DEFAULT_BETA,
            Self::DEFAULT_DISCOUNT,
            Self::DEFAULT_CONCENTRATION,
        )
        .expect("default hyperparameters are valid")
    }

    pub fn new(
        topics: usize,
        alpha: Vec<Vec<f64>>,
        beta: Vec<f64>,
        discount: Vec<f64>,
        concentration: Vec<f64>,
    ) -> Result<Self> {
        if topics == 0 {
            return Err(Error::Config("topic count must be >= 1".into()));
        }
        for row in &alpha {
            if row.len() != topics || row.iter().any(|&a| !(a > 0.0)) {
                return Err(Error::Config(
                    "alpha rows must be length K with entries > 0".into(),
                ));
            }
        }
        if beta.iter().any(|&b| !(b > 0.0)) {
            return Err(Error::Config("beta entries must be > 0".into()));
        }
        if discount.len() != topics || discount.iter().any(|&a| !(0.0..1.0).contains(&a)) {
            return Err(Error::Config(
                "discount must have K entries in [0,1)".into(),
            ));
        }
        if concentration.len() != topics || concentration.iter().any(|&b| !(b > 0.0)) {
            return Err(Error::Config(
                "concentration must have K entries > 0".into(),
            ));
        }
        Ok(Self {
            topics,
            alpha,
            beta,
            discount,
            concentration,
        })
    }

    pub fn beta_sum(&self) -> f64 {
        self.beta.iter().sum()
    }

    pub fn alpha_row(&self, group: usize) -> &[f64] {
        &self.alpha[group]
    }
}

/// Per-group sparse V x V transformation of the shared base distribution.
/// Rows and columns sum to one; the identity flag short-circuits storage for
/// the common case. Bounded nonzeros per row and column keep the sampler's
/// inner loop at K*(S_max+1) proposals per word.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformMatrix {
    vocab: usize,
    identity: bool,
    rows: Vec<Vec<(u32, f64)>>,
    max_nonzeros: usize,
}

impl TransformMatrix {
    pub fn identity(vocab: usize) -> Self {
        Self {
            vocab,
            identity: true,
            rows: Vec::new(),
            max_nonzeros: 1,
        }
    }

    /// Build from per-row (column, value) lists; validates row and column
    /// sums and the nonzero bound.
    pub fn from_rows(vocab: usize, rows: Vec<Vec<(u32, f64)>>, s_max: usize) -> Result<Self> {
        if rows.len() != vocab {
            return Err(Error::Data(format!(
                "transform matrix needs {vocab} rows, got {}",
                rows.len()
            )));
        }
        let mut col_sums = vec![0.0f64; vocab];
        let mut col_nnz = vec![0usize; vocab];
        let mut is_identity = true;
        for (w, row) in rows.iter().enumerate() {
            if row.is_empty() || row.len() > s_max {
                return Err(Error::Data(format!(
                    "transform row {w} has {} nonzeros, bound is {s_max}",
                    row.len()
                )));
            }
            let mut sum = 0.0;
            for &(v, p) in row {
                if v as usize >= vocab || !(p > 0.0) {
                    return Err(Error::Data(format!(
                        "transform row {w}: bad entry ({v}, {p})"
                    )));
                }
                sum += p;
                col_sums[v as usize] += p;
                col_nnz[v as usize] += 1;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Data(format!(
                    "transform row {w} sums to {sum}, not 1"
                )));
            }
            if row.len() != 1 || row[0].0 as usize != w {
                is_identity = false;
            }
        }
        for (v, &s) in col_sums.iter().enumerate() {
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::Data(format!(
                    "transform column {v} sums to {s}, not 1"
                )));
            }
            if col_nnz[v] > s_max {
                return Err(Error::Data(format!(
                    "transform column {v} has {} nonzeros, bound is {s_max}",
                    col_nnz[v]
                )));
            }
        }
        if is_identity {
            return Ok(Self::identity(vocab));
        }
        let max_nonzeros = rows.iter().map(Vec::len).max().unwrap_or(1);
        Ok(Self {
            vocab,
            identity: false,
            rows,
            max_nonzeros,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab
    }

    pub fn is_identity(&self) -> bool {
        self.identity
    }

    /// Largest support size of any row (S_max of the workgroup sizing).
    pub fn max_support(&self) -> usize {
        self.max_nonzeros
    }

    /// Fill `buf` with the (column, value) support of row `w`.
    pub fn support_into(&self, w: u32, buf: &mut Vec<(u32, f64)>) {
        buf.clear();
        if self.identity {
            buf.push((w, 1.0));
        } else {
            buf.extend_from_slice(&self.rows[w as usize]);
        }
    }

    pub fn prob(&self, w: u32, v: u32) -> f64 {
        if self.identity {
            return if w == v { 1.0 } else { 0.0 };
        }
        self.rows[w as usize]
            .iter()
            .find(|&&(col, _)| col == v)
            .map(|&(_, p)| p)
            .unwrap_or(0.0)
    }
}
