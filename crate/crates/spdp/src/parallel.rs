//! Approximate parallel sampler: word reordering, document partitioning over
//! logical devices, wave scheduling, per-word workgroups over shared atomic
//! counts, and error correction.
//!
//! Devices are modeled as worker pools over one shared memory view (or over
//! private table counts in delta mode). Every mutation of a count is a
//! single-cell atomic add or subtract; workgroups may read values that other
//! workgroups are mid-way through updating, and that staleness is the
//! accepted approximation. Alignment anchor: with one worker and one device
//! the iteration is bit-identical to a sequential sweep over the reordered
//! schedule, because both paths run the same per-position code on the same
//! per-position random streams.
//!
//! This path requires an identity transform; the dish lists then carry no
//! information beyond the table counts and are rebuilt at every correction
//! barrier.

use std::ops::Range;
use std::sync::atomic::{AtomicI64, AtomicU32, Ordering};
use std::sync::Mutex;

use crate::corpus::{stream_tags, Corpus, Position};
use crate::error::{Error, Result};
use crate::model::{
    position_stream, CountState, Hyperparameters, ProposalScratch, TransformMatrix,
};
use crate::numerics::{sample_categorical, RngStream, StirlingBank};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MergeMode {
    /// All devices sample against one shared atomic view (default).
    Shared,
    /// Devices keep private table counts; deltas are summed at the barrier.
    Delta,
}

impl std::str::FromStr for MergeMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shared" => Ok(MergeMode::Shared),
            "delta" => Ok(MergeMode::Delta),
            other => Err(Error::Config(format!("unknown merge mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for MergeMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MergeMode::Shared => "shared",
            MergeMode::Delta => "delta",
        })
    }
}

#[derive(Debug, Clone)]
pub struct ParallelConfig {
    /// Worker threads per device.
    pub workers: usize,
    pub wave_budget: usize,
    pub merge_mode: MergeMode,
}

impl Default for ParallelConfig {
    fn default() -> Self {
        Self {
            workers: 1,
            wave_budget: 1 << 20,
            merge_mode: MergeMode::Shared,
        }
    }
}

// ---------------------------------------------------------------------------
// Work plan
// ---------------------------------------------------------------------------

/// Reordered word schedule, document partition, and wave boundaries.
#[derive(Debug, Clone)]
pub struct WorkPlan {
    pub schedule: Vec<Position>,
    /// Device id per flat document.
    pub device_of_doc: Vec<u32>,
    /// Per device: schedule indices owned by that device, ascending.
    pub device_schedules: Vec<Vec<u32>>,
    /// Contiguous schedule ranges processed between correction barriers.
    pub waves: Vec<Range<usize>>,
    /// Logical proposal slots per word: K * (S_max + 1).
    pub workgroup_slots: usize,
}

/// Round-robin by token index: emit position w_ind of every still-active
/// document (group-major, then document order) for w_ind = 0, 1, 2, ...
/// Words of one document end up maximally separated in the schedule.
pub fn reorder_words(corpus: &Corpus) -> Vec<Position> {
    let mut schedule = Vec::with_capacity(corpus.token_count());
    let longest = corpus
        .groups
        .iter()
        .flat_map(|g| g.documents.iter().map(Vec::len))
        .max()
        .unwrap_or(0);
    for w_ind in 0..longest {
        for (i, g) in corpus.groups.iter().enumerate() {
            for (d, doc) in g.documents.iter().enumerate() {
                if doc.len() > w_ind {
                    schedule.push(Position {
                        group: i as u32,
                        doc: d as u32,
                        token: w_ind as u32,
                    });
                }
            }
        }
    }
    schedule
}

/// Random balanced assignment of documents (not words) to devices: documents
/// are shuffled, then each goes to the least-loaded device, so per-device
/// token totals differ by at most the longest document's length.
pub fn partition_documents(
    corpus: &Corpus,
    devices: usize,
    rng: &mut RngStream,
) -> Result<Vec<u32>> {
    if devices == 0 {
        return Err(Error::Config("device count must be >= 1".into()));
    }
    let mut docs: Vec<(usize, usize)> = Vec::with_capacity(corpus.doc_count());
    for (i, g) in corpus.groups.iter().enumerate() {
        for (d, doc) in g.documents.iter().enumerate() {
            docs.push((corpus.flat_doc(i, d), doc.len()));
        }
    }
    // Fisher-Yates over the document order
    for j in (1..docs.len()).rev() {
        let pick = rng.below((j + 1) as u64) as usize;
        docs.swap(j, pick);
    }
    let mut load = vec![0usize; devices];
    let mut assignment = vec![0u32; corpus.doc_count()];
    for (flat_doc, len) in docs {
        let dev = (0..devices).min_by_key(|&g| (load[g], g)).unwrap();
        assignment[flat_doc] = dev as u32;
        load[dev] += len;
    }
    Ok(assignment)
}

impl WorkPlan {
    pub fn new(
        corpus: &Corpus,
        topics: usize,
        transform: &TransformMatrix,
        devices: usize,
        wave_budget: usize,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if wave_budget == 0 {
            return Err(Error::Config("wave budget must be >= 1".into()));
        }
        let schedule = reorder_words(corpus);
        let device_of_doc = partition_documents(corpus, devices, rng)?;
        let mut device_schedules = vec![Vec::new(); devices];
        for (sidx, pos) in schedule.iter().enumerate() {
            let flat_doc = corpus.flat_doc(pos.group as usize, pos.doc as usize);
            device_schedules[device_of_doc[flat_doc] as usize].push(sidx as u32);
        }
        let mut waves = Vec::new();
        let mut start = 0usize;
        while start < schedule.len() {
            let end = (start + wave_budget).min(schedule.len());
            waves.push(start..end);
            start = end;
        }
        Ok(Self {
            schedule,
            device_of_doc,
            device_schedules,
            waves,
            workgroup_slots: topics * (transform.max_support() + 1),
        })
    }

    pub fn device_count(&self) -> usize {
        self.device_schedules.len()
    }

    /// The slice of a device's schedule indices that falls inside a wave.
    fn device_slice(&self, device: usize, wave: &Range<usize>) -> &[u32] {
        let list = &self.device_schedules[device];
        let lo = list.partition_point(|&s| (s as usize) < wave.start);
        let hi = list.partition_point(|&s| (s as usize) < wave.end);
        &list[lo..hi]
    }
}

// ---------------------------------------------------------------------------
// Shared atomic counts
// ---------------------------------------------------------------------------

/// Table-derived counts; one instance shared by all devices, or one private
/// copy per device in delta mode.
struct TableCounts {
    tables: Vec<AtomicI64>,
    rest_tables: Vec<AtomicI64>,
    base_tables: Vec<AtomicI64>,
    topic_tables: Vec<AtomicI64>,
}

impl TableCounts {
    fn from_state(state: &CountState) -> Self {
        Self {
            tables: state
                .tables
                .iter()
                .map(|&x| AtomicI64::new(x as i64))
                .collect(),
            rest_tables: state
                .restaurant_tables
                .iter()
                .map(|&x| AtomicI64::new(x as i64))
                .collect(),
            base_tables: state
                .base_tables
                .iter()
                .map(|&x| AtomicI64::new(x as i64))
                .collect(),
            topic_tables: state
                .topic_tables
                .iter()
                .map(|&x| AtomicI64::new(x as i64))
                .collect(),
        }
    }

    fn cells(&self) -> Vec<i64> {
        self.tables
            .iter()
            .map(|a| a.load(Ordering::Relaxed))
            .collect()
    }
}

/// The count arrays of the state exposed through an atomically-updatable
/// view. Every mutation is a single-cell integer add/sub; no compound
/// read-modify-write spans multiple cells.
pub struct SharedCounts {
    topics: usize,
    vocab: usize,
    z: Vec<AtomicU32>,
    doc_topic: Vec<AtomicI64>,
    customers: Vec<AtomicI64>,
    rest_customers: Vec<AtomicI64>,
    tables: TableCounts,
}

impl SharedCounts {
    pub fn from_state(state: &CountState) -> Self {
        Self {
            topics: state.topics(),
            vocab: state.vocab_size(),
            z: state.z.iter().map(|&x| AtomicU32::new(x)).collect(),
            doc_topic: state
                .doc_topic
                .iter()
                .map(|&x| AtomicI64::new(x as i64))
                .collect(),
            customers: state
                .customers
                .iter()
                .map(|&x| AtomicI64::new(x as i64))
                .collect(),
            rest_customers: state
                .restaurant_customers
                .iter()
                .map(|&x| AtomicI64::new(x as i64))
                .collect(),
            tables: TableCounts::from_state(state),
        }
    }

    #[inline]
    fn cell(&self, group: usize, topic: usize, word: usize) -> usize {
        (group * self.topics + topic) * self.vocab + word
    }

    pub fn assignments(&self) -> Vec<u32> {
        self.z.iter().map(|a| a.load(Ordering::Relaxed)).collect()
    }

    pub fn table_cells(&self) -> Vec<i64> {
        self.tables.cells()
    }
}

// ---------------------------------------------------------------------------
// Error correction
// ---------------------------------------------------------------------------

/// Counts of each correction applied by [`error_correct`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CorrectionReport {
    /// Doc-topic cells rewritten by the recount from assignments.
    pub doc_topic_fixed: usize,
    /// Customer cells rewritten by the recount from assignments.
    pub customers_fixed: usize,
    /// Table counts clamped into [min(1, m), m].
    pub tables_clamped: usize,
    /// Dish lists truncated or padded to the corrected table count.
    pub lists_adjusted: usize,
    /// Cached aggregate entries that had drifted.
    pub sums_fixed: usize,
}

impl CorrectionReport {
    pub fn is_clean(&self) -> bool {
        *self == Self::default()
    }
}

impl std::ops::AddAssign for CorrectionReport {
    fn add_assign(&mut self, rhs: Self) {
        self.doc_topic_fixed += rhs.doc_topic_fixed;
        self.customers_fixed += rhs.customers_fixed;
        self.tables_clamped += rhs.tables_clamped;
        self.lists_adjusted += rhs.lists_adjusted;
        self.sums_fixed += rhs.sums_fixed;
    }
}

/// Regenerate what can be regenerated and clamp what cannot: doc-topic and
/// customer counts are recounted from assignments (exact), table counts are
/// clamped into [min(1, m), m], dish lists are truncated or padded to match
/// (identity transform pads with the cell's own word), association counts
/// and cached sums are rebuilt, and indicator bits are refreshed. Consistent
/// input yields a zero report.
pub fn error_correct(
    state: &mut CountState,
    corpus: &Corpus,
    transform: &TransformMatrix,
) -> CorrectionReport {
    let mut report = CorrectionReport::default();
    let topics = state.topics();
    let vocab = state.vocab_size();

    let mut doc_topic = vec![0u32; state.doc_topic.len()];
    let mut customers = vec![0u32; state.customers.len()];
    for pos in corpus.positions() {
        let flat = corpus.flat_position(pos);
        let topic = state.z[flat] as usize;
        let flat_doc = corpus.flat_doc(pos.group as usize, pos.doc as usize);
        doc_topic[flat_doc * topics + topic] += 1;
        customers[(pos.group as usize * topics + topic) * vocab + corpus.word_at(pos) as usize] +=
            1;
    }
    report.doc_topic_fixed = doc_topic
        .iter()
        .zip(&state.doc_topic)
        .filter(|(a, b)| a != b)
        .count();
    report.customers_fixed = customers
        .iter()
        .zip(&state.customers)
        .filter(|(a, b)| a != b)
        .count();
    state.doc_topic = doc_topic;
    state.customers = customers;

    // clamp tables and rebuild dish lists
    for idx in 0..state.tables.len() {
        let m = state.customers[idx];
        let t_old = state.tables[idx];
        let t_new = if m == 0 { 0 } else { t_old.clamp(1, m) };
        if t_new != t_old {
            report.tables_clamped += 1;
            state.tables[idx] = t_new;
        }
        let want = t_new as usize;
        let have = state.v_lists.get(&(idx as u64)).map_or(0, Vec::len);
        if have != want {
            report.lists_adjusted += 1;
            if want == 0 {
                state.v_lists.remove(&(idx as u64));
            } else {
                let w = (idx % vocab) as u32;
                let pad = if transform.prob(w, w) > 0.0 {
                    w
                } else {
                    let mut support = Vec::new();
                    transform.support_into(w, &mut support);
                    support[0].0
                };
                let list = state.v_lists.entry(idx as u64).or_default();
                list.truncate(want);
                while list.len() < want {
                    list.push(pad);
                }
            }
        }
    }

    // rebuild aggregates
    let groups = state.group_count();
    let mut rest_customers = vec![0u32; groups * topics];
    let mut rest_tables = vec![0u32; groups * topics];
    let mut base_tables = vec![0u32; topics * vocab];
    let mut topic_tables = vec![0u32; topics];
    for idx in 0..state.tables.len() {
        let k = (idx / vocab) % topics;
        let i = idx / (vocab * topics);
        rest_customers[i * topics + k] += state.customers[idx];
        rest_tables[i * topics + k] += state.tables[idx];
        topic_tables[k] += state.tables[idx];
    }
    for (&cell, list) in &state.v_lists {
        let k = (cell as usize / vocab) % topics;
        for &dish in list {
            base_tables[k * vocab + dish as usize] += 1;
        }
    }
    report.sums_fixed = count_diff(&rest_customers, &state.restaurant_customers)
        + count_diff(&rest_tables, &state.restaurant_tables)
        + count_diff(&base_tables, &state.base_tables)
        + count_diff(&topic_tables, &state.topic_tables);
    state.restaurant_customers = rest_customers;
    state.restaurant_tables = rest_tables;
    state.base_tables = base_tables;
    state.topic_tables = topic_tables;

    state.refresh_table_indicators(corpus);
    report
}

fn count_diff(a: &[u32], b: &[u32]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// Additive delta merge of per-device table snapshots:
/// merged = t_before + sum_g (t_g - t_before). Identity for one device.
/// Range clamping is left to [`error_correct`].
pub fn merge_device_tables(t_before: &[i64], device_tables: &[Vec<i64>]) -> Vec<i64> {
    let mut merged = t_before.to_vec();
    for dev in device_tables {
        for (m, (&d, &before)) in merged.iter_mut().zip(dev.iter().zip(t_before)) {
            *m += d - before;
        }
    }
    merged
}

// ---------------------------------------------------------------------------
// Workgroup execution
// ---------------------------------------------------------------------------

/// Clamp an atomic load into [lo, hi].
#[inline]
fn load_clamped(a: &AtomicI64, lo: i64, hi: i64) -> u32 {
    a.load(Ordering::Relaxed).clamp(lo, hi) as u32
}

/// One workgroup: snapshot and clamp the relevant counts, apply the removal
/// decrements atomically, compute all proposal weights from the snapshot,
/// sample, and apply the increments atomically.
#[allow(clippy::too_many_arguments)]
fn process_position(
    shared: &SharedCounts,
    tables: &TableCounts,
    corpus: &Corpus,
    hyper: &Hyperparameters,
    bank: &StirlingBank,
    scratch: &mut ProposalScratch,
    pos: Position,
    sched_index: u64,
    seed: u64,
    iteration: u64,
) -> Result<()> {
    let topics = shared.topics;
    let group = pos.group as usize;
    let word = corpus.word_at(pos);
    let flat_doc = corpus.flat_doc(group, pos.doc as usize);
    let flat_pos = corpus.flat_position(pos);
    let mut rng = position_stream(seed, iteration, sched_index);

    let k_old = shared.z[flat_pos].load(Ordering::Relaxed) as usize;

    // (a) snapshot with range correction
    scratch.support.clear();
    scratch.support.push((word, 1.0));
    let max = i64::MAX;
    for k in 0..topics {
        let m_cell = load_clamped(
            &shared.customers[shared.cell(group, k, word as usize)],
            0,
            max,
        );
        let m_rest = load_clamped(&shared.rest_customers[group * topics + k], 0, max);
        let t_cell = if m_cell == 0 {
            0
        } else {
            load_clamped(
                &tables.tables[shared.cell(group, k, word as usize)],
                1,
                m_cell as i64,
            )
        };
        let t_rest = load_clamped(&tables.rest_tables[group * topics + k], 0, m_rest as i64);
        scratch.doc_topic[k] = load_clamped(&shared.doc_topic[flat_doc * topics + k], 0, max);
        scratch.m_cell[k] = m_cell;
        scratch.t_cell[k] = t_cell;
        scratch.m_rest[k] = m_rest;
        scratch.t_rest[k] = t_rest;
        scratch.topic_tables[k] = load_clamped(&tables.topic_tables[k], 0, max);
        scratch.base_support[k] = load_clamped(
            &tables.base_tables[k * shared.vocab + word as usize],
            0,
            max,
        );
    }

    // (b) removal: indicator draw from the snapshot, decrements on both the
    // local copy and the global cells
    let m = scratch.m_cell[k_old];
    let t = scratch.t_cell[k_old];
    let closed = if m >= 1 {
        rng.bernoulli(t as f64 / m as f64)
    } else {
        false
    };
    scratch.doc_topic[k_old] = scratch.doc_topic[k_old].saturating_sub(1);
    scratch.m_cell[k_old] = scratch.m_cell[k_old].saturating_sub(1);
    scratch.m_rest[k_old] = scratch.m_rest[k_old].saturating_sub(1);
    let cell_old = shared.cell(group, k_old, word as usize);
    shared.doc_topic[flat_doc * topics + k_old].fetch_sub(1, Ordering::Relaxed);
    shared.customers[cell_old].fetch_sub(1, Ordering::Relaxed);
    shared.rest_customers[group * topics + k_old].fetch_sub(1, Ordering::Relaxed);
    if closed {
        // table-slot draw mirrors the sequential sampler's stream use
        let _ = rng.below(t.max(1) as u64);
        scratch.t_cell[k_old] = scratch.t_cell[k_old].saturating_sub(1);
        scratch.t_rest[k_old] = scratch.t_rest[k_old].saturating_sub(1);
        scratch.base_support[k_old] = scratch.base_support[k_old].saturating_sub(1);
        scratch.topic_tables[k_old] = scratch.topic_tables[k_old].saturating_sub(1);
        tables.tables[cell_old].fetch_sub(1, Ordering::Relaxed);
        tables.rest_tables[group * topics + k_old].fetch_sub(1, Ordering::Relaxed);
        tables.base_tables[k_old * shared.vocab + word as usize].fetch_sub(1, Ordering::Relaxed);
        tables.topic_tables[k_old].fetch_sub(1, Ordering::Relaxed);
    }

    // (c) all K*(S_max+1) proposal weights from the local copy
    scratch.compute_weights(hyper, group, bank)?;

    // (d) sample
    let idx = sample_categorical(&scratch.log_weights, &mut rng)?;
    let choice = scratch.choices[idx];
    let k_new = choice.topic as usize;

    // (e) increments
    shared.z[flat_pos].store(choice.topic, Ordering::Relaxed);
    let cell_new = shared.cell(group, k_new, word as usize);
    shared.doc_topic[flat_doc * topics + k_new].fetch_add(1, Ordering::Relaxed);
    shared.customers[cell_new].fetch_add(1, Ordering::Relaxed);
    shared.rest_customers[group * topics + k_new].fetch_add(1, Ordering::Relaxed);
    if choice.open {
        tables.tables[cell_new].fetch_add(1, Ordering::Relaxed);
        tables.rest_tables[group * topics + k_new].fetch_add(1, Ordering::Relaxed);
        tables.base_tables[k_new * shared.vocab + word as usize].fetch_add(1, Ordering::Relaxed);
        tables.topic_tables[k_new].fetch_add(1, Ordering::Relaxed);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Iteration driver
// ---------------------------------------------------------------------------

/// One full approximate iteration: every wave is processed by per-device
/// worker pools, with a quiesce barrier, table merge (delta mode), and an
/// error-correction pass at each wave boundary.
#[allow(clippy::too_many_arguments)]
pub fn run_parallel_iteration(
    state: &mut CountState,
    corpus: &Corpus,
    plan: &WorkPlan,
    hyper: &Hyperparameters,
    transform: &TransformMatrix,
    bank: &StirlingBank,
    cfg: &ParallelConfig,
    seed: u64,
    iteration: u64,
) -> Result<CorrectionReport> {
    if !transform.is_identity() {
        return Err(Error::Unsupported(
            "the parallel sampler requires an identity transform matrix".into(),
        ));
    }
    if cfg.workers == 0 {
        return Err(Error::Config("worker count must be >= 1".into()));
    }
    let devices = plan.device_count();
    let mut report = CorrectionReport::default();

    for wave in &plan.waves {
        let shared = SharedCounts::from_state(state);
        let device_tables: Option<Vec<TableCounts>> = match cfg.merge_mode {
            MergeMode::Shared => None,
            MergeMode::Delta => Some(
                (0..devices)
                    .map(|_| TableCounts::from_state(state))
                    .collect(),
            ),
        };
        let t_before: Vec<i64> = state.tables.iter().map(|&x| x as i64).collect();
        let failure: Mutex<Option<Error>> = Mutex::new(None);

        std::thread::scope(|scope| {
            for device in 0..devices {
                let slice = plan.device_slice(device, wave);
                let tables = match &device_tables {
                    Some(per_dev) => &per_dev[device],
                    None => &shared.tables,
                };
                for worker in 0..cfg.workers {
                    let shared = &shared;
                    let failure = &failure;
                    let plan = &plan;
                    scope.spawn(move || {
                        let mut scratch = ProposalScratch::new(hyper.topics, 1);
                        for (j, &sidx) in slice.iter().enumerate() {
                            if j % cfg.workers != worker {
                                continue;
                            }
                            if failure.lock().unwrap().is_some() {
                                return;
                            }
                            let pos = plan.schedule[sidx as usize];
                            if let Err(e) = process_position(
                                shared,
                                tables,
                                corpus,
                                hyper,
                                bank,
                                &mut scratch,
                                pos,
                                sidx as u64,
                                seed,
                                iteration,
                            ) {
                                *failure.lock().unwrap() = Some(e);
                                return;
                            }
                        }
                    });
                }
            }
        });
        if let Some(e) = failure.into_inner().unwrap() {
            return Err(e);
        }

        // quiesced: fold back, merge, correct
        let z = shared.assignments();
        let merged_tables = match &device_tables {
            None => shared.table_cells(),
            Some(per_dev) => {
                let snapshots: Vec<Vec<i64>> = per_dev.iter().map(TableCounts::cells).collect();
                merge_device_tables(&t_before, &snapshots)
            }
        };
        state.set_assignment_and_tables(z, merged_tables);
        report += error_correct(state, corpus, transform);
    }
    Ok(report)
}

/// Fresh per-iteration plan stream, so the document partition is re-drawn
/// every iteration as the host loop prescribes.
pub fn plan_stream(seed: u64, iteration: u64) -> RngStream {
    RngStream::derived(seed, stream_tags::PARTITION, iteration)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gibbs_sweep_ordered, init_state};
    use crate::synth::{planted_corpus, SyntheticSpec};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn corpus_from_lengths(lengths: &[&[usize]]) -> Corpus {
        let vocab: Vec<String> = (0..5).map(|v| format!("w{v}")).collect();
        let groups = lengths
            .iter()
            .enumerate()
            .map(|(i, docs)| crate::corpus::Group {
                name: format!("g{i}"),
                documents: docs
                    .iter()
                    .enumerate()
                    .map(|(d, &len)| (0..len).map(|l| ((i + d + l) % 5) as u32).collect())
                    .collect(),
            })
            .collect();
        Corpus::new(groups, Arc::new(vocab)).unwrap()
    }

    #[test]
    fn reorder_round_robin_example() {
        let corpus = corpus_from_lengths(&[&[3, 2]]);
        let schedule = reorder_words(&corpus);
        let expected = vec![
            Position {
                group: 0,
                doc: 0,
                token: 0,
            },
            Position {
                group: 0,
                doc: 1,
                token: 0,
            },
            Position {
                group: 0,
                doc: 0,
                token: 1,
            },
            Position {
                group: 0,
                doc: 1,
                token: 1,
            },
            Position {
                group: 0,
                doc: 0,
                token: 2,
            },
        ];
        assert_eq!(schedule, expected);

        let single = corpus_from_lengths(&[&[4]]);
        let schedule = reorder_words(&single);
        for (l, pos) in schedule.iter().enumerate() {
            assert_eq!(pos.token as usize, l);
        }
    }

    proptest! {
        #[test]
        fn reorder_is_permutation(lens in proptest::collection::vec(1usize..7, 1..8)) {
            let corpus = corpus_from_lengths(&[&lens]);
            let schedule = reorder_words(&corpus);
            let mut seen = vec![false; corpus.token_count()];
            for pos in schedule {
                let flat = corpus.flat_position(pos);
                prop_assert!(!seen[flat]);
                seen[flat] = true;
            }
            prop_assert!(seen.iter().all(|&s| s));
        }

        #[test]
        fn partition_covers_and_balances(seed in 0u64..200, devices in 1usize..5) {
            let corpus = corpus_from_lengths(&[&[3, 5, 2, 4], &[1, 6, 2]]);
            let mut rng = RngStream::new(seed, 0);
            let assignment = partition_documents(&corpus, devices, &mut rng).unwrap();
            prop_assert_eq!(assignment.len(), corpus.doc_count());
            prop_assert!(assignment.iter().all(|&d| (d as usize) < devices));
            let mut load = vec![0usize; devices];
            let mut longest = 0usize;
            for (i, g) in corpus.groups.iter().enumerate() {
                for (d, doc) in g.documents.iter().enumerate() {
                    load[assignment[corpus.flat_doc(i, d)] as usize] += doc.len();
                    longest = longest.max(doc.len());
                }
            }
            let used: Vec<usize> = load.iter().copied().filter(|&l| l > 0).collect();
            let max = *load.iter().max().unwrap();
            let min = *used.iter().min().unwrap_or(&0);
            prop_assert!(max - min <= longest, "loads {:?}", load);
        }
    }

    #[test]
    fn partition_edge_cases() {
        let corpus = corpus_from_lengths(&[&[2, 2, 2, 2]]);
        let mut rng = RngStream::new(1, 0);
        let one = partition_documents(&corpus, 1, &mut rng).unwrap();
        assert!(one.iter().all(|&d| d == 0));
        let two = partition_documents(&corpus, 2, &mut rng).unwrap();
        assert_eq!(two.iter().filter(|&&d| d == 0).count(), 2);
        assert!(partition_documents(&corpus, 0, &mut rng).is_err());
    }

    #[test]
    fn schedule_separation_within_device() {
        // within one device's sub-schedule, two positions of one document are
        // at least (active documents at the earlier index - 1) apart
        let corpus = corpus_from_lengths(&[&[6, 3, 5], &[2, 6]]);
        let mut rng = RngStream::new(9, 0);
        let plan = WorkPlan::new(
            &corpus,
            2,
            &TransformMatrix::identity(5),
            2,
            1 << 20,
            &mut rng,
        )
        .unwrap();
        for device in 0..plan.device_count() {
            let subschedule: Vec<Position> = plan.device_schedules[device]
                .iter()
                .map(|&s| plan.schedule[s as usize])
                .collect();
            for (idx, pos) in subschedule.iter().enumerate() {
                // number of this device's documents still active here
                let active = corpus
                    .groups
                    .iter()
                    .enumerate()
                    .flat_map(|(i, g)| {
                        g.documents
                            .iter()
                            .enumerate()
                            .map(move |(d, doc)| (i, d, doc.len()))
                    })
                    .filter(|&(i, d, len)| {
                        let fd = corpus.flat_doc(i, d);
                        plan.device_of_doc[fd] == device as u32 && len > pos.token as usize
                    })
                    .count();
                for (later_idx, later) in subschedule.iter().enumerate().skip(idx + 1) {
                    if later.group == pos.group && later.doc == pos.doc {
                        assert!(
                            later_idx - idx >= active.saturating_sub(1),
                            "device {device}: positions {idx} and {later_idx} too close (active {active})"
                        );
                        break;
                    }
                }
            }
        }
    }

    #[test]
    fn error_correct_is_idempotent_on_consistent_states() {
        let corpus = corpus_from_lengths(&[&[4, 3], &[5]]);
        let hyper = Hyperparameters::default_for(3, 2, 5);
        let transform = TransformMatrix::identity(5);
        let mut rng = RngStream::new(4, 0);
        let mut state = init_state(&corpus, &hyper, &transform, &mut rng).unwrap();
        let report = error_correct(&mut state, &corpus, &transform);
        assert!(report.is_clean(), "{report:?}");
        state.check_consistency(&corpus).unwrap();
    }

    #[test]
    fn error_correct_fixes_corruption() {
        let corpus = corpus_from_lengths(&[&[4, 3], &[5]]);
        let hyper = Hyperparameters::default_for(3, 2, 5);
        let transform = TransformMatrix::identity(5);
        let mut rng = RngStream::new(4, 1);
        let mut state = init_state(&corpus, &hyper, &transform, &mut rng).unwrap();

        // corrupt one doc-topic cell: regeneration must equal a direct recount
        let clean = state.clone();
        state.doc_topic[0] = state.doc_topic[0].wrapping_add(7);
        let report = error_correct(&mut state, &corpus, &transform);
        assert!(report.doc_topic_fixed >= 1);
        assert_eq!(state.doc_topic, clean.doc_topic);
        state.check_consistency(&corpus).unwrap();

        // force t = m + 3 in an occupied cell: clamped back to m, dish list
        // and aggregates repaired to match
        let (i, k, w) = state.occupied_cells().next().unwrap();
        let cell = state.cell(i, k, w);
        let m = state.customers[cell];
        state.tables[cell] = m + 3;
        let report = error_correct(&mut state, &corpus, &transform);
        assert!(report.tables_clamped >= 1);
        assert_eq!(state.tables[cell], m);
        assert_eq!(state.table_list(i, k, w).len(), m as usize);
        state.check_consistency(&corpus).unwrap();
    }

    #[test]
    fn merge_examples() {
        let before = vec![2i64, 0, 5];
        // one device: identity
        let one = merge_device_tables(&before, &[vec![3, 0, 5]]);
        assert_eq!(one, vec![3, 0, 5]);
        // disjoint updates: union
        let merged = merge_device_tables(&before, &[vec![4, 0, 5], vec![2, 1, 5]]);
        assert_eq!(merged, vec![4, 1, 5]);
        // both devices increment the same cell from the same base
        let merged = merge_device_tables(&before, &[vec![3, 0, 5], vec![3, 0, 5]]);
        assert_eq!(merged[0], 4);
    }

    fn run_anchor(merge_mode: MergeMode) {
        let planted = planted_corpus(&SyntheticSpec {
            groups: 2,
            docs_per_group: 12,
            doc_len: 18,
            topics: 3,
            vocab: 30,
            seed: 40,
            ..Default::default()
        })
        .unwrap();
        let corpus = &planted.corpus;
        let hyper = Hyperparameters::default_for(3, 2, 30);
        let transform = TransformMatrix::identity(30);
        let bank =
            StirlingBank::new(&hyper.discount, corpus.max_word_group_frequency() + 2).unwrap();
        let seed = 77;

        let mut rng = RngStream::derived(seed, crate::corpus::stream_tags::INIT, 0);
        let mut par_state = init_state(corpus, &hyper, &transform, &mut rng).unwrap();
        let mut seq_state = par_state.clone();

        let mut plan_rng = plan_stream(seed, 1);
        let plan = WorkPlan::new(corpus, 3, &transform, 1, 1 << 20, &mut plan_rng).unwrap();
        let cfg = ParallelConfig {
            workers: 1,
            wave_budget: 1 << 20,
            merge_mode,
        };
        for iteration in 1..=5u64 {
            run_parallel_iteration(
                &mut par_state,
                corpus,
                &plan,
                &hyper,
                &transform,
                &bank,
                &cfg,
                seed,
                iteration,
            )
            .unwrap();
            gibbs_sweep_ordered(
                &mut seq_state,
                corpus,
                &hyper,
                &transform,
                &bank,
                &plan.schedule,
                seed,
                iteration,
            )
            .unwrap();
            assert_eq!(par_state.z, seq_state.z, "iteration {iteration}");
            assert_eq!(
                par_state.indicators(),
                seq_state.indicators(),
                "iteration {iteration}"
            );
            assert_eq!(
                par_state.canonical_lists(),
                seq_state.canonical_lists(),
                "iteration {iteration}"
            );
            par_state.check_consistency(corpus).unwrap();
        }
    }

    #[test]
    fn single_worker_matches_sequential_shared() {
        run_anchor(MergeMode::Shared);
    }

    #[test]
    fn single_worker_matches_sequential_delta() {
        run_anchor(MergeMode::Delta);
    }

    #[test]
    fn parallel_iterations_stay_consistent() {
        let planted = planted_corpus(&SyntheticSpec {
            groups: 2,
            docs_per_group: 20,
            doc_len: 25,
            topics: 4,
            vocab: 50,
            seed: 10,
            ..Default::default()
        })
        .unwrap();
        let corpus = &planted.corpus;
        let hyper = Hyperparameters::default_for(4, 2, 50);
        let transform = TransformMatrix::identity(50);
        let bank =
            StirlingBank::new(&hyper.discount, corpus.max_word_group_frequency() + 2).unwrap();
        for &(workers, devices, merge_mode) in &[
            (2usize, 1usize, MergeMode::Shared),
            (4, 2, MergeMode::Shared),
            (2, 2, MergeMode::Delta),
        ] {
            let seed = 5;
            let mut rng = RngStream::derived(seed, crate::corpus::stream_tags::INIT, 0);
            let mut state = init_state(corpus, &hyper, &transform, &mut rng).unwrap();
            // identity transform: one join slot and one open slot per topic
            {
                let mut probe_rng = plan_stream(seed, 0);
                let plan =
                    WorkPlan::new(corpus, 4, &transform, devices, 300, &mut probe_rng).unwrap();
                assert_eq!(plan.workgroup_slots, 4 * 2);
            }
            let cfg = ParallelConfig {
                workers,
                wave_budget: 300, // several waves per iteration
                merge_mode,
            };
            for iteration in 1..=3u64 {
                let mut plan_rng = plan_stream(seed, iteration);
                let plan = WorkPlan::new(
                    corpus,
                    4,
                    &transform,
                    devices,
                    cfg.wave_budget,
                    &mut plan_rng,
                )
                .unwrap();
                run_parallel_iteration(
                    &mut state, corpus, &plan, &hyper, &transform, &bank, &cfg, seed, iteration,
                )
                .unwrap();
                state.check_consistency(corpus).unwrap();
                let total: u32 = (0..corpus.group_count())
                    .map(|i| {
                        (0..4)
                            .map(|k| state.restaurant_customer_count(i, k))
                            .sum::<u32>()
                    })
                    .sum();
                assert_eq!(total as usize, corpus.token_count());
            }
        }
    }

    #[test]
    fn non_identity_transform_is_rejected() {
        let corpus = corpus_from_lengths(&[&[3, 2]]);
        let hyper = Hyperparameters::default_for(2, 1, 5);
        let transform = TransformMatrix::from_rows(
            5,
            vec![
                vec![(0, 0.5), (1, 0.5)],
                vec![(1, 0.5), (2, 0.5)],
                vec![(2, 0.5), (3, 0.5)],
                vec![(3, 0.5), (4, 0.5)],
                vec![(4, 0.5), (0, 0.5)],
            ],
            2,
        )
        .unwrap();
        let bank = StirlingBank::new(&hyper.discount, 10).unwrap();
        let mut rng = RngStream::new(1, 0);
        let id = TransformMatrix::identity(5);
        let mut state = init_state(&corpus, &hyper, &id, &mut rng).unwrap();
        let mut plan_rng = plan_stream(1, 1);
        let plan = WorkPlan::new(&corpus, 2, &id, 1, 1 << 20, &mut plan_rng).unwrap();
        let err = run_parallel_iteration(
            &mut state,
            &corpus,
            &plan,
            &hyper,
            &transform,
            &bank,
            &ParallelConfig::default(),
            1,
            1,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }
}
