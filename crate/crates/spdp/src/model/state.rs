//! Mutable Gibbs state: topic assignments, table multiplicities, table
//! word-association lists, and every derived count the sampler reads.

use std::collections::HashMap;

use crate::corpus::{Corpus, Position};
use crate::error::{Error, Result};
use crate::model::TransformMatrix;
use crate::numerics::RngStream;

/// A sampled (topic, table-indicator, dish) choice for one word position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Choice {
    pub topic: u32,
    /// True when the word opens a new table.
    pub open: bool,
    /// Base-vocabulary word served at the opened table; None when open = false.
    pub dish: Option<u32>,
}

/// Everything needed to undo one removal exactly.
#[derive(Debug, Clone, Copy)]
pub struct RemovalRecord {
    pub topic: u32,
    /// Whether the removal draw closed a table.
    pub closed_table: bool,
    pub dish: Option<u32>,
    pub slot: Option<usize>,
}

/// Full mutable sampler state over one training corpus.
///
/// Canonical content is (z, per-cell table counts, per-cell dish lists);
/// every other array is a cached aggregate. The per-position table-indicator
/// bits are exchangeable bookkeeping within each cell, so they are kept in a
/// canonical form (the first t positions of a cell in corpus order are
/// marked) and refreshed after bulk mutations.
#[derive(Debug, Clone)]
pub struct CountState {
    topics: usize,
    groups: usize,
    vocab: usize,
    docs: usize,
    /// Topic assignment per flat word position.
    pub z: Vec<u32>,
    /// Canonical table-indicator bits; see [`CountState::refresh_table_indicators`].
    r: Vec<bool>,
    /// Dishes served at the tables of each (group, topic, word) cell.
    pub(crate) v_lists: HashMap<u64, Vec<u32>>,
    /// Doc-topic counts, docs x K.
    pub(crate) doc_topic: Vec<u32>,
    /// Customers per cell, I x K x V.
    pub(crate) customers: Vec<u32>,
    /// Tables per cell, I x K x V.
    pub(crate) tables: Vec<u32>,
    /// Tables per (topic, base word) summed over groups and words, K x V.
    pub(crate) base_tables: Vec<u32>,
    /// Customers per restaurant (group, topic), I x K.
    pub(crate) restaurant_customers: Vec<u32>,
    /// Tables per restaurant (group, topic), I x K.
    pub(crate) restaurant_tables: Vec<u32>,
    /// Total tables per topic, K.
    pub(crate) topic_tables: Vec<u32>,
}

impl CountState {
    pub fn empty(corpus: &Corpus, topics: usize) -> Self {
        let groups = corpus.group_count();
        let vocab = corpus.vocab_size();
        let docs = corpus.doc_count();
        Self {
            topics,
            groups,
            vocab,
            docs,
            z: vec![0; corpus.token_count()],
            r: vec![false; corpus.token_count()],
            v_lists: HashMap::new(),
            doc_topic: vec![0; docs * topics],
            customers: vec![0; groups * topics * vocab],
            tables: vec![0; groups * topics * vocab],
            base_tables: vec![0; topics * vocab],
            restaurant_customers: vec![0; groups * topics],
            restaurant_tables: vec![0; groups * topics],
            topic_tables: vec![0; topics],
        }
    }

    pub fn topics(&self) -> usize {
        self.topics
    }

    pub fn group_count(&self) -> usize {
        self.groups
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab
    }

    pub fn doc_count(&self) -> usize {
        self.docs
    }

    #[inline]
    pub fn cell(&self, group: usize, topic: usize, word: usize) -> usize {
        (group * self.topics + topic) * self.vocab + word
    }

    #[inline]
    pub fn customers_at(&self, group: usize, topic: usize, word: usize) -> u32 {
        self.customers[self.cell(group, topic, word)]
    }

    #[inline]
    pub fn tables_at(&self, group: usize, topic: usize, word: usize) -> u32 {
        self.tables[self.cell(group, topic, word)]
    }

    #[inline]
    pub fn doc_topic_count(&self, flat_doc: usize, topic: usize) -> u32 {
        self.doc_topic[flat_doc * self.topics + topic]
    }

    #[inline]
    pub fn restaurant_customer_count(&self, group: usize, topic: usize) -> u32 {
        self.restaurant_customers[group * self.topics + topic]
    }

    #[inline]
    pub fn restaurant_table_count(&self, group: usize, topic: usize) -> u32 {
        self.restaurant_tables[group * self.topics + topic]
    }

    #[inline]
    pub fn base_table_count(&self, topic: usize, base_word: usize) -> u32 {
        self.base_tables[topic * self.vocab + base_word]
    }

    #[inline]
    pub fn topic_table_total(&self, topic: usize) -> u32 {
        self.topic_tables[topic]
    }

    pub fn table_list(&self, group: usize, topic: usize, word: usize) -> &[u32] {
        self.v_lists
            .get(&(self.cell(group, topic, word) as u64))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Tables in the given cell associated with base word `v` (the sparse
    /// q count, recovered from the dish list).
    pub fn cell_base_count(&self, group: usize, topic: usize, word: usize, v: u32) -> u32 {
        self.table_list(group, topic, word)
            .iter()
            .filter(|&&d| d == v)
            .count() as u32
    }

    pub fn table_indicator(&self, flat_pos: usize) -> bool {
        self.r[flat_pos]
    }

    pub fn indicators(&self) -> &[bool] {
        &self.r
    }

    pub fn occupied_cells(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let (topics, vocab) = (self.topics, self.vocab);
        self.customers
            .iter()
            .enumerate()
            .filter(|&(_, &m)| m > 0)
            .map(move |(idx, _)| {
                let w = idx % vocab;
                let k = (idx / vocab) % topics;
                let i = idx / (vocab * topics);
                (i, k, w)
            })
    }

    // -- mutation ----------------------------------------------------------

    fn bump_add(&mut self, group: usize, flat_doc: usize, topic: usize, word: usize) {
        let cell = self.cell(group, topic, word);
        self.doc_topic[flat_doc * self.topics + topic] += 1;
        self.customers[cell] += 1;
        self.restaurant_customers[group * self.topics + topic] += 1;
    }

    fn bump_remove(&mut self, group: usize, flat_doc: usize, topic: usize, word: usize) {
        let cell = self.cell(group, topic, word);
        self.doc_topic[flat_doc * self.topics + topic] -= 1;
        self.customers[cell] -= 1;
        self.restaurant_customers[group * self.topics + topic] -= 1;
    }

    fn open_table(
        &mut self,
        group: usize,
        topic: usize,
        word: usize,
        dish: u32,
        slot: Option<usize>,
    ) {
        let cell = self.cell(group, topic, word);
        self.tables[cell] += 1;
        let list = self.v_lists.entry(cell as u64).or_default();
        match slot {
            Some(s) => list.insert(s, dish),
            None => list.push(dish),
        }
        self.base_tables[topic * self.vocab + dish as usize] += 1;
        self.restaurant_tables[group * self.topics + topic] += 1;
        self.topic_tables[topic] += 1;
    }

    fn close_table(&mut self, group: usize, topic: usize, word: usize, slot: usize) -> u32 {
        let cell = self.cell(group, topic, word);
        self.tables[cell] -= 1;
        let list = self
            .v_lists
            .get_mut(&(cell as u64))
            .expect("closing table in empty cell");
        let dish = list.remove(slot);
        if list.is_empty() {
            self.v_lists.remove(&(cell as u64));
        }
        self.base_tables[topic * self.vocab + dish as usize] -= 1;
        self.restaurant_tables[group * self.topics + topic] -= 1;
        self.topic_tables[topic] -= 1;
        dish
    }

    /// Take the word at `pos` out of all counts. The table-indicator draw is
    /// Bernoulli(t/m) on the word's cell; when it fires, a uniformly random
    /// table of the cell is closed and its dish removed.
    pub fn remove_word(
        &mut self,
        corpus: &Corpus,
        pos: Position,
        rng: &mut RngStream,
    ) -> Result<RemovalRecord> {
        let group = pos.group as usize;
        let flat_doc = corpus.flat_doc(group, pos.doc as usize);
        let word = corpus.word_at(pos) as usize;
        let topic = self.z[corpus.flat_position(pos)] as usize;
        let cell = self.cell(group, topic, word);
        let m = self.customers[cell];
        let t = self.tables[cell];
        if m == 0 || t > m {
            return Err(Error::Integrity(format!(
                "cell (group {group}, topic {topic}, word {word}) has m={m}, t={t} at removal"
            )));
        }
        let closed = rng.bernoulli(t as f64 / m as f64);
        self.bump_remove(group, flat_doc, topic, word);
        let (dish, slot) = if closed {
            // uniform over the t existing tables of the cell
            let slot = rng.below(t as u64) as usize;
            let dish = self.close_table(group, topic, word, slot);
            (Some(dish), Some(slot))
        } else {
            (None, None)
        };
        Ok(RemovalRecord {
            topic: topic as u32,
            closed_table: closed,
            dish,
            slot,
        })
    }

    /// Exact inverse of [`CountState::remove_word`] given its record.
    pub fn undo_remove(&mut self, corpus: &Corpus, pos: Position, record: &RemovalRecord) {
        let group = pos.group as usize;
        let flat_doc = corpus.flat_doc(group, pos.doc as usize);
        let word = corpus.word_at(pos) as usize;
        let topic = record.topic as usize;
        self.bump_add(group, flat_doc, topic, word);
        if record.closed_table {
            self.open_table(group, topic, word, record.dish.unwrap(), record.slot);
        }
        self.z[corpus.flat_position(pos)] = record.topic;
    }

    /// Put the (currently removed) word back with the sampled choice.
    pub fn add_word(
        &mut self,
        corpus: &Corpus,
        transform: &TransformMatrix,
        pos: Position,
        choice: &Choice,
    ) -> Result<()> {
        let group = pos.group as usize;
        let flat_doc = corpus.flat_doc(group, pos.doc as usize);
        let word = corpus.word_at(pos) as usize;
        let topic = choice.topic as usize;
        let cell = self.cell(group, topic, word);
        if !choice.open {
            if self.customers[cell] == 0 {
                return Err(Error::Domain(format!(
                    "cannot join a table in empty cell (group {group}, topic {topic}, word {word})"
                )));
            }
        } else {
            let dish = choice
                .dish
                .ok_or_else(|| Error::Domain("open-table choice without a dish".into()))?;
            if transform.prob(word as u32, dish) <= 0.0 {
                return Err(Error::Domain(format!(
                    "dish {dish} is outside the support of transform row {word}"
                )));
            }
        }
        self.bump_add(group, flat_doc, topic, word);
        if choice.open {
            self.open_table(group, topic, word, choice.dish.unwrap(), None);
        }
        self.z[corpus.flat_position(pos)] = choice.topic;
        Ok(())
    }

    // -- canonical table indicators -----------------------------------------

    /// Rewrite the per-position table-indicator bits into canonical form: in
    /// corpus order, the first t positions of each cell are marked. Cell sums
    /// then equal the table counts exactly.
    pub fn refresh_table_indicators(&mut self, corpus: &Corpus) {
        let mut assigned: HashMap<u64, u32> = HashMap::with_capacity(self.v_lists.len());
        for pos in corpus.positions() {
            let flat = corpus.flat_position(pos);
            let word = corpus.word_at(pos) as usize;
            let topic = self.z[flat] as usize;
            let cell = self.cell(pos.group as usize, topic, word) as u64;
            let used = assigned.entry(cell).or_insert(0);
            if *used < self.tables[cell as usize] {
                *used += 1;
                self.r[flat] = true;
            } else {
                self.r[flat] = false;
            }
        }
    }

    // -- construction from assignments --------------------------------------

    /// Rebuild a state from topic assignments, table-indicator bits, and
    /// per-cell dish lists; counts are derived, never trusted. Structural
    /// coherence is verified, but zero-probability configurations (a cell
    /// with customers and no table) are representable so that enumeration
    /// oracles can score them.
    pub fn from_parts(
        corpus: &Corpus,
        topics: usize,
        z: Vec<u32>,
        indicators: &[bool],
        mut lists: HashMap<u64, Vec<u32>>,
    ) -> Result<Self> {
        if z.len() != corpus.token_count() || indicators.len() != corpus.token_count() {
            return Err(Error::Integrity(format!(
                "assignment length {} / indicator length {} do not match corpus token count {}",
                z.len(),
                indicators.len(),
                corpus.token_count()
            )));
        }
        let mut state = Self::empty(corpus, topics);
        state.z = z;
        for pos in corpus.positions() {
            let flat = corpus.flat_position(pos);
            let group = pos.group as usize;
            let word = corpus.word_at(pos) as usize;
            let topic = state.z[flat] as usize;
            if topic >= topics {
                return Err(Error::Integrity(format!(
                    "topic id {topic} out of range (K = {topics})"
                )));
            }
            let flat_doc = corpus.flat_doc(group, pos.doc as usize);
            state.bump_add(group, flat_doc, topic, word);
            if indicators[flat] {
                let cell = state.cell(group, topic, word);
                state.tables[cell] += 1;
                state.restaurant_tables[group * topics + topic] += 1;
                state.topic_tables[topic] += 1;
            }
            state.r[flat] = indicators[flat];
        }
        // attach dish lists and derive base counts
        for (&cell, list) in &lists {
            let cell = cell as usize;
            if cell >= state.tables.len() {
                return Err(Error::Integrity(format!(
                    "dish list for out-of-range cell {cell}"
                )));
            }
            if list.len() != state.tables[cell] as usize {
                return Err(Error::Integrity(format!(
                    "cell {cell}: dish list length {} != table count {}",
                    list.len(),
                    state.tables[cell]
                )));
            }
            let topic = (cell / state.vocab) % topics;
            for &dish in list {
                if dish as usize >= state.vocab {
                    return Err(Error::Integrity(format!("dish {dish} out of vocabulary")));
                }
                state.base_tables[topic * state.vocab + dish as usize] += 1;
            }
        }
        for (idx, &t) in state.tables.iter().enumerate() {
            if t > 0 && lists.get(&(idx as u64)).is_none_or(|l| l.is_empty()) {
                return Err(Error::Integrity(format!(
                    "cell {idx}: {t} tables but no dish list"
                )));
            }
            if t > state.customers[idx] {
                return Err(Error::Integrity(format!(
                    "cell {idx}: t = {t} exceeds m = {}",
                    state.customers[idx]
                )));
            }
        }
        lists.retain(|_, l| !l.is_empty());
        state.v_lists = lists;
        Ok(state)
    }

    /// Identity-transform convenience: dish lists are derived (every table of
    /// a cell serves the cell's own word).
    pub fn from_assignment_identity(
        corpus: &Corpus,
        topics: usize,
        z: Vec<u32>,
        indicators: &[bool],
    ) -> Result<Self> {
        let mut lists: HashMap<u64, Vec<u32>> = HashMap::new();
        for pos in corpus.positions() {
            let flat = corpus.flat_position(pos);
            if indicators[flat] {
                let word = corpus.word_at(pos);
                let topic = z[flat] as usize;
                let cell =
                    (pos.group as usize * topics + topic) * corpus.vocab_size() + word as usize;
                lists.entry(cell as u64).or_default().push(word);
            }
        }
        Self::from_parts(corpus, topics, z, indicators, lists)
    }

    // -- verification --------------------------------------------------------

    /// Structural coherence: counts equal their definitions from (z, lists)
    /// and t <= m everywhere. Zero-probability states pass.
    pub fn verify_structure(&self, corpus: &Corpus) -> Result<()> {
        let mut doc_topic = vec![0u32; self.docs * self.topics];
        let mut customers = vec![0u32; self.customers.len()];
        for pos in corpus.positions() {
            let flat = corpus.flat_position(pos);
            let topic = self.z[flat] as usize;
            if topic >= self.topics {
                return Err(Error::Integrity(format!(
                    "z out of range at position {flat}"
                )));
            }
            let flat_doc = corpus.flat_doc(pos.group as usize, pos.doc as usize);
            doc_topic[flat_doc * self.topics + topic] += 1;
            customers[self.cell(pos.group as usize, topic, corpus.word_at(pos) as usize)] += 1;
        }
        if doc_topic != self.doc_topic {
            return Err(Error::Integrity(
                "doc-topic counts do not match assignments".into(),
            ));
        }
        if customers != self.customers {
            return Err(Error::Integrity(
                "customer counts do not match assignments".into(),
            ));
        }
        // per-doc totals equal document lengths
        for (i, g) in corpus.groups.iter().enumerate() {
            for (d, doc) in g.documents.iter().enumerate() {
                let flat_doc = corpus.flat_doc(i, d);
                let total: u32 = (0..self.topics)
                    .map(|k| self.doc_topic[flat_doc * self.topics + k])
                    .sum();
                if total as usize != doc.len() {
                    return Err(Error::Integrity(format!(
                        "document ({i},{d}): topic counts sum to {total}, length is {}",
                        doc.len()
                    )));
                }
            }
        }
        let mut base_tables = vec![0u32; self.base_tables.len()];
        for (idx, &t) in self.tables.iter().enumerate() {
            let m = self.customers[idx];
            if t > m {
                return Err(Error::Integrity(format!("cell {idx}: t = {t} > m = {m}")));
            }
            let list_len = self.v_lists.get(&(idx as u64)).map_or(0, Vec::len);
            if list_len != t as usize {
                return Err(Error::Integrity(format!(
                    "cell {idx}: dish list length {list_len} != t = {t}"
                )));
            }
            if let Some(list) = self.v_lists.get(&(idx as u64)) {
                let topic = (idx / self.vocab) % self.topics;
                for &dish in list {
                    base_tables[topic * self.vocab + dish as usize] += 1;
                }
            }
        }
        if base_tables != self.base_tables {
            return Err(Error::Integrity(
                "base table counts do not match dish lists".into(),
            ));
        }
        for i in 0..self.groups {
            for k in 0..self.topics {
                let m_sum: u32 = (0..self.vocab).map(|w| self.customers_at(i, k, w)).sum();
                let t_sum: u32 = (0..self.vocab).map(|w| self.tables_at(i, k, w)).sum();
                if m_sum != self.restaurant_customer_count(i, k)
                    || t_sum != self.restaurant_table_count(i, k)
                {
                    return Err(Error::Integrity(format!(
                        "restaurant ({i},{k}) cached sums are stale"
                    )));
                }
            }
        }
        for k in 0..self.topics {
            let t_total: u32 = (0..self.groups)
                .map(|i| self.restaurant_table_count(i, k))
                .sum();
            if t_total != self.topic_tables[k] {
                return Err(Error::Integrity(format!("topic {k} table total is stale")));
            }
            let q_total: u32 = (0..self.vocab).map(|v| self.base_table_count(k, v)).sum();
            if q_total != t_total {
                return Err(Error::Integrity(format!(
                    "topic {k}: base tables {q_total} != tables {t_total}"
                )));
            }
        }
        Ok(())
    }

    /// The full consistency predicate: structure plus occupancy (every
    /// occupied cell has at least one table) plus canonical indicator sums.
    pub fn check_consistency(&self, corpus: &Corpus) -> Result<()> {
        self.verify_structure(corpus)?;
        for (idx, &m) in self.customers.iter().enumerate() {
            if m >= 1 && self.tables[idx] == 0 {
                return Err(Error::Integrity(format!(
                    "cell {idx}: {m} customers but no table"
                )));
            }
        }
        // indicator sums per cell equal table counts
        let mut sums: HashMap<u64, u32> = HashMap::new();
        for pos in corpus.positions() {
            let flat = corpus.flat_position(pos);
            if self.r[flat] {
                let cell = self.cell(
                    pos.group as usize,
                    self.z[flat] as usize,
                    corpus.word_at(pos) as usize,
                ) as u64;
                *sums.entry(cell).or_insert(0) += 1;
            }
        }
        for (idx, &t) in self.tables.iter().enumerate() {
            let got = sums.get(&(idx as u64)).copied().unwrap_or(0);
            if got != t {
                return Err(Error::Integrity(format!(
                    "cell {idx}: indicator sum {got} != t = {t}"
                )));
            }
        }
        Ok(())
    }

    /// Equality of the observable state: assignments, counts, and dish lists
    /// as multisets (table order within a cell is exchangeable).
    pub fn same_configuration(&self, other: &Self) -> bool {
        if self.z != other.z
            || self.doc_topic != other.doc_topic
            || self.customers != other.customers
            || self.tables != other.tables
            || self.base_tables != other.base_tables
        {
            return false;
        }
        if self.v_lists.len() != other.v_lists.len() {
            return false;
        }
        self.v_lists.iter().all(|(cell, list)| {
            other.v_lists.get(cell).is_some_and(|o| {
                let mut a = list.clone();
                let mut b = o.clone();
                a.sort_unstable();
                b.sort_unstable();
                a == b
            })
        })
    }

    /// Sorted (cell, dishes) pairs for serialization and byte-level compares.
    pub fn canonical_lists(&self) -> Vec<(u64, Vec<u32>)> {
        let mut out: Vec<(u64, Vec<u32>)> = self
            .v_lists
            .iter()
            .map(|(&c, l)| {
                let mut l = l.clone();
                l.sort_unstable();
                (c, l)
            })
            .collect();
        out.sort_unstable_by_key(|&(c, _)| c);
        out
    }

    pub(crate) fn set_assignment_and_tables(&mut self, z: Vec<u32>, tables: Vec<i64>) {
        debug_assert_eq!(z.len(), self.z.len());
        debug_assert_eq!(tables.len(), self.tables.len());
        self.z = z;
        self.tables = tables.iter().map(|&t| t.max(0) as u32).collect();
    }
}
