//! Memo table with lazy compaction driven by a count of live backtracking
//! alternatives.
//!
//! While no alternative is live the parse cannot return to an earlier
//! position, so entries left of the rightmost such position (the
//! watermark) are dead. They are only removed when an insert finds the
//! table full; the table doubles only if compaction leaves it more than
//! half full.

use std::collections::HashMap;

use crate::expr::{ExprId, State, StopSet};

pub const INITIAL_CAPACITY: usize = 4096;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MemoKey {
    /// Action-forgotten expression.
    pub expr: ExprId,
    pub pos: usize,
    /// Interned continuation shape.
    pub cont: u32,
    pub stops: StopSet,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MemoEntry {
    pub state: State,
    pub end: usize,
    pub stops: StopSet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChoiceEvent {
    /// A branch was entered with a sibling still pending.
    Open,
    /// The pending sibling became unnecessary.
    Commit,
    /// The pending sibling was entered or abandoned.
    Discard,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CompactionState {
    pub alternatives: usize,
    pub watermark: usize,
    pub live: usize,
    pub capacity: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MemoStats {
    pub hits: u64,
    pub misses: u64,
    pub peak: usize,
    pub compactions: u64,
    pub deletions: u64,
    pub expansions: u64,
    /// Highest position at which the alternatives counter was seen at zero.
    pub max_zero_pos: usize,
}

#[derive(Clone, Debug)]
pub struct MemoStore {
    table: HashMap<MemoKey, MemoEntry>,
    capacity: usize,
    alternatives: usize,
    watermark: usize,
    compaction: bool,
    stats: MemoStats,
}

impl Default for MemoStore {
    fn default() -> Self {
        MemoStore::new(true)
    }
}

impl MemoStore {
    pub fn new(compaction: bool) -> MemoStore {
        MemoStore::with_capacity(INITIAL_CAPACITY, compaction)
    }

    pub fn with_capacity(capacity: usize, compaction: bool) -> MemoStore {
        MemoStore {
            table: HashMap::new(),
            capacity: capacity.max(2),
            alternatives: 0,
            watermark: 0,
            compaction,
            stats: MemoStats::default(),
        }
    }

    pub fn lookup(&mut self, key: &MemoKey) -> Option<&MemoEntry> {
        let found = self.table.get(key);
        if found.is_some() {
            self.stats.hits += 1;
        } else {
            self.stats.misses += 1;
        }
        found
    }

    pub fn insert(&mut self, key: MemoKey, entry: MemoEntry) {
        if self.table.len() >= self.capacity && !self.table.contains_key(&key) {
            if self.compaction {
                self.compact();
            }
            if self.table.len() > self.capacity / 2 {
                self.capacity *= 2;
                self.stats.expansions += 1;
            }
        }
        self.table.insert(key, entry);
        self.stats.peak = self.stats.peak.max(self.table.len());
    }

    /// Removes entries left of the watermark. Called only from `insert`.
    fn compact(&mut self) {
        if self.watermark == 0 {
            return;
        }
        self.stats.compactions += 1;
        let before = self.table.len();
        let watermark = self.watermark;
        self.table.retain(|k, _| k.pos >= watermark);
        self.stats.deletions += (before - self.table.len()) as u64;
    }

    pub fn on_choice(&mut self, event: ChoiceEvent, pos: usize) {
        match event {
            ChoiceEvent::Open => self.alternatives += 1,
            ChoiceEvent::Commit | ChoiceEvent::Discard => {
                assert!(self.alternatives > 0, "alternatives counter underflow");
                self.alternatives -= 1;
                self.note_frontier(pos);
            }
        }
    }

    /// The parse reached `pos`; with no live alternative nothing left of it
    /// will be revisited.
    pub fn note_frontier(&mut self, pos: usize) {
        if self.alternatives == 0 {
            self.stats.max_zero_pos = self.stats.max_zero_pos.max(pos);
            if pos > self.watermark {
                self.watermark = pos;
            }
        }
    }

    pub fn state(&self) -> CompactionState {
        CompactionState {
            alternatives: self.alternatives,
            watermark: self.watermark,
            live: self.table.len(),
            capacity: self.capacity,
        }
    }

    pub fn stats(&self) -> MemoStats {
        self.stats
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn key(pos: usize, cont: u32) -> MemoKey {
        MemoKey {
            expr: ExprId::from_index(7),
            pos,
            cont,
            stops: StopSet::new(),
        }
    }

    fn entry(end: usize) -> MemoEntry {
        MemoEntry {
            state: State::Success,
            end,
            stops: StopSet::new(),
        }
    }

    #[test]
    fn fresh_store_misses() {
        let mut m = MemoStore::default();
        assert!(m.lookup(&key(0, 0)).is_none());
        assert_eq!(m.stats().misses, 1);
    }

    #[test]
    fn insert_then_lookup() {
        let mut m = MemoStore::default();
        m.insert(key(3, 1), entry(5));
        assert_eq!(m.lookup(&key(3, 1)), Some(&entry(5)));
        assert!(m.lookup(&key(3, 2)).is_none());
        assert_eq!((m.stats().hits, m.stats().misses), (1, 1));
    }

    #[test]
    fn below_capacity_never_compacts() {
        let mut m = MemoStore::with_capacity(8, true);
        m.on_choice(ChoiceEvent::Open, 0);
        m.on_choice(ChoiceEvent::Commit, 6);
        for p in 0..7 {
            m.insert(key(p, 0), entry(p));
        }
        assert_eq!(m.len(), 7);
        assert_eq!(m.stats().compactions, 0);
        assert_eq!(m.stats().deletions, 0);
    }

    #[test]
    fn stale_entries_vanish_after_pressure() {
        let mut m = MemoStore::with_capacity(4, true);
        m.insert(key(5, 0), entry(6));
        for p in 10..13 {
            m.insert(key(p, 0), entry(p));
        }
        m.note_frontier(9);
        assert!(m.lookup(&key(5, 0)).is_some(), "deletion is lazy");
        m.insert(key(13, 0), entry(13));
        assert!(m.lookup(&key(5, 0)).is_none());
        assert_eq!(m.stats().deletions, 1);
    }

    #[test]
    fn compaction_past_most_entries_avoids_expansion() {
        let mut m = MemoStore::with_capacity(8, true);
        for p in 0..8 {
            m.insert(key(p, 0), entry(p));
        }
        m.note_frontier(8);
        m.insert(key(8, 0), entry(8));
        assert_eq!(m.stats().deletions, 8);
        assert_eq!(m.state().capacity, 8);
        assert_eq!(m.len(), 1);
    }

    #[test]
    fn zero_watermark_expands() {
        let mut m = MemoStore::with_capacity(8, true);
        m.on_choice(ChoiceEvent::Open, 0);
        for p in 0..9 {
            m.insert(key(p, 0), entry(p));
        }
        assert_eq!(m.stats().deletions, 0);
        assert_eq!(m.state().capacity, 16);
        assert_eq!(m.state().watermark, 0);
    }

    #[test]
    fn balanced_events_return_to_zero() {
        let mut m = MemoStore::default();
        for p in 0..5 {
            m.on_choice(ChoiceEvent::Open, p);
        }
        for p in 0..5 {
            m.on_choice(ChoiceEvent::Discard, p);
        }
        assert_eq!(m.state().alternatives, 0);
        assert_eq!(m.state().watermark, 4);
    }

    #[test]
    #[should_panic(expected = "underflow")]
    fn underflow_is_a_bug() {
        MemoStore::default().on_choice(ChoiceEvent::Commit, 0);
    }

    #[test]
    fn watermark_is_monotone() {
        let mut m = MemoStore::default();
        m.note_frontier(10);
        m.note_frontier(4);
        assert_eq!(m.state().watermark, 10);
    }

    #[derive(Clone, Debug)]
    enum Op {
        Insert(usize),
        Open(usize),
        Close(usize),
        Frontier(usize),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            4 => (0..64usize).prop_map(Op::Insert),
            1 => (0..64usize).prop_map(Op::Open),
            1 => (0..64usize).prop_map(Op::Close),
            2 => (0..64usize).prop_map(Op::Frontier),
        ]
    }

    proptest! {
        #[test]
        fn store_invariants(ops in prop::collection::vec(op(), 1..200)) {
            let mut m = MemoStore::with_capacity(4, true);
            let mut open = 0;
            let mut watermark = 0;
            for (i, o) in ops.into_iter().enumerate() {
                let before = m.state();
                let stats = m.stats();
                match o {
                    Op::Insert(p) => {
                        m.insert(key(p, i as u32), entry(p));
                        let after = m.state();
                        if m.stats().compactions > stats.compactions && after.capacity == before.capacity {
                            prop_assert!((after.live - 1) * 2 <= after.capacity);
                        }
                    }
                    Op::Open(p) => {
                        open += 1;
                        m.on_choice(ChoiceEvent::Open, p);
                    }
                    Op::Close(p) if open > 0 => {
                        open -= 1;
                        m.on_choice(ChoiceEvent::Discard, p);
                    }
                    Op::Close(_) => {}
                    Op::Frontier(p) => m.note_frontier(p),
                }
                let after = m.state();
                if !matches!(o, Op::Insert(_)) {
                    prop_assert_eq!(after.live, before.live, "deletion outside insert");
                }
                prop_assert!(after.watermark >= watermark);
                watermark = after.watermark;
                prop_assert!(after.watermark <= m.stats().max_zero_pos);
                prop_assert!(m.stats().peak >= after.live);
            }
        }
    }
}
