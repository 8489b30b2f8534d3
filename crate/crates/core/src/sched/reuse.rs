//! Exact LRU stack distances over variable-sized objects.
//!
//! The distance of an access is the number of bytes of distinct objects
//! touched since the previous access to the same object, counting the
//! object itself. A fully associative LRU buffer of `C` bytes hits exactly
//! when that distance is at most `C`, so the largest finite distance is the
//! smallest buffer that never takes a capacity miss.
//!
//! Distances are computed with a Fenwick tree indexed by last-access time;
//! the time axis is compacted whenever it fills, so memory stays
//! proportional to the number of live objects rather than trace length.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use super::{AccessEvent, ObjectClass, ObjectId, Target};

struct Fenwick {
    tree: Vec<i64>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Fenwick {
            tree: vec![0; n + 1],
        }
    }

    fn from_values(values: &[i64]) -> Self {
        let n = values.len();
        let mut tree = vec![0; n + 1];
        tree[1..].copy_from_slice(values);
        for i in 1..=n {
            let parent = i + (i & i.wrapping_neg());
            if parent <= n {
                tree[parent] += tree[i];
            }
        }
        Fenwick { tree }
    }

    fn add(&mut self, idx: usize, delta: i64) {
        let mut i = idx + 1;
        while i < self.tree.len() {
            self.tree[i] += delta;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum over `[0, idx)`.
    fn prefix(&self, idx: usize) -> i64 {
        let mut i = idx;
        let mut s = 0;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Online LRU stack-distance calculator.
pub struct StackDistance<K> {
    last: HashMap<K, usize>,
    sizes: Vec<i64>,
    tree: Fenwick,
    next: usize,
}

impl<K: Hash + Eq + Copy> Default for StackDistance<K> {
    fn default() -> Self {
        Self::with_capacity(1024)
    }
}

impl<K: Hash + Eq + Copy> StackDistance<K> {
    pub fn with_capacity(cap: usize) -> Self {
        let cap = cap.max(16);
        StackDistance {
            last: HashMap::new(),
            sizes: vec![0; cap],
            tree: Fenwick::new(cap),
            next: 0,
        }
    }

    /// Record a touch of `key` occupying `bytes`; returns the reuse
    /// distance, or `None` on a first touch.
    pub fn touch(&mut self, key: K, bytes: u64) -> Option<u64> {
        if self.next == self.sizes.len() {
            self.compact();
        }
        let bytes = bytes as i64;
        let dist = self.last.get(&key).copied().map(|slot| {
            let above = self.tree.prefix(self.next) - self.tree.prefix(slot + 1);
            let old = self.sizes[slot];
            self.tree.add(slot, -old);
            self.sizes[slot] = 0;
            (above + bytes) as u64
        });
        let slot = self.next;
        self.sizes[slot] = bytes;
        self.tree.add(slot, bytes);
        self.last.insert(key, slot);
        self.next += 1;
        dist
    }

    pub fn distinct(&self) -> usize {
        self.last.len()
    }

    // Renumber live slots densely, in recency order.
    fn compact(&mut self) {
        let mut live: Vec<(usize, K)> = self.last.iter().map(|(k, &s)| (s, *k)).collect();
        live.sort_unstable_by_key(|&(s, _)| s);
        let cap = (live.len() * 2).max(self.sizes.len());
        let mut sizes = vec![0; cap];
        for (new, (old, key)) in live.iter().enumerate() {
            sizes[new] = self.sizes[*old];
            self.last.insert(*key, new);
        }
        self.tree = Fenwick::from_values(&sizes);
        self.sizes = sizes;
        self.next = live.len();
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReuseSummary {
    pub access_count: u64,
    pub reuse_count: u64,
    pub distinct_objects: u64,
    /// Sum of the sizes of every distinct object touched.
    pub footprint_bytes: u64,
    pub max_reuse_distance: Option<u64>,
    /// Smallest LRU capacity with no capacity misses.
    pub min_buffer_bytes: u64,
}

impl ReuseSummary {
    fn observe(&mut self, dist: Option<u64>, bytes: u64) {
        self.access_count += 1;
        match dist {
            Some(d) => {
                self.reuse_count += 1;
                self.max_reuse_distance = Some(self.max_reuse_distance.map_or(d, |m| m.max(d)));
                self.min_buffer_bytes = self.min_buffer_bytes.max(d);
            }
            None => {
                self.distinct_objects += 1;
                self.footprint_bytes += bytes;
            }
        }
    }
}

/// Reuse statistics for one access stream.
///
/// `per_target` treats each target as its own LRU buffer. `per_class`
/// follows weight objects across every on-chip target (so an MWL forward
/// row is the same datum whether served by the weight buffer or the row
/// buffer) and attributes each distance to the class of the object reused;
/// non-weight classes are tracked the same way over their own stream.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReuseStats {
    pub per_target: BTreeMap<Target, ReuseSummary>,
    pub per_class: BTreeMap<ObjectClass, ReuseSummary>,
}

impl ReuseStats {
    pub fn target(&self, t: Target) -> ReuseSummary {
        self.per_target.get(&t).cloned().unwrap_or_default()
    }

    pub fn class(&self, c: ObjectClass) -> ReuseSummary {
        self.per_class.get(&c).cloned().unwrap_or_default()
    }

    /// Bytes of weight storage needed to serve every weight reuse on chip:
    /// weight buffer plus row buffer.
    pub fn min_weight_storage(&self) -> u64 {
        self.target(Target::WeightBuffer).min_buffer_bytes
            + self.target(Target::RowBuffer).min_buffer_bytes
    }
}

/// Incremental form of [`reuse_analysis`].
#[derive(Default)]
pub struct ReuseAnalyzer {
    targets: BTreeMap<Target, StackDistance<ObjectId>>,
    weights: StackDistance<ObjectId>,
    data: StackDistance<ObjectId>,
    stats: ReuseStats,
}

impl ReuseAnalyzer {
    pub fn observe(&mut self, ev: &AccessEvent) {
        let d = self
            .targets
            .entry(ev.target)
            .or_default()
            .touch(ev.object, ev.bytes);
        self.stats
            .per_target
            .entry(ev.target)
            .or_default()
            .observe(d, ev.bytes);
        if ev.target == Target::Dram {
            return;
        }
        let class = ev.object.class();
        let stream = if class.is_weight() {
            &mut self.weights
        } else {
            &mut self.data
        };
        let d = stream.touch(ev.object, ev.bytes);
        self.stats
            .per_class
            .entry(class)
            .or_default()
            .observe(d, ev.bytes);
    }

    pub fn finish(self) -> ReuseStats {
        self.stats
    }
}

impl super::TraceSink for ReuseAnalyzer {
    fn record(&mut self, ev: AccessEvent) {
        self.observe(&ev);
    }
}

/// Exact LRU stack distances for one ordered access stream (normally one
/// CU's events from a single pass).
pub fn reuse_analysis(events: &[AccessEvent]) -> ReuseStats {
    let mut a = ReuseAnalyzer::default();
    for ev in events {
        a.observe(ev);
    }
    a.finish()
}
