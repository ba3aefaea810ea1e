//! The three-way early decision against per-expert reference history.
//!
//! Levels are checked bottom-up. A level whose worst node-wise hash
//! distance against the best reference is within `t_zero` fires Early-Skip;
//! a distance inside the approximate band fires Diff-Reuse when the
//! history table has seen the same difference pattern against the same
//! reference before. Only when every level falls through does the input
//! count as a new pattern and Full-Compute builds the tree to the root.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::hash::{build_level, delta_h, leaf_hashes, MerkleNode, MerkleTree, TreeParams};

/// Decision thresholds, all in locality-hash bits.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MipsThresholds {
    /// Early-Skip bound: distances up to this count as identical.
    pub t_zero: u32,
    /// Diff-Reuse bound: the approximate band is (t_zero, s_th].
    pub s_th: u32,
    /// Additionally require integrity-hash equality for Early-Skip, making
    /// skips sound rather than merely likely.
    pub integrity_gate: bool,
}

impl Default for MipsThresholds {
    fn default() -> MipsThresholds {
        MipsThresholds {
            t_zero: 1,
            s_th: 4,
            integrity_gate: false,
        }
    }
}

impl MipsThresholds {
    /// Settings under which no decision can change a value.
    pub fn exact() -> MipsThresholds {
        MipsThresholds {
            t_zero: 0,
            s_th: 0,
            integrity_gate: true,
        }
    }
}

/// What the decision path concluded for one input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecisionKind {
    /// Input matches a reference; reuse its payload outright.
    EarlySkip { snapshot: u64 },
    /// Known difference pattern; reuse the registered result.
    DiffReuse { result: u64 },
    FullCompute,
}

impl DecisionKind {
    pub fn label(&self) -> &'static str {
        match self {
            DecisionKind::EarlySkip { .. } => "early_skip",
            DecisionKind::DiffReuse { .. } => "diff_reuse",
            DecisionKind::FullCompute => "full_compute",
        }
    }
}

/// A decision plus where it fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub kind: DecisionKind,
    /// Tree level at which the decision fired; the top level for
    /// Full-Compute.
    pub level: u32,
    /// Best node-wise hash distance observed at that level.
    pub delta_h: u32,
}

/// A fully computed historical input of one expert.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub id: u64,
    pub tree: MerkleTree,
}

/// Ring buffer of reference snapshots, newest last.
#[derive(Debug, Clone)]
pub struct ReferenceStore {
    snapshots: VecDeque<Snapshot>,
    capacity: usize,
    next_id: u64,
}

impl ReferenceStore {
    pub fn new(capacity: usize) -> ReferenceStore {
        ReferenceStore {
            snapshots: VecDeque::new(),
            capacity: capacity.max(1),
            next_id: 0,
        }
    }

    pub fn push(&mut self, tree: MerkleTree) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        if self.snapshots.len() >= self.capacity {
            self.snapshots.pop_front();
        }
        self.snapshots.push_back(Snapshot { id, tree });
        id
    }

    pub fn iter(&self) -> impl Iterator<Item = &Snapshot> {
        self.snapshots.iter()
    }

    pub fn get(&self, id: u64) -> Option<&Snapshot> {
        self.snapshots.iter().find(|s| s.id == id)
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    /// Id the next pushed snapshot will receive.
    pub fn next_id(&self) -> u64 {
        self.next_id
    }
}

/// Per-level map from (difference digest, reference snapshot) to the
/// registered result handle. Entries appear only after a Full-Compute
/// registered them; eviction is least-recently-used.
#[derive(Debug, Clone, Default)]
pub struct HistoryLut {
    levels: Vec<LevelLut>,
    capacity_per_level: usize,
}

#[derive(Debug, Clone, Default)]
struct LevelLut {
    map: HashMap<(u32, u64), u64>,
    order: VecDeque<(u32, u64)>,
}

impl HistoryLut {
    pub fn new(levels: u32, capacity_per_level: usize) -> HistoryLut {
        HistoryLut {
            levels: vec![LevelLut::default(); levels as usize],
            capacity_per_level: capacity_per_level.max(1),
        }
    }

    pub fn lookup(&mut self, level: u32, pattern: u32, snapshot: u64) -> Option<u64> {
        let lut = &mut self.levels[level as usize];
        let key = (pattern, snapshot);
        let hit = lut.map.get(&key).copied();
        if hit.is_some() {
            // Refresh recency.
            if let Some(pos) = lut.order.iter().position(|k| *k == key) {
                lut.order.remove(pos);
                lut.order.push_back(key);
            }
        }
        hit
    }

    pub fn register(&mut self, level: u32, pattern: u32, snapshot: u64, result: u64) {
        let capacity = self.capacity_per_level;
        let lut = &mut self.levels[level as usize];
        let key = (pattern, snapshot);
        if lut.map.insert(key, result).is_none() {
            lut.order.push_back(key);
            if lut.order.len() > capacity {
                if let Some(victim) = lut.order.pop_front() {
                    lut.map.remove(&victim);
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.levels.iter().map(|l| l.map.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Worst node-wise locality distance between aligned levels, plus whether
/// every node's integrity hash matches.
fn level_distance(cur: &[MerkleNode], reference: &[MerkleNode]) -> (u32, bool) {
    debug_assert_eq!(cur.len(), reference.len());
    let mut worst = 0;
    let mut integrity_equal = true;
    for (a, b) in cur.iter().zip(reference) {
        worst = worst.max(delta_h(a.locality_hash, b.locality_hash));
        integrity_equal &= a.integrity_hash == b.integrity_hash;
    }
    (worst, integrity_equal)
}

/// Difference digest of a level: FNV-1a over the node-wise XOR patterns.
fn level_pattern(cur: &[MerkleNode], reference: &[MerkleNode]) -> u32 {
    let mut h = 0x811c_9dc5u32;
    for (a, b) in cur.iter().zip(reference) {
        for byte in (a.locality_hash ^ b.locality_hash).to_le_bytes() {
            h ^= u32::from(byte);
            h = h.wrapping_mul(0x0100_0193);
        }
    }
    h
}

/// Outcome of the incremental decision walk.
#[derive(Debug)]
pub struct DecisionOutcome {
    pub decision: Decision,
    /// Tree built as far as the walk went; complete for Full-Compute.
    pub tree: MerkleTree,
    /// Locality-hash multiplies spent, for the overhead account.
    pub hash_macs: u64,
    /// Per level: distance and pattern against the best reference, for
    /// later registration.
    pub band_levels: Vec<(u32, u32, u64)>,
}

/// Walk the levels bottom-up and decide. Without references the input is a
/// new pattern and computes fully.
pub fn decide(
    v_low: &[f32],
    params: &TreeParams,
    store: &ReferenceStore,
    lut: &mut HistoryLut,
    thresholds: &MipsThresholds,
) -> DecisionOutcome {
    let mut levels = vec![leaf_hashes(v_low, params)];
    let mut hash_macs = params.hash_macs(params.d_low / params.leaves) * params.leaves as u64;
    let mut band_levels = Vec::new();

    if !store.is_empty() {
        let mut level = 0u32;
        loop {
            let cur = levels.last().unwrap();
            // Best (minimum-distance) reference at this level.
            let mut best: Option<(u32, bool, u64)> = None;
            for snap in store.iter() {
                let reference = &snap.tree.levels[level as usize];
                let (d, integrity) = level_distance(cur, reference);
                if best.map_or(true, |(bd, _, _)| d < bd) {
                    best = Some((d, integrity, snap.id));
                }
            }
            let (dist, integrity_equal, snap_id) = best.expect("store not empty");

            if dist <= thresholds.t_zero && (!thresholds.integrity_gate || integrity_equal) {
                return DecisionOutcome {
                    decision: Decision {
                        kind: DecisionKind::EarlySkip { snapshot: snap_id },
                        level,
                        delta_h: dist,
                    },
                    tree: MerkleTree {
                        levels,
                        v_low: v_low.to_vec(),
                    },
                    hash_macs,
                    band_levels,
                };
            }
            if dist > thresholds.t_zero && dist <= thresholds.s_th {
                let reference = &store.get(snap_id).unwrap().tree.levels[level as usize];
                let pattern = level_pattern(cur, reference);
                band_levels.push((level, pattern, snap_id));
                if let Some(result) = lut.lookup(level, pattern, snap_id) {
                    return DecisionOutcome {
                        decision: Decision {
                            kind: DecisionKind::DiffReuse { result },
                            level,
                            delta_h: dist,
                        },
                        tree: MerkleTree {
                            levels,
                            v_low: v_low.to_vec(),
                        },
                        hash_macs,
                        band_levels,
                    };
                }
            }

            if levels.last().unwrap().len() == 1 {
                let top = level;
                return DecisionOutcome {
                    decision: Decision {
                        kind: DecisionKind::FullCompute,
                        level: top,
                        delta_h: dist,
                    },
                    tree: MerkleTree {
                        levels,
                        v_low: v_low.to_vec(),
                    },
                    hash_macs,
                    band_levels,
                };
            }
            let next = build_level(levels.last().unwrap(), v_low, params);
            for node in &next {
                hash_macs += params.hash_macs(node.len);
            }
            levels.push(next);
            level += 1;
        }
    }

    // Cold store: build everything, it all becomes the first reference.
    while levels.last().unwrap().len() > 1 {
        let next = build_level(levels.last().unwrap(), v_low, params);
        for node in &next {
            hash_macs += params.hash_macs(node.len);
        }
        levels.push(next);
    }
    let top = levels.len() as u32 - 1;
    DecisionOutcome {
        decision: Decision {
            kind: DecisionKind::FullCompute,
            level: top,
            delta_h: u32::MAX,
        },
        tree: MerkleTree {
            levels,
            v_low: v_low.to_vec(),
        },
        hash_macs,
        band_levels,
    }
}

/// After a Full-Compute produced `result`, register every in-band level's
/// difference pattern and add the tree as a new reference snapshot.
pub fn register_full_compute(
    outcome: &DecisionOutcome,
    store: &mut ReferenceStore,
    lut: &mut HistoryLut,
    result: u64,
) -> u64 {
    for &(level, pattern, snapshot) in &outcome.band_levels {
        lut.register(level, pattern, snapshot, result);
    }
    store.push(outcome.tree.clone())
}
