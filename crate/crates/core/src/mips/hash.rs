//! Dual-hash Merkle nodes over the projected vector.
//!
//! Each node carries two 32-bit hashes. The integrity hash is an FNV-1a
//! mix: any change to the covered data flips the root with overwhelming
//! probability, giving the tamper-evidence role. The locality hash is a
//! sign-random-projection (SimHash): its Hamming distance grows, in
//! expectation, with the angle between the covered segments, which is what
//! the graded skip thresholds need. A single mixing hash cannot serve both
//! roles, so the nodes keep one of each.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::workload::gaussian;

pub const HASH_BITS: u32 = 32;

/// One node of the tree. `start..start+len` is the slice of the projected
/// vector this node covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MerkleNode {
    pub level: u32,
    pub index: u32,
    pub integrity_hash: u32,
    pub locality_hash: u32,
    pub start: usize,
    pub len: usize,
}

/// Tree geometry plus the seeded hyperplane bank.
#[derive(Debug, Clone)]
pub struct TreeParams {
    pub d_low: usize,
    pub leaves: usize,
    pub levels: u32,
    /// `planes[level][plane][coordinate]`, coordinates indexed by absolute
    /// position in the projected vector.
    planes: Vec<Vec<Vec<f32>>>,
}

#[derive(Debug, thiserror::Error)]
pub enum TreeConfigError {
    #[error("d_low {d_low} is not divisible by leaf count {leaves}")]
    Indivisible { d_low: usize, leaves: usize },
    #[error("leaf count must be at least 1")]
    NoLeaves,
}

impl TreeParams {
    pub fn new(seed: u64, d_low: usize, leaves: usize) -> Result<TreeParams, TreeConfigError> {
        if leaves == 0 {
            return Err(TreeConfigError::NoLeaves);
        }
        if d_low % leaves != 0 {
            return Err(TreeConfigError::Indivisible { d_low, leaves });
        }
        let levels = levels_for(leaves);
        let planes = (0..levels)
            .map(|level| {
                (0..HASH_BITS)
                    .map(|plane| {
                        let stream = seed
                            ^ 0x51a1_7a5e_0000_0000
                            ^ (u64::from(level) << 32)
                            ^ u64::from(plane);
                        let mut rng = ChaCha8Rng::seed_from_u64(stream);
                        (0..d_low).map(|_| gaussian(&mut rng) as f32).collect()
                    })
                    .collect()
            })
            .collect();
        Ok(TreeParams {
            d_low,
            leaves,
            levels,
            planes,
        })
    }

    /// SimHash of a segment: bit j is set when the segment's dot product
    /// with hyperplane j of this level is positive.
    pub fn locality_hash(&self, level: u32, start: usize, seg: &[f32]) -> u32 {
        let mut bits = 0u32;
        for (j, plane) in self.planes[level as usize].iter().enumerate() {
            let dot: f64 = seg
                .iter()
                .zip(&plane[start..start + seg.len()])
                .map(|(&a, &b)| f64::from(a) * f64::from(b))
                .sum();
            if dot > 0.0 {
                bits |= 1 << j;
            }
        }
        bits
    }

    /// Multiplies one locality hash costs, for the ledger.
    pub fn hash_macs(&self, seg_len: usize) -> u64 {
        u64::from(HASH_BITS) * seg_len as u64
    }
}

fn levels_for(leaves: usize) -> u32 {
    let mut n = leaves;
    let mut levels = 1;
    while n > 1 {
        n = n.div_ceil(2);
        levels += 1;
    }
    levels
}

/// Standalone SimHash of a full vector, using the level-0 plane bank of a
/// single-leaf tree geometry.
pub fn simhash_bits(seed: u64, v: &[f32]) -> u32 {
    let params = TreeParams::new(seed, v.len(), 1).expect("single leaf always divides");
    params.locality_hash(0, 0, v)
}

const FNV_OFFSET: u32 = 0x811c_9dc5;
const FNV_PRIME: u32 = 0x0100_0193;

fn fnv1a(seed: u32, bytes: &[u8]) -> u32 {
    let mut h = seed;
    for &b in bytes {
        h ^= u32::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Integrity hash of raw data: FNV-1a over the canonical little-endian
/// bytes, truncated to 32 bits by construction.
pub fn integrity_of_segment(seg: &[f32]) -> u32 {
    let mut h = FNV_OFFSET;
    for &x in seg {
        h = fnv1a(h, &x.to_le_bytes());
    }
    h
}

/// Parent integrity: deterministic mix of the children's hashes.
pub fn integrity_mix(left: u32, right: u32) -> u32 {
    let mut h = fnv1a(FNV_OFFSET, &left.to_le_bytes());
    h = fnv1a(h, &right.to_le_bytes());
    h
}

/// Level-0 nodes: one per contiguous segment of the projected vector.
pub fn leaf_hashes(v_low: &[f32], params: &TreeParams) -> Vec<MerkleNode> {
    debug_assert_eq!(v_low.len(), params.d_low);
    let seg = params.d_low / params.leaves;
    (0..params.leaves)
        .map(|i| {
            let start = i * seg;
            let slice = &v_low[start..start + seg];
            MerkleNode {
                level: 0,
                index: i as u32,
                integrity_hash: integrity_of_segment(slice),
                locality_hash: params.locality_hash(0, start, slice),
                start,
                len: seg,
            }
        })
        .collect()
}

/// One level up: children are paired left-to-right; a leftover odd child is
/// promoted unchanged.
pub fn build_level(children: &[MerkleNode], v_low: &[f32], params: &TreeParams) -> Vec<MerkleNode> {
    debug_assert!(!children.is_empty());
    let level = children[0].level + 1;
    let mut parents = Vec::with_capacity(children.len().div_ceil(2));
    let mut index = 0u32;
    for pair in children.chunks(2) {
        if let [left, right] = pair {
            let start = left.start;
            let len = left.len + right.len;
            parents.push(MerkleNode {
                level,
                index,
                integrity_hash: integrity_mix(left.integrity_hash, right.integrity_hash),
                locality_hash: params.locality_hash(level, start, &v_low[start..start + len]),
                start,
                len,
            });
        } else {
            let mut promoted = pair[0];
            promoted.level = level;
            promoted.index = index;
            parents.push(promoted);
        }
        index += 1;
    }
    parents
}

/// The full tree, leaves first.
#[derive(Debug, Clone, PartialEq)]
pub struct MerkleTree {
    pub levels: Vec<Vec<MerkleNode>>,
    pub v_low: Vec<f32>,
}

impl MerkleTree {
    pub fn root(&self) -> &MerkleNode {
        &self.levels.last().expect("tree has levels")[0]
    }

    pub fn top_level(&self) -> u32 {
        self.levels.len() as u32 - 1
    }
}

pub fn build_tree(v_low: &[f32], params: &TreeParams) -> MerkleTree {
    let mut levels = vec![leaf_hashes(v_low, params)];
    while levels.last().unwrap().len() > 1 {
        let next = build_level(levels.last().unwrap(), v_low, params);
        levels.push(next);
    }
    MerkleTree {
        levels,
        v_low: v_low.to_vec(),
    }
}

/// Hamming distance between two locality hashes.
pub fn delta_h(h_cur: u32, h_ref: u32) -> u32 {
    (h_cur ^ h_ref).count_ones()
}
