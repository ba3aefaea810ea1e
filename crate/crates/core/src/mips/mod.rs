//! MerkleTree-based incremental pruning: similarity-sorted windows,
//! dual-hash Merkle trees over a low-dimensional projection, the three-way
//! Early-Skip / Diff-Reuse / Full-Compute decision against per-expert
//! reference history, and the offline root audit.

mod audit;
mod decide;
pub mod hash;
mod sorter;

pub use audit::{audit_roots, AuditRecord, AuditReport, KindAgreement};
pub use decide::{
    decide, register_full_compute, Decision, DecisionKind, DecisionOutcome, HistoryLut,
    MipsThresholds, ReferenceStore, Snapshot,
};
pub use hash::{
    build_level, build_tree, delta_h, leaf_hashes, simhash_bits, MerkleNode, MerkleTree,
    TreeParams,
};
pub use sorter::{cosine, project_low, Projection, SortedWindow};
