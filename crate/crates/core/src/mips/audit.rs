//! Offline root audit: rebuild full trees for a sample of decided inputs
//! and check whether the root-level comparison would have reached the same
//! conclusion as the early decision.

use serde::{Deserialize, Serialize};

use super::decide::{DecisionKind, MipsThresholds};
use super::hash::{build_tree, delta_h, MerkleNode, TreeParams};

/// Everything retained about one sampled decision.
#[derive(Debug, Clone)]
pub struct AuditRecord {
    pub token: u64,
    pub expert: u32,
    pub kind_label: &'static str,
    /// The projected input, kept so the full tree can be rebuilt.
    pub v_low: Vec<f32>,
    /// Root of the reference the decision was made against, if any.
    pub ref_root: Option<MerkleNode>,
}

impl AuditRecord {
    pub fn from_decision(
        token: u64,
        expert: u32,
        kind: &DecisionKind,
        v_low: Vec<f32>,
        ref_root: Option<MerkleNode>,
    ) -> AuditRecord {
        AuditRecord {
            token,
            expert,
            kind_label: kind.label(),
            v_low,
            ref_root,
        }
    }
}

/// Agreement rate for one decision kind. Kinds with no sampled items
/// report full agreement over zero samples.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct KindAgreement {
    pub kind: String,
    pub sampled: u64,
    pub agreed: u64,
    pub rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AuditReport {
    pub sample_size: u64,
    pub per_kind: Vec<KindAgreement>,
}

impl AuditReport {
    pub fn min_rate(&self) -> f64 {
        self.per_kind
            .iter()
            .map(|k| k.rate)
            .fold(1.0, f64::min)
    }
}

/// Recompute the complete root hash for every sampled item and compare the
/// root-level judgment with the decision that was actually taken.
///
/// Full-Compute items agree by definition: nothing was skipped. An
/// Early-Skip agrees when the root distance still clears `t_zero` (and the
/// integrity gate, when enabled); a Diff-Reuse agrees when the root
/// distance stays within the approximate band's outer bound.
pub fn audit_roots(
    records: &[AuditRecord],
    params: &TreeParams,
    thresholds: &MipsThresholds,
) -> AuditReport {
    let mut tally: Vec<(&'static str, u64, u64)> = vec![
        ("early_skip", 0, 0),
        ("diff_reuse", 0, 0),
        ("full_compute", 0, 0),
    ];
    for record in records {
        let agreed = match (record.kind_label, &record.ref_root) {
            ("full_compute", _) => true,
            (_, None) => false,
            (label, Some(ref_root)) => {
                let root = *build_tree(&record.v_low, params).root();
                let d = delta_h(root.locality_hash, ref_root.locality_hash);
                match label {
                    "early_skip" => {
                        d <= thresholds.t_zero
                            && (!thresholds.integrity_gate
                                || root.integrity_hash == ref_root.integrity_hash)
                    }
                    "diff_reuse" => d <= thresholds.s_th,
                    _ => false,
                }
            }
        };
        let slot = tally
            .iter_mut()
            .find(|(k, _, _)| *k == record.kind_label)
            .expect("known kind");
        slot.1 += 1;
        if agreed {
            slot.2 += 1;
        }
    }
    AuditReport {
        sample_size: records.len() as u64,
        per_kind: tally
            .into_iter()
            .map(|(kind, sampled, agreed)| KindAgreement {
                kind: kind.to_string(),
                sampled,
                agreed,
                rate: if sampled == 0 {
                    1.0
                } else {
                    agreed as f64 / sampled as f64
                },
            })
            .collect(),
    }
}
