//! Batch shaping: invalid-computation detection, bit-similarity features
//! and the pairwise bit-variation matrix with its deduplicated triangle
//! view.

/// A group of eight multiplications sharing one multiplicand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoothBatch {
    /// The shared operand (the multiplicand broadcast to all lanes).
    pub weight: i8,
    /// Eight per-lane operands.
    pub activations: [i8; 8],
    /// Lanes excluded from statistics, ordering and execution.
    pub valid_mask: [bool; 8],
}

impl BoothBatch {
    pub fn new(weight: i8, activations: [i8; 8]) -> BoothBatch {
        BoothBatch {
            weight,
            activations,
            valid_mask: [true; 8],
        }
    }

    pub fn valid_lanes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..8).filter(|&i| self.valid_mask[i])
    }
}

/// Bit similarity of two raw 8-bit patterns: `1 - BV/8` where BV is the
/// Hamming distance.
pub fn bit_similarity(a: u8, b: u8) -> f64 {
    1.0 - f64::from((a ^ b).count_ones()) / 8.0
}

/// Length of the longest run of aligned bit positions where the operands
/// agree.
pub fn repeat_length(a: u8, b: u8) -> u32 {
    let agree = !(a ^ b);
    let mut best = 0u32;
    let mut run = 0u32;
    for i in 0..8 {
        if (agree >> i) & 1 == 1 {
            run += 1;
            best = best.max(run);
        } else {
            run = 0;
        }
    }
    best
}

/// Mark lanes whose contribution is negligible: the batch is dropped
/// entirely when the shared operand is below `r_zero_wgt`, individual lanes
/// when their operand is below `r_zero_act`. Skipped products contribute
/// exact zero downstream.
pub fn invalid_detect(batch: &mut BoothBatch, r_zero_wgt: u8, r_zero_act: u8) {
    if batch.weight.unsigned_abs() < r_zero_wgt {
        batch.valid_mask = [false; 8];
        return;
    }
    for (lane, act) in batch.activations.iter().enumerate() {
        if act.unsigned_abs() < r_zero_act {
            batch.valid_mask[lane] = false;
        }
    }
}

/// Pairwise bit-variation counts over the batch lanes. Symmetric with a
/// zero diagonal; entries touching an invalid lane stay zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitVariationMatrix {
    pub bv: [[u8; 8]; 8],
    pub valid_mask: [bool; 8],
}

/// One entry of the variation simplified triangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VstEntry {
    pub i: usize,
    pub j: usize,
    pub bv: u8,
    /// Triangle slot index in 0..28, the Booth-LUT addressing unit.
    pub slot: usize,
}

/// Triangle slot for an unordered lane pair.
pub fn vst_slot(i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < 8);
    i * (15 - i) / 2 + (j - i - 1)
}

pub fn build_bvm(batch: &BoothBatch) -> BitVariationMatrix {
    let mut bv = [[0u8; 8]; 8];
    for i in 0..8 {
        if !batch.valid_mask[i] {
            continue;
        }
        for j in i + 1..8 {
            if !batch.valid_mask[j] {
                continue;
            }
            let d = (batch.activations[i] as u8 ^ batch.activations[j] as u8).count_ones() as u8;
            bv[i][j] = d;
            bv[j][i] = d;
        }
    }
    BitVariationMatrix {
        bv,
        valid_mask: batch.valid_mask,
    }
}

/// The strict-upper-triangle view of the matrix: exchange pairs (case I)
/// and self pairs (case II) are removed, leaving 28 entries for a fully
/// valid batch.
pub fn vst(bvm: &BitVariationMatrix) -> Vec<VstEntry> {
    let mut entries = Vec::with_capacity(28);
    for i in 0..8 {
        if !bvm.valid_mask[i] {
            continue;
        }
        for j in i + 1..8 {
            if !bvm.valid_mask[j] {
                continue;
            }
            entries.push(VstEntry {
                i,
                j,
                bv: bvm.bv[i][j],
                slot: vst_slot(i, j),
            });
        }
    }
    entries
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn similarity_extremes() {
        assert_eq!(bit_similarity(0x5A, 0x5A), 1.0);
        assert_eq!(bit_similarity(0x00, 0xFF), 0.0);
        // BV = 2 gives BS = 0.75.
        assert_eq!(bit_similarity(0b11, 0b00), 0.75);
    }

    #[test]
    fn repeat_length_cases() {
        assert_eq!(repeat_length(0x37, 0x37), 8);
        assert_eq!(repeat_length(0b1010_1010, 0b0101_0101), 0);
        assert_eq!(repeat_length(0b1111_0000, 0b1111_1111), 4);
    }

    #[test]
    fn zero_thresholds_keep_all_lanes() {
        let mut batch = BoothBatch::new(3, [1, -1, 0, 127, -128, 5, 9, 2]);
        invalid_detect(&mut batch, 0, 0);
        assert_eq!(batch.valid_mask, [true; 8]);
    }

    #[test]
    fn small_weight_invalidates_batch() {
        let mut batch = BoothBatch::new(2, [100; 8]);
        invalid_detect(&mut batch, 3, 0);
        assert_eq!(batch.valid_mask, [false; 8]);
    }

    #[test]
    fn per_lane_threshold_matches_magnitude_check() {
        let acts = [3, -3, 4, -4, 0, 127, -128, 5];
        let mut batch = BoothBatch::new(100, acts);
        invalid_detect(&mut batch, 0, 4);
        for (lane, act) in acts.iter().enumerate() {
            assert_eq!(batch.valid_mask[lane], act.unsigned_abs() >= 4, "lane {lane}");
        }
    }

    #[test]
    fn identical_activations_zero_matrix() {
        let batch = BoothBatch::new(7, [42; 8]);
        let bvm = build_bvm(&batch);
        assert!(bvm.bv.iter().flatten().all(|&v| v == 0));
    }

    #[test]
    fn bvm_symmetry_and_vst_size() {
        let batch = BoothBatch::new(7, [1, 2, 3, 4, 5, 6, 7, 8]);
        let bvm = build_bvm(&batch);
        for i in 0..8 {
            assert_eq!(bvm.bv[i][i], 0);
            for j in 0..8 {
                assert_eq!(bvm.bv[i][j], bvm.bv[j][i]);
            }
        }
        let entries = vst(&bvm);
        assert_eq!(entries.len(), 28);
        let mut slots: Vec<usize> = entries.iter().map(|e| e.slot).collect();
        slots.sort_unstable();
        slots.dedup();
        assert_eq!(slots.len(), 28, "slots must be unique");
        assert_eq!(*slots.last().unwrap(), 27);
    }

    #[test]
    fn masked_lanes_leave_vst() {
        let mut batch = BoothBatch::new(7, [1, 2, 3, 4, 5, 6, 7, 8]);
        batch.valid_mask[0] = false;
        batch.valid_mask[5] = false;
        let entries = vst(&build_bvm(&batch));
        assert_eq!(entries.len(), 15); // C(6, 2)
        assert!(entries.iter().all(|e| e.i != 0 && e.j != 5));
    }
}
