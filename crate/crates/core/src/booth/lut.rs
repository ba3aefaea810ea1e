//! Booth-LUT: a small per-triangle-slot cache replaying products of
//! previously executed operand pairs.
//!
//! Execution maps each consecutive lane pair to its triangle slot. An entry
//! remembers the operand pair it was recorded under and the product it
//! produced; a later pair on the same slot replays the product when the
//! shared operand matches and the lane operand differs in at most
//! `t_match` bits. With `t_match = 0` the replay is value-exact.

/// Operand representation a cached product is keyed on. The 8-bit pattern
/// feeds the bit-distance test; `exact` carries the full-precision operand
/// identity so that a zero-tolerance match can insist on true equality
/// (distinct scalars can share a posit-8 pattern).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperandKey {
    pub pattern: u8,
    pub exact: u64,
}

impl OperandKey {
    pub fn from_pattern(pattern: u8) -> OperandKey {
        OperandKey {
            pattern,
            exact: u64::from(pattern),
        }
    }
}

#[derive(Debug, Clone)]
struct Entry {
    weight: OperandKey,
    activation: OperandKey,
    /// XOR pattern of the consecutive operand pair this entry was recorded
    /// from, kept for the batch trace dump.
    bv_pattern: u8,
    seq_index: u32,
    product: u64,
    age: u64,
}

/// Outcome of a replay attempt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LutOutcome {
    /// Cached product plus the bit distance of the match (0 means exact).
    Hit { product: u64, distance: u32 },
    Miss,
}

/// One LUT per triangle slot, each holding a bounded number of entries
/// evicted least-recently-used.
#[derive(Debug, Clone)]
pub struct BoothLut {
    slots: Vec<Vec<Entry>>,
    capacity: usize,
    clock: u64,
}

pub const VST_SLOTS: usize = 28;

impl BoothLut {
    pub fn new(capacity_per_slot: usize) -> BoothLut {
        BoothLut {
            slots: vec![Vec::new(); VST_SLOTS],
            capacity: capacity_per_slot.max(1),
            clock: 0,
        }
    }

    /// Try to replay a product for `(weight, activation)` on `slot`.
    pub fn try_replay(
        &mut self,
        slot: usize,
        weight: OperandKey,
        activation: OperandKey,
        t_match: u32,
    ) -> LutOutcome {
        self.clock += 1;
        let clock = self.clock;
        let entries = &mut self.slots[slot];
        let mut best: Option<(usize, u32)> = None;
        for (idx, entry) in entries.iter().enumerate() {
            if entry.weight.exact != weight.exact {
                continue;
            }
            let distance = (entry.activation.pattern ^ activation.pattern).count_ones();
            let exact_match = entry.activation.exact == activation.exact;
            let hit = if t_match == 0 {
                exact_match
            } else {
                distance <= t_match
            };
            if hit && best.map_or(true, |(_, d)| distance < d) {
                best = Some((idx, distance));
                if distance == 0 && exact_match {
                    break;
                }
            }
        }
        match best {
            Some((idx, distance)) => {
                entries[idx].age = clock;
                LutOutcome::Hit {
                    product: entries[idx].product,
                    distance,
                }
            }
            None => LutOutcome::Miss,
        }
    }

    /// Record the product computed for `(weight, activation)` on `slot`.
    pub fn update(
        &mut self,
        slot: usize,
        weight: OperandKey,
        activation: OperandKey,
        bv_pattern: u8,
        seq_index: u32,
        product: u64,
    ) {
        self.clock += 1;
        let clock = self.clock;
        let capacity = self.capacity;
        let entries = &mut self.slots[slot];
        if let Some(existing) = entries
            .iter_mut()
            .find(|e| e.weight.exact == weight.exact && e.activation.exact == activation.exact)
        {
            existing.product = product;
            existing.bv_pattern = bv_pattern;
            existing.seq_index = seq_index;
            existing.age = clock;
            return;
        }
        if entries.len() >= capacity {
            let oldest = entries
                .iter()
                .enumerate()
                .min_by_key(|(_, e)| e.age)
                .map(|(i, _)| i)
                .unwrap();
            entries.swap_remove(oldest);
        }
        entries.push(Entry {
            weight,
            activation,
            bv_pattern,
            seq_index,
            product,
            age: clock,
        });
    }

    pub fn len(&self) -> usize {
        self.slots.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
