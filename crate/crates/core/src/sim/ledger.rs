//! Event counters and the weighted energy/cycle model.

use serde::{Deserialize, Serialize};

/// Per-event weights used to fold raw counters into modeled energy and
/// cycles. Units are abstract; only ratios matter.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct CostWeights {
    pub dram_access: f64,
    pub sram_access: f64,
    pub mac: f64,
    pub digit_flip: f64,
    pub pe_cell: f64,
    /// Cycle weights for the coarse latency model.
    pub cycle_dram: f64,
    pub cycle_sram: f64,
    pub cycle_mac: f64,
    /// Plan-comparator weights: energy per digit flip and per
    /// partial-product row.
    pub booth_flip: f64,
    pub booth_pp_row: f64,
}

impl Default for CostWeights {
    fn default() -> CostWeights {
        CostWeights {
            dram_access: 200.0,
            sram_access: 2.0,
            mac: 1.0,
            digit_flip: 0.25,
            pe_cell: 0.05,
            cycle_dram: 20.0,
            cycle_sram: 2.0,
            cycle_mac: 1.0,
            booth_flip: 1.0,
            booth_pp_row: 2.0,
        }
    }
}

/// The simulator's account of everything that happened in a run. Counters
/// only ever grow; energy and cycles are derived sums.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct CostLedger {
    pub dram_reads: u64,
    pub dram_writes: u64,
    pub sram_reads: u64,
    pub sram_writes: u64,
    /// Multiplies actually executed.
    pub macs: u64,
    pub booth_digit_flips: u64,
    pub booth_pp_rows: u64,
    pub pe_cell_activations: u64,
    /// Multiplies demanded by the dataflow, whether executed or not.
    pub ops_demanded: u64,
    /// Multiplies dropped (invalid-detector lanes, Early-Skip).
    pub ops_skipped: u64,
    /// Multiplies answered from a cache (Booth-LUT replay, Diff-Reuse).
    pub ops_reused: u64,
    /// Tolerant replays and threshold skips that may shift the value.
    pub approx_events: u64,
    /// Summed absolute deviation introduced by approximation events.
    pub approx_error_sum: f64,
    /// Multiplies spent on the pruning machinery itself (projection,
    /// hashing, sorter cosines); charged as MACs in the energy model but
    /// outside the dataflow conservation equation.
    pub overhead_macs: u64,
}

impl CostLedger {
    pub fn modeled_energy(&self, w: &CostWeights) -> f64 {
        (self.dram_reads + self.dram_writes) as f64 * w.dram_access
            + (self.sram_reads + self.sram_writes) as f64 * w.sram_access
            + (self.macs + self.overhead_macs) as f64 * w.mac
            + self.booth_digit_flips as f64 * w.digit_flip
            + self.pe_cell_activations as f64 * w.pe_cell
    }

    pub fn modeled_cycles(&self, w: &CostWeights) -> f64 {
        (self.dram_reads + self.dram_writes) as f64 * w.cycle_dram
            + (self.sram_reads + self.sram_writes) as f64 * w.cycle_sram
            + self.macs as f64 * w.cycle_mac
    }

    /// Every demanded multiply must be executed, skipped or reused.
    pub fn conserved(&self) -> bool {
        self.macs + self.ops_skipped + self.ops_reused == self.ops_demanded
    }
}
