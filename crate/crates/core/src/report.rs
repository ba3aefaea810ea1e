//! Report emission: metrics JSON and CSV, fidelity statistics and the
//! trace dumps. Reports carry the resolved config and its hash so a report
//! alone reproduces its run; nothing time- or host-dependent is written.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::mips::cosine;
use crate::sim::{CostLedger, CostWeights, DecisionCounts, DecisionRow, RunOutput};

/// Derived view of one ledger.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LedgerStats {
    #[serde(flatten)]
    pub counters: CostLedger,
    pub modeled_energy: f64,
    pub modeled_cycles: f64,
}

impl LedgerStats {
    pub fn new(ledger: &CostLedger, weights: &CostWeights) -> LedgerStats {
        LedgerStats {
            counters: ledger.clone(),
            modeled_energy: ledger.modeled_energy(weights),
            modeled_cycles: ledger.modeled_cycles(weights),
        }
    }
}

/// Output agreement between the baseline and the featured run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FidelityStats {
    pub mean_cosine: f64,
    pub min_cosine: f64,
    pub bit_exact: bool,
    pub per_token_cosine: Vec<f64>,
}

pub fn fidelity(baseline: &[Vec<f32>], featured: &[Vec<f32>]) -> FidelityStats {
    let per_token: Vec<f64> = baseline
        .iter()
        .zip(featured)
        .map(|(a, b)| cosine(a, b))
        .collect();
    let mean = if per_token.is_empty() {
        1.0
    } else {
        per_token.iter().sum::<f64>() / per_token.len() as f64
    };
    let min = per_token.iter().copied().fold(1.0, f64::min);
    FidelityStats {
        mean_cosine: mean,
        min_cosine: min,
        bit_exact: baseline == featured,
        per_token_cosine: per_token,
    }
}

/// Savings of the featured run relative to the baseline.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SavingsStats {
    pub dram_read_ratio: f64,
    pub sram_read_ratio: f64,
    pub mac_ratio: f64,
    pub energy_ratio: f64,
    /// (skipped + reused) / demanded of the featured run.
    pub pruned_fraction: f64,
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        if a == 0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        a as f64 / b as f64
    }
}

pub fn savings(featured: &CostLedger, baseline: &CostLedger, weights: &CostWeights) -> SavingsStats {
    SavingsStats {
        dram_read_ratio: ratio(featured.dram_reads, baseline.dram_reads),
        sram_read_ratio: ratio(featured.sram_reads, baseline.sram_reads),
        mac_ratio: ratio(featured.macs, baseline.macs),
        energy_ratio: featured.modeled_energy(weights) / baseline.modeled_energy(weights),
        pruned_fraction: ratio(
            featured.ops_skipped + featured.ops_reused,
            featured.ops_demanded,
        ),
    }
}

/// The single-run report.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunReport {
    pub schema_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub config: RunConfig,
    pub baseline: LedgerStats,
    pub featured: LedgerStats,
    pub decisions: DecisionCounts,
    pub fidelity: FidelityStats,
    pub savings: SavingsStats,
    /// Mean PE cells per executed multiply in the featured run.
    pub mean_pe_cells: f64,
}

impl RunReport {
    pub fn build(
        config: &RunConfig,
        baseline: &RunOutput,
        featured: &RunOutput,
    ) -> RunReport {
        let weights = &config.arch.cost_weights;
        RunReport {
            schema_version: 1,
            config_hash: config.config_hash(),
            seed: config.seed,
            config: config.clone(),
            baseline: LedgerStats::new(&baseline.ledger, weights),
            featured: LedgerStats::new(&featured.ledger, weights),
            decisions: featured.decisions,
            fidelity: fidelity(&baseline.outputs, &featured.outputs),
            savings: savings(&featured.ledger, &baseline.ledger, weights),
            mean_pe_cells: ratio(featured.ledger.pe_cell_activations, featured.ledger.macs),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Flat CSV header matching [`RunReport::csv_row`].
    pub fn csv_header() -> String {
        [
            "config_hash",
            "seed",
            "rho",
            "duplicate_rate",
            "mips",
            "mblm",
            "dappm",
            "dram_reads",
            "dram_writes",
            "sram_reads",
            "sram_writes",
            "macs",
            "overhead_macs",
            "booth_digit_flips",
            "booth_pp_rows",
            "pe_cell_activations",
            "ops_demanded",
            "ops_skipped",
            "ops_reused",
            "approx_events",
            "early_skip",
            "diff_reuse",
            "full_compute",
            "modeled_energy",
            "modeled_cycles",
            "baseline_dram_reads",
            "baseline_energy",
            "dram_read_ratio",
            "energy_ratio",
            "pruned_fraction",
            "mean_cosine",
            "min_cosine",
            "bit_exact",
            "mean_pe_cells",
        ]
        .join(",")
    }

    pub fn csv_row(&self) -> String {
        let f = &self.featured.counters;
        let b = &self.baseline.counters;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.config_hash,
            self.seed,
            self.config.trace.rho,
            self.config.trace.duplicate_rate,
            self.config.features.mips,
            self.config.features.mblm,
            self.config.features.dappm,
            f.dram_reads,
            f.dram_writes,
            f.sram_reads,
            f.sram_writes,
            f.macs,
            f.overhead_macs,
            f.booth_digit_flips,
            f.booth_pp_rows,
            f.pe_cell_activations,
            f.ops_demanded,
            f.ops_skipped,
            f.ops_reused,
            f.approx_events,
            self.decisions.early_skip,
            self.decisions.diff_reuse,
            self.decisions.full_compute,
            self.featured.modeled_energy,
            self.featured.modeled_cycles,
            b.dram_reads,
            self.baseline.modeled_energy,
            self.savings.dram_read_ratio,
            self.savings.energy_ratio,
            self.savings.pruned_fraction,
            self.fidelity.mean_cosine,
            self.fidelity.min_cosine,
            self.fidelity.bit_exact,
            self.mean_pe_cells,
        )
    }
}

/// Decision trace CSV: one row per pruning decision.
pub fn write_decision_csv(path: &Path, rows: &[DecisionRow]) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "token,expert,level,delta_h,decision,reused_ref")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.token,
            r.expert,
            r.level,
            r.delta_h,
            r.decision,
            r.reused_ref.map_or(String::new(), |v| v.to_string()),
        )?;
    }
    out.flush()
}

/// Batch trace CSV: one row per Booth batch.
pub fn write_batch_csv(
    path: &Path,
    records: &[crate::booth::BatchRecord],
) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "batch_id,path,order,flips,replays,skips")?;
    for r in records {
        let order: Vec<String> = r.order.iter().map(|l| l.to_string()).collect();
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.batch_id,
            r.path,
            order.join(" "),
            r.flips,
            r.replays,
            r.skips,
        )?;
    }
    out.flush()
}
