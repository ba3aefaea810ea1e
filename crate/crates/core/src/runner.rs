//! Command entry points behind the CLI: single runs, parameter sweeps, the
//! exhaustive conformance suites and the pruning audit. Everything is
//! written to the output directory; nothing host- or time-dependent lands
//! in a report.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::booth::{booth_encode, Radix};
use crate::config::{ConfigError, RunConfig};
use crate::mips::{audit_roots, AuditReport, TreeParams};
use crate::posit::{self, DaPositWord, PositWord};
use crate::report::{write_batch_csv, write_decision_csv, RunReport};
use crate::sim::{baseline_run, run_decode, RunOutput, ToyModel};
use crate::workload::generate_trace;

#[derive(Debug, thiserror::Error)]
pub enum RunnerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Arch(#[from] crate::sim::ArchError),
    #[error(transparent)]
    Model(#[from] crate::sim::ModelError),
    #[error(transparent)]
    Trace(#[from] crate::workload::TraceError),
    #[error("io on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("sweep grid is empty")]
    EmptyGrid,
    #[error("unknown sweep parameter {0}")]
    UnknownParameter(String),
    #[error("bad value for sweep parameter {0}")]
    BadValue(String),
    #[error("audit sample_rate {0} must lie in (0, 1]")]
    BadSampleRate(f64),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunnerError + '_ {
    move |source| RunnerError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), RunnerError> {
    std::fs::write(path, contents).map_err(io_err(path))
}

/// Everything `run` produced, for callers that want more than the files.
#[derive(Debug)]
pub struct RunArtifacts {
    pub report: RunReport,
    pub baseline: RunOutput,
    pub featured: RunOutput,
}

/// Execute the baseline and the featured run for one config.
pub fn execute_pair(config: &RunConfig) -> Result<RunArtifacts, RunnerError> {
    config.validate()?;
    let trace = generate_trace(&config.trace_spec())?;
    let model = ToyModel::seeded(config.seed, config.model)?;
    let baseline = baseline_run(&trace, &model, &config.arch)?;
    let opts = config.engine_options(config.features)?;
    let featured = run_decode(&trace, &model, &config.arch, &opts)?;
    let report = RunReport::build(config, &baseline, &featured);
    Ok(RunArtifacts {
        report,
        baseline,
        featured,
    })
}

/// `run`: execute one config, write `report.json` and `metrics.csv` (plus
/// trace dumps when asked) into `out_dir`.
pub fn cmd_run(config: &RunConfig, out_dir: &Path) -> Result<RunArtifacts, RunnerError> {
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let artifacts = execute_pair(config)?;

    write_file(&out_dir.join("report.json"), &artifacts.report.to_json())?;
    let csv = format!(
        "{}\n{}\n",
        RunReport::csv_header(),
        artifacts.report.csv_row()
    );
    write_file(&out_dir.join("metrics.csv"), &csv)?;

    if config.trace_dumps {
        let decisions = out_dir.join("decisions.csv");
        write_decision_csv(&decisions, &artifacts.featured.decision_rows)
            .map_err(io_err(&decisions))?;
        let batches = out_dir.join("batches.csv");
        write_batch_csv(&batches, &artifacts.featured.batch_records).map_err(io_err(&batches))?;
    }
    if config.audit_sample_rate > 0.0 {
        let report = audit_from_output(config, &artifacts.featured)?;
        let path = out_dir.join("audit.json");
        write_file(
            &path,
            &serde_json::to_string_pretty(&report).expect("audit serializes"),
        )?;
    }
    Ok(artifacts)
}

/// `audit`: run with decision sampling, recompute full roots offline and
/// report per-kind agreement rates.
pub fn cmd_audit(
    config: &RunConfig,
    sample_rate: f64,
    out_dir: &Path,
) -> Result<AuditReport, RunnerError> {
    if !(sample_rate > 0.0 && sample_rate <= 1.0) {
        return Err(RunnerError::BadSampleRate(sample_rate));
    }
    let mut config = config.clone();
    config.audit_sample_rate = sample_rate;
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let trace = generate_trace(&config.trace_spec())?;
    let model = ToyModel::seeded(config.seed, config.model)?;
    let opts = config.engine_options(config.features)?;
    let featured = run_decode(&trace, &model, &config.arch, &opts)?;
    let report = audit_from_output(&config, &featured)?;
    let path = out_dir.join("audit.json");
    write_file(
        &path,
        &serde_json::to_string_pretty(&report).expect("audit serializes"),
    )?;
    Ok(report)
}

fn audit_from_output(config: &RunConfig, featured: &RunOutput) -> Result<AuditReport, RunnerError> {
    let params = TreeParams::new(config.seed, config.mips.d_low, config.mips.leaves)
        .map_err(crate::sim::ArchError::Tree)?;
    Ok(audit_roots(
        &featured.audit_records,
        &params,
        &config.thresholds.mips(),
    ))
}

/// One sweep assignment: parameter name to JSON value.
pub type SweepGrid = BTreeMap<String, Vec<serde_json::Value>>;

fn apply_parameter(
    config: &mut RunConfig,
    name: &str,
    value: &serde_json::Value,
) -> Result<(), RunnerError> {
    let bad = || RunnerError::BadValue(name.to_string());
    let as_f64 = |v: &serde_json::Value| v.as_f64().ok_or_else(bad);
    let as_u64 = |v: &serde_json::Value| v.as_u64().ok_or_else(bad);
    let as_bool = |v: &serde_json::Value| v.as_bool().ok_or_else(bad);
    match name {
        "seed" => config.seed = as_u64(value)?,
        "rho" => config.trace.rho = as_f64(value)?,
        "duplicate_rate" => config.trace.duplicate_rate = as_f64(value)?,
        "near_zero_rate" => config.trace.near_zero_rate = as_f64(value)?,
        "length" => config.trace.length = as_u64(value)? as usize,
        "t_zero" => config.thresholds.t_zero = as_u64(value)? as u32,
        "s_th" => config.thresholds.s_th = as_u64(value)? as u32,
        "t_match" => config.thresholds.t_match = as_u64(value)? as u32,
        "r_zero_wgt" => config.thresholds.r_zero_wgt = as_u64(value)? as u8,
        "r_zero_act" => config.thresholds.r_zero_act = as_u64(value)? as u8,
        "integrity_gate" => config.thresholds.integrity_gate = as_bool(value)?,
        "score_threshold" => config.thresholds.score_threshold = as_f64(value)?,
        "mips" => config.features.mips = as_bool(value)?,
        "mblm" => config.features.mblm = as_bool(value)?,
        "dappm" => config.features.dappm = as_bool(value)?,
        "window" => config.mips.window = as_u64(value)? as usize,
        other => return Err(RunnerError::UnknownParameter(other.to_string())),
    }
    Ok(())
}

/// `sweep`: cartesian product over the grid, one report row per point.
/// Points run independently; rows land in grid-key order.
pub fn cmd_sweep(
    base: &RunConfig,
    grid: &SweepGrid,
    out_dir: &Path,
) -> Result<Vec<RunReport>, RunnerError> {
    if grid.is_empty() || grid.values().any(|v| v.is_empty()) {
        return Err(RunnerError::EmptyGrid);
    }
    base.validate()?;
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let names: Vec<&String> = grid.keys().collect();
    let axes: Vec<&Vec<serde_json::Value>> = grid.values().collect();
    let total: usize = axes.iter().map(|a| a.len()).product();

    let mut reports = Vec::with_capacity(total);
    for point in 0..total {
        let mut config = base.clone();
        let mut rem = point;
        for (slot, axis) in axes.iter().enumerate().rev() {
            apply_parameter(&mut config, names[slot], &axis[rem % axis.len()])?;
            rem /= axis.len();
        }
        config.validate()?;
        let artifacts = execute_pair(&config)?;
        reports.push(artifacts.report);
    }

    let mut csv = String::new();
    csv.push_str(&RunReport::csv_header());
    csv.push('\n');
    for report in &reports {
        csv.push_str(&report.csv_row());
        csv.push('\n');
    }
    write_file(&out_dir.join("sweep.csv"), &csv)?;
    let json = serde_json::to_string_pretty(&reports).expect("reports serialize");
    write_file(&out_dir.join("sweep.json"), &json)?;
    Ok(reports)
}

/// Outcome of the exhaustive conformance suites.
#[derive(Debug, Clone, Serialize)]
pub struct ConformanceReport {
    pub posit_pairs: u64,
    pub posit_mismatches: Vec<String>,
    pub booth_operands: u64,
    pub booth_mismatches: Vec<String>,
}

impl ConformanceReport {
    pub fn passed(&self) -> bool {
        self.posit_mismatches.is_empty() && self.booth_mismatches.is_empty()
    }
}

/// `conformance`: every multiplier input pair against the exact-product
/// oracle, every Booth operand against recombination, with CSV dumps.
pub fn cmd_conformance(out_dir: &Path) -> Result<ConformanceReport, RunnerError> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut report = ConformanceReport {
        posit_pairs: 0,
        posit_mismatches: Vec::new(),
        booth_operands: 0,
        booth_mismatches: Vec::new(),
    };

    let posit_path = out_dir.join("posit_conformance.csv");
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(&posit_path).map_err(io_err(&posit_path))?,
    );
    writeln!(out, "a_bits,b_bits,result_bits,mode,pe_cells").map_err(io_err(&posit_path))?;
    for a in 0u16..=255 {
        let da = DaPositWord::new(PositWord(a as u8));
        for b in 0u16..=255 {
            let db = DaPositWord::new(PositWord(b as u8));
            let (product, cost) = posit::da_multiply(da, db);
            report.posit_pairs += 1;

            // Oracle route: decode to exact f64, multiply, re-encode from
            // the float side.
            let expect = if da.word.is_nar() || db.word.is_nar() {
                PositWord::NAR
            } else {
                let exact =
                    posit::decode_posit(da.word).to_f64() * posit::decode_posit(db.word).to_f64();
                posit::encode_f64(exact)
            };
            if product != expect && report.posit_mismatches.len() < 10 {
                report.posit_mismatches.push(format!(
                    "{:#04x} * {:#04x}: got {:#04x}, expected {:#04x}",
                    a, b, product.0, expect.0
                ));
            }
            let mode = da.mode.min(db.mode);
            writeln!(
                out,
                "{},{},{},{},{}",
                a, b, product.0, mode, cost.pe_cells
            )
            .map_err(io_err(&posit_path))?;
        }
    }
    out.flush().map_err(io_err(&posit_path))?;

    let booth_path = out_dir.join("booth_conformance.csv");
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(&booth_path).map_err(io_err(&booth_path))?,
    );
    writeln!(out, "operand,radix,digits,recombined").map_err(io_err(&booth_path))?;
    for x in i8::MIN..=i8::MAX {
        report.booth_operands += 1;
        for radix in [Radix::Radix4, Radix::Radix8] {
            let digits = booth_encode(x, radix);
            let recombined = digits.recombine();
            let expected_len = radix.digit_count();
            if (recombined != i32::from(x) || digits.len != expected_len)
                && report.booth_mismatches.len() < 10
            {
                report
                    .booth_mismatches
                    .push(format!("{x} under {radix}: recombined {recombined}"));
            }
            let rendered: Vec<String> = digits.digits[..digits.len]
                .iter()
                .map(|d| d.to_string())
                .collect();
            writeln!(out, "{},{},{},{}", x, radix, rendered.join(" "), recombined)
                .map_err(io_err(&booth_path))?;
        }
    }
    out.flush().map_err(io_err(&booth_path))?;
    Ok(report)
}

/// Convenience wrapper used by tests: sweep output paths.
pub fn sweep_paths(out_dir: &Path) -> (PathBuf, PathBuf) {
    (out_dir.join("sweep.csv"), out_dir.join("sweep.json"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conformance_is_clean() {
        let dir = tempfile::tempdir().unwrap();
        let report = cmd_conformance(dir.path()).unwrap();
        assert!(report.passed(), "{report:?}");
        assert_eq!(report.posit_pairs, 65_536);
        assert_eq!(report.booth_operands, 256);
        assert!(dir.path().join("posit_conformance.csv").exists());
        assert!(dir.path().join("booth_conformance.csv").exists());
    }

    #[test]
    fn bad_sample_rate_rejected() {
        let config = RunConfig::default();
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            cmd_audit(&config, 0.0, dir.path()),
            Err(RunnerError::BadSampleRate(_))
        ));
        assert!(matches!(
            cmd_audit(&config, 1.5, dir.path()),
            Err(RunnerError::BadSampleRate(_))
        ));
    }

    #[test]
    fn empty_grid_rejected() {
        let config = RunConfig::default();
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            cmd_sweep(&config, &SweepGrid::new(), dir.path()),
            Err(RunnerError::EmptyGrid)
        ));
    }
}
