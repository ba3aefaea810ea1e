//! Functional simulator and cost model of the DSPE edge-inference datapath.
//!
//! The crate is organized around the three datapath techniques plus the
//! machinery to drive them:
//!
//! * [`posit`] — posit-8 codec, DA-Posit compression modes and the exact
//!   mode-branched multiplier with its PE-activation cost model.
//! * [`booth`] — radix-4/8 Booth encoding, bit-variation statistics,
//!   Bayesian path selection, flip-minimizing batch ordering and the
//!   Booth-LUT replay cache.
//! * [`mips`] — similarity sorter, dual-hash Merkle trees, the three-way
//!   Early-Skip / Diff-Reuse / Full-Compute decision and the offline root
//!   audit.
//! * [`sim`] — behavioral model of the four-core datapath that runs toy
//!   attention/MoE workloads through the techniques above and charges every
//!   event to a cost ledger.
//! * [`workload`] — seeded trace generation and tensor file I/O.
//! * [`config`] / [`report`] / [`runner`] — run configuration, report
//!   emission and the command entry points used by the CLI.

pub mod booth;
pub mod config;
pub mod mips;
pub mod posit;
pub mod report;
pub mod runner;
pub mod sim;
pub mod workload;
