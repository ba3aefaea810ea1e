//! Behavioral model of the DSPE datapath: four attention cores of 64 PEs
//! each behind a buffer/SRAM hierarchy, driving toy attention and MoE
//! kernels through the pruning, Booth and posit stages while charging every
//! event to the cost ledger.

mod buffers;
pub mod ledger;
mod model;
mod run;

pub use buffers::{Buffer, BufferKind};
pub use ledger::{CostLedger, CostWeights};
pub use model::{
    attention, mla, moe, softmax, Expert, KvCache, Matrix, ModelDims, ModelError, ToyModel,
};
pub use run::{
    baseline_run, run_decode, ArchConfig, ArchError, DecisionCounts, DecisionRow, EngineOptions,
    FeatureToggles, MipsSettings, RunOutput,
};
