//! The decode engine: runs a token trace through the toy model on the
//! modeled datapath, window by window, charging every event to the ledger.
//!
//! Dataflow per window: tokens enter the similarity sorter, projections
//! (QKV plus gate) run in sorted order under the pruning decision,
//! attention runs in arrival order against the causal KV prefix, expert
//! evaluation runs in sorted order again, and outputs scatter back to
//! arrival positions. With every feature off the same loop degenerates to
//! a plain charged forward pass whose outputs are bit-identical to the
//! pure model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::booth::{
    execute_generic, execute_plain, BatchRecord, GenericBatch, MblmConfig, MblmState, OperandKey,
};
use crate::mips::{
    decide, AuditRecord, DecisionKind, DecisionOutcome, HistoryLut, MipsThresholds, Projection,
    ReferenceStore, SortedWindow, TreeParams,
};
use crate::posit::{self, product_table, PositWord};
use crate::sim::buffers::{Buffer, BufferKind};
use crate::sim::ledger::{CostLedger, CostWeights};
use crate::sim::model::{softmax, Matrix, ModelError, ToyModel};
use crate::workload::WorkloadTrace;

/// Datapath geometry and cost weights.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ArchConfig {
    pub cores: u32,
    pub pes_per_core: u32,
    pub parameter_buffer_bytes: usize,
    pub weight_buffer_bytes: usize,
    pub qk_sram_bytes: usize,
    pub v_sram_bytes: usize,
    pub input_buffer_bytes: usize,
    pub output_buffer_bytes: usize,
    pub cost_weights: CostWeights,
}

impl Default for ArchConfig {
    fn default() -> ArchConfig {
        ArchConfig {
            cores: 4,
            pes_per_core: 64,
            parameter_buffer_bytes: 24 * 1024,
            weight_buffer_bytes: 48 * 1024,
            qk_sram_bytes: 48 * 1024,
            v_sram_bytes: 48 * 1024,
            input_buffer_bytes: 8 * 1024,
            output_buffer_bytes: 8 * 1024,
            cost_weights: CostWeights::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ArchError {
    #[error("buffer capacity {name} must be positive")]
    EmptyBuffer { name: &'static str },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tree(#[from] crate::mips::hash::TreeConfigError),
    #[error("trace d_model {trace} does not match model d_model {model}")]
    TraceModelMismatch { trace: usize, model: usize },
}

impl ArchConfig {
    pub fn validate(&self) -> Result<(), ArchError> {
        for (name, v) in [
            ("parameter_buffer_bytes", self.parameter_buffer_bytes),
            ("weight_buffer_bytes", self.weight_buffer_bytes),
            ("qk_sram_bytes", self.qk_sram_bytes),
            ("v_sram_bytes", self.v_sram_bytes),
            ("input_buffer_bytes", self.input_buffer_bytes),
            ("output_buffer_bytes", self.output_buffer_bytes),
        ] {
            if v == 0 {
                return Err(ArchError::EmptyBuffer { name });
            }
        }
        Ok(())
    }
}

/// Which datapath techniques are active.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureToggles {
    pub mips: bool,
    pub mblm: bool,
    pub dappm: bool,
}

/// Pruning-stage geometry.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MipsSettings {
    pub d_low: usize,
    pub leaves: usize,
    /// Sorter window; tokens are processed window by window.
    pub window: usize,
    pub reference_ring: usize,
    pub history_capacity: usize,
    /// With decisions off the sorter still reorders processing, but every
    /// stage computes; outputs must match the feature-off run exactly.
    pub decisions_enabled: bool,
}

impl Default for MipsSettings {
    fn default() -> MipsSettings {
        MipsSettings {
            d_low: 32,
            leaves: 8,
            window: 16,
            reference_ring: 4,
            history_capacity: 256,
            decisions_enabled: true,
        }
    }
}

/// One line of the decision trace.
#[derive(Debug, Clone)]
pub struct DecisionRow {
    pub token: u64,
    pub expert: u32,
    pub level: u32,
    pub delta_h: u32,
    pub decision: &'static str,
    pub reused_ref: Option<u64>,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq, Eq)]
pub struct DecisionCounts {
    pub early_skip: u64,
    pub diff_reuse: u64,
    pub full_compute: u64,
}

/// Everything a run produces.
#[derive(Debug)]
pub struct RunOutput {
    pub outputs: Vec<Vec<f32>>,
    pub ledger: CostLedger,
    pub decisions: DecisionCounts,
    pub decision_rows: Vec<DecisionRow>,
    pub batch_records: Vec<BatchRecord>,
    pub audit_records: Vec<AuditRecord>,
}

/// Knobs the runner passes through to the engine.
#[derive(Debug, Clone)]
pub struct EngineOptions {
    pub features: FeatureToggles,
    pub mips: MipsSettings,
    pub thresholds: MipsThresholds,
    pub mblm: MblmConfig,
    pub lut_capacity: usize,
    pub seed: u64,
    /// Probability that a pruning decision is retained for the offline
    /// audit.
    pub audit_sample_rate: f64,
    /// Keep per-decision and per-batch trace rows.
    pub trace: bool,
}

impl Default for EngineOptions {
    fn default() -> EngineOptions {
        EngineOptions {
            features: FeatureToggles::default(),
            mips: MipsSettings::default(),
            thresholds: MipsThresholds::default(),
            mblm: MblmConfig::default(),
            lut_capacity: 4,
            seed: 0,
            audit_sample_rate: 0.0,
            trace: false,
        }
    }
}

/// Decoded value of every posit pattern, for the hot path.
fn posit_value_table() -> &'static [f32; 256] {
    static TABLE: std::sync::OnceLock<[f32; 256]> = std::sync::OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [0.0f32; 256];
        for (bits, slot) in t.iter_mut().enumerate() {
            let d = posit::decode_posit(PositWord(bits as u8));
            *slot = if d.is_finite() { d.to_f64() as f32 } else { 0.0 };
        }
        t
    })
}

/// A vector as the datapath stores it: quantized values plus the operand
/// keys the Booth stage works on.
#[derive(Debug, Clone, Default)]
struct QVec {
    values: Vec<f32>,
    keys: Vec<OperandKey>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Arith {
    F32,
    Posit,
}

fn quantize_scalar(x: f32, arith: Arith) -> (f32, OperandKey) {
    let w = posit::encode_f64(f64::from(x));
    match arith {
        Arith::F32 => (
            x,
            OperandKey {
                pattern: w.0,
                exact: u64::from(x.to_bits()),
            },
        ),
        Arith::Posit => (
            posit_value_table()[usize::from(w.0)],
            OperandKey {
                pattern: w.0,
                exact: u64::from(w.0),
            },
        ),
    }
}

fn quantize_vec(xs: &[f32], arith: Arith) -> QVec {
    let mut values = Vec::with_capacity(xs.len());
    let mut keys = Vec::with_capacity(xs.len());
    for &x in xs {
        let (v, k) = quantize_scalar(x, arith);
        values.push(v);
        keys.push(k);
    }
    QVec { values, keys }
}

/// Product value of two quantized operands under the given arithmetic.
/// The left operand carries full f64 precision so the float path can feed
/// softmax probabilities through unrounded.
#[inline]
fn product_value(arith: Arith, a: (f64, OperandKey), b: (f32, OperandKey)) -> f64 {
    match arith {
        Arith::F32 => a.0 * f64::from(b.0),
        Arith::Posit => f64::from(
            posit_value_table()[usize::from(product_table().multiply(a.1.pattern, b.1.pattern))],
        ),
    }
}

#[inline]
fn pe_cost(arith: Arith, a: OperandKey, b: OperandKey) -> u32 {
    match arith {
        Arith::F32 => 16,
        Arith::Posit => product_table().pe_cells(a.pattern, b.pattern),
    }
}

/// A weight matrix in datapath form.
#[derive(Debug, Clone)]
struct QMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f32>,
    keys: Vec<OperandKey>,
}

impl QMatrix {
    fn from_matrix(m: &Matrix, arith: Arith) -> QMatrix {
        let q = quantize_vec(&m.data, arith);
        QMatrix {
            rows: m.rows,
            cols: m.cols,
            values: q.values,
            keys: q.keys,
        }
    }
}

/// Stable ids for the weight planes, used for buffer residency.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layer {
    Wq,
    Wk,
    Wv,
    Wo,
    Gate,
    ExpertUp(usize),
    ExpertDown(usize),
}

impl Layer {
    fn id(self) -> u64 {
        match self {
            Layer::Wq => 0,
            Layer::Wk => 1,
            Layer::Wv => 2,
            Layer::Wo => 3,
            Layer::Gate => 4,
            Layer::ExpertUp(e) => 5 + 2 * e as u64,
            Layer::ExpertDown(e) => 6 + 2 * e as u64,
        }
    }
}

/// Per-expert pruning state: reference history, difference LUT and the
/// payloads reachable from them.
struct ExpertMips {
    store: ReferenceStore,
    lut: HistoryLut,
    payloads: Vec<(u64, StagePayload)>,
}

impl ExpertMips {
    fn new(params: &TreeParams, settings: &MipsSettings) -> ExpertMips {
        ExpertMips {
            store: ReferenceStore::new(settings.reference_ring),
            lut: HistoryLut::new(params.levels, settings.history_capacity),
            payloads: Vec::new(),
        }
    }

    fn payload(&self, id: u64) -> Option<&StagePayload> {
        self.payloads
            .iter()
            .find(|(pid, _)| *pid == id)
            .map(|(_, p)| p)
    }

    fn remember(&mut self, id: u64, payload: StagePayload) {
        const PAYLOAD_KEEP: usize = 64;
        self.payloads.push((id, payload));
        if self.payloads.len() > PAYLOAD_KEEP {
            self.payloads.remove(0);
        }
    }
}

/// What a pruned stage reuses instead of recomputing.
#[derive(Debug, Clone)]
enum StagePayload {
    /// QKV projections plus gate logits.
    Projections { q: QVec, k: QVec, v: QVec, gate: QVec },
    /// One expert's FFN output.
    ExpertOut(QVec),
}

struct Engine<'m> {
    model: &'m ToyModel,
    arith: Arith,
    opts: EngineOptions,
    qk_capacity_entries: usize,
    v_capacity_entries: usize,
    // Quantized weight planes.
    w_q: QMatrix,
    w_k: QMatrix,
    w_v: QMatrix,
    w_o: QMatrix,
    w_gate: QMatrix,
    experts_up: Vec<QMatrix>,
    experts_down: Vec<QMatrix>,
    weight_buffer: Buffer,
    // KV cache in datapath form.
    kv_keys: Vec<Vec<QVec>>,
    kv_values: Vec<Vec<QVec>>,
    // MBLM state.
    mblm_state: MblmState,
    // MIPS state.
    tree_params: Option<TreeParams>,
    projection: Option<Projection>,
    mips_experts: Vec<ExpertMips>,
    window: SortedWindow,
    pending_outcome: Option<(u32, DecisionOutcome)>,
    audit_rng: ChaCha8Rng,
    // Accounting.
    ledger: CostLedger,
    decisions: DecisionCounts,
    decision_rows: Vec<DecisionRow>,
    batch_records: Vec<BatchRecord>,
    audit_records: Vec<AuditRecord>,
}

pub fn run_decode(
    trace: &WorkloadTrace,
    model: &ToyModel,
    arch: &ArchConfig,
    opts: &EngineOptions,
) -> Result<RunOutput, ArchError> {
    arch.validate()?;
    if trace.spec.d_model != model.dims.d_model {
        return Err(ArchError::TraceModelMismatch {
            trace: trace.spec.d_model,
            model: model.dims.d_model,
        });
    }
    let mut engine = Engine::new(model, arch, opts.clone())?;
    engine.run(trace)
}

/// The exact full-compute comparator: every feature off, float datapath.
pub fn baseline_run(
    trace: &WorkloadTrace,
    model: &ToyModel,
    arch: &ArchConfig,
) -> Result<RunOutput, ArchError> {
    run_decode(trace, model, arch, &EngineOptions::default())
}

impl<'m> Engine<'m> {
    fn new(
        model: &'m ToyModel,
        arch: &ArchConfig,
        opts: EngineOptions,
    ) -> Result<Engine<'m>, ArchError> {
        let arith = if opts.features.dappm {
            Arith::Posit
        } else {
            Arith::F32
        };
        let elem_bytes = match arith {
            Arith::F32 => 4,
            Arith::Posit => 1,
        };
        let (tree_params, projection, mips_experts) = if opts.features.mips {
            let params = TreeParams::new(opts.seed, opts.mips.d_low, opts.mips.leaves)?;
            let projection = Projection::seeded(opts.seed, model.dims.d_model, opts.mips.d_low);
            let experts = (0..=model.dims.experts)
                .map(|_| ExpertMips::new(&params, &opts.mips))
                .collect();
            (Some(params), Some(projection), experts)
        } else {
            (None, None, Vec::new())
        };
        let window_capacity = opts.mips.window.max(1);
        let kv_entry_bytes = (model.dims.d_k * elem_bytes).max(1);
        let mut ledger = CostLedger::default();
        // Parameters (projection matrix, classifier tables) load once into
        // the parameter buffer.
        if opts.features.mips && opts.mips.decisions_enabled {
            ledger.dram_reads += (model.dims.d_model * opts.mips.d_low) as u64;
        }
        Ok(Engine {
            arith,
            qk_capacity_entries: arch.qk_sram_bytes / kv_entry_bytes,
            v_capacity_entries: arch.v_sram_bytes / kv_entry_bytes,
            w_q: QMatrix::from_matrix(&model.w_q, arith),
            w_k: QMatrix::from_matrix(&model.w_k, arith),
            w_v: QMatrix::from_matrix(&model.w_v, arith),
            w_o: QMatrix::from_matrix(&model.w_o, arith),
            w_gate: QMatrix::from_matrix(&model.w_gate, arith),
            experts_up: model
                .experts
                .iter()
                .map(|e| QMatrix::from_matrix(&e.w_up, arith))
                .collect(),
            experts_down: model
                .experts
                .iter()
                .map(|e| QMatrix::from_matrix(&e.w_down, arith))
                .collect(),
            weight_buffer: Buffer::new(BufferKind::Weight, arch.weight_buffer_bytes, 8 * elem_bytes),
            kv_keys: vec![Vec::new(); model.dims.heads],
            kv_values: vec![Vec::new(); model.dims.heads],
            mblm_state: MblmState::new(opts.lut_capacity),
            tree_params,
            projection,
            mips_experts,
            window: SortedWindow::new(window_capacity),
            pending_outcome: None,
            audit_rng: ChaCha8Rng::seed_from_u64(opts.seed ^ 0xA0D1_7000_0000_0003),
            ledger,
            decisions: DecisionCounts::default(),
            decision_rows: Vec::new(),
            batch_records: Vec::new(),
            audit_records: Vec::new(),
            model,
            opts,
        })
    }

    fn run(&mut self, trace: &WorkloadTrace) -> Result<RunOutput, ArchError> {
        let total = trace.tokens.len();
        let mut outputs: Vec<Vec<f32>> = vec![Vec::new(); total];
        let window_len = if self.opts.features.mips {
            self.opts.mips.window.max(1)
        } else {
            1
        };
        let mut start = 0;
        while start < total {
            let end = (start + window_len).min(total);
            self.process_window(trace, start, end, &mut outputs)?;
            start = end;
        }
        Ok(RunOutput {
            outputs,
            ledger: std::mem::take(&mut self.ledger),
            decisions: self.decisions,
            decision_rows: std::mem::take(&mut self.decision_rows),
            batch_records: std::mem::take(&mut self.batch_records),
            audit_records: std::mem::take(&mut self.audit_records),
        })
    }

    fn process_window(
        &mut self,
        trace: &WorkloadTrace,
        start: usize,
        end: usize,
        outputs: &mut [Vec<f32>],
    ) -> Result<(), ArchError> {
        let dims = self.model.dims;

        // Phase A: tokens enter the input buffer and the sorter decides
        // the processing order.
        let mut order: Vec<usize> = (start..end).collect();
        if self.opts.features.mips {
            self.window.clear();
            for &t in order.iter() {
                self.ledger.sram_writes += dims.d_model as u64;
                let before = self.window.cosines_computed;
                self.window.insert(t as u64, trace.tokens[t].clone());
                let computed = self.window.cosines_computed - before;
                self.ledger.overhead_macs += computed * dims.d_model as u64;
                self.ledger.sram_reads += computed * dims.d_model as u64;
            }
            order = self.window.entries().map(|(id, _)| id as usize).collect();
        } else {
            self.ledger.sram_writes += ((end - start) * dims.d_model) as u64;
        }

        // Phase B: projections (QKV and gate) in sorted order. The KV
        // cache slots are indexed by arrival position, so causality
        // survives the permutation.
        for h in 0..dims.heads {
            self.kv_keys[h].resize(end, QVec::default());
            self.kv_values[h].resize(end, QVec::default());
        }
        let mut projections: Vec<Option<(QVec, QVec)>> = vec![None; end - start];
        for &t in &order {
            let x = quantize_vec(&trace.tokens[t], self.arith);
            let (q, k, v, gate) = self.project_token(t as u64, &x)?;
            for h in 0..dims.heads {
                let slice = h * dims.d_k..(h + 1) * dims.d_k;
                self.charge_kv_write(t);
                self.kv_keys[h][t] = QVec {
                    values: k.values[slice.clone()].to_vec(),
                    keys: k.keys[slice.clone()].to_vec(),
                };
                self.kv_values[h][t] = QVec {
                    values: v.values[slice.clone()].to_vec(),
                    keys: v.keys[slice].to_vec(),
                };
            }
            projections[t - start] = Some((q, gate));
        }

        // Phase C: attention in arrival order over the causal prefix.
        let mut attn_out: Vec<Vec<f32>> = Vec::with_capacity(end - start);
        for t in start..end {
            let q = projections[t - start]
                .as_ref()
                .map(|(q, _)| q.clone())
                .expect("projected");
            let concat = self.attention_token(t, &q)?;
            let concat_q = self.requantize(concat);
            let o = self.matvec(Layer::Wo, &concat_q)?;
            attn_out.push(o.values);
        }

        // Phase D: sparse experts in sorted order, then outputs scatter
        // back to arrival positions.
        for &t in &order {
            let x = quantize_vec(&trace.tokens[t], self.arith);
            let gate_logits = projections[t - start]
                .as_ref()
                .map(|(_, g)| g.clone())
                .expect("projected");
            let gate = self.sparse_gate_quantized(&gate_logits);
            let moe = self.moe_token(t as u64, &x, &gate)?;
            let attn = &attn_out[t - start];
            let y: Vec<f32> = attn.iter().zip(&moe).map(|(&a, &b)| a + b).collect();
            self.ledger.sram_writes += dims.d_model as u64;
            outputs[t] = self.requantize(y).values;
        }
        Ok(())
    }

    /// Quantized top-k gate from quantized logits; mirrors the model's
    /// tie-breaking.
    fn sparse_gate_quantized(&self, logits: &QVec) -> Vec<(usize, f32, OperandKey)> {
        let probs = softmax(
            &logits
                .values
                .iter()
                .map(|&v| f64::from(v))
                .collect::<Vec<_>>(),
        );
        let mut indexed: Vec<(usize, f64)> = probs.into_iter().enumerate().collect();
        indexed.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        indexed.truncate(self.model.dims.top_k);
        let sum: f64 = indexed.iter().map(|(_, p)| p).sum();
        indexed
            .into_iter()
            .map(|(i, p)| {
                let (v, key) = quantize_scalar((p / sum) as f32, self.arith);
                (i, v, key)
            })
            .collect()
    }

    fn requantize(&self, xs: Vec<f32>) -> QVec {
        quantize_vec(&xs, self.arith)
    }

    /// Stage 0: QKV projections plus gate logits under the pruning
    /// decision.
    fn project_token(
        &mut self,
        token: u64,
        x: &QVec,
    ) -> Result<(QVec, QVec, QVec, QVec), ArchError> {
        let dims = self.model.dims;
        let hd = dims.heads * dims.d_k;
        let demanded = (3 * hd * dims.d_model + dims.experts * dims.d_model) as u64;

        let deciding = self.opts.features.mips && self.opts.mips.decisions_enabled;
        if deciding {
            if let Some(StagePayload::Projections { q, k, v, gate }) =
                self.mips_decide(token, 0, x, demanded)?
            {
                return Ok((q, k, v, gate));
            }
        }
        let q = self.matvec(Layer::Wq, x)?;
        let k = self.matvec(Layer::Wk, x)?;
        let v = self.matvec(Layer::Wv, x)?;
        let gate = self.matvec(Layer::Gate, x)?;
        if deciding {
            self.mips_register(
                0,
                StagePayload::Projections {
                    q: q.clone(),
                    k: k.clone(),
                    v: v.clone(),
                    gate: gate.clone(),
                },
            );
        }
        Ok((q, k, v, gate))
    }

    /// MoE sublayer under per-expert pruning.
    fn moe_token(
        &mut self,
        token: u64,
        x: &QVec,
        gate: &[(usize, f32, OperandKey)],
    ) -> Result<Vec<f32>, ArchError> {
        let dims = self.model.dims;
        let mut out = vec![0.0f32; dims.d_model];
        for &(expert, weight, wkey) in gate {
            if weight == 0.0 {
                continue;
            }
            let demanded = (2 * dims.d_ff * dims.d_model) as u64;
            let deciding = self.opts.features.mips && self.opts.mips.decisions_enabled;
            let ffn = if deciding {
                match self.mips_decide(token, (expert + 1) as u32, x, demanded)? {
                    Some(StagePayload::ExpertOut(y)) => y,
                    Some(_) => unreachable!("expert payload is its output"),
                    None => {
                        let y = self.expert_ffn(expert, x)?;
                        self.mips_register((expert + 1) as u32, StagePayload::ExpertOut(y.clone()));
                        y
                    }
                }
            } else {
                self.expert_ffn(expert, x)?
            };
            // Gate scaling on the scalar path.
            for (o, (&v, &key)) in out.iter_mut().zip(ffn.values.iter().zip(&ffn.keys)) {
                self.ledger.ops_demanded += 1;
                self.ledger.macs += 1;
                let pe = pe_cost(self.arith, wkey, key);
                self.ledger.pe_cell_activations += u64::from(pe);
                *o += product_value(self.arith, (weight, wkey), (v, key)) as f32;
            }
        }
        Ok(out)
    }

    fn expert_ffn(&mut self, expert: usize, x: &QVec) -> Result<QVec, ArchError> {
        let hidden = self.matvec(Layer::ExpertUp(expert), x)?;
        let rectified: Vec<f32> = hidden.values.iter().map(|&v| v.max(0.0)).collect();
        let hidden_q = self.requantize(rectified);
        self.matvec(Layer::ExpertDown(expert), &hidden_q)
    }

    /// Tile of a weight plane as lane arrays for the batch pipeline.
    fn tile_data(
        &self,
        layer: Layer,
        col: usize,
        base: usize,
        lanes: usize,
    ) -> ([OperandKey; 8], [f32; 8], [bool; 8]) {
        let m = self.layer_matrix(layer);
        let mut keys = [OperandKey::from_pattern(0); 8];
        let mut values = [0.0f32; 8];
        let mut live = [false; 8];
        for lane in 0..lanes {
            let idx = (base + lane) * m.cols + col;
            keys[lane] = m.keys[idx];
            values[lane] = m.values[idx];
            live[lane] = true;
        }
        (keys, values, live)
    }

    fn layer_matrix(&self, layer: Layer) -> &QMatrix {
        match layer {
            Layer::Wq => &self.w_q,
            Layer::Wk => &self.w_k,
            Layer::Wv => &self.w_v,
            Layer::Wo => &self.w_o,
            Layer::Gate => &self.w_gate,
            Layer::ExpertUp(e) => &self.experts_up[e],
            Layer::ExpertDown(e) => &self.experts_down[e],
        }
    }

    /// Charged matvec `y = W x` through the weight buffer and, when
    /// enabled, the Booth batch pipeline. Accumulation is column-major so
    /// the result does not depend on the batch execution order.
    fn matvec(&mut self, layer: Layer, x: &QVec) -> Result<QVec, ArchError> {
        let (rows, cols) = {
            let m = self.layer_matrix(layer);
            (m.rows, m.cols)
        };
        if x.values.len() != cols {
            return Err(ModelError::DimMismatch {
                expected: cols,
                got: x.values.len(),
            }
            .into());
        }
        self.ledger.sram_reads += cols as u64;
        let mut acc = vec![0.0f64; rows];
        let arith = self.arith;

        for j in 0..cols {
            let xv = f64::from(x.values[j]);
            let xk = x.keys[j];
            for tile in 0..rows.div_ceil(8) {
                let base = tile * 8;
                let lanes = (rows - base).min(8);
                self.charge_weight_tile(layer, j, tile, lanes);
                let (keys, values, live) = self.tile_data(layer, j, base, lanes);
                let gb = GenericBatch {
                    weight: xk,
                    activations: keys,
                    live,
                };
                let compute =
                    |lane: usize| product_payload(arith, (xv, xk), (values[lane], keys[lane]));
                let pe = |lane: usize| pe_cost(arith, xk, keys[lane]);

                let payloads = if self.opts.features.mblm {
                    let (payloads, record) = execute_generic(
                        &gb,
                        &self.opts.mblm,
                        &mut self.mblm_state,
                        &mut self.ledger,
                        compute,
                        |replayed, truth| (f64::from_bits(replayed) - f64::from_bits(truth)).abs(),
                        pe,
                    );
                    if self.opts.trace {
                        self.batch_records.push(record);
                    }
                    payloads
                } else {
                    execute_plain(&gb, &mut self.ledger, compute, pe)
                };
                for lane in 0..lanes {
                    acc[base + lane] += f64::from_bits(payloads[lane]);
                }
            }
        }

        self.ledger.sram_writes += rows as u64;
        let values: Vec<f32> = acc.into_iter().map(|v| v as f32).collect();
        Ok(self.requantize(values))
    }

    fn charge_weight_tile(&mut self, layer: Layer, col: usize, tile: usize, elems: usize) {
        let id = (layer.id() << 24) | ((col as u64) << 8) | tile as u64;
        let hit = self.weight_buffer.access(id);
        if hit {
            self.ledger.sram_reads += elems as u64;
        } else {
            self.ledger.dram_reads += elems as u64;
            self.ledger.sram_writes += elems as u64;
            self.ledger.sram_reads += elems as u64;
        }
    }

    fn charge_kv_write(&mut self, t: usize) {
        let d_k = self.model.dims.d_k as u64;
        if t < self.qk_capacity_entries {
            self.ledger.sram_writes += d_k;
        } else {
            self.ledger.dram_writes += d_k;
        }
        if t < self.v_capacity_entries {
            self.ledger.sram_writes += d_k;
        } else {
            self.ledger.dram_writes += d_k;
        }
    }

    fn charge_kv_read(&mut self, t: usize, value_side: bool) {
        let d_k = self.model.dims.d_k as u64;
        let cap = if value_side {
            self.v_capacity_entries
        } else {
            self.qk_capacity_entries
        };
        if t < cap {
            self.ledger.sram_reads += d_k;
        } else {
            self.ledger.dram_reads += d_k;
        }
    }

    /// One head's worth of cache lane data for a score tile.
    fn score_tile(
        &self,
        head: usize,
        dim: usize,
        base: usize,
        lanes: usize,
    ) -> ([OperandKey; 8], [f32; 8], [bool; 8]) {
        let mut keys = [OperandKey::from_pattern(0); 8];
        let mut values = [0.0f32; 8];
        let mut live = [false; 8];
        for lane in 0..lanes {
            let kv = &self.kv_keys[head][base + lane];
            keys[lane] = kv.keys[dim];
            values[lane] = kv.values[dim];
            live[lane] = true;
        }
        (keys, values, live)
    }

    /// One cached value row as lane data for a weighted-sum tile.
    fn value_tile(
        &self,
        head: usize,
        pos: usize,
        base: usize,
        lanes: usize,
    ) -> ([OperandKey; 8], [f32; 8], [bool; 8]) {
        let kv = &self.kv_values[head][pos];
        let mut keys = [OperandKey::from_pattern(0); 8];
        let mut values = [0.0f32; 8];
        let mut live = [false; 8];
        for lane in 0..lanes {
            keys[lane] = kv.keys[base + lane];
            values[lane] = kv.values[base + lane];
            live[lane] = true;
        }
        (keys, values, live)
    }

    /// Attention for one token: scores against the causal prefix, softmax,
    /// probability-weighted value sum. Returns the concatenated head
    /// outputs (unquantized).
    fn attention_token(&mut self, t: usize, q: &QVec) -> Result<Vec<f32>, ArchError> {
        let dims = self.model.dims;
        let d_k = dims.d_k;
        let scale = 1.0 / (d_k as f64).sqrt();
        let arith = self.arith;
        let mut concat = Vec::with_capacity(dims.heads * d_k);
        for h in 0..dims.heads {
            let q_values: Vec<f32> = q.values[h * d_k..(h + 1) * d_k].to_vec();
            let q_keys: Vec<OperandKey> = q.keys[h * d_k..(h + 1) * d_k].to_vec();

            // Scores over cache positions 0..=t.
            let mut scores = vec![0.0f64; t + 1];
            for i in 0..=t {
                self.charge_kv_read(i, false);
            }
            if self.opts.features.mblm {
                for (dim, (&qv, &qk)) in q_values.iter().zip(&q_keys).enumerate() {
                    for tile in 0..(t + 1).div_ceil(8) {
                        let base = tile * 8;
                        let lanes = (t + 1 - base).min(8);
                        let (keys, values, live) = self.score_tile(h, dim, base, lanes);
                        let gb = GenericBatch {
                            weight: qk,
                            activations: keys,
                            live,
                        };
                        self.ledger.sram_reads += 1;
                        let (payloads, record) = execute_generic(
                            &gb,
                            &self.opts.mblm,
                            &mut self.mblm_state,
                            &mut self.ledger,
                            |lane| product_payload(arith, (qv, qk), (values[lane], keys[lane])),
                            |replayed, truth| {
                                (f64::from_bits(replayed) - f64::from_bits(truth)).abs()
                            },
                            |lane| pe_cost(arith, qk, keys[lane]),
                        );
                        for lane in 0..lanes {
                            scores[base + lane] += f64::from_bits(payloads[lane]);
                        }
                        if self.opts.trace {
                            self.batch_records.push(record);
                        }
                    }
                }
            } else {
                for i in 0..=t {
                    let mut acc = 0.0f64;
                    let mut pe_total = 0u64;
                    {
                        let kv = &self.kv_keys[h][i];
                        for dim in 0..d_k {
                            acc += product_value(
                                arith,
                                (q_values[dim], q_keys[dim]),
                                (kv.values[dim], kv.keys[dim]),
                            );
                            pe_total += u64::from(pe_cost(arith, q_keys[dim], kv.keys[dim]));
                        }
                    }
                    self.ledger.ops_demanded += d_k as u64;
                    self.ledger.macs += d_k as u64;
                    self.ledger.pe_cell_activations += pe_total;
                    scores[i] = acc;
                }
            }
            // Scale multiplies on the scalar path.
            for s in scores.iter_mut() {
                *s *= scale;
            }
            self.ledger.ops_demanded += (t + 1) as u64;
            self.ledger.macs += (t + 1) as u64;

            let probs = softmax(&scores);
            let probs_q: Vec<(f32, OperandKey)> = probs
                .iter()
                .map(|&p| quantize_scalar(p as f32, arith))
                .collect();

            // Probability-weighted value sum.
            let mut out = vec![0.0f64; d_k];
            for (i, &(pv, pk)) in probs_q.iter().enumerate() {
                self.charge_kv_read(i, true);
                self.ledger.sram_reads += 1;
                if self.opts.features.mblm {
                    for tile in 0..d_k.div_ceil(8) {
                        let base = tile * 8;
                        let lanes = (d_k - base).min(8);
                        let (keys, values, live) = self.value_tile(h, i, base, lanes);
                        let gb = GenericBatch {
                            weight: pk,
                            activations: keys,
                            live,
                        };
                        self.ledger.sram_reads += 1;
                        let (payloads, record) = execute_generic(
                            &gb,
                            &self.opts.mblm,
                            &mut self.mblm_state,
                            &mut self.ledger,
                            |lane| product_payload(arith, (pv, pk), (values[lane], keys[lane])),
                            |replayed, truth| {
                                (f64::from_bits(replayed) - f64::from_bits(truth)).abs()
                            },
                            |lane| pe_cost(arith, pk, keys[lane]),
                        );
                        for lane in 0..lanes {
                            out[base + lane] += f64::from_bits(payloads[lane]);
                        }
                        if self.opts.trace {
                            self.batch_records.push(record);
                        }
                    }
                } else {
                    let mut pe_total = 0u64;
                    {
                        let kv = &self.kv_values[h][i];
                        for dim in 0..d_k {
                            out[dim] += product_value(
                                arith,
                                (pv, pk),
                                (kv.values[dim], kv.keys[dim]),
                            );
                            pe_total += u64::from(pe_cost(arith, pk, kv.keys[dim]));
                        }
                    }
                    self.ledger.ops_demanded += d_k as u64;
                    self.ledger.macs += d_k as u64;
                    self.ledger.pe_cell_activations += pe_total;
                }
            }
            concat.extend(out.into_iter().map(|v| v as f32));
        }
        Ok(concat)
    }

    /// Run the pruning decision for (token, expert). Returns the payload
    /// to reuse, or None when the stage must compute.
    fn mips_decide(
        &mut self,
        token: u64,
        expert: u32,
        x: &QVec,
        demanded: u64,
    ) -> Result<Option<StagePayload>, ArchError> {
        self.pending_outcome = None;
        let params = self.tree_params.as_ref().expect("mips params");
        let projection = self.projection.as_ref().expect("mips projection");
        let v_low = crate::mips::project_low(&x.values, projection).map_err(|_| {
            ModelError::DimMismatch {
                expected: projection.d_model,
                got: x.values.len(),
            }
        })?;
        self.ledger.overhead_macs += (projection.d_model * projection.d_low) as u64;
        self.ledger.sram_reads += projection.d_model as u64;

        let state = &mut self.mips_experts[expert as usize];
        let outcome = decide(&v_low, params, &state.store, &mut state.lut, &self.opts.thresholds);
        self.ledger.overhead_macs += outcome.hash_macs;

        let (payload, label, reused, audit_ref) = match outcome.decision.kind {
            DecisionKind::EarlySkip { snapshot } => match state.payload(snapshot).cloned() {
                Some(p) => {
                    self.ledger.ops_demanded += demanded;
                    self.ledger.ops_skipped += demanded;
                    self.decisions.early_skip += 1;
                    let root = state.store.get(snapshot).map(|s| *s.tree.root());
                    (Some(p), "early_skip", Some(snapshot), root)
                }
                None => {
                    self.decisions.full_compute += 1;
                    (None, "full_compute", None, None)
                }
            },
            DecisionKind::DiffReuse { result } => match state.payload(result).cloned() {
                Some(p) => {
                    self.ledger.ops_demanded += demanded;
                    self.ledger.ops_reused += demanded;
                    self.ledger.approx_events += 1;
                    self.decisions.diff_reuse += 1;
                    let reference = outcome.band_levels.last().map(|&(_, _, s)| s);
                    let root = reference.and_then(|s| state.store.get(s).map(|s| *s.tree.root()));
                    (Some(p), "diff_reuse", Some(result), root)
                }
                None => {
                    self.decisions.full_compute += 1;
                    (None, "full_compute", None, None)
                }
            },
            DecisionKind::FullCompute => {
                self.decisions.full_compute += 1;
                (None, "full_compute", None, None)
            }
        };

        if self.opts.trace {
            self.decision_rows.push(DecisionRow {
                token,
                expert,
                level: outcome.decision.level,
                delta_h: outcome.decision.delta_h,
                decision: label,
                reused_ref: reused,
            });
        }
        if self.opts.audit_sample_rate > 0.0 && self.audit_rng.gen_bool(self.opts.audit_sample_rate)
        {
            self.audit_records.push(AuditRecord {
                token,
                expert,
                kind_label: label,
                v_low: outcome.tree.v_low.clone(),
                ref_root: audit_ref,
            });
        }

        // Stash the walk so a computed stage can register itself. Only a
        // genuine Full-Compute carries a complete tree; the rare fallback
        // where a reuse payload has aged out recomputes without
        // registering.
        if payload.is_none() && matches!(outcome.decision.kind, DecisionKind::FullCompute) {
            self.pending_outcome = Some((expert, outcome));
        }
        Ok(payload)
    }

    /// Register the computed stage as a new reference with its payload.
    fn mips_register(&mut self, expert: u32, payload: StagePayload) {
        let Some((pending_expert, outcome)) = self.pending_outcome.take() else {
            return;
        };
        debug_assert_eq!(pending_expert, expert);
        let state = &mut self.mips_experts[expert as usize];
        let result_id = state.store.next_id();
        for &(level, pattern, snapshot) in &outcome.band_levels {
            state.lut.register(level, pattern, snapshot, result_id);
        }
        let id = state.store.push(outcome.tree);
        debug_assert_eq!(id, result_id);
        state.remember(id, payload);
    }
}

/// Payload bits of one product under the active arithmetic.
#[inline]
fn product_payload(arith: Arith, a: (f32, OperandKey), b: (f32, OperandKey)) -> u64 {
    product_value(arith, a, b).to_bits()
}
