//! The full MBLM pipeline over one batch: detect, classify, select the
//! encoding path, order, replay or encode-and-multiply.
//!
//! The executor is generic over what a "product" is. The integer entry
//! point [`mblm_execute`] multiplies 8-bit operands exactly; the simulator
//! drives the same pipeline with posit or float payloads through
//! [`execute_generic`], keyed by the operands' 8-bit patterns.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::sim::ledger::CostLedger;

use super::batch::{build_bvm, invalid_detect, vst_slot, BoothBatch};
use super::bayes::{bn_classify, redundancy_score, BnModel};
use super::lut::{BoothLut, LutOutcome, OperandKey};
use super::order::{arrival_order, flip_cost_matrix, order_batch, path_cost};
use super::{bit_similarity, repeat_length, Radix};

/// Tunables of the MBLM stage.
#[derive(Debug, Clone)]
pub struct MblmConfig {
    pub r_zero_wgt: u8,
    pub r_zero_act: u8,
    /// Replay tolerance in activation bits; 0 keeps replays exact.
    pub t_match: u32,
    /// Redundancy score at or above this takes the radix-8 extended path.
    pub score_threshold: f64,
    pub model: BnModel,
    /// Comparator weight per digit flip.
    pub flip_weight: f64,
    /// Comparator weight per partial-product row.
    pub pp_row_weight: f64,
}

impl Default for MblmConfig {
    fn default() -> MblmConfig {
        MblmConfig {
            r_zero_wgt: 0,
            r_zero_act: 0,
            t_match: 0,
            score_threshold: super::bayes::PATH_SCORE_THRESHOLD,
            model: BnModel::uniform(),
            flip_weight: 1.0,
            pp_row_weight: 2.0,
        }
    }
}

/// Mutable state the pipeline carries across batches.
#[derive(Debug)]
pub struct MblmState {
    pub lut: BoothLut,
    pub batch_counter: u64,
}

impl MblmState {
    pub fn new(lut_capacity_per_slot: usize) -> MblmState {
        MblmState {
            lut: BoothLut::new(lut_capacity_per_slot),
            batch_counter: 0,
        }
    }
}

impl Default for MblmState {
    fn default() -> MblmState {
        MblmState::new(4)
    }
}

/// What happened to one batch, in trace-dump shape.
#[derive(Debug, Clone)]
pub struct BatchRecord {
    pub batch_id: u64,
    pub path: Radix,
    pub order: Vec<usize>,
    pub flips: u64,
    pub replays: u64,
    pub skips: u64,
    pub pp_rows: u64,
    pub score: f64,
}

/// A batch in pattern form for the generic executor.
#[derive(Debug, Clone, Copy)]
pub struct GenericBatch {
    pub weight: OperandKey,
    pub activations: [OperandKey; 8],
    /// Lanes the dataflow actually demands; the rest are padding.
    pub live: [bool; 8],
}

/// Mean bit-similarity and repeat-length over consecutive valid lanes in
/// arrival order; a lone lane reads as fully redundant evidence.
fn batch_features(batch: &BoothBatch) -> (f64, u32) {
    let lanes: Vec<usize> = batch.valid_lanes().collect();
    if lanes.len() < 2 {
        return (1.0, 8);
    }
    let mut bs_sum = 0.0;
    let mut rl_sum = 0u32;
    let pairs = lanes.len() - 1;
    for w in lanes.windows(2) {
        let a = batch.activations[w[0]] as u8;
        let b = batch.activations[w[1]] as u8;
        bs_sum += bit_similarity(a, b);
        rl_sum += repeat_length(a, b);
    }
    (bs_sum / pairs as f64, rl_sum / pairs as u32)
}

/// Modeled plan energy for the comparator.
fn plan_energy(flips: u32, lanes: usize, radix: Radix, config: &MblmConfig) -> f64 {
    let pp_rows = lanes as u64 * radix.digit_count() as u64;
    f64::from(flips) * config.flip_weight + pp_rows as f64 * config.pp_row_weight
}

/// Run one batch through detect, classify, order, replay-or-compute.
/// Products come back in arrival lane order as opaque payload bits
/// (skipped and padding lanes read 0, which is the zero product in both
/// payload domains). `compute` produces the exact payload of one lane;
/// `error_of(replayed, truth)` measures the magnitude of a tolerant
/// replay's deviation; `pe_cost` is charged per lane that actually
/// multiplies.
pub fn execute_generic<P, E, C>(
    gb: &GenericBatch,
    config: &MblmConfig,
    state: &mut MblmState,
    ledger: &mut CostLedger,
    compute: P,
    error_of: E,
    pe_cost: C,
) -> ([u64; 8], BatchRecord)
where
    P: Fn(usize) -> u64,
    E: Fn(u64, u64) -> f64,
    C: Fn(usize) -> u32,
{
    let batch_id = state.batch_counter;
    state.batch_counter += 1;

    ledger.ops_demanded += gb.live.iter().filter(|&&v| v).count() as u64;

    let mut patterns = [0i8; 8];
    for (p, key) in patterns.iter_mut().zip(&gb.activations) {
        *p = key.pattern as i8;
    }
    let mut detected = BoothBatch {
        weight: gb.weight.pattern as i8,
        activations: patterns,
        valid_mask: gb.live,
    };
    invalid_detect(&mut detected, config.r_zero_wgt, config.r_zero_act);

    let mut skips = 0u64;
    for lane in 0..8 {
        if gb.live[lane] && !detected.valid_mask[lane] {
            skips += 1;
            ledger.ops_skipped += 1;
            // Dropping a product that was already exactly zero loses
            // nothing; anything else is an approximation.
            if detected.activations[lane] != 0 && detected.weight != 0 {
                ledger.approx_events += 1;
                ledger.approx_error_sum += error_of(0, compute(lane));
            }
        }
    }

    let (bs, rl) = batch_features(&detected);
    let (p_low, p_high) = bn_classify(&config.model, bs, rl);
    let score = redundancy_score(p_low, p_high, config.model.r_l, config.model.r_h);
    let selected = if score < config.score_threshold {
        Radix::Radix4
    } else {
        Radix::Radix8
    };

    let bvm = build_bvm(&detected);
    let lanes: Vec<usize> = arrival_order(&detected.valid_mask);

    // The regular path always produces ranking2. When the classifier asks
    // for the extended path, both orders are built and the comparator
    // keeps whichever models cheaper, tie going to the regular path.
    let ranking2 = order_batch(&bvm, &detected.activations, Radix::Radix4);
    let (path, order) = match selected {
        Radix::Radix4 => (Radix::Radix4, ranking2),
        Radix::Radix8 => {
            let ranking2_r8 = order_batch(&bvm, &detected.activations, Radix::Radix8);
            let costs4 = flip_cost_matrix(&detected.activations, Radix::Radix4);
            let costs8 = flip_cost_matrix(&detected.activations, Radix::Radix8);
            let e4 = plan_energy(path_cost(&ranking2, &costs4), lanes.len(), Radix::Radix4, config);
            let e8 = plan_energy(
                path_cost(&ranking2_r8, &costs8),
                lanes.len(),
                Radix::Radix8,
                config,
            );
            if e8 < e4 {
                (Radix::Radix8, ranking2_r8)
            } else {
                (Radix::Radix4, ranking2)
            }
        }
    };

    let flip_table = super::flip_table(path);

    let mut products = [0u64; 8];
    let mut replays = 0u64;
    let mut flips = 0u64;
    let mut pp_rows = 0u64;
    let mut prev_lane: Option<usize> = None;
    let mut prev_encoded: Option<u8> = None;

    for (seq, &lane) in order.iter().enumerate() {
        let act = detected.activations[lane] as u8;
        let act_key = gb.activations[lane];

        let slot = prev_lane.map(|p| vst_slot(p.min(lane), p.max(lane)));
        let replayed = slot.and_then(|s| {
            match state.lut.try_replay(s, gb.weight, act_key, config.t_match) {
                LutOutcome::Hit { product, distance } => Some((product, distance)),
                LutOutcome::Miss => None,
            }
        });

        match replayed {
            Some((product, distance)) => {
                products[lane] = product;
                replays += 1;
                ledger.ops_reused += 1;
                if distance > 0 {
                    ledger.approx_events += 1;
                    ledger.approx_error_sum += error_of(product, compute(lane));
                }
            }
            None => {
                if let Some(prev) = prev_encoded {
                    flips += u64::from(flip_table.cost(prev, act));
                }
                prev_encoded = Some(act);
                let truth = compute(lane);
                products[lane] = truth;
                pp_rows += path.digit_count() as u64;
                ledger.macs += 1;
                ledger.pe_cell_activations += u64::from(pe_cost(lane));
                if let Some(s) = slot {
                    let pattern = prev_lane
                        .map(|p| detected.activations[p] as u8 ^ act)
                        .unwrap_or(0);
                    state
                        .lut
                        .update(s, gb.weight, act_key, pattern, seq as u32, truth);
                }
            }
        }
        prev_lane = Some(lane);
    }

    ledger.booth_digit_flips += flips;
    ledger.booth_pp_rows += pp_rows;

    let record = BatchRecord {
        batch_id,
        path,
        order,
        flips,
        replays,
        skips,
        pp_rows,
        score,
    };
    (products, record)
}

/// The non-pipelined reference datapath for one tile: lanes execute in
/// arrival order on the regular radix-4 path, every one encoded and
/// multiplied. Charges the same counters as [`execute_generic`] so the two
/// paths compare like for like.
pub fn execute_plain<P, C>(
    gb: &GenericBatch,
    ledger: &mut CostLedger,
    compute: P,
    pe_cost: C,
) -> [u64; 8]
where
    P: Fn(usize) -> u64,
    C: Fn(usize) -> u32,
{
    let flip_table = super::flip_table(Radix::Radix4);
    let mut products = [0u64; 8];
    let mut prev: Option<u8> = None;
    for lane in 0..8 {
        if !gb.live[lane] {
            continue;
        }
        let act = gb.activations[lane].pattern;
        ledger.ops_demanded += 1;
        ledger.macs += 1;
        ledger.pe_cell_activations += u64::from(pe_cost(lane));
        ledger.booth_pp_rows += Radix::Radix4.digit_count() as u64;
        if let Some(p) = prev {
            ledger.booth_digit_flips += u64::from(flip_table.cost(p, act));
        }
        prev = Some(act);
        products[lane] = compute(lane);
    }
    products
}

/// Integer entry point: exact 8-bit products.
pub fn mblm_execute(
    batch: &BoothBatch,
    config: &MblmConfig,
    state: &mut MblmState,
    ledger: &mut CostLedger,
) -> ([i64; 8], BatchRecord) {
    let mut activations = [OperandKey::from_pattern(0); 8];
    for (key, &a) in activations.iter_mut().zip(&batch.activations) {
        *key = OperandKey::from_pattern(a as u8);
    }
    let gb = GenericBatch {
        weight: OperandKey::from_pattern(batch.weight as u8),
        activations,
        live: batch.valid_mask,
    };
    let weight = batch.weight;
    let acts = batch.activations;
    let (payloads, record) = execute_generic(
        &gb,
        config,
        state,
        ledger,
        |lane| (i64::from(weight) * i64::from(acts[lane])) as u64,
        |replayed, truth| (replayed as i64 - truth as i64).abs() as f64,
        |_| 0,
    );
    let mut products = [0i64; 8];
    for (p, &bits) in products.iter_mut().zip(&payloads) {
        *p = bits as i64;
    }
    (products, record)
}

/// Fit the default classifier on a seeded synthetic stream: batches span
/// the similarity range and each is labeled High when the radix-8 plan
/// models cheaper than the radix-4 plan.
pub fn calibrate_bn_model(seed: u64, batches: usize, config: &MblmConfig) -> BnModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xB007_4CA1);
    let mut samples = Vec::with_capacity(batches);
    for _ in 0..batches {
        // Mix a base pattern with per-lane noise whose width controls
        // similarity.
        let base: u8 = rng.gen();
        let noise_bits = rng.gen_range(0..=8u32);
        let mut acts = [0i8; 8];
        for a in acts.iter_mut() {
            let mut v = base;
            for _ in 0..noise_bits {
                if rng.gen_bool(0.5) {
                    v ^= 1 << rng.gen_range(0..8);
                }
            }
            *a = v as i8;
        }
        let batch = BoothBatch::new(rng.gen(), acts);
        let bvm = build_bvm(&batch);
        let order4 = order_batch(&bvm, &acts, Radix::Radix4);
        let order8 = order_batch(&bvm, &acts, Radix::Radix8);
        let costs4 = flip_cost_matrix(&acts, Radix::Radix4);
        let costs8 = flip_cost_matrix(&acts, Radix::Radix8);
        let e4 = plan_energy(path_cost(&order4, &costs4), 8, Radix::Radix4, config);
        let e8 = plan_energy(path_cost(&order8, &costs8), 8, Radix::Radix8, config);
        let (bs, rl) = batch_features(&batch);
        samples.push((bs, rl, e8 < e4));
    }
    BnModel::fit(&samples, config.model.r_l, config.model.r_h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(
        batch: &BoothBatch,
        config: &MblmConfig,
        state: &mut MblmState,
    ) -> ([i64; 8], BatchRecord, CostLedger) {
        let mut ledger = CostLedger::default();
        let (products, record) = mblm_execute(batch, config, state, &mut ledger);
        (products, record, ledger)
    }

    #[test]
    fn all_zero_activations_skip_everything() {
        let config = MblmConfig {
            r_zero_act: 1,
            ..MblmConfig::default()
        };
        let mut state = MblmState::default();
        let batch = BoothBatch::new(9, [0; 8]);
        let (products, record, ledger) = run(&batch, &config, &mut state);
        assert_eq!(products, [0i64; 8]);
        assert_eq!(record.skips, 8);
        assert_eq!(ledger.macs, 0);
        assert_eq!(ledger.booth_pp_rows, 0);
        assert!(ledger.conserved());
        // Dropping a true zero product is not an approximation.
        assert_eq!(ledger.approx_events, 0);
    }

    #[test]
    fn exact_settings_match_schoolbook_products() {
        let config = MblmConfig::default();
        let mut state = MblmState::default();
        let mut rng_state = 0x1234_5678u32;
        for _ in 0..100 {
            let mut acts = [0i8; 8];
            for a in acts.iter_mut() {
                rng_state = rng_state.wrapping_mul(1664525).wrapping_add(1013904223);
                *a = (rng_state >> 24) as u8 as i8;
            }
            rng_state = rng_state.wrapping_mul(1664525).wrapping_add(1013904223);
            let w = (rng_state >> 24) as u8 as i8;
            let batch = BoothBatch::new(w, acts);
            let (products, _, ledger) = run(&batch, &config, &mut state);
            for lane in 0..8 {
                assert_eq!(products[lane], i64::from(w) * i64::from(acts[lane]));
            }
            assert!(ledger.conserved());
        }
    }

    #[test]
    fn duplicated_batch_replays_after_warmup() {
        let config = MblmConfig::default();
        let mut state = MblmState::default();
        let batch = BoothBatch::new(13, [55; 8]);
        let (_, first, _) = run(&batch, &config, &mut state);
        assert_eq!(first.replays, 0, "cold LUT cannot replay");
        let (products, second, _) = run(&batch, &config, &mut state);
        assert!(second.replays >= 7, "got {}", second.replays);
        assert_eq!(products, [13 * 55i64; 8]);
    }

    #[test]
    fn skipping_error_stays_under_threshold_bound() {
        let config = MblmConfig {
            r_zero_wgt: 5,
            r_zero_act: 9,
            ..MblmConfig::default()
        };
        let mut state = MblmState::default();
        let batch = BoothBatch::new(4, [127, -128, 8, -8, 3, 60, -60, 1]);
        let (products, record, _) = run(&batch, &config, &mut state);
        // |w| < 5 invalidates the whole batch; every dropped product is
        // bounded by the threshold bound.
        assert_eq!(record.skips, 8);
        let bound = i64::from(config.r_zero_wgt) * 127 + i64::from(config.r_zero_act) * 127;
        for lane in 0..8 {
            let truth = i64::from(batch.weight) * i64::from(batch.activations[lane]);
            assert_eq!(products[lane], 0);
            assert!(truth.abs() < bound);
        }
    }

    #[test]
    fn padding_lanes_are_not_demanded() {
        let config = MblmConfig::default();
        let mut state = MblmState::default();
        let mut batch = BoothBatch::new(3, [7; 8]);
        batch.valid_mask[6] = false;
        batch.valid_mask[7] = false;
        let (_, _, ledger) = run(&batch, &config, &mut state);
        assert_eq!(ledger.ops_demanded, 6);
        assert!(ledger.conserved());
    }

    #[test]
    fn tolerant_replay_records_error() {
        let config = MblmConfig {
            t_match: 1,
            ..MblmConfig::default()
        };
        let mut state = MblmState::default();
        let base = BoothBatch::new(7, [40; 8]);
        run(&base, &config, &mut state);
        let near = BoothBatch::new(7, [41; 8]); // one bit away from 40
        let mut ledger = CostLedger::default();
        let (products, record) = mblm_execute(&near, &config, &mut state, &mut ledger);
        assert!(record.replays > 0);
        assert!(ledger.approx_events > 0);
        assert!(ledger.approx_error_sum > 0.0);
        // Replayed lanes return the cached 7*40 product.
        assert!(products.iter().any(|&p| p == 280));
    }

    #[test]
    fn calibrated_model_is_valid() {
        let model = calibrate_bn_model(7, 512, &MblmConfig::default());
        model.validate().unwrap();
    }
}
