//! Multi-stage Booth lookup pipeline for batches of eight multiplications
//! sharing one multiplicand.
//!
//! The stages mirror the hardware flow: an invalid-computation detector, a
//! naive-Bayes redundancy classifier that picks the radix-4 or radix-8
//! encoding path, bit-variation statistics that drive a flip-minimizing
//! execution order, and a small per-slot lookup table that replays products
//! of recently executed operand pairs.

mod batch;
mod bayes;
mod exec;
mod lut;
mod order;

pub use batch::{
    bit_similarity, build_bvm, invalid_detect, repeat_length, vst, BitVariationMatrix,
    BoothBatch, VstEntry,
};
pub use bayes::{bn_classify, redundancy_score, select_path, BnError, BnModel};
pub use exec::{
    calibrate_bn_model, execute_generic, execute_plain, mblm_execute, BatchRecord, GenericBatch,
    MblmConfig, MblmState,
};
pub use lut::{BoothLut, LutOutcome, OperandKey};
pub use order::{arrival_order, flip_cost_matrix, order_batch, path_cost};

/// Booth recoding radix. Radix 4 is the regular path, radix 8 the extended
/// path chosen for highly redundant batches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Radix {
    Radix4,
    Radix8,
}

impl Radix {
    /// Signed digits produced for an 8-bit operand.
    pub fn digit_count(self) -> usize {
        match self {
            Radix::Radix4 => 4,
            Radix::Radix8 => 3,
        }
    }
}

impl std::fmt::Display for Radix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Radix::Radix4 => write!(f, "radix4"),
            Radix::Radix8 => write!(f, "radix8"),
        }
    }
}

/// Signed-digit Booth recoding of one 8-bit operand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoothDigits {
    pub radix: Radix,
    /// Radix-4 digits lie in −2..=2, radix-8 digits in −4..=4.
    pub digits: [i8; 4],
    pub len: usize,
}

impl BoothDigits {
    /// Recombine the digits back into the operand value.
    pub fn recombine(&self) -> i32 {
        let base: i32 = match self.radix {
            Radix::Radix4 => 4,
            Radix::Radix8 => 8,
        };
        self.digits[..self.len]
            .iter()
            .rev()
            .fold(0, |acc, &d| acc * base + i32::from(d))
    }
}

/// Overlapping-window Booth recoding. Radix 4 scans 3-bit windows with
/// stride 2 over the sign-extended operand, radix 8 scans 4-bit windows
/// with stride 3.
pub fn booth_encode(x: i8, radix: Radix) -> BoothDigits {
    // Sign-extend well past the top window and append the implicit zero
    // below bit 0.
    let ext = i32::from(x);
    let bit = |i: i32| -> i32 {
        if i < 0 {
            0
        } else {
            (ext >> i.min(31)) & 1
        }
    };
    let mut digits = [0i8; 4];
    let len = radix.digit_count();
    match radix {
        Radix::Radix4 => {
            for (j, d) in digits.iter_mut().take(len).enumerate() {
                let i = 2 * j as i32;
                *d = (-2 * bit(i + 1) + bit(i) + bit(i - 1)) as i8;
            }
        }
        Radix::Radix8 => {
            for (j, d) in digits.iter_mut().take(len).enumerate() {
                let i = 3 * j as i32;
                *d = (-4 * bit(i + 2) + 2 * bit(i + 1) + bit(i) + bit(i - 1)) as i8;
            }
        }
    }
    BoothDigits { radix, digits, len }
}

/// 4-bit control encoding of one Booth digit: sign bit plus magnitude.
/// Digit-level flip cost is the Hamming distance between these codes.
#[inline]
pub fn digit_control_code(d: i8) -> u8 {
    let mag = d.unsigned_abs();
    if d < 0 {
        0b1000 | mag
    } else {
        mag
    }
}

/// Flip cost between two operands under one radix: summed Hamming distance
/// of the per-position digit control codes.
pub fn digit_flip_cost(a: i8, b: i8, radix: Radix) -> u32 {
    let da = booth_encode(a, radix);
    let db = booth_encode(b, radix);
    da.digits[..da.len]
        .iter()
        .zip(&db.digits[..db.len])
        .map(|(&x, &y)| (digit_control_code(x) ^ digit_control_code(y)).count_ones())
        .sum()
}

/// Dense 256 x 256 flip-cost table for one radix, used by the ordering
/// solver and the simulator hot path.
pub struct FlipTable {
    costs: Vec<u8>,
}

impl FlipTable {
    pub fn build(radix: Radix) -> FlipTable {
        let codes: Vec<[u8; 4]> = (0..256)
            .map(|v| {
                let d = booth_encode(v as u8 as i8, radix);
                let mut c = [0u8; 4];
                for (slot, &digit) in c.iter_mut().zip(&d.digits) {
                    *slot = digit_control_code(digit);
                }
                c
            })
            .collect();
        let len = radix.digit_count();
        let mut costs = vec![0u8; 256 * 256];
        for a in 0..256 {
            for b in 0..256 {
                let cost: u32 = (0..len)
                    .map(|i| (codes[a][i] ^ codes[b][i]).count_ones())
                    .sum();
                costs[a * 256 + b] = cost as u8;
            }
        }
        FlipTable { costs }
    }

    #[inline]
    pub fn cost(&self, a: u8, b: u8) -> u32 {
        u32::from(self.costs[usize::from(a) * 256 + usize::from(b)])
    }
}

/// Shared flip tables for both radices.
pub fn flip_tables() -> &'static (FlipTable, FlipTable) {
    static TABLES: std::sync::OnceLock<(FlipTable, FlipTable)> = std::sync::OnceLock::new();
    TABLES.get_or_init(|| (FlipTable::build(Radix::Radix4), FlipTable::build(Radix::Radix8)))
}

pub fn flip_table(radix: Radix) -> &'static FlipTable {
    let (r4, r8) = flip_tables();
    match radix {
        Radix::Radix4 => r4,
        Radix::Radix8 => r8,
    }
}
