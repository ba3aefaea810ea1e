//! DA-Posit multiplication.
//!
//! The product value is always exact: both operands are decoded, multiplied
//! in integer arithmetic and re-encoded with round-to-nearest-even. The
//! compression modes never touch the value; they only select how much of the
//! array multiplier lights up, which is what [`MulCostReport`] records.

use std::sync::OnceLock;

use super::{
    decode_posit, detect_mode, encode_posit, exact_product, DaPositWord, PositWord,
};

/// Cost of one multiplication through the mode-branched array multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MulCostReport {
    /// Active array-multiplier cells: 16, 9 or 4 depending on the mode.
    pub pe_cells: u32,
    /// Partial-product rows accumulated by the CSA tree.
    pub pp_rows: u32,
    /// 1 when the mantissa product left the preset (0, 2) range and a
    /// compensating shift plus exponent bump was applied.
    pub normalization_shift: u8,
    /// Bits not stored thanks to folding; mode 2 saves one more through
    /// end-bit folding.
    pub bits_saved: u32,
}

/// Multiply two DA-Posit words. The value equals `encode(exact product)`
/// for every input pair; a zero operand yields zero and a NaR operand NaR.
/// The operation mode is the minimum of the operand modes, which guarantees
/// both mantissas carry the shared structure the smaller array relies on.
pub fn da_multiply(a: DaPositWord, b: DaPositWord) -> (PositWord, MulCostReport) {
    let mode = a.mode.min(b.mode);
    let side = 4 - u32::from(mode);
    let mut report = MulCostReport {
        pe_cells: side * side,
        pp_rows: side,
        normalization_shift: 0,
        bits_saved: match mode {
            2 => 3,
            m => u32::from(m),
        },
    };

    if a.word.is_nar() || b.word.is_nar() {
        return (PositWord::NAR, report);
    }
    if a.word.is_zero() || b.word.is_zero() {
        return (PositWord::ZERO, report);
    }

    let da = decode_posit(a.word);
    let db = decode_posit(b.word);
    let (value, shift) = exact_product(&da, &db);
    report.normalization_shift = shift;
    (encode_posit(value), report)
}

/// Exhaustive 256 x 256 product table plus per-word modes, for hot loops.
/// Built once from [`da_multiply`] itself.
pub struct ProductTable {
    products: Vec<u8>,
    modes: [u8; 256],
}

impl ProductTable {
    fn build() -> ProductTable {
        let mut products = vec![0u8; 256 * 256];
        let mut modes = [0u8; 256];
        for (a, mode) in modes.iter_mut().enumerate() {
            *mode = detect_mode(PositWord(a as u8)).0;
        }
        for a in 0..256usize {
            let da = DaPositWord::new(PositWord(a as u8));
            for b in 0..256usize {
                let db = DaPositWord::new(PositWord(b as u8));
                products[a * 256 + b] = da_multiply(da, db).0 .0;
            }
        }
        ProductTable { products, modes }
    }

    #[inline]
    pub fn multiply(&self, a: u8, b: u8) -> u8 {
        self.products[usize::from(a) * 256 + usize::from(b)]
    }

    #[inline]
    pub fn mode(&self, w: u8) -> u8 {
        self.modes[usize::from(w)]
    }

    /// PE cells charged for the pair under the min-mode rule.
    #[inline]
    pub fn pe_cells(&self, a: u8, b: u8) -> u32 {
        let side = 4 - u32::from(self.mode(a).min(self.mode(b)));
        side * side
    }
}

/// Shared lazily-built product table.
pub fn product_table() -> &'static ProductTable {
    static TABLE: OnceLock<ProductTable> = OnceLock::new();
    TABLE.get_or_init(ProductTable::build)
}
