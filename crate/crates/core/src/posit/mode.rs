//! DA-Posit compression modes.
//!
//! When the low one or two fraction bits of a pattern coincide with the low
//! bits of its exponent field, those fraction bits carry no information of
//! their own and can be folded into shared bits. The mode (0, 1 or 2 folded
//! bits) is a pure function of the bit pattern, so nothing extra is stored:
//! the decoder recomputes it from the leading bits of the word.

use super::{decode_posit, DecodedPosit, PositWord, ES};

/// A posit word annotated with its compression mode and the folded bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DaPositWord {
    pub word: PositWord,
    /// Number of folded low fraction bits: 0, 1 or 2.
    pub mode: u8,
    /// The folded bits themselves (low `mode` bits of the fraction, equal
    /// by construction to the low `mode` bits of the exponent field).
    pub shared_bits: u8,
}

impl DaPositWord {
    pub fn new(word: PositWord) -> DaPositWord {
        let (mode, shared_bits) = detect_mode(word);
        DaPositWord {
            word,
            mode,
            shared_bits,
        }
    }
}

impl From<PositWord> for DaPositWord {
    fn from(word: PositWord) -> DaPositWord {
        DaPositWord::new(word)
    }
}

/// Largest `m` in {0, 1, 2} such that the word has at least `m` fraction
/// bits, a fully present exponent field, and low `m` fraction bits equal to
/// the low `m` exponent bits. Zero and NaR are always mode 0.
pub fn detect_mode(w: PositWord) -> (u8, u8) {
    let DecodedPosit::Finite(f) = decode_posit(w) else {
        return (0, 0);
    };
    // A short word tail can truncate the exponent field; folding needs the
    // whole field physically present.
    let present = (7 - regime_len(w)).min(ES as u8);
    if present < ES as u8 {
        return (0, 0);
    }
    for m in (1..=2u8).rev() {
        if f.frac_bits >= m {
            let mask = (1u8 << m) - 1;
            if f.frac & mask == f.e & mask {
                return (m, f.frac & mask);
            }
        }
    }
    (0, 0)
}

/// Regime field length in bits (run plus terminator, capped at the word).
fn regime_len(w: PositWord) -> u8 {
    let abs = if w.0 & 0x80 != 0 {
        w.0.wrapping_neg()
    } else {
        w.0
    };
    let first = (abs >> 6) & 1;
    let mut run = 1u8;
    while run < 7 && (abs >> (6 - run)) & 1 == first {
        run += 1;
    }
    (run + 1).min(7)
}

/// Drop the folded low fraction bits, returning the shortened core pattern
/// (right-aligned in `8 - mode` bits). The inverse is [`unfold_word`].
pub fn fold_word(w: DaPositWord) -> u8 {
    let abs = if w.word.0 & 0x80 != 0 && !w.word.is_nar() {
        w.word.0.wrapping_neg()
    } else {
        w.word.0
    };
    abs >> w.mode
}

/// Restore a full pattern from a folded core. The dropped fraction bits are
/// recovered from the exponent field, which the core still contains.
pub fn unfold_word(core: u8, mode: u8, negative: bool) -> PositWord {
    let widened = core << mode;
    if mode == 0 {
        return restore_sign(widened, negative);
    }
    let probe = PositWord(widened);
    let DecodedPosit::Finite(f) = decode_posit(probe) else {
        return restore_sign(widened, negative);
    };
    let mask = (1u8 << mode) - 1;
    restore_sign((widened & !mask) | (f.e & mask), negative)
}

fn restore_sign(abs: u8, negative: bool) -> PositWord {
    if negative {
        PositWord(abs.wrapping_neg())
    } else {
        PositWord(abs)
    }
}
