//! Posit-8 codec and the DA-Posit mode system.
//!
//! An 8-bit posit with a 2-bit exponent field (`es = 2`) packs sign, a
//! run-length-encoded regime, up to two exponent bits, and whatever fraction
//! bits remain. Two patterns are special: `0x00` is exact zero and `0x80` is
//! NaR ("not a real"). Every other pattern is a finite nonzero dyadic
//! rational, so the codec here works in exact integer arithmetic throughout.

mod mode;
mod multiply;

pub use mode::{detect_mode, fold_word, unfold_word, DaPositWord};
pub use multiply::{da_multiply, product_table, MulCostReport};

/// Exponent-field width. The DA-Posit folding scheme needs two exponent
/// bits, which is also the dominant posit-8 convention.
pub const ES: u32 = 2;

/// Largest finite pattern: regime run fills the word, `E = +24`.
pub const MAXPOS_BITS: u8 = 0x7F;
/// Smallest positive pattern, `E = -24`.
pub const MINPOS_BITS: u8 = 0x01;

/// An 8-bit posit bit pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PositWord(pub u8);

impl PositWord {
    pub const ZERO: PositWord = PositWord(0x00);
    pub const NAR: PositWord = PositWord(0x80);
    pub const ONE: PositWord = PositWord(0x40);

    pub fn is_zero(self) -> bool {
        self.0 == 0x00
    }

    pub fn is_nar(self) -> bool {
        self.0 == 0x80
    }

    /// Two's-complement negation; fixes neither zero nor NaR (they are
    /// their own negation).
    pub fn negate(self) -> PositWord {
        PositWord(self.0.wrapping_neg())
    }
}

/// A posit pattern split into its decoded fields.
///
/// For finite values the represented number is
/// `sign * 2^exp * (1 + frac / 2^frac_bits)` with `exp = k * 2^es + e`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodedPosit {
    Zero,
    NaR,
    Finite(FiniteFields),
}

/// Fields of a finite, nonzero posit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FiniteFields {
    /// +1 or -1.
    pub sign: i8,
    /// Regime value: a run of m ones terminated by a zero gives `k = m - 1`,
    /// a run of m zeros terminated by a one gives `k = -m`.
    pub k: i32,
    /// Exponent value in `[0, 2^es)`. Bits cut off by the word boundary
    /// read as zero.
    pub e: u8,
    /// Fraction bits below the implicit leading one.
    pub frac: u8,
    /// Number of fraction bits present in the word.
    pub frac_bits: u8,
    /// Composite exponent `E = k * 2^es + e`.
    pub exp: i32,
}

impl DecodedPosit {
    pub fn is_finite(&self) -> bool {
        matches!(self, DecodedPosit::Finite(_))
    }

    /// Exact value as an `f64`. Posit-8 values and their pairwise products
    /// are all exactly representable in binary64.
    pub fn to_f64(&self) -> f64 {
        match self {
            DecodedPosit::Zero => 0.0,
            DecodedPosit::NaR => f64::NAN,
            DecodedPosit::Finite(f) => {
                let sig = (1u64 << f.frac_bits) | u64::from(f.frac);
                let scale = f.exp - i32::from(f.frac_bits);
                f64::from(f.sign) * sig as f64 * (scale as f64).exp2()
            }
        }
    }
}

/// Composite exponent `E = k * 2^es + e` of a regime/exponent pair.
pub fn composite_exponent(k: i32, e: u8, es: u32) -> i32 {
    k * (1 << es) + i32::from(e)
}

/// Decode any of the 256 patterns. Total: the two special patterns map to
/// `Zero` and `NaR`, everything else to finite fields.
pub fn decode_posit(w: PositWord) -> DecodedPosit {
    if w.is_zero() {
        return DecodedPosit::Zero;
    }
    if w.is_nar() {
        return DecodedPosit::NaR;
    }
    let sign: i8 = if w.0 & 0x80 != 0 { -1 } else { 1 };
    // Negative patterns decode through their two's complement.
    let abs = if sign < 0 { w.0.wrapping_neg() } else { w.0 };

    // Seven value bits below the sign, scanned from bit 6 downward.
    let first = (abs >> 6) & 1;
    let mut run = 1u32;
    while run < 7 && (abs >> (6 - run)) & 1 == first {
        run += 1;
    }
    let k = if first == 1 {
        run as i32 - 1
    } else {
        -(run as i32)
    };
    // Regime run plus terminator, capped at the word boundary.
    let consumed = (run + 1).min(7);
    let remaining = 7 - consumed;

    let e_bits = remaining.min(ES);
    let e = if e_bits == 0 {
        0
    } else {
        let raw = (abs >> (remaining - e_bits)) & ((1 << e_bits) - 1);
        // Missing low exponent bits read as zero.
        raw << (ES - e_bits)
    };

    let frac_bits = remaining - e_bits;
    let frac = abs & ((1u8 << frac_bits) - 1);

    DecodedPosit::Finite(FiniteFields {
        sign,
        k,
        e,
        frac,
        frac_bits: frac_bits as u8,
        exp: composite_exponent(k, e, ES),
    })
}

/// An exact nonzero value `sign * 2^exp * sig / 2^frac_bits` with the
/// significand normalized to `[2^frac_bits, 2^(frac_bits+1))`. This is the
/// input domain of [`encode_posit`] and is wide enough to hold any exact
/// product of two posit-8 values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExactValue {
    pub negative: bool,
    pub exp: i32,
    /// Fraction bits below the implicit leading one.
    pub frac: u64,
    pub frac_bits: u32,
}

impl ExactValue {
    pub fn from_decoded(f: &FiniteFields) -> ExactValue {
        ExactValue {
            negative: f.sign < 0,
            exp: f.exp,
            frac: u64::from(f.frac),
            frac_bits: u32::from(f.frac_bits),
        }
    }
}

/// Exact dyadic magnitude `sig / 2^frac_bits * 2^exp`, normalized so that
/// `sig` lies in `[2^frac_bits, 2^(frac_bits+1))`.
#[derive(Debug, Clone, Copy)]
struct Dyadic {
    sig: u128,
    frac_bits: u32,
    exp: i32,
}

impl Dyadic {
    fn from_exact(v: &ExactValue) -> Dyadic {
        Dyadic {
            sig: u128::from((1u64 << v.frac_bits) | v.frac),
            frac_bits: v.frac_bits,
            exp: v.exp,
        }
    }

    /// Exact comparison. Normalization makes the exponent the binade, so
    /// it decides unless equal; fractions then align by cross-shifting.
    fn cmp(&self, other: &Dyadic) -> std::cmp::Ordering {
        self.exp
            .cmp(&other.exp)
            .then_with(|| (self.sig << other.frac_bits).cmp(&(other.sig << self.frac_bits)))
    }

    /// Exact midpoint of two nearby values.
    fn midpoint(a: &Dyadic, b: &Dyadic) -> Dyadic {
        let pa = a.exp - a.frac_bits as i32;
        let pb = b.exp - b.frac_bits as i32;
        let scale = pa.min(pb) - 1;
        let sum = (a.sig << (pa - 1 - scale)) + (b.sig << (pb - 1 - scale));
        let msb = 127 - sum.leading_zeros();
        Dyadic {
            sig: sum,
            frac_bits: msb,
            exp: scale + msb as i32,
        }
    }
}

/// Exact (exp, frac, frac_bits) of the 127 positive patterns, indexed by
/// pattern value minus one. Patterns are value-monotone.
fn positive_magnitudes() -> &'static [Dyadic; 127] {
    static TABLE: std::sync::OnceLock<[Dyadic; 127]> = std::sync::OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [Dyadic {
            sig: 1,
            frac_bits: 0,
            exp: 0,
        }; 127];
        for (i, slot) in t.iter_mut().enumerate() {
            let DecodedPosit::Finite(f) = decode_posit(PositWord((i + 1) as u8)) else {
                unreachable!("positive patterns are finite");
            };
            *slot = Dyadic::from_exact(&ExactValue::from_decoded(&f));
        }
        t
    })
}

/// Encode the nearest posit for an exact value; ties go to the even
/// encoding. Magnitudes past the representable range saturate at
/// `maxpos`/`minpos` and never collapse to zero or NaR.
pub fn encode_posit(v: Option<ExactValue>) -> PositWord {
    use std::cmp::Ordering;

    let Some(v) = v else {
        return PositWord::ZERO;
    };
    debug_assert!(v.frac < (1u64 << v.frac_bits.max(1)) || v.frac_bits == 0 && v.frac == 0);

    let mag = Dyadic::from_exact(&v);
    let table = positive_magnitudes();

    // Saturation: nothing rounds to zero or past the extremes.
    if mag.cmp(&table[0]) != Ordering::Greater {
        return apply_sign(MINPOS_BITS, v.negative);
    }
    if mag.cmp(&table[126]) != Ordering::Less {
        return apply_sign(MAXPOS_BITS, v.negative);
    }

    // Largest pattern whose value does not exceed the magnitude.
    let mut lo = 0usize;
    let mut hi = 126usize;
    while lo + 1 < hi {
        let mid = (lo + hi) / 2;
        if table[mid].cmp(&mag) != Ordering::Greater {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let below = (lo + 1) as u8;
    let mid = Dyadic::midpoint(&table[lo], &table[lo + 1]);
    let u = match mag.cmp(&mid) {
        Ordering::Less => below,
        Ordering::Greater => below + 1,
        Ordering::Equal => {
            if below % 2 == 0 {
                below
            } else {
                below + 1
            }
        }
    };
    apply_sign(u, v.negative)
}

fn apply_sign(u: u8, negative: bool) -> PositWord {
    if negative {
        PositWord(u.wrapping_neg())
    } else {
        PositWord(u)
    }
}

/// Nearest posit for an arbitrary binary64 value. Zero maps to zero,
/// non-finite values to NaR, everything else through [`encode_posit`].
pub fn encode_f64(x: f64) -> PositWord {
    if x == 0.0 {
        return PositWord::ZERO;
    }
    if !x.is_finite() {
        return PositWord::NAR;
    }
    let bits = x.to_bits();
    let negative = bits >> 63 == 1;
    let raw_exp = ((bits >> 52) & 0x7FF) as i32;
    let mantissa = bits & ((1u64 << 52) - 1);
    let (exp, frac, frac_bits) = if raw_exp == 0 {
        // Subnormal f64 magnitudes are far below minpos; normalize anyway.
        let shift = mantissa.leading_zeros() - 11;
        let sig = mantissa << shift;
        (
            -1022 - shift as i32,
            sig & ((1u64 << 52) - 1),
            52u32,
        )
    } else {
        (raw_exp - 1023, mantissa, 52u32)
    };
    encode_posit(Some(ExactValue {
        negative,
        exp,
        frac,
        frac_bits,
    }))
}

/// Exact product of two decoded posits, normalized back into `[1, 2)`.
/// Returns `None` for a zero product and the normalization shift applied
/// (1 when the raw mantissa product reached the `[2, 4)` range).
pub fn exact_product(a: &DecodedPosit, b: &DecodedPosit) -> (Option<ExactValue>, u8) {
    let (DecodedPosit::Finite(fa), DecodedPosit::Finite(fb)) = (a, b) else {
        return (None, 0);
    };
    let sig_a = (1u64 << fa.frac_bits) | u64::from(fa.frac);
    let sig_b = (1u64 << fb.frac_bits) | u64::from(fb.frac);
    let sig = sig_a * sig_b;
    let mut frac_bits = u32::from(fa.frac_bits) + u32::from(fb.frac_bits);
    let mut exp = fa.exp + fb.exp;

    // Mantissa product lies in [1, 4); outside the preset (0, 2) range a
    // one-bit shift with an exponent bump compensates.
    let shift = if sig >> frac_bits >= 2 {
        frac_bits += 1;
        exp += 1;
        1
    } else {
        0
    };
    debug_assert_eq!(sig >> frac_bits, 1);
    let frac = sig & ((1u64 << frac_bits) - 1);
    (
        Some(ExactValue {
            negative: fa.sign * fb.sign < 0,
            exp,
            frac,
            frac_bits,
        }),
        shift,
    )
}
