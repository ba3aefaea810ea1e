//! Shared test oracles, kept independent of the implementation paths they
//! check.

#![allow(dead_code)]

/// Reference posit-8 (es = 2) decoder built directly from the field
/// definition, operating on a bit string rather than integer field
/// arithmetic. Returns None for the two non-real patterns.
pub fn oracle_decode(bits: u8) -> Option<f64> {
    if bits == 0x00 {
        return Some(0.0);
    }
    if bits == 0x80 {
        return None;
    }
    let negative = bits & 0x80 != 0;
    let abs = if negative { bits.wrapping_neg() } else { bits };
    let s: Vec<char> = format!("{abs:08b}").chars().collect();
    // s[0] is the (cleared) sign bit; the regime run starts at s[1].
    let first = s[1];
    let mut run = 1usize;
    while 1 + run < 8 && s[1 + run] == first {
        run += 1;
    }
    let k: i32 = if first == '1' {
        run as i32 - 1
    } else {
        -(run as i32)
    };
    let mut pos = 1 + run + 1; // skip the terminator
    let mut e = 0i32;
    for _ in 0..2 {
        e *= 2;
        if pos < 8 {
            if s[pos] == '1' {
                e += 1;
            }
            pos += 1;
        }
    }
    let mut frac = 1.0f64;
    let mut weight = 0.5f64;
    while pos < 8 {
        if s[pos] == '1' {
            frac += weight;
        }
        weight /= 2.0;
        pos += 1;
    }
    // Scaling by a power of two is exact in binary64.
    let magnitude = frac * (2.0f64).powi(k * 4 + e);
    Some(if negative { -magnitude } else { magnitude })
}

/// Value of every positive pattern 1..=127 in ascending order (posit
/// encodings are monotone in the pattern).
fn positive_values() -> &'static [f64; 127] {
    static VALUES: std::sync::OnceLock<[f64; 127]> = std::sync::OnceLock::new();
    VALUES.get_or_init(|| {
        let mut v = [0.0f64; 127];
        for (i, slot) in v.iter_mut().enumerate() {
            *slot = oracle_decode((i + 1) as u8).expect("positive patterns are finite");
        }
        for w in v.windows(2) {
            assert!(w[0] < w[1], "positive patterns must be strictly ordered");
        }
        v
    })
}

/// Reference encoder: nearest representable value by magnitude search,
/// ties to the even pattern, saturating at the extreme finite patterns.
pub fn oracle_encode(x: f64) -> u8 {
    if x == 0.0 {
        return 0x00;
    }
    if !x.is_finite() {
        return 0x80;
    }
    let values = positive_values();
    let mag = x.abs();
    let u = if mag <= values[0] {
        1u8
    } else if mag >= values[126] {
        127u8
    } else {
        // Index of the largest value <= mag.
        let mut lo = 0usize;
        let mut hi = 126usize;
        while lo + 1 < hi {
            let mid = (lo + hi) / 2;
            if values[mid] <= mag {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let below = lo as u8 + 1;
        let above = below + 1;
        let d_below = mag - values[lo];
        let d_above = values[lo + 1] - mag;
        if d_below < d_above {
            below
        } else if d_above < d_below {
            above
        } else if below % 2 == 0 {
            below
        } else {
            above
        }
    };
    if x < 0.0 {
        u.wrapping_neg()
    } else {
        u
    }
}

/// Exact multiply oracle: decode both sides to their exact values (posit-8
/// values and their products are exactly representable in binary64),
/// multiply, and re-encode by nearest-value search.
pub fn oracle_multiply(a: u8, b: u8) -> u8 {
    if a == 0x80 || b == 0x80 {
        return 0x80;
    }
    let va = oracle_decode(a).expect("finite");
    let vb = oracle_decode(b).expect("finite");
    oracle_encode(va * vb)
}

/// Exact minimum-weight Hamiltonian path over up to 8 nodes with free
/// endpoints, by Held-Karp dynamic programming. Returns the optimal total
/// edge cost.
pub fn held_karp_path_cost(nodes: &[usize], costs: &[[u32; 8]; 8]) -> u32 {
    let n = nodes.len();
    if n <= 1 {
        return 0;
    }
    let full = (1usize << n) - 1;
    let inf = u32::MAX / 2;
    // dp[mask][last] = cheapest path visiting `mask` ending at `last`.
    let mut dp = vec![[inf; 8]; full + 1];
    for i in 0..n {
        dp[1 << i][i] = 0;
    }
    for mask in 1..=full {
        for last in 0..n {
            let cost = dp[mask][last];
            if cost >= inf || mask & (1 << last) == 0 {
                continue;
            }
            for next in 0..n {
                if mask & (1 << next) != 0 {
                    continue;
                }
                let next_mask = mask | (1 << next);
                let step = costs[nodes[last]][nodes[next]];
                if cost + step < dp[next_mask][next] {
                    dp[next_mask][next] = cost + step;
                }
            }
        }
    }
    (0..n).map(|last| dp[full][last]).min().unwrap()
}

/// Deterministic xorshift-style byte stream for test batches.
pub struct ByteStream(u64);

impl ByteStream {
    pub fn new(seed: u64) -> ByteStream {
        ByteStream(seed | 1)
    }

    pub fn next(&mut self) -> u8 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        (self.0 >> 32) as u8
    }
}
