//! Seeded synthetic workloads: token traces with controllable temporal
//! similarity, toy-model weight initialization and tensor file I/O.
//!
//! Every random draw in the crate comes from ChaCha8 streams derived from
//! the run seed, and Gaussians use the Box-Muller transform on two uniform
//! draws, so identical specs reproduce identical bytes on any platform.

mod tensor;

pub use tensor::{load_tensor, parse_tensor, save_tensor, Tensor, TensorError};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Standard normal sample via Box-Muller on two uniform draws.
pub fn gaussian<R: RngCore>(rng: &mut R) -> f64 {
    // Avoid ln(0) by nudging the first uniform off zero.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Recipe for a synthetic token trace.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TraceSpec {
    pub seed: u64,
    /// Number of tokens.
    pub length: usize,
    pub d_model: usize,
    /// Lag-1 temporal similarity in [0, 1]: token t is
    /// `rho * v_{t-1} + sqrt(1 - rho^2) * noise`.
    pub rho: f64,
    /// Probability that a token is replaced by an exact copy of a random
    /// earlier token.
    pub duplicate_rate: f64,
    /// Per-element probability of zeroing.
    pub near_zero_rate: f64,
}

impl Default for TraceSpec {
    fn default() -> TraceSpec {
        TraceSpec {
            seed: 0,
            length: 64,
            d_model: 64,
            rho: 0.9,
            duplicate_rate: 0.0,
            near_zero_rate: 0.0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("{field} = {value} is outside [0, 1]")]
    OutOfRange { field: &'static str, value: f64 },
    #[error("trace length and d_model must be positive")]
    EmptyShape,
}

impl TraceSpec {
    pub fn validate(&self) -> Result<(), TraceError> {
        for (field, value) in [
            ("rho", self.rho),
            ("duplicate_rate", self.duplicate_rate),
            ("near_zero_rate", self.near_zero_rate),
        ] {
            if !(0.0..=1.0).contains(&value) || !value.is_finite() {
                return Err(TraceError::OutOfRange { field, value });
            }
        }
        if self.length == 0 || self.d_model == 0 {
            return Err(TraceError::EmptyShape);
        }
        Ok(())
    }
}

/// A generated trace: token vectors in arrival order.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadTrace {
    pub spec: TraceSpec,
    pub tokens: Vec<Vec<f32>>,
}

impl WorkloadTrace {
    /// SHA-256 over the canonical little-endian token bytes.
    pub fn content_digest(&self) -> String {
        let mut hasher = Sha256::new();
        for token in &self.tokens {
            for &x in token {
                hasher.update(x.to_le_bytes());
            }
        }
        hex_string(&hasher.finalize())
    }

    /// Manifest JSON: the spec plus the content digest.
    pub fn manifest_json(&self) -> String {
        #[derive(Serialize)]
        struct Manifest<'a> {
            spec: &'a TraceSpec,
            content_digest: String,
        }
        serde_json::to_string_pretty(&Manifest {
            spec: &self.spec,
            content_digest: self.content_digest(),
        })
        .expect("manifest serializes")
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SplitMix64 step, used to derive per-token stream seeds.
fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generate the trace a spec describes. Pure in the spec: same spec, same
/// bytes. Each token draws from its own seeded substream, so raising the
/// duplicate rate only turns more tokens into duplicates; it never
/// reshuffles the decisions of the others.
pub fn generate_trace(spec: &TraceSpec) -> Result<WorkloadTrace, TraceError> {
    spec.validate()?;
    let mut tokens: Vec<Vec<f32>> = Vec::with_capacity(spec.length);
    let blend = (1.0 - spec.rho * spec.rho).sqrt();
    for t in 0..spec.length {
        let stream = splitmix64(spec.seed ^ 0x7ACE_0000_0000_0001 ^ (t as u64));
        let mut rng = ChaCha8Rng::seed_from_u64(stream);
        let dup_draw: f64 = rng.gen();
        let src_draw: f64 = rng.gen();
        let duplicate = t > 0 && dup_draw < spec.duplicate_rate;
        let mut token: Vec<f32> = if duplicate {
            let source = ((src_draw * t as f64) as usize).min(t - 1);
            tokens[source].clone()
        } else {
            (0..spec.d_model)
                .map(|i| {
                    let noise = gaussian(&mut rng);
                    let prev = if t > 0 { f64::from(tokens[t - 1][i]) } else { 0.0 };
                    if t == 0 {
                        noise as f32
                    } else {
                        (spec.rho * prev + blend * noise) as f32
                    }
                })
                .collect()
        };
        if spec.near_zero_rate > 0.0 && !duplicate {
            for x in token.iter_mut() {
                if rng.gen_bool(spec.near_zero_rate) {
                    *x = 0.0;
                }
            }
        }
        tokens.push(token);
    }
    Ok(WorkloadTrace {
        spec: spec.clone(),
        tokens,
    })
}
