//! Toy transformer block: multi-head attention over a growing KV cache in
//! parallel with a sparsely gated mixture of experts. Small enough to
//! exhaust at desk scale, shaped like the real thing.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::workload::gaussian;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("d_k must be positive")]
    ZeroHeadDim,
    #[error("top_k {top_k} exceeds expert count {experts}")]
    TopKTooLarge { top_k: usize, experts: usize },
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn seeded(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        let scale = 1.0 / (cols as f64).sqrt();
        Matrix {
            rows,
            cols,
            data: (0..rows * cols)
                .map(|_| (gaussian(rng) * scale) as f32)
                .collect(),
        }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    /// `y = M x`, accumulated in f64 in index order.
    pub fn matvec(&self, x: &[f32]) -> Result<Vec<f32>, ModelError> {
        if x.len() != self.cols {
            return Err(ModelError::DimMismatch {
                expected: self.cols,
                got: x.len(),
            });
        }
        Ok((0..self.rows)
            .map(|r| {
                let row = &self.data[r * self.cols..(r + 1) * self.cols];
                let mut acc = 0.0f64;
                for (&w, &v) in row.iter().zip(x) {
                    acc += f64::from(w) * f64::from(v);
                }
                acc as f32
            })
            .collect())
    }
}

/// Numerically stable softmax in f64.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Single-head attention over explicit key/value rows:
/// `Softmax(q K^T / sqrt(d_k)) V`.
pub fn attention(
    q: &[f32],
    keys: &[Vec<f32>],
    values: &[Vec<f32>],
    d_k: usize,
) -> Result<Vec<f32>, ModelError> {
    if d_k == 0 {
        return Err(ModelError::ZeroHeadDim);
    }
    if q.len() != d_k {
        return Err(ModelError::DimMismatch {
            expected: d_k,
            got: q.len(),
        });
    }
    let scale = 1.0 / (d_k as f64).sqrt();
    let logits: Vec<f64> = keys
        .iter()
        .map(|k| {
            let mut acc = 0.0f64;
            for (&a, &b) in q.iter().zip(k) {
                acc += f64::from(a) * f64::from(b);
            }
            acc * scale
        })
        .collect();
    let probs = softmax(&logits);
    debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    let mut out = vec![0.0f64; values[0].len()];
    for (p, v) in probs.iter().zip(values) {
        for (o, &x) in out.iter_mut().zip(v) {
            *o += p * f64::from(x);
        }
    }
    Ok(out.into_iter().map(|x| x as f32).collect())
}

/// Concatenate head outputs and project: `Concat(head_1..head_h) W^O`.
pub fn mla(heads: &[Vec<f32>], w_o: &Matrix) -> Result<Vec<f32>, ModelError> {
    let concat: Vec<f32> = heads.iter().flatten().copied().collect();
    w_o.matvec(&concat)
}

/// One expert: `W_down relu(W_up x)`.
#[derive(Debug, Clone)]
pub struct Expert {
    pub w_up: Matrix,
    pub w_down: Matrix,
}

impl Expert {
    pub fn ffn(&self, x: &[f32]) -> Result<Vec<f32>, ModelError> {
        let mut hidden = self.w_up.matvec(x)?;
        for h in hidden.iter_mut() {
            *h = h.max(0.0);
        }
        self.w_down.matvec(&hidden)
    }
}

/// Sparse mixture: only experts with nonzero gate weight are evaluated.
pub fn moe(
    x: &[f32],
    gate: &[(usize, f32)],
    experts: &[Expert],
) -> Result<Vec<f32>, ModelError> {
    let mut out = vec![0.0f32; x.len()];
    for &(idx, weight) in gate {
        if weight == 0.0 {
            continue;
        }
        let y = experts[idx].ffn(x)?;
        for (o, &v) in out.iter_mut().zip(&y) {
            *o += weight * v;
        }
    }
    Ok(out)
}

/// Per-head KV cache; one entry appended per decoded token.
#[derive(Debug, Clone, Default)]
pub struct KvCache {
    pub keys: Vec<Vec<Vec<f32>>>,
    pub values: Vec<Vec<Vec<f32>>>,
}

impl KvCache {
    pub fn new(heads: usize) -> KvCache {
        KvCache {
            keys: vec![Vec::new(); heads],
            values: vec![Vec::new(); heads],
        }
    }

    pub fn append(&mut self, head: usize, k: Vec<f32>, v: Vec<f32>) {
        self.keys[head].push(k);
        self.values[head].push(v);
    }

    pub fn len(&self) -> usize {
        self.keys.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Model dimensions, part of the run configuration.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ModelDims {
    pub d_model: usize,
    pub heads: usize,
    pub d_k: usize,
    pub experts: usize,
    pub top_k: usize,
    pub d_ff: usize,
}

impl Default for ModelDims {
    fn default() -> ModelDims {
        ModelDims {
            d_model: 64,
            heads: 4,
            d_k: 16,
            experts: 4,
            top_k: 2,
            d_ff: 128,
        }
    }
}

/// The toy model: fused QKV projections, output projection, gate and
/// experts.
#[derive(Debug, Clone)]
pub struct ToyModel {
    pub dims: ModelDims,
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub w_o: Matrix,
    pub w_gate: Matrix,
    pub experts: Vec<Expert>,
}

impl ToyModel {
    pub fn seeded(seed: u64, dims: ModelDims) -> Result<ToyModel, ModelError> {
        if dims.top_k > dims.experts {
            return Err(ModelError::TopKTooLarge {
                top_k: dims.top_k,
                experts: dims.experts,
            });
        }
        if dims.d_k == 0 {
            return Err(ModelError::ZeroHeadDim);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x70D3_1000_0000_0002);
        let hd = dims.heads * dims.d_k;
        Ok(ToyModel {
            dims,
            w_q: Matrix::seeded(&mut rng, hd, dims.d_model),
            w_k: Matrix::seeded(&mut rng, hd, dims.d_model),
            w_v: Matrix::seeded(&mut rng, hd, dims.d_model),
            w_o: Matrix::seeded(&mut rng, dims.d_model, hd),
            w_gate: Matrix::seeded(&mut rng, dims.experts, dims.d_model),
            experts: (0..dims.experts)
                .map(|_| Expert {
                    w_up: Matrix::seeded(&mut rng, dims.d_ff, dims.d_model),
                    w_down: Matrix::seeded(&mut rng, dims.d_model, dims.d_ff),
                })
                .collect(),
        })
    }

    /// Top-k sparse gate from the gating logits: softmax, keep the top k,
    /// renormalize. Ties break on the lower expert index.
    pub fn sparse_gate(&self, logits: &[f32]) -> Vec<(usize, f32)> {
        let probs = softmax(&logits.iter().map(|&v| f64::from(v)).collect::<Vec<_>>());
        let mut indexed: Vec<(usize, f64)> = probs.into_iter().enumerate().collect();
        indexed.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        indexed.truncate(self.dims.top_k);
        let sum: f64 = indexed.iter().map(|(_, p)| p).sum();
        indexed
            .into_iter()
            .map(|(i, p)| (i, (p / sum) as f32))
            .collect()
    }

    /// Attention sublayer for one token against the cache (appending this
    /// token's K/V first).
    pub fn attention_block(
        &self,
        x: &[f32],
        cache: &mut KvCache,
    ) -> Result<Vec<f32>, ModelError> {
        let q = self.w_q.matvec(x)?;
        let k = self.w_k.matvec(x)?;
        let v = self.w_v.matvec(x)?;
        let d_k = self.dims.d_k;
        let mut heads = Vec::with_capacity(self.dims.heads);
        for h in 0..self.dims.heads {
            let slice = h * d_k..(h + 1) * d_k;
            cache.append(h, k[slice.clone()].to_vec(), v[slice.clone()].to_vec());
            heads.push(attention(
                &q[slice],
                &cache.keys[h],
                &cache.values[h],
                d_k,
            )?);
        }
        mla(&heads, &self.w_o)
    }

    /// MoE sublayer for one token.
    pub fn moe_block(&self, x: &[f32]) -> Result<Vec<f32>, ModelError> {
        let logits = self.w_gate.matvec(x)?;
        let gate = self.sparse_gate(&logits);
        moe(x, &gate, &self.experts)
    }

    /// One decode step: attention and MoE both read the token embedding
    /// (parallel sublayers) and their outputs sum.
    pub fn forward_token(&self, x: &[f32], cache: &mut KvCache) -> Result<Vec<f32>, ModelError> {
        let attn = self.attention_block(x, cache)?;
        let expert_out = self.moe_block(x)?;
        Ok(attn
            .iter()
            .zip(&expert_out)
            .map(|(&a, &b)| a + b)
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_key_attention_returns_that_value() {
        let q = vec![0.3, -0.7];
        let keys = vec![vec![1.0, 2.0]];
        let values = vec![vec![5.0, -1.0]];
        let out = attention(&q, &keys, &values, 2).unwrap();
        assert_eq!(out, vec![5.0, -1.0]);
    }

    #[test]
    fn identical_keys_average_the_values() {
        let q = vec![0.5, 0.5];
        let keys = vec![vec![1.0, 0.0]; 4];
        let values = vec![
            vec![4.0, 0.0],
            vec![0.0, 4.0],
            vec![2.0, 2.0],
            vec![2.0, 2.0],
        ];
        let out = attention(&q, &keys, &values, 2).unwrap();
        assert!((out[0] - 2.0).abs() < 1e-6);
        assert!((out[1] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn attention_matches_dense_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d_k = 4;
        let q: Vec<f32> = (0..d_k).map(|_| gaussian(&mut rng) as f32).collect();
        let keys: Vec<Vec<f32>> = (0..6)
            .map(|_| (0..d_k).map(|_| gaussian(&mut rng) as f32).collect())
            .collect();
        let values = keys.clone();
        let out = attention(&q, &keys, &values, d_k).unwrap();

        // Direct dense evaluation.
        let scale = 1.0 / (d_k as f64).sqrt();
        let logits: Vec<f64> = keys
            .iter()
            .map(|k| {
                k.iter()
                    .zip(&q)
                    .map(|(&a, &b)| f64::from(a) * f64::from(b))
                    .sum::<f64>()
                    * scale
            })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
        let z: f64 = weights.iter().sum();
        for dim in 0..d_k {
            let want: f64 = weights
                .iter()
                .zip(&values)
                .map(|(w, v)| w / z * f64::from(v[dim]))
                .sum();
            assert!((f64::from(out[dim]) - want).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_d_k_is_a_configuration_error() {
        assert_eq!(
            attention(&[], &[vec![]], &[vec![]], 0).unwrap_err(),
            ModelError::ZeroHeadDim
        );
    }

    #[test]
    fn single_head_identity_projection_equals_attention() {
        let q = vec![0.2, 0.8, -0.3];
        let keys = vec![vec![0.1, 0.0, 0.5], vec![-0.2, 0.3, 0.0]];
        let values = vec![vec![1.0, 2.0, 3.0], vec![-1.0, 0.0, 1.0]];
        let head = attention(&q, &keys, &values, 3).unwrap();
        let out = mla(&[head.clone()], &Matrix::identity(3)).unwrap();
        assert_eq!(out, head);
    }

    #[test]
    fn permuting_heads_with_permuted_wo_columns_is_invariant() {
        let heads = vec![vec![1.0f32, 2.0], vec![3.0, 4.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w_o = Matrix::seeded(&mut rng, 3, 4);
        let base = mla(&heads, &w_o).unwrap();

        // Swap the two heads and the matching column blocks of W^O.
        let swapped_heads = vec![heads[1].clone(), heads[0].clone()];
        let mut w_swapped = Matrix::zeros(3, 4);
        for r in 0..3 {
            for c in 0..2 {
                w_swapped.data[r * 4 + c] = w_o.at(r, c + 2);
                w_swapped.data[r * 4 + c + 2] = w_o.at(r, c);
            }
        }
        let swapped = mla(&swapped_heads, &w_swapped).unwrap();
        assert_eq!(base, swapped);
    }

    #[test]
    fn one_hot_gate_is_a_single_expert() {
        let model = ToyModel::seeded(1, ModelDims::default()).unwrap();
        let x: Vec<f32> = (0..64).map(|i| (i as f32 * 0.1).sin()).collect();
        let got = moe(&x, &[(2, 0.5)], &model.experts).unwrap();
        let want: Vec<f32> = model.experts[2]
            .ffn(&x)
            .unwrap()
            .iter()
            .map(|v| 0.5 * v)
            .collect();
        assert_eq!(got, want);
    }

    #[test]
    fn empty_gate_is_zero_output() {
        let model = ToyModel::seeded(1, ModelDims::default()).unwrap();
        let x = vec![1.0f32; 64];
        assert_eq!(moe(&x, &[], &model.experts).unwrap(), vec![0.0; 64]);
    }

    #[test]
    fn top2_matches_dense_masked_sum() {
        let model = ToyModel::seeded(2, ModelDims::default()).unwrap();
        let x: Vec<f32> = (0..64).map(|i| (i as f32 * 0.3).cos()).collect();
        let logits = model.w_gate.matvec(&x).unwrap();
        let gate = model.sparse_gate(&logits);
        assert_eq!(gate.len(), 2);
        assert!(gate.iter().all(|&(_, w)| w > 0.0));
        let sum: f32 = gate.iter().map(|(_, w)| w).sum();
        assert!((sum - 1.0).abs() < 1e-6);

        let got = moe(&x, &gate, &model.experts).unwrap();
        // Dense sum over all experts masked by the sparse gate.
        let mut want = vec![0.0f32; 64];
        for e in 0..model.dims.experts {
            let weight = gate
                .iter()
                .find(|&&(i, _)| i == e)
                .map_or(0.0, |&(_, w)| w);
            if weight == 0.0 {
                continue;
            }
            let y = model.experts[e].ffn(&x).unwrap();
            for (o, &v) in want.iter_mut().zip(&y) {
                *o += weight * v;
            }
        }
        assert_eq!(got, want);
    }

    #[test]
    fn kv_cache_grows_once_per_token() {
        let model = ToyModel::seeded(3, ModelDims::default()).unwrap();
        let mut cache = KvCache::new(model.dims.heads);
        for t in 0..5 {
            let x: Vec<f32> = (0..64).map(|i| ((i + t) as f32).sin()).collect();
            model.forward_token(&x, &mut cache).unwrap();
            assert_eq!(cache.len(), t + 1);
        }
    }
}
