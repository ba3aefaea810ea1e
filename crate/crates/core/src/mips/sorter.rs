//! Sequential incremental sorter and the low-dimensional projection.
//!
//! New vectors are placed next to their most similar neighbor so that
//! downstream reference comparisons see near-duplicates back to back. All
//! cosines computed on the way in are cached; evicting an entry drops its
//! cached rows. Original arrival indices ride along so results can scatter
//! back to arrival order.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::workload::gaussian;

/// Cosine similarity; zero whenever either vector has zero norm.
pub fn cosine(u: &[f32], v: &[f32]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    let mut dot = 0.0f64;
    let mut nu = 0.0f64;
    let mut nv = 0.0f64;
    for (&a, &b) in u.iter().zip(v) {
        dot += f64::from(a) * f64::from(b);
        nu += f64::from(a) * f64::from(a);
        nv += f64::from(b) * f64::from(b);
    }
    if nu == 0.0 || nv == 0.0 {
        0.0
    } else {
        dot / (nu.sqrt() * nv.sqrt())
    }
}

/// Seeded projection onto the compact semantic space.
#[derive(Debug, Clone)]
pub struct Projection {
    /// Column-major `d_model x d_low` matrix.
    columns: Vec<Vec<f32>>,
    pub d_model: usize,
    pub d_low: usize,
}

impl Projection {
    pub fn seeded(seed: u64, d_model: usize, d_low: usize) -> Projection {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15);
        let scale = 1.0 / (d_model as f32).sqrt();
        let columns = (0..d_low)
            .map(|_| (0..d_model).map(|_| gaussian(&mut rng) as f32 * scale).collect())
            .collect();
        Projection {
            columns,
            d_model,
            d_low,
        }
    }

    /// Identity-block projection, handy in tests.
    pub fn identity_block(d_model: usize, d_low: usize) -> Projection {
        let columns = (0..d_low)
            .map(|j| {
                let mut c = vec![0.0; d_model];
                c[j] = 1.0;
                c
            })
            .collect();
        Projection {
            columns,
            d_model,
            d_low,
        }
    }
}

/// `V_low = P^T v`.
pub fn project_low(v: &[f32], p: &Projection) -> Result<Vec<f32>, DimensionError> {
    if v.len() != p.d_model {
        return Err(DimensionError {
            expected: p.d_model,
            got: v.len(),
        });
    }
    Ok(p
        .columns
        .iter()
        .map(|col| col.iter().zip(v).map(|(&a, &b)| a * b).sum())
        .collect())
}

#[derive(Debug, thiserror::Error)]
#[error("vector length {got} does not match projection input {expected}")]
pub struct DimensionError {
    pub expected: usize,
    pub got: usize,
}

/// A capacity-bounded window of vectors kept in similarity order.
#[derive(Debug, Clone)]
pub struct SortedWindow {
    entries: Vec<(u64, Vec<f32>)>,
    cos_cache: HashMap<(u64, u64), f64>,
    capacity: usize,
    /// Arrival order of the resident entries, oldest first.
    arrivals: Vec<u64>,
    /// Cosines computed (cache misses) since construction.
    pub cosines_computed: u64,
}

impl SortedWindow {
    pub fn new(capacity: usize) -> SortedWindow {
        SortedWindow {
            entries: Vec::new(),
            cos_cache: HashMap::new(),
            capacity: capacity.max(1),
            arrivals: Vec::new(),
            cosines_computed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in similarity order as (original index, vector).
    pub fn entries(&self) -> impl Iterator<Item = (u64, &[f32])> {
        self.entries.iter().map(|(id, v)| (*id, v.as_slice()))
    }

    pub fn cached(&self, a: u64, b: u64) -> Option<f64> {
        self.cos_cache.get(&ordered(a, b)).copied()
    }

    /// Insert a vector, evicting the oldest entry first when the window is
    /// full. Returns the insertion position in the sorted order. The vector
    /// lands right after its maximum-cosine neighbor; a zero-norm vector
    /// (cosine 0 against everything) goes to the end.
    pub fn insert(&mut self, id: u64, v: Vec<f32>) -> usize {
        if self.entries.len() >= self.capacity {
            self.evict_oldest();
        }
        if self.entries.is_empty() {
            self.entries.push((id, v));
            self.arrivals.push(id);
            return 0;
        }
        let mut best: Option<(usize, f64)> = None;
        for (idx, (other_id, other)) in self.entries.iter().enumerate() {
            let key = ordered(id, *other_id);
            let c = match self.cos_cache.get(&key) {
                Some(&c) => c,
                None => {
                    let c = cosine(&v, other);
                    self.cosines_computed += 1;
                    self.cos_cache.insert(key, c);
                    c
                }
            };
            if best.map_or(true, |(_, bc)| c > bc) {
                best = Some((idx, c));
            }
        }
        let (neighbor, _) = best.expect("window not empty");
        let pos = if is_zero(&v) {
            self.entries.len()
        } else {
            neighbor + 1
        };
        self.entries.insert(pos, (id, v));
        self.arrivals.push(id);
        pos
    }

    fn evict_oldest(&mut self) {
        if self.arrivals.is_empty() {
            return;
        }
        let oldest = self.arrivals.remove(0);
        self.entries.retain(|(id, _)| *id != oldest);
        self.cos_cache.retain(|&(a, b), _| a != oldest && b != oldest);
    }

    pub fn clear(&mut self) {
        self.entries.clear();
        self.arrivals.clear();
        self.cos_cache.clear();
    }
}

fn is_zero(v: &[f32]) -> bool {
    v.iter().all(|&x| x == 0.0)
}

fn ordered(a: u64, b: u64) -> (u64, u64) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_basics() {
        let u = [1.0f32, 0.0, 0.0];
        let v = [0.0f32, 1.0, 0.0];
        assert_eq!(cosine(&u, &u), 1.0);
        assert_eq!(cosine(&u, &v), 0.0);
        let neg: Vec<f32> = u.iter().map(|x| -x).collect();
        assert_eq!(cosine(&u, &neg), -1.0);
        assert_eq!(cosine(&[0.0, 0.0, 0.0], &u), 0.0);
    }

    #[test]
    fn first_insert_lands_at_zero() {
        let mut w = SortedWindow::new(4);
        assert_eq!(w.insert(0, vec![1.0, 0.0]), 0);
    }

    #[test]
    fn duplicate_lands_adjacent() {
        let mut w = SortedWindow::new(8);
        w.insert(0, vec![1.0, 0.0]);
        w.insert(1, vec![0.0, 1.0]);
        let pos = w.insert(2, vec![1.0, 0.0]);
        let order: Vec<u64> = w.entries().map(|(id, _)| id).collect();
        assert_eq!(order[pos - 1], 0, "must sit right after its duplicate");
    }

    #[test]
    fn neighbor_matches_brute_force_argmax() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let vectors: Vec<Vec<f32>> = (0..6)
                .map(|_| (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let mut w = SortedWindow::new(16);
            for (i, v) in vectors.iter().enumerate() {
                w.insert(i as u64, v.clone());
            }
            let probe: Vec<f32> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let resident: Vec<(u64, Vec<f32>)> =
                w.entries().map(|(id, v)| (id, v.to_vec())).collect();
            let pos = w.insert(99, probe.clone());
            // Brute-force scan over the residents at insertion time,
            // keeping the first maximum like the sorter does.
            let mut best = (resident[0].0, cosine(&probe, &resident[0].1));
            for (id, v) in &resident[1..] {
                let c = cosine(&probe, v);
                if c > best.1 {
                    best = (*id, c);
                }
            }
            let order: Vec<u64> = w.entries().map(|(id, _)| id).collect();
            assert_eq!(order[pos - 1], best.0);
        }
    }

    #[test]
    fn zero_vector_appends_at_end() {
        let mut w = SortedWindow::new(4);
        w.insert(0, vec![1.0, 0.0]);
        w.insert(1, vec![0.5, 0.5]);
        let pos = w.insert(2, vec![0.0, 0.0]);
        assert_eq!(pos, 2);
    }

    #[test]
    fn eviction_drops_cache_rows() {
        let mut w = SortedWindow::new(2);
        w.insert(0, vec![1.0, 0.0]);
        w.insert(1, vec![0.0, 1.0]);
        assert!(w.cached(0, 1).is_some());
        w.insert(2, vec![1.0, 1.0]);
        assert_eq!(w.len(), 2);
        assert!(w.cached(0, 1).is_none(), "rows of evicted id 0 must drop");
        assert!(w.cached(1, 2).is_some());
    }

    #[test]
    fn cache_prevents_recomputation() {
        let mut w = SortedWindow::new(8);
        w.insert(0, vec![1.0, 0.0]);
        w.insert(1, vec![0.9, 0.1]);
        let computed = w.cosines_computed;
        // Re-reading a cached pair computes nothing new.
        let _ = w.cached(0, 1).unwrap();
        assert_eq!(w.cosines_computed, computed);
    }

    #[test]
    fn projection_is_deterministic_and_identity_block_works() {
        let p1 = Projection::seeded(42, 16, 4);
        let p2 = Projection::seeded(42, 16, 4);
        let v: Vec<f32> = (0..16).map(|i| i as f32 / 7.0).collect();
        assert_eq!(project_low(&v, &p1).unwrap(), project_low(&v, &p2).unwrap());

        let id = Projection::identity_block(16, 4);
        assert_eq!(project_low(&v, &id).unwrap(), &v[..4]);
        assert_eq!(project_low(&[0.0; 16], &id).unwrap(), vec![0.0; 4]);

        assert!(project_low(&v[..8], &id).is_err());
    }
}
