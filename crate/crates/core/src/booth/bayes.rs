//! Naive-Bayes redundancy classifier and the path-selection rule.
//!
//! The model sees two pieces of evidence per batch, bit similarity and
//! repeat length, each discretized into four bins, and outputs the
//! posterior over the redundancy class (Low or High). The redundancy score
//! blends the two posteriors; scores at or above the threshold switch the
//! pipeline onto the radix-8 extended path.

use serde::{Deserialize, Serialize};

use super::Radix;

/// Score threshold separating the regular from the extended path.
pub const PATH_SCORE_THRESHOLD: f64 = 0.8;

const BINS: usize = 4;
const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Tabular naive-Bayes model over the redundancy class.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BnModel {
    /// Prior over [Low, High].
    pub prior: [f64; 2],
    /// P(BS bin | class), one row per class.
    pub cpt_bs: [[f64; BINS]; 2],
    /// P(Re-length bin | class), one row per class.
    pub cpt_rl: [[f64; BINS]; 2],
    /// Score weight of P(R=Low).
    pub r_l: f64,
    /// Score weight of P(R=High).
    pub r_h: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum BnError {
    #[error("{table} row {row} sums to {sum}, expected 1")]
    RowSum {
        table: &'static str,
        row: usize,
        sum: f64,
    },
    #[error("{table} row {row} contains a negative or non-finite entry")]
    BadEntry { table: &'static str, row: usize },
}

impl BnModel {
    /// Uniform tables: the posterior always equals the prior.
    pub fn uniform() -> BnModel {
        BnModel {
            prior: [0.5, 0.5],
            cpt_bs: [[0.25; BINS]; 2],
            cpt_rl: [[0.25; BINS]; 2],
            r_l: 0.2,
            r_h: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), BnError> {
        let check = |table: &'static str, rows: &[[f64; BINS]]| -> Result<(), BnError> {
            for (row, values) in rows.iter().enumerate() {
                if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(BnError::BadEntry { table, row });
                }
                let sum: f64 = values.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    return Err(BnError::RowSum { table, row, sum });
                }
            }
            Ok(())
        };
        check("cpt_bs", &self.cpt_bs)?;
        check("cpt_rl", &self.cpt_rl)?;
        let prior_sum = self.prior[0] + self.prior[1];
        if self.prior.iter().any(|v| !v.is_finite() || *v < 0.0)
            || (prior_sum - 1.0).abs() > ROW_SUM_TOLERANCE
        {
            return Err(BnError::RowSum {
                table: "prior",
                row: 0,
                sum: prior_sum,
            });
        }
        Ok(())
    }

    /// Fit tables by frequency counting on labeled (BS, Re-length) samples,
    /// with add-one smoothing so no bin ends up impossible. Labels are true
    /// for the High class.
    pub fn fit(samples: &[(f64, u32, bool)], r_l: f64, r_h: f64) -> BnModel {
        let mut class_counts = [1.0f64; 2];
        let mut bs_counts = [[1.0f64; BINS]; 2];
        let mut rl_counts = [[1.0f64; BINS]; 2];
        for &(bs, rl, high) in samples {
            let c = usize::from(high);
            class_counts[c] += 1.0;
            bs_counts[c][bs_bin(bs)] += 1.0;
            rl_counts[c][rl_bin(rl)] += 1.0;
        }
        let normalize = |counts: [[f64; BINS]; 2]| {
            let mut out = [[0.0; BINS]; 2];
            for (row, counts) in counts.iter().enumerate() {
                let sum: f64 = counts.iter().sum();
                for (slot, &c) in out[row].iter_mut().zip(counts) {
                    *slot = c / sum;
                }
            }
            out
        };
        let total = class_counts[0] + class_counts[1];
        BnModel {
            prior: [class_counts[0] / total, class_counts[1] / total],
            cpt_bs: normalize(bs_counts),
            cpt_rl: normalize(rl_counts),
            r_l,
            r_h,
        }
    }
}

/// Bit-similarity bin: four equal intervals over [0, 1].
pub fn bs_bin(bs: f64) -> usize {
    ((bs * BINS as f64) as usize).min(BINS - 1)
}

/// Repeat-length bin: 0-2, 3-4, 5-6, 7-8.
pub fn rl_bin(rl: u32) -> usize {
    match rl {
        0..=2 => 0,
        3..=4 => 1,
        5..=6 => 2,
        _ => 3,
    }
}

/// Posterior over (Low, High) from binned evidence via Bayes' rule.
pub fn bn_classify(model: &BnModel, bs: f64, re_length: u32) -> (f64, f64) {
    let b = bs_bin(bs);
    let r = rl_bin(re_length);
    let low = model.prior[0] * model.cpt_bs[0][b] * model.cpt_rl[0][r];
    let high = model.prior[1] * model.cpt_bs[1][b] * model.cpt_rl[1][r];
    let z = low + high;
    if z == 0.0 {
        (model.prior[0], model.prior[1])
    } else {
        (low / z, high / z)
    }
}

/// Redundancy score `r_L * P(R=Low) + r_H * P(R=High)`.
pub fn redundancy_score(p_low: f64, p_high: f64, r_l: f64, r_h: f64) -> f64 {
    r_l * p_low + r_h * p_high
}

/// Scores below the threshold take the regular radix-4 path; the boundary
/// belongs to the extended path, which has fewer partial products.
pub fn select_path(score: f64) -> Radix {
    if score < PATH_SCORE_THRESHOLD {
        Radix::Radix4
    } else {
        Radix::Radix8
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_tables_return_prior() {
        let mut model = BnModel::uniform();
        model.prior = [0.3, 0.7];
        for bs in [0.0, 0.4, 0.9] {
            for rl in [0, 4, 8] {
                let (lo, hi) = bn_classify(&model, bs, rl);
                assert!((lo - 0.3).abs() < 1e-12);
                assert!((hi - 0.7).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn posterior_normalized() {
        let model = BnModel::fit(
            &[(0.9, 8, true), (0.1, 1, false), (0.8, 6, true), (0.2, 2, false)],
            0.2,
            1.0,
        );
        model.validate().unwrap();
        for bs in [0.0, 0.25, 0.5, 0.75, 1.0] {
            for rl in 0..=8 {
                let (lo, hi) = bn_classify(&model, bs, rl);
                assert!((lo + hi - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn posterior_matches_hand_computed_bayes_rule() {
        let model = BnModel {
            prior: [0.6, 0.4],
            cpt_bs: [[0.4, 0.3, 0.2, 0.1], [0.1, 0.2, 0.3, 0.4]],
            cpt_rl: [[0.7, 0.1, 0.1, 0.1], [0.1, 0.1, 0.2, 0.6]],
            r_l: 0.2,
            r_h: 1.0,
        };
        model.validate().unwrap();
        // BS = 0.8 falls in bin 3, Re-length 7 in bin 3.
        let low = 0.6 * 0.1 * 0.1;
        let high = 0.4 * 0.4 * 0.6;
        let want_high = high / (low + high);
        let (_, got_high) = bn_classify(&model, 0.8, 7);
        assert!((got_high - want_high).abs() < 1e-12);
    }

    #[test]
    fn score_and_path_selection() {
        assert!((redundancy_score(1.0, 0.0, 0.2, 1.0) - 0.2).abs() < 1e-12);
        assert!((redundancy_score(0.0, 1.0, 0.2, 1.0) - 1.0).abs() < 1e-12);
        let mid = redundancy_score(0.5, 0.5, 0.2, 1.0);
        assert!((mid - 0.6).abs() < 1e-12);
        assert_eq!(select_path(mid), Radix::Radix4);
        assert_eq!(select_path(0.79), Radix::Radix4);
        assert_eq!(select_path(0.81), Radix::Radix8);
        assert_eq!(select_path(0.80), Radix::Radix8);
    }

    #[test]
    fn malformed_rows_rejected() {
        let mut model = BnModel::uniform();
        model.cpt_bs[1] = [0.5, 0.5, 0.5, 0.5];
        assert!(matches!(
            model.validate(),
            Err(BnError::RowSum { table: "cpt_bs", row: 1, .. })
        ));
        let mut model = BnModel::uniform();
        model.cpt_rl[0][2] = -0.1;
        assert!(matches!(model.validate(), Err(BnError::BadEntry { .. })));
    }
}
