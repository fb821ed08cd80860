//! Top-K ranking by estimated scores, per-user utility valued by true
//! preference, total welfare, and the Nash social welfare aggregate.
//!
//! Ranking always uses the estimated user vector; the utility a user derives
//! from a ranked item is the match score against the true user vector. The
//! platform recommends on what it believes, the user experiences what is.

use serde::{Deserialize, Serialize};

use crate::error::{C3bvError, Result};
use crate::space::{dot, UnitNonnegVec, Vector};

/// Floor applied to per-user utilities inside the geometric mean, so a single
/// zero-utility user does not annihilate the aggregate.
pub const NSW_FLOOR: f64 = 1e-9;

/// Neumaier-compensated summation, used wherever a sum must be independent of
/// summand magnitude ordering effects (welfare totals, aggregate means).
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Attention weights r_1 ≥ r_2 ≥ … ≥ r_K ≥ 0 over the top-K slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct AttentionWeights(Vec<f64>);

impl AttentionWeights {
    pub fn new(r: Vec<f64>) -> Result<Self> {
        if r.is_empty() {
            return Err(C3bvError::InvalidParameter(
                "attention weights must be nonempty".into(),
            ));
        }
        for (i, &w) in r.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(C3bvError::InvalidParameter(format!(
                    "attention weight {i} must be finite and >= 0, got {w}"
                )));
            }
            if i > 0 && w > r[i - 1] {
                return Err(C3bvError::InvalidParameter(format!(
                    "attention weights must be nonincreasing, got {} before {w}",
                    r[i - 1]
                )));
            }
        }
        Ok(AttentionWeights(r))
    }

    /// The default logarithmic discount: r_k = 1 / log2(k + 1), k = 1..K.
    pub fn log_discount(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(C3bvError::InvalidParameter(
                "attention length must be >= 1".into(),
            ));
        }
        Ok(AttentionWeights(
            (1..=k).map(|i| 1.0 / ((i + 1) as f64).log2()).collect(),
        ))
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for AttentionWeights {
    type Error = C3bvError;
    fn try_from(r: Vec<f64>) -> Result<Self> {
        AttentionWeights::new(r)
    }
}

impl From<AttentionWeights> for Vec<f64> {
    fn from(a: AttentionWeights) -> Vec<f64> {
        a.0
    }
}

/// Indices of the k largest scores, descending, ties broken by ascending
/// index. Deterministic for any input.
pub fn rank_topk_scores(scores: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > scores.len() {
        return Err(C3bvError::InvalidParameter(format!(
            "k = {k} out of range for {} scores",
            scores.len()
        )));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    sort_by_score_desc(&mut idx, scores);
    idx.truncate(k);
    Ok(idx)
}

pub(crate) fn sort_by_score_desc(idx: &mut [usize], scores: &[f64]) {
    idx.sort_unstable_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| a.cmp(&b))
    });
}

/// Ranks the strategy profile for one user by estimated match scores.
pub fn rank_topk(strategies: &[UnitNonnegVec], u_hat: &Vector, k: usize) -> Result<Vec<usize>> {
    let mut scores = Vec::with_capacity(strategies.len());
    for s in strategies {
        scores.push(crate::space::match_score(u_hat.0.as_slice(), s.as_slice())?);
    }
    rank_topk_scores(&scores, k)
}

/// One user's utility: rank by the estimated vector, value each ranked item
/// by the true vector, weight by attention.
pub fn user_utility(
    strategies: &[UnitNonnegVec],
    u_true: &Vector,
    u_hat: &Vector,
    attention: &AttentionWeights,
) -> Result<f64> {
    let ranked = rank_topk(strategies, u_hat, attention.k())?;
    let mut total = 0.0;
    for (slot, &j) in ranked.iter().enumerate() {
        total += attention.weights()[slot] * dot(&u_true.0, strategies[j].as_slice());
    }
    Ok(total)
}

/// Hot-path variant over precomputed per-user score rows. `est_row` drives
/// the ranking, `true_row` supplies the value. `idx_buf` is scratch.
pub(crate) fn user_utility_rows(
    est_row: &[f64],
    true_row: &[f64],
    attention: &AttentionWeights,
    idx_buf: &mut Vec<usize>,
) -> f64 {
    idx_buf.clear();
    idx_buf.extend(0..est_row.len());
    sort_by_score_desc(idx_buf, est_row);
    let mut total = 0.0;
    for (slot, &j) in idx_buf.iter().take(attention.k()).enumerate() {
        total += attention.weights()[slot] * true_row[j];
    }
    total
}

pub fn per_user_utilities(
    strategies: &[UnitNonnegVec],
    users_true: &[Vector],
    u_hats: &[Vector],
    attention: &AttentionWeights,
) -> Result<Vec<f64>> {
    if users_true.len() != u_hats.len() {
        return Err(C3bvError::DimensionMismatch {
            left: users_true.len(),
            right: u_hats.len(),
        });
    }
    users_true
        .iter()
        .zip(u_hats)
        .map(|(u, uh)| user_utility(strategies, u, uh, attention))
        .collect()
}

/// Sum of per-user utilities, compensated.
pub fn total_welfare(
    strategies: &[UnitNonnegVec],
    users_true: &[Vector],
    u_hats: &[Vector],
    attention: &AttentionWeights,
) -> Result<f64> {
    let utils = per_user_utilities(strategies, users_true, u_hats, attention)?;
    let mut acc = KahanSum::default();
    for u in utils {
        acc.add(u);
    }
    Ok(acc.value())
}

/// Geometric mean of per-user utilities, each floored at [`NSW_FLOOR`].
pub fn nash_social_welfare(per_user: &[f64]) -> Result<f64> {
    if per_user.is_empty() {
        return Err(C3bvError::InvalidParameter(
            "nash social welfare needs at least one user".into(),
        ));
    }
    let mut acc = KahanSum::default();
    for &u in per_user {
        acc.add(u.max(NSW_FLOOR).ln());
    }
    Ok((acc.value() / per_user.len() as f64).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(v: Vec<f64>) -> UnitNonnegVec {
        UnitNonnegVec::new(v).unwrap()
    }

    #[test]
    fn log_discount_weights() {
        let a = AttentionWeights::log_discount(3).unwrap();
        assert!((a.weights()[0] - 1.0).abs() < 1e-15);
        assert!((a.weights()[1] - 1.0 / 3f64.log2()).abs() < 1e-15);
        assert!((a.weights()[2] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn attention_rejects_increasing_or_negative() {
        assert!(AttentionWeights::new(vec![0.5, 1.0]).is_err());
        assert!(AttentionWeights::new(vec![1.0, -0.1]).is_err());
        assert!(AttentionWeights::new(vec![]).is_err());
        assert!(AttentionWeights::new(vec![1.0, 0.0, 0.0]).is_ok());
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank_topk_scores(&[0.3, 0.9, 0.5], 2).unwrap(), vec![1, 2]);
        assert_eq!(rank_topk_scores(&[0.4, 0.4, 0.4], 3).unwrap(), vec![0, 1, 2]);
        let all = rank_topk_scores(&[0.1, 0.7, 0.3, 0.5], 4).unwrap();
        let mut sorted = all.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3]);
        assert!(rank_topk_scores(&[0.1], 2).is_err());
    }

    #[test]
    fn user_utility_trend_example() {
        let mut strategies = vec![unit(vec![1.0, 0.0]); 9];
        strategies.push(unit(vec![0.0, 1.0]));
        let u_true = Vector(vec![0.8, 0.6]);
        let u_hat = Vector(vec![0.72, 0.30]);
        let attention = AttentionWeights::new(vec![1.0]).unwrap();
        let w = user_utility(&strategies, &u_true, &u_hat, &attention).unwrap();
        assert!((w - 0.8).abs() < 1e-12);
    }

    #[test]
    fn user_utility_perfect_estimate() {
        let u = Vector(vec![0.9, 1.2]);
        let norm = (0.9f64 * 0.9 + 1.2 * 1.2).sqrt();
        let strategies = vec![
            unit(vec![0.9 / norm, 1.2 / norm]),
            unit(vec![1.0, 0.0]),
        ];
        let attention = AttentionWeights::new(vec![1.0]).unwrap();
        let w = user_utility(&strategies, &u, &u, &attention).unwrap();
        assert!((w - norm).abs() < 1e-12);
    }

    #[test]
    fn zero_attention_gives_zero_utility() {
        let strategies = vec![unit(vec![1.0, 0.0]), unit(vec![0.0, 1.0])];
        let u = Vector(vec![0.5, 0.5]);
        let attention = AttentionWeights::new(vec![0.0, 0.0]).unwrap();
        assert_eq!(
            user_utility(&strategies, &u, &u, &attention).unwrap(),
            0.0
        );
    }

    #[test]
    fn welfare_is_additive_over_duplicated_users() {
        let strategies = vec![unit(vec![1.0, 0.0]), unit(vec![0.0, 1.0])];
        let users = vec![Vector(vec![0.8, 0.6]), Vector(vec![0.2, 0.9])];
        let hats = users.clone();
        let attention = AttentionWeights::log_discount(2).unwrap();
        let w1 = total_welfare(&strategies, &users, &hats, &attention).unwrap();
        let users2: Vec<Vector> = users.iter().chain(&users).cloned().collect();
        let hats2 = users2.clone();
        let w2 = total_welfare(&strategies, &users2, &hats2, &attention).unwrap();
        assert!((w2 - 2.0 * w1).abs() < 1e-12);
    }

    #[test]
    fn nash_social_welfare_examples() {
        assert!((nash_social_welfare(&[3.0, 3.0, 3.0]).unwrap() - 3.0).abs() < 1e-12);
        assert!((nash_social_welfare(&[1.0, 4.0]).unwrap() - 2.0).abs() < 1e-12);
        let floored = nash_social_welfare(&[0.0, 1.0]).unwrap();
        assert!(floored > 0.0 && floored < 1e-4);
        assert!(nash_social_welfare(&[]).is_err());
    }

    proptest! {
        #[test]
        fn ranking_ignores_positive_scaling_of_estimate(
            entries in proptest::collection::vec(0.01f64..1.0, 3),
            c in 0.1f64..50.0,
        ) {
            let strategies = vec![
                unit(vec![1.0, 0.0, 0.0]),
                unit(vec![0.0, 1.0, 0.0]),
                unit(vec![0.0, 0.0, 1.0]),
            ];
            let u_hat = Vector(entries.clone());
            let scaled = Vector(entries.iter().map(|x| c * x).collect());
            let a = rank_topk(&strategies, &u_hat, 3).unwrap();
            let b = rank_topk(&strategies, &scaled, 3).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn welfare_is_permutation_invariant(
            seed in 0u64..1000,
            swap in 0usize..4,
        ) {
            use rand::Rng;
            let mut rng = crate::rng::stream(seed);
            let strategies = vec![unit(vec![1.0, 0.0]), unit(vec![0.0, 1.0])];
            let mut users: Vec<Vector> = (0..4)
                .map(|_| Vector(vec![rng.random::<f64>(), rng.random::<f64>()]))
                .collect();
            let mut hats = users.clone();
            let attention = AttentionWeights::log_discount(2).unwrap();
            let w1 = total_welfare(&strategies, &users, &hats, &attention).unwrap();
            users.swap(swap, 3 - swap.min(3));
            hats.swap(swap, 3 - swap.min(3));
            let w2 = total_welfare(&strategies, &users, &hats, &attention).unwrap();
            prop_assert!((w1 - w2).abs() < 1e-12);
        }

        #[test]
        fn utility_monotone_in_attention_weight(
            scores_seed in 0u64..500,
            bump in 0.0f64..0.5,
        ) {
            use rand::Rng;
            let mut rng = crate::rng::stream(scores_seed);
            let strategies = vec![
                unit(vec![1.0, 0.0]),
                unit(vec![0.0, 1.0]),
                unit(vec![std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2]),
            ];
            let u = Vector(vec![rng.random::<f64>(), rng.random::<f64>()]);
            let base = AttentionWeights::new(vec![1.0, 0.4]).unwrap();
            // Raising r_1 keeps the sequence valid; top-1 value is nonnegative
            // here because contents and the user are nonnegative.
            let raised = AttentionWeights::new(vec![1.0 + bump, 0.4]).unwrap();
            let w_base = user_utility(&strategies, &u, &u, &base).unwrap();
            let w_raised = user_utility(&strategies, &u, &u, &raised).unwrap();
            prop_assert!(w_raised + 1e-12 >= w_base);
        }
    }
}
