//! Reward mechanisms and creator utilities.
//!
//! Four mechanisms ship, all individually monotone on nonnegative scores:
//! raising a creator's own match score never lowers that creator's per-user
//! reward while everyone else stays fixed. That is the only structural
//! property the rest of the system relies on.
//!
//! Ranking ties are always broken by ascending creator index. Symmetric
//! profiles (many creators at the same strategy) make ties the common case,
//! so the break must be deterministic.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{C3bvError, Result};
use crate::game::RowMatrix;
use crate::space::Vector;
use crate::welfare::{AttentionWeights, KahanSum};

pub const DEFAULT_SOFTMAX_BETA: f64 = 5.0;

/// Mechanism selector.
///
/// - `exposure_topk`: reward r_k for holding slot k of the user's top-K.
/// - `engagement_topk`: r_k · score for holding slot k.
/// - `softmax_share:<beta>`: share exp(β·score) / Σ_t exp(β·score_t) over
///   all creators.
/// - `winner_value`: the rank-1 creator earns its own score, everyone else 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MechanismId {
    ExposureTopK,
    EngagementTopK,
    SoftmaxShare { beta: f64 },
    WinnerValue,
}

impl MechanismId {
    pub fn validate(&self) -> Result<()> {
        if let MechanismId::SoftmaxShare { beta } = self {
            if !beta.is_finite() || *beta <= 0.0 {
                return Err(C3bvError::InvalidParameter(format!(
                    "softmax_share beta must be finite and > 0, got {beta}"
                )));
            }
        }
        Ok(())
    }

    /// All four mechanisms at their default parameters.
    pub fn all_default() -> Vec<MechanismId> {
        vec![
            MechanismId::ExposureTopK,
            MechanismId::EngagementTopK,
            MechanismId::SoftmaxShare {
                beta: DEFAULT_SOFTMAX_BETA,
            },
            MechanismId::WinnerValue,
        ]
    }
}

impl fmt::Display for MechanismId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MechanismId::ExposureTopK => write!(f, "exposure_topk"),
            MechanismId::EngagementTopK => write!(f, "engagement_topk"),
            MechanismId::SoftmaxShare { beta } => write!(f, "softmax_share:{beta}"),
            MechanismId::WinnerValue => write!(f, "winner_value"),
        }
    }
}

impl FromStr for MechanismId {
    type Err = C3bvError;

    fn from_str(s: &str) -> Result<Self> {
        let mech = match s {
            "exposure_topk" => MechanismId::ExposureTopK,
            "engagement_topk" => MechanismId::EngagementTopK,
            "winner_value" => MechanismId::WinnerValue,
            "softmax_share" => MechanismId::SoftmaxShare {
                beta: DEFAULT_SOFTMAX_BETA,
            },
            other => {
                if let Some(beta) = other.strip_prefix("softmax_share:") {
                    let beta: f64 = beta.parse().map_err(|_| {
                        C3bvError::InvalidParameter(format!(
                            "bad softmax_share beta in mechanism id {other:?}"
                        ))
                    })?;
                    MechanismId::SoftmaxShare { beta }
                } else {
                    return Err(C3bvError::InvalidParameter(format!(
                        "unknown mechanism id {other:?}"
                    )));
                }
            }
        };
        mech.validate()?;
        Ok(mech)
    }
}

impl TryFrom<String> for MechanismId {
    type Error = C3bvError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MechanismId> for String {
    fn from(m: MechanismId) -> String {
        m.to_string()
    }
}

/// Estimated match scores for every (user, creator) pair. Rebuild (or update
/// the affected column) whenever the strategy profile changes.
pub type ScoreBoard = RowMatrix;

/// Builds the m×n board of σ(û_i, s_j).
pub fn score_board(
    u_hats: &[Vector],
    strategies: &[crate::space::UnitNonnegVec],
) -> Result<ScoreBoard> {
    let m = u_hats.len();
    let n = strategies.len();
    let mut board = RowMatrix::zeros(m, n);
    for (i, u) in u_hats.iter().enumerate() {
        let row = board.row_mut(i);
        for (j, s) in strategies.iter().enumerate() {
            row[j] = crate::space::match_score(&u.0, s.as_slice())?;
        }
    }
    Ok(board)
}

/// Per-user reward for creator `j` when its own score is `sigma_j` and the
/// rest of the row is taken as-is (`row[j]` itself is ignored). This is the
/// primitive behind both utilities and candidate-deviation evaluation.
pub(crate) fn reward_with_score(
    mech: &MechanismId,
    row: &[f64],
    j: usize,
    sigma_j: f64,
    attention: &AttentionWeights,
) -> f64 {
    match mech {
        MechanismId::ExposureTopK => {
            let rank = rank_of(row, j, sigma_j);
            if rank <= attention.k() {
                attention.weights()[rank - 1]
            } else {
                0.0
            }
        }
        MechanismId::EngagementTopK => {
            let rank = rank_of(row, j, sigma_j);
            if rank <= attention.k() {
                attention.weights()[rank - 1] * sigma_j
            } else {
                0.0
            }
        }
        MechanismId::SoftmaxShare { beta } => {
            let mut zmax = beta * sigma_j;
            for (t, &sigma) in row.iter().enumerate() {
                if t != j {
                    zmax = zmax.max(beta * sigma);
                }
            }
            let own = (beta * sigma_j - zmax).exp();
            let mut denom = own;
            for (t, &sigma) in row.iter().enumerate() {
                if t != j {
                    denom += (beta * sigma - zmax).exp();
                }
            }
            own / denom
        }
        MechanismId::WinnerValue => {
            if rank_of(row, j, sigma_j) == 1 {
                sigma_j
            } else {
                0.0
            }
        }
    }
}

/// 1-based rank of creator `j` with score `sigma_j` against the other
/// entries of `row`; an equal score at a lower index outranks `j`.
fn rank_of(row: &[f64], j: usize, sigma_j: f64) -> usize {
    let mut ahead = 0;
    for (t, &sigma) in row.iter().enumerate() {
        if t != j && (sigma > sigma_j || (sigma == sigma_j && t < j)) {
            ahead += 1;
        }
    }
    ahead + 1
}

/// Reward creator `j` earns from the single user whose scores are `row`.
pub fn per_user_reward(
    mech: &MechanismId,
    row: &[f64],
    j: usize,
    attention: &AttentionWeights,
) -> f64 {
    reward_with_score(mech, row, j, row[j], attention)
}

/// Creator utility: per-user reward summed over all users on the board.
pub fn creator_utility(
    j: usize,
    board: &ScoreBoard,
    mech: &MechanismId,
    attention: &AttentionWeights,
) -> Result<f64> {
    if j >= board.cols() {
        return Err(C3bvError::InvalidParameter(format!(
            "creator index {j} out of range for {} creators",
            board.cols()
        )));
    }
    if attention.k() > board.cols() {
        return Err(C3bvError::InvalidParameter(format!(
            "attention length {} exceeds creator count {}",
            attention.k(),
            board.cols()
        )));
    }
    mech.validate()?;
    let mut acc = KahanSum::default();
    for i in 0..board.rows() {
        acc.add(per_user_reward(mech, board.row(i), j, attention));
    }
    Ok(acc.value())
}

/// Utilities of all creators at once.
pub fn all_creator_utilities(
    board: &ScoreBoard,
    mech: &MechanismId,
    attention: &AttentionWeights,
) -> Result<Vec<f64>> {
    (0..board.cols())
        .map(|j| creator_utility(j, board, mech, attention))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityCounterexample {
    pub scores: Vec<f64>,
    pub creator: usize,
    pub delta: f64,
    pub k: usize,
    pub reward_before: f64,
    pub reward_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    pub trials: usize,
    pub counterexample: Option<MonotonicityCounterexample>,
}

impl MonotonicityReport {
    pub fn passed(&self) -> bool {
        self.counterexample.is_none()
    }
}

/// Randomized check of individual monotonicity: sample a nonnegative score
/// vector, raise one creator's score, and require that creator's reward not
/// to decrease. Scores are drawn from [0, 2); the model keeps scores
/// nonnegative, and the engagement and winner mechanisms are only monotone
/// on that domain.
pub fn check_individual_monotonicity(
    mech: &MechanismId,
    trials: usize,
    seed: u64,
) -> Result<MonotonicityReport> {
    mech.validate()?;
    if trials == 0 {
        return Err(C3bvError::InvalidParameter("trials must be >= 1".into()));
    }
    let m = *mech;
    Ok(check_monotonicity_with(
        move |row, j, attention| per_user_reward(&m, row, j, attention),
        trials,
        seed,
    ))
}

/// Generic driver shared with tests, so a deliberately broken reward rule
/// can be shown to produce a counterexample.
pub(crate) fn check_monotonicity_with<F>(reward: F, trials: usize, seed: u64) -> MonotonicityReport
where
    F: Fn(&[f64], usize, &AttentionWeights) -> f64,
{
    use rand::Rng;
    let mut rng = crate::rng::stream(seed);
    for trial in 0..trials {
        let n = rng.random_range(2..=8usize);
        let k = rng.random_range(1..=n);
        let attention = AttentionWeights::log_discount(k).expect("k >= 1");
        let mut scores: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
        let j = rng.random_range(0..n);
        let delta = rng.random_range(f64::EPSILON..1.0);
        let before = reward(&scores, j, &attention);
        scores[j] += delta;
        let after = reward(&scores, j, &attention);
        if after + 1e-12 < before {
            return MonotonicityReport {
                trials: trial + 1,
                counterexample: Some(MonotonicityCounterexample {
                    scores,
                    creator: j,
                    delta,
                    k,
                    reward_before: before,
                    reward_after: after,
                }),
            };
        }
    }
    MonotonicityReport {
        trials,
        counterexample: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::UnitNonnegVec;
    use proptest::prelude::*;

    fn board_1user(scores: Vec<f64>) -> ScoreBoard {
        let n = scores.len();
        let mut b = RowMatrix::zeros(1, n);
        b.row_mut(0).copy_from_slice(&scores);
        b
    }

    #[test]
    fn mechanism_id_roundtrip() {
        for m in MechanismId::all_default() {
            let s = m.to_string();
            let back: MechanismId = s.parse().unwrap();
            assert_eq!(m, back);
        }
        assert_eq!(
            "softmax_share".parse::<MechanismId>().unwrap(),
            MechanismId::SoftmaxShare { beta: 5.0 }
        );
        assert_eq!(
            "softmax_share:2.5".parse::<MechanismId>().unwrap(),
            MechanismId::SoftmaxShare { beta: 2.5 }
        );
        assert!("softmax_share:-1".parse::<MechanismId>().is_err());
        assert!("clicks".parse::<MechanismId>().is_err());
    }

    #[test]
    fn exposure_top1_example() {
        let board = board_1user(vec![0.9, 0.1]);
        let attention = AttentionWeights::new(vec![1.0]).unwrap();
        let mech = MechanismId::ExposureTopK;
        assert_eq!(creator_utility(0, &board, &mech, &attention).unwrap(), 1.0);
        assert_eq!(creator_utility(1, &board, &mech, &attention).unwrap(), 0.0);
    }

    #[test]
    fn engagement_top1_example() {
        let board = board_1user(vec![0.9, 0.1]);
        let attention = AttentionWeights::new(vec![1.0]).unwrap();
        let mech = MechanismId::EngagementTopK;
        let u0 = creator_utility(0, &board, &mech, &attention).unwrap();
        assert!((u0 - 0.9).abs() < 1e-15);
    }

    #[test]
    fn softmax_symmetric_profile_splits_evenly() {
        let s = UnitNonnegVec::new(vec![0.6, 0.8]).unwrap();
        let strategies = vec![s; 5];
        let hats = vec![Vector(vec![0.4, 0.9])];
        let board = score_board(&hats, &strategies).unwrap();
        let attention = AttentionWeights::new(vec![1.0]).unwrap();
        let mech = MechanismId::SoftmaxShare { beta: 5.0 };
        for j in 0..5 {
            let u = creator_utility(j, &board, &mech, &attention).unwrap();
            assert!((u - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn winner_value_takes_tie_by_index() {
        let board = board_1user(vec![0.7, 0.7, 0.2]);
        let attention = AttentionWeights::new(vec![1.0]).unwrap();
        let mech = MechanismId::WinnerValue;
        assert!((creator_utility(0, &board, &mech, &attention).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(creator_utility(1, &board, &mech, &attention).unwrap(), 0.0);
    }

    #[test]
    fn monotonicity_passes_for_shipped_mechanisms() {
        for mech in MechanismId::all_default() {
            let report = check_individual_monotonicity(&mech, 10_000, 7).unwrap();
            assert!(report.passed(), "{mech}: {:?}", report.counterexample);
        }
    }

    #[test]
    fn monotonicity_catches_negated_reward() {
        let report = check_monotonicity_with(
            |row, j, attention| -per_user_reward(&MechanismId::EngagementTopK, row, j, attention),
            10_000,
            11,
        );
        assert!(!report.passed());
        let ce = report.counterexample.unwrap();
        assert!(ce.reward_after < ce.reward_before);
    }

    proptest! {
        #[test]
        fn exposure_rewards_sum_to_attention_mass(
            scores in proptest::collection::vec(0.0f64..2.0, 2..8),
            k_frac in 0.0f64..1.0,
        ) {
            let n = scores.len();
            let k = 1 + ((n - 1) as f64 * k_frac) as usize;
            let attention = AttentionWeights::log_discount(k).unwrap();
            let board = board_1user(scores);
            let mech = MechanismId::ExposureTopK;
            let total: f64 = (0..n)
                .map(|j| creator_utility(j, &board, &mech, &attention).unwrap())
                .sum();
            let mass: f64 = attention.weights().iter().sum();
            prop_assert!((total - mass).abs() < 1e-12);
        }

        #[test]
        fn softmax_rewards_sum_to_one(
            scores in proptest::collection::vec(0.0f64..2.0, 2..8),
            beta in 0.5f64..10.0,
        ) {
            let n = scores.len();
            let attention = AttentionWeights::new(vec![1.0]).unwrap();
            let board = board_1user(scores);
            let mech = MechanismId::SoftmaxShare { beta };
            let total: f64 = (0..n)
                .map(|j| creator_utility(j, &board, &mech, &attention).unwrap())
                .sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }
}
