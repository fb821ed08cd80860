//! Local better-response dynamics.
//!
//! Creators take turns perturbing their strategy by a random direction of
//! the full unit sphere. A candidate is accepted when its utility, computed
//! at the raw, unprojected candidate point against the fixed user estimates,
//! is at least the current utility; the accepted move is then projected back
//! onto the nonnegative unit sphere. Estimates are computed once from the
//! initial contents and stay fixed for the whole run: the platform does not
//! re-estimate while creators move.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{C3bvError, Result};
use crate::estimator::EstimatedUsers;
use crate::game::{GameInstance, RowMatrix};
use crate::mechanisms::{reward_with_score, MechanismId};
use crate::space::{dot, norm, UnitNonnegVec};
use crate::welfare::{user_utility_rows, AttentionWeights, KahanSum};

/// Per-creator strategies plus the number of completed update rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyProfile {
    pub strategies: Vec<UnitNonnegVec>,
    pub step: usize,
}

impl StrategyProfile {
    pub fn initial(strategies: Vec<UnitNonnegVec>) -> Self {
        StrategyProfile { strategies, step: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateOrder {
    RoundRobin,
    RandomPermutation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynamicsConfig {
    /// Perturbation radius η.
    pub eta: f64,
    /// Number of full update rounds; every creator moves once per round.
    pub horizon: usize,
    pub update_order: UpdateOrder,
    pub seed: u64,
    /// Record (strategies, utilities, welfare) after every round. Off for
    /// sweep cells, on for trace exports.
    pub record_trace: bool,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig {
            eta: 0.05,
            horizon: 800,
            update_order: UpdateOrder::RoundRobin,
            seed: 0,
            record_trace: false,
        }
    }
}

impl DynamicsConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.eta.is_finite() || self.eta <= 0.0 || self.eta > 1.0 {
            return Err(C3bvError::InvalidParameter(format!(
                "eta must be in (0, 1], got {}",
                self.eta
            )));
        }
        Ok(())
    }
}

/// State after one recorded round.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub step: usize,
    pub strategies: Vec<UnitNonnegVec>,
    pub utilities: Vec<f64>,
    pub welfare: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsRun {
    pub profile: StrategyProfile,
    /// Creator utilities at the final profile.
    pub utilities: Vec<f64>,
    /// Welfare at the final profile.
    pub welfare: f64,
    pub trace: Vec<TraceStep>,
    /// Accepted moves across the whole run.
    pub accepted: u64,
}

pub(crate) fn sphere_direction(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Draws a direction and decides creator `j`'s move against the current
/// board. Returns the projected new strategy on acceptance.
fn decide_move(
    est: &RowMatrix,
    u_hats: &[crate::space::Vector],
    strategies: &[UnitNonnegVec],
    j: usize,
    eta: f64,
    mech: &MechanismId,
    attention: &AttentionWeights,
    rng: &mut ChaCha8Rng,
) -> Option<UnitNonnegVec> {
    let d = strategies[j].dim();
    let g = sphere_direction(d, rng);
    let s_j = strategies[j].as_slice();
    let candidate: Vec<f64> = s_j.iter().zip(&g).map(|(s, gi)| s + eta * gi).collect();
    let mut pi_candidate = KahanSum::default();
    let mut pi_current = KahanSum::default();
    for (i, u_hat) in u_hats.iter().enumerate() {
        let row = est.row(i);
        let sigma_candidate = dot(&u_hat.0, &candidate);
        pi_candidate.add(reward_with_score(mech, row, j, sigma_candidate, attention));
        pi_current.add(reward_with_score(mech, row, j, row[j], attention));
    }
    if pi_candidate.value() >= pi_current.value() {
        Some(UnitNonnegVec::project_or(&candidate, &strategies[j]))
    } else {
        None
    }
}

fn refresh_column(
    est: &mut RowMatrix,
    tru: &mut RowMatrix,
    u_hats: &[crate::space::Vector],
    users_true: &[crate::space::Vector],
    j: usize,
    s: &UnitNonnegVec,
) {
    for i in 0..u_hats.len() {
        est.set(i, j, dot(&u_hats[i].0, s.as_slice()));
        tru.set(i, j, dot(&users_true[i].0, s.as_slice()));
    }
}

fn boards(
    u_hats: &[crate::space::Vector],
    users_true: &[crate::space::Vector],
    strategies: &[UnitNonnegVec],
) -> Result<(RowMatrix, RowMatrix)> {
    let est = crate::mechanisms::score_board(u_hats, strategies)?;
    let tru = crate::mechanisms::score_board(users_true, strategies)?;
    Ok((est, tru))
}

fn round_welfare(est: &RowMatrix, tru: &RowMatrix, attention: &AttentionWeights) -> f64 {
    let mut idx_buf = Vec::new();
    let mut acc = KahanSum::default();
    for i in 0..est.rows() {
        acc.add(user_utility_rows(est.row(i), tru.row(i), attention, &mut idx_buf));
    }
    acc.value()
}

fn check_estimates(instance: &GameInstance, estimates: &EstimatedUsers) -> Result<()> {
    if estimates.u_hat.len() != instance.num_users() {
        return Err(C3bvError::DimensionMismatch {
            left: estimates.u_hat.len(),
            right: instance.num_users(),
        });
    }
    for u in &estimates.u_hat {
        if u.dim() != instance.dim() {
            return Err(C3bvError::DimensionMismatch {
                left: u.dim(),
                right: instance.dim(),
            });
        }
    }
    Ok(())
}

/// One better-response update for creator `j`, as a standalone operation.
/// Recomputes the score board from scratch; [`run_dynamics`] uses the same
/// decision rule with incremental board updates instead.
pub fn lbr_step(
    profile: &StrategyProfile,
    j: usize,
    instance: &GameInstance,
    estimates: &EstimatedUsers,
    cfg: &DynamicsConfig,
    rng: &mut ChaCha8Rng,
) -> Result<StrategyProfile> {
    cfg.validate()?;
    check_estimates(instance, estimates)?;
    if j >= profile.strategies.len() {
        return Err(C3bvError::InvalidParameter(format!(
            "creator index {j} out of range"
        )));
    }
    let est = crate::mechanisms::score_board(&estimates.u_hat, &profile.strategies)?;
    let mut next = profile.clone();
    if let Some(s_new) = decide_move(
        &est,
        &estimates.u_hat,
        &profile.strategies,
        j,
        cfg.eta,
        instance.mechanism(),
        instance.attention(),
        rng,
    ) {
        next.strategies[j] = s_new;
    }
    next.step += 1;
    Ok(next)
}

/// Runs the full dynamics: `horizon` rounds, each visiting every creator
/// once in the configured order. Deterministic given the config seed.
pub fn run_dynamics(
    instance: &GameInstance,
    estimates: &EstimatedUsers,
    cfg: &DynamicsConfig,
) -> Result<DynamicsRun> {
    cfg.validate()?;
    check_estimates(instance, estimates)?;
    let n = instance.num_creators();
    let mut strategies = instance.contents_init().to_vec();
    let (mut est, mut tru) = boards(&estimates.u_hat, instance.users_true(), &strategies)?;
    let mut rng = crate::rng::stream(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::new();
    let mut accepted = 0u64;

    for round in 1..=cfg.horizon {
        if cfg.update_order == UpdateOrder::RandomPermutation {
            for i in (1..n).rev() {
                let k = rng.random_range(0..=i);
                order.swap(i, k);
            }
        }
        for &j in &order {
            if let Some(s_new) = decide_move(
                &est,
                &estimates.u_hat,
                &strategies,
                j,
                cfg.eta,
                instance.mechanism(),
                instance.attention(),
                &mut rng,
            ) {
                refresh_column(
                    &mut est,
                    &mut tru,
                    &estimates.u_hat,
                    instance.users_true(),
                    j,
                    &s_new,
                );
                strategies[j] = s_new;
                accepted += 1;
            }
        }
        if cfg.record_trace {
            let utilities =
                crate::mechanisms::all_creator_utilities(&est, instance.mechanism(), instance.attention())?;
            let welfare = round_welfare(&est, &tru, instance.attention());
            trace.push(TraceStep {
                step: round,
                strategies: strategies.clone(),
                utilities,
                welfare,
            });
        }
    }

    let utilities =
        crate::mechanisms::all_creator_utilities(&est, instance.mechanism(), instance.attention())?;
    let welfare = round_welfare(&est, &tru, instance.attention());
    Ok(DynamicsRun {
        profile: StrategyProfile {
            strategies,
            step: cfg.horizon,
        },
        utilities,
        welfare,
        trace,
        accepted,
    })
}

/// Counts strictly improving unilateral deviations at a profile: for each
/// creator, `samples_per_creator` perturbations are drawn, projected onto
/// the feasible sphere, and compared against the creator's current utility.
/// Deviations are evaluated at the projected (feasible) points; this is an
/// equilibrium probe, not the acceptance rule of the dynamics.
pub fn count_improving_deviations(
    instance: &GameInstance,
    estimates: &EstimatedUsers,
    strategies: &[UnitNonnegVec],
    samples_per_creator: usize,
    eta: f64,
    seed: u64,
    tol: f64,
) -> Result<usize> {
    check_estimates(instance, estimates)?;
    let est = crate::mechanisms::score_board(&estimates.u_hat, strategies)?;
    let current =
        crate::mechanisms::all_creator_utilities(&est, instance.mechanism(), instance.attention())?;
    let mut rng = crate::rng::stream(seed);
    let mut improving = 0;
    for (j, s_j) in strategies.iter().enumerate() {
        for _ in 0..samples_per_creator {
            let g = sphere_direction(s_j.dim(), &mut rng);
            let raw: Vec<f64> = s_j
                .as_slice()
                .iter()
                .zip(&g)
                .map(|(s, gi)| s + eta * gi)
                .collect();
            let deviation = UnitNonnegVec::project_or(&raw, s_j);
            let mut pi = KahanSum::default();
            for (i, u_hat) in estimates.u_hat.iter().enumerate() {
                let sigma = dot(&u_hat.0, deviation.as_slice());
                pi.add(reward_with_score(
                    instance.mechanism(),
                    est.row(i),
                    j,
                    sigma,
                    instance.attention(),
                ));
            }
            if pi.value() > current[j] + tol {
                improving += 1;
            }
        }
    }
    Ok(improving)
}
