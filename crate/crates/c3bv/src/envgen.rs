//! Environment builders: the stylized two-direction instance, synthetic
//! trend/niche markets, and dataset-backed instances from saved factors.
//!
//! All builders produce a [`GameInstance`] at `lambda = 0`; sweep and cell
//! runners substitute the grid value via [`GameInstance::with_lambda`].

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{C3bvError, Result};
use crate::game::{GameInstance, NoiseModel};
use crate::mechanisms::MechanismId;
use crate::nmf::{load_factors, NmfFactors};
use crate::prent::PreNtParams;
use crate::rng::{mix_seed, stream};
use crate::space::{UnitNonnegVec, Vector};
use crate::welfare::AttentionWeights;

/// Stream-domain tag for synthetic market generation ("synthmkt").
const SYNTH_TAG: u64 = 0x7379_6e74_686d_6b74;
/// Stream-domain tag for dataset creator sampling ("datacrea").
const DATA_TAG: u64 = 0x6461_7461_6372_6561;
/// Rows with norm at or below this are excluded from creator sampling.
const ZERO_ROW_TOL: f64 = 1e-9;

/// Which side of the user cone a synthetic market populates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarketKind {
    /// Users weight the trend direction strictly more than the niche one.
    Trend,
    /// Users weight the niche direction strictly more than the trend one.
    Niche,
}

/// Builds the stylized two-direction instance: embedding dimension 2 with
/// the trend direction on the first axis and the niche direction on the
/// second, `n_t` trend and `n_n` niche contents, and a single user at
/// `(theta_t, theta_n)` under uniform rating noise of half-width `e_bar`
/// (noise-free when `e_bar` is zero).
pub fn build_prent(
    p: &PreNtParams,
    mechanism: MechanismId,
    attention: AttentionWeights,
    seed: u64,
) -> Result<GameInstance> {
    let v_trend = UnitNonnegVec::new(vec![1.0, 0.0])?;
    let v_niche = UnitNonnegVec::new(vec![0.0, 1.0])?;
    let mut contents = Vec::with_capacity((p.n_t() + p.n_n()) as usize);
    for _ in 0..p.n_t() {
        contents.push(v_trend.clone());
    }
    for _ in 0..p.n_n() {
        contents.push(v_niche.clone());
    }
    let noise = if p.e_bar() > 0.0 {
        NoiseModel::Uniform { e_bar: p.e_bar() }
    } else {
        NoiseModel::None
    };
    GameInstance::new(
        0.0,
        vec![Vector(vec![p.theta_t(), p.theta_n()])],
        contents,
        noise,
        mechanism,
        attention,
        seed,
    )
}

/// Configuration for a synthetic trend/niche market.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticEnvConfig {
    pub market: MarketKind,
    pub m: usize,
    pub d: usize,
    pub n_t: usize,
    pub n_n: usize,
    pub sigma_e: f64,
    pub k: usize,
    pub mechanism: MechanismId,
    pub seed: u64,
}

impl Default for SyntheticEnvConfig {
    fn default() -> Self {
        Self {
            market: MarketKind::Trend,
            m: 400,
            d: 10,
            n_t: 9,
            n_n: 1,
            sigma_e: 0.5,
            k: 1,
            mechanism: MechanismId::ExposureTopK,
            seed: 0,
        }
    }
}

/// A generated synthetic market together with the latent structure needed to
/// audit it: the two basis directions and each user's cone coefficients.
#[derive(Clone, Debug)]
pub struct SyntheticMarket {
    pub instance: GameInstance,
    pub v_trend: UnitNonnegVec,
    pub v_niche: UnitNonnegVec,
    /// Per-user `(alpha, beta)` with `u = alpha * v_trend + beta * v_niche`.
    pub user_coeffs: Vec<(f64, f64)>,
}

fn sample_direction<R: Rng>(support: &[usize], d: usize, rng: &mut R) -> Result<UnitNonnegVec> {
    loop {
        let mut v = vec![0.0; d];
        for &i in support {
            let x: f64 = rng.sample(StandardNormal);
            v[i] = x.abs();
        }
        match UnitNonnegVec::project(&v) {
            Ok(unit) => return Ok(unit),
            Err(C3bvError::DegenerateProjection) => continue,
            Err(e) => return Err(e),
        }
    }
}

/// Builds a synthetic market: two random orthonormal nonnegative directions
/// with complementary coordinate support (so their dot product is exactly
/// zero), `n_t` contents on the trend direction and `n_n` on the niche one,
/// and `m` users `alpha * v_trend + beta * v_niche` with `(alpha, beta)`
/// uniform on the unit square conditioned on the cone ordering. Ratings are
/// observed under Gaussian noise of standard deviation `sigma_e`.
pub fn build_synthetic_market(cfg: &SyntheticEnvConfig) -> Result<SyntheticMarket> {
    if cfg.d < 2 {
        return Err(C3bvError::InvalidParameter(format!(
            "synthetic market needs d >= 2, got {}",
            cfg.d
        )));
    }
    if cfg.m < 1 || cfg.n_t < 1 || cfg.n_n < 1 {
        return Err(C3bvError::InvalidParameter(format!(
            "synthetic market needs m, n_t, n_n >= 1, got m = {}, n_t = {}, n_n = {}",
            cfg.m, cfg.n_t, cfg.n_n
        )));
    }
    let mut rng = stream(mix_seed(&[cfg.seed, SYNTH_TAG]));
    let mut coords: Vec<usize> = (0..cfg.d).collect();
    for i in (1..coords.len()).rev() {
        let j = rng.random_range(0..=i);
        coords.swap(i, j);
    }
    let split = cfg.d.div_ceil(2);
    let v_trend = sample_direction(&coords[..split], cfg.d, &mut rng)?;
    let v_niche = sample_direction(&coords[split..], cfg.d, &mut rng)?;

    let mut users = Vec::with_capacity(cfg.m);
    let mut user_coeffs = Vec::with_capacity(cfg.m);
    for _ in 0..cfg.m {
        let (a, b) = loop {
            let a: f64 = rng.random();
            let b: f64 = rng.random();
            if a != b {
                break (a, b);
            }
        };
        let (alpha, beta) = match cfg.market {
            MarketKind::Trend => (a.max(b), a.min(b)),
            MarketKind::Niche => (a.min(b), a.max(b)),
        };
        let mut u = vec![0.0; cfg.d];
        for (i, x) in u.iter_mut().enumerate() {
            *x = alpha * v_trend.as_slice()[i] + beta * v_niche.as_slice()[i];
        }
        users.push(Vector(u));
        user_coeffs.push((alpha, beta));
    }

    let mut contents = Vec::with_capacity(cfg.n_t + cfg.n_n);
    for _ in 0..cfg.n_t {
        contents.push(v_trend.clone());
    }
    for _ in 0..cfg.n_n {
        contents.push(v_niche.clone());
    }
    let instance = GameInstance::new(
        0.0,
        users,
        contents,
        NoiseModel::Gaussian { sigma_e: cfg.sigma_e },
        cfg.mechanism.clone(),
        AttentionWeights::log_discount(cfg.k)?,
        cfg.seed,
    )?;
    Ok(SyntheticMarket {
        instance,
        v_trend,
        v_niche,
        user_coeffs,
    })
}

/// Builds an instance from saved factors: every user-factor row becomes a
/// true user vector, and `n_creators` distinct item-factor rows (sampled
/// uniformly among rows with nonzero norm) become the initial contents,
/// each normalized to the unit sphere. Ratings are observed under Gaussian
/// noise of standard deviation `sigma_e`.
pub fn build_dataset_instance(
    factors: &NmfFactors,
    n_creators: usize,
    sigma_e: f64,
    mechanism: MechanismId,
    attention: AttentionWeights,
    seed: u64,
) -> Result<GameInstance> {
    if n_creators < 1 {
        return Err(C3bvError::InvalidParameter(
            "n_creators must be at least 1".into(),
        ));
    }
    let mut eligible: Vec<usize> = (0..factors.h.rows())
        .filter(|&i| {
            let row = factors.h.row(i);
            row.iter().map(|v| v * v).sum::<f64>().sqrt() > ZERO_ROW_TOL
        })
        .collect();
    if eligible.len() < n_creators {
        return Err(C3bvError::InvalidParameter(format!(
            "need {n_creators} contents but only {} item rows have nonzero norm",
            eligible.len()
        )));
    }
    let mut rng = stream(mix_seed(&[seed, DATA_TAG]));
    for i in 0..n_creators {
        let j = rng.random_range(i..eligible.len());
        eligible.swap(i, j);
    }
    let contents: Vec<UnitNonnegVec> = eligible[..n_creators]
        .iter()
        .map(|&i| UnitNonnegVec::project(factors.h.row(i)))
        .collect::<Result<_>>()?;
    let users: Vec<Vector> = (0..factors.w.rows())
        .map(|i| Vector(factors.w.row(i).to_vec()))
        .collect();
    GameInstance::new(
        0.0,
        users,
        contents,
        NoiseModel::Gaussian { sigma_e },
        mechanism,
        attention,
        seed,
    )
}

/// Configuration for the stylized two-direction environment.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct PrentEnvConfig {
    pub n_t: u32,
    pub n_n: u32,
    pub theta_t: f64,
    pub theta_n: f64,
    pub e_bar: f64,
    pub k: usize,
    pub mechanism: MechanismId,
    pub seed: u64,
}

impl Default for PrentEnvConfig {
    fn default() -> Self {
        Self {
            n_t: 9,
            n_n: 1,
            theta_t: 0.8,
            theta_n: 0.6,
            e_bar: 0.2,
            k: 1,
            mechanism: MechanismId::ExposureTopK,
            seed: 0,
        }
    }
}

/// Configuration for a dataset-backed environment; `factors_dir` points at a
/// directory produced by [`crate::nmf::save_factors`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetEnvConfig {
    pub factors_dir: String,
    pub n_creators: usize,
    pub sigma_e: f64,
    pub k: usize,
    pub mechanism: MechanismId,
    pub seed: u64,
}

impl Default for DatasetEnvConfig {
    fn default() -> Self {
        Self {
            factors_dir: "factors".into(),
            n_creators: 10,
            sigma_e: 0.3,
            k: 1,
            mechanism: MechanismId::ExposureTopK,
            seed: 0,
        }
    }
}

/// Declarative environment selection for configuration files.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvironmentSpec {
    Prent(PrentEnvConfig),
    Synthetic(SyntheticEnvConfig),
    Dataset(DatasetEnvConfig),
}

impl EnvironmentSpec {
    /// Builds the configured instance (loading factors from disk for
    /// dataset environments).
    pub fn build(&self) -> Result<GameInstance> {
        match self {
            EnvironmentSpec::Prent(cfg) => {
                let p = PreNtParams::new(cfg.n_t, cfg.n_n, cfg.theta_t, cfg.theta_n, cfg.e_bar)?;
                build_prent(
                    &p,
                    cfg.mechanism.clone(),
                    AttentionWeights::log_discount(cfg.k)?,
                    cfg.seed,
                )
            }
            EnvironmentSpec::Synthetic(cfg) => Ok(build_synthetic_market(cfg)?.instance),
            EnvironmentSpec::Dataset(cfg) => {
                let factors = load_factors(Path::new(&cfg.factors_dir))?;
                build_dataset_instance(
                    &factors,
                    cfg.n_creators,
                    cfg.sigma_e,
                    cfg.mechanism.clone(),
                    AttentionWeights::log_discount(cfg.k)?,
                    cfg.seed,
                )
            }
        }
    }
}
