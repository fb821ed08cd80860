//! Closed-form theory for the stylized two-direction ("PreNT") market.
//!
//! The stylized game has a single user and two orthogonal unit directions: a
//! trend direction carrying `n_t` identical items and a niche direction
//! carrying `n_n < n_t` identical items. The user's true feature vector has
//! coordinates `(theta_t, theta_n)` on those directions, and each rating
//! observation is perturbed by i.i.d. uniform noise on `[-e_bar, e_bar]`.
//! Because the design is diagonal in two dimensions, the ridge estimate, the
//! recommendation margin between the directions, both welfare notions, and
//! the welfare-optimal regularization bounds all have closed forms. This
//! module evaluates them directly and provides Monte Carlo estimates of the
//! expected welfares for cross-checking the full simulation pipeline.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{C3bvError, Result};
use crate::rng::{mix_seed, stream};
use crate::welfare::{AttentionWeights, KahanSum};

/// Draws per deterministic Monte Carlo sub-stream.
const MC_BATCH: usize = 8192;
/// Stream-domain tag for Monte Carlo noise batches ("prent_mc").
const MC_TAG: u64 = 0x7072_656e_745f_6d63;
/// Bisection interval-width tolerance for margin roots.
const ROOT_TOL: f64 = 1e-10;
/// Upper end of the bisection bracket for margin roots.
const ROOT_BRACKET_MAX: f64 = 1e6;

/// Parameters of the stylized market: item counts per direction, the user's
/// true affinity for each direction, and the half-width of the uniform rating
/// noise.
///
/// Construction enforces `n_t > n_n >= 1` with `n_t >= 2`, positive finite
/// affinities, and the noise bound
/// `e_bar < (n_t - n_n)/(n_t + n_n) * min(theta_t, theta_n)`, under which the
/// aggregate trend signal dominates the aggregate niche signal for every
/// realizable noise draw. `e_bar = 0` models the noiseless market.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPreNtParams", into = "RawPreNtParams")]
pub struct PreNtParams {
    n_t: u32,
    n_n: u32,
    theta_t: f64,
    theta_n: f64,
    e_bar: f64,
}

#[derive(Serialize, Deserialize)]
struct RawPreNtParams {
    n_t: u32,
    n_n: u32,
    theta_t: f64,
    theta_n: f64,
    e_bar: f64,
}

impl TryFrom<RawPreNtParams> for PreNtParams {
    type Error = C3bvError;

    fn try_from(raw: RawPreNtParams) -> Result<Self> {
        Self::new(raw.n_t, raw.n_n, raw.theta_t, raw.theta_n, raw.e_bar)
    }
}

impl From<PreNtParams> for RawPreNtParams {
    fn from(p: PreNtParams) -> Self {
        Self {
            n_t: p.n_t,
            n_n: p.n_n,
            theta_t: p.theta_t,
            theta_n: p.theta_n,
            e_bar: p.e_bar,
        }
    }
}

impl PreNtParams {
    pub fn new(n_t: u32, n_n: u32, theta_t: f64, theta_n: f64, e_bar: f64) -> Result<Self> {
        if n_t < 2 || n_n < 1 || n_t <= n_n {
            return Err(C3bvError::InvalidParameter(format!(
                "item counts must satisfy n_t > n_n >= 1 with n_t >= 2, got n_t = {n_t}, n_n = {n_n}"
            )));
        }
        for (name, v) in [("theta_t", theta_t), ("theta_n", theta_n)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(C3bvError::InvalidParameter(format!(
                    "{name} must be finite and positive, got {v}"
                )));
            }
        }
        if !e_bar.is_finite() || e_bar < 0.0 {
            return Err(C3bvError::InvalidParameter(format!(
                "e_bar must be finite and nonnegative, got {e_bar}"
            )));
        }
        let p = Self {
            n_t,
            n_n,
            theta_t,
            theta_n,
            e_bar,
        };
        let bound = p.noise_bound();
        if e_bar >= bound {
            return Err(C3bvError::InvalidParameter(format!(
                "e_bar = {e_bar} must stay below (n_t - n_n)/(n_t + n_n) * min(theta_t, theta_n) = {bound}"
            )));
        }
        Ok(p)
    }

    pub fn n_t(&self) -> u32 {
        self.n_t
    }

    pub fn n_n(&self) -> u32 {
        self.n_n
    }

    pub fn theta_t(&self) -> f64 {
        self.theta_t
    }

    pub fn theta_n(&self) -> f64 {
        self.theta_n
    }

    pub fn e_bar(&self) -> f64 {
        self.e_bar
    }

    /// Largest admissible noise half-width for these counts and affinities.
    pub fn noise_bound(&self) -> f64 {
        (self.nt() - self.nn()) / (self.nt() + self.nn()) * self.theta_t.min(self.theta_n)
    }

    fn nt(&self) -> f64 {
        f64::from(self.n_t)
    }

    fn nn(&self) -> f64 {
        f64::from(self.n_n)
    }

    /// Draws group-mean noises by averaging one uniform draw per item, trend
    /// items first, so the means follow the exact distribution induced by
    /// item-level noise.
    pub fn sample_noise<R: Rng>(&self, rng: &mut R) -> NoiseRealization {
        let mut group = |count: u32| {
            let mut sum = KahanSum::default();
            for _ in 0..count {
                sum.add(self.e_bar * (2.0 * rng.random::<f64>() - 1.0));
            }
            sum.value() / f64::from(count)
        };
        let eps_bar_t = group(self.n_t);
        let eps_bar_n = group(self.n_n);
        NoiseRealization {
            eps_bar_t,
            eps_bar_n,
        }
    }
}

/// Group-mean rating noise for one market draw; each field lies in
/// `[-e_bar, e_bar]` when produced by [`PreNtParams::sample_noise`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseRealization {
    pub eps_bar_t: f64,
    pub eps_bar_n: f64,
}

impl NoiseRealization {
    /// The noiseless realization.
    pub fn zero() -> Self {
        Self::default()
    }
}

fn check_lambda(lambda: f64) {
    assert!(
        lambda.is_finite() && lambda >= 0.0,
        "lambda must be finite and nonnegative, got {lambda}"
    );
}

/// Ridge-estimate coordinates on the (trend, niche) directions for one noise
/// realization: the per-direction rating sums shrunk by `count + lambda`.
pub fn estimate_coords(lambda: f64, p: &PreNtParams, e: &NoiseRealization) -> (f64, f64) {
    check_lambda(lambda);
    (
        p.nt() * (p.theta_t + e.eps_bar_t) / (p.nt() + lambda),
        p.nn() * (p.theta_n + e.eps_bar_n) / (p.nn() + lambda),
    )
}

/// Recommendation margin between the trend and niche directions at `lambda`;
/// nonnegative means the trend direction ranks first.
pub fn f_gap(lambda: f64, p: &PreNtParams, e: &NoiseRealization) -> f64 {
    let (t, n) = estimate_coords(lambda, p, e);
    t - n
}

/// Analytic derivative of [`f_gap`] with respect to `lambda`.
pub fn f_gap_derivative(lambda: f64, p: &PreNtParams, e: &NoiseRealization) -> f64 {
    check_lambda(lambda);
    let t = p.nt() * (p.theta_t() + e.eps_bar_t);
    let n = p.nn() * (p.theta_n() + e.eps_bar_n);
    n / (p.nn() + lambda).powi(2) - t / (p.nt() + lambda).powi(2)
}

/// Bisection root of [`f_gap`] in `lambda` on `[0, 1e6]`.
///
/// Returns `None` when the margin is already nonnegative at zero (no
/// crossing) or still negative at the bracket end.
pub fn find_f_root(p: &PreNtParams, e: &NoiseRealization) -> Option<f64> {
    if f_gap(0.0, p, e) >= 0.0 {
        return None;
    }
    let mut lo = 0.0f64;
    let mut hi = ROOT_BRACKET_MAX;
    if f_gap(hi, p, e) < 0.0 {
        return None;
    }
    for _ in 0..200 {
        if hi - lo <= ROOT_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f_gap(mid, p, e) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Smallest regularization at which the trend direction is recommended under
/// every realizable noise draw, for a trend-preferring user
/// (`theta_t > theta_n`); expected non-strategic welfare is nondecreasing
/// below this level and flat at its maximum above it.
pub fn lambda_non_lower(p: &PreNtParams) -> Result<f64> {
    if p.theta_t() <= p.theta_n() {
        return Err(C3bvError::InvalidParameter(format!(
            "lambda_non_lower needs a trend-preferring user (theta_t > theta_n), got theta_t = {} and theta_n = {}",
            p.theta_t(),
            p.theta_n()
        )));
    }
    if p.e_bar() <= (p.theta_t() - p.theta_n()) / 2.0 {
        return Ok(0.0);
    }
    let num = p.nt() * p.nn() * (p.theta_n() - p.theta_t() + 2.0 * p.e_bar());
    let den = p.nt() * (p.theta_t() - p.e_bar()) - p.nn() * (p.theta_n() + p.e_bar());
    Ok(num / den)
}

/// Upper bound on the welfare-maximizing regularization for a
/// niche-preferring user (`theta_t < theta_n`): zero when the noise is wide
/// enough that any shrinkage can only promote the wrong direction, a finite
/// threshold on an intermediate noise band, and `f64::INFINITY` when the
/// niche signal survives every regularization level.
pub fn lambda_non_upper(p: &PreNtParams) -> Result<f64> {
    if p.theta_t() >= p.theta_n() {
        return Err(C3bvError::InvalidParameter(format!(
            "lambda_non_upper needs a niche-preferring user (theta_t < theta_n), got theta_t = {} and theta_n = {}",
            p.theta_t(),
            p.theta_n()
        )));
    }
    if p.e_bar() >= (p.theta_n() - p.theta_t()) / 2.0 {
        return Ok(0.0);
    }
    let band_floor = (p.nn() * p.theta_n() - p.nt() * p.theta_t()) / (p.nt() + p.nn());
    if p.e_bar() > band_floor {
        let num = p.nt() * p.nn() * (p.theta_n() - p.theta_t() - 2.0 * p.e_bar());
        let den = p.nt() * (p.theta_t() + p.e_bar()) - p.nn() * (p.theta_n() - p.e_bar());
        Ok(num / den)
    } else {
        Ok(f64::INFINITY)
    }
}

/// Ratio of the trend to the niche estimate coordinate at `lambda`.
pub fn a_ratio(lambda: f64, p: &PreNtParams, e: &NoiseRealization) -> Result<f64> {
    check_lambda(lambda);
    let niche = p.theta_n() + e.eps_bar_n;
    if niche == 0.0 {
        return Err(C3bvError::Singularity(format!(
            "niche coordinate vanished: theta_n + eps_bar_n = 0 with theta_n = {} and eps_bar_n = {}",
            p.theta_n(),
            e.eps_bar_n
        )));
    }
    let num = p.nt() * (p.nn() + lambda) * (p.theta_t() + e.eps_bar_t);
    let den = p.nn() * (p.nt() + lambda) * niche;
    Ok(num / den)
}

/// Alignment-sensitivity term whose expectation carries the sign of the
/// strategic welfare gradient: positive while the coordinate ratio still
/// undershoots `theta_t / theta_n`, negative once shrinkage has pushed it
/// past.
pub fn b_term(lambda: f64, p: &PreNtParams, e: &NoiseRealization) -> Result<f64> {
    let a = a_ratio(lambda, p, e)?;
    let hyp = (a * a + 1.0).sqrt();
    Ok(a * (p.theta_t() / p.theta_n() - a) / (hyp * hyp * hyp))
}

/// Closed-form regularization threshold beyond which the strategic welfare
/// gradient is negative with high probability under group-mean noise
/// concentration of order `n^(alpha - 1/2)`, `alpha` in `(0, 0.5)`.
///
/// Returns `None` when the formula's denominator is nonpositive, i.e. when
/// the trend group is too small relative to the noise for the threshold to
/// apply.
pub fn lambda_str_upper(p: &PreNtParams, alpha: f64) -> Result<Option<f64>> {
    if !alpha.is_finite() || alpha <= 0.0 || alpha >= 0.5 {
        return Err(C3bvError::InvalidParameter(format!(
            "alpha must lie strictly inside (0, 0.5), got {alpha}"
        )));
    }
    let (nt, nn) = (p.nt(), p.nn());
    let (tt, tn, eb) = (p.theta_t(), p.theta_n(), p.e_bar());
    let boost = 1.0 + 1.0 / nt;
    let num = nt
        * nn
        * (eb * boost * tt * nn.powf(alpha - 0.5) + eb * tn * nt.powf(alpha - 0.5) + tn * tt / nt);
    let den = tt * tn * (nt - nn * boost)
        - eb * tn * nt.powf(alpha + 0.5)
        - eb * boost * tt * nn.powf(alpha + 0.5);
    if den <= 0.0 {
        Ok(None)
    } else {
        Ok(Some(num / den))
    }
}

/// Deterministic batch of group-mean noise draws.
///
/// Draw `i` depends only on `seed` and `i / 8192` (its sub-stream index), so
/// the sequence is identical across calls and thread counts.
pub fn noise_draws(p: &PreNtParams, n_samples: usize, seed: u64) -> Vec<NoiseRealization> {
    let batches = n_samples.div_ceil(MC_BATCH);
    (0..batches)
        .into_par_iter()
        .map(|b| {
            let count = MC_BATCH.min(n_samples - b * MC_BATCH);
            let mut rng = stream(mix_seed(&[seed, MC_TAG, b as u64]));
            (0..count)
                .map(|_| p.sample_noise(&mut rng))
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// Monte Carlo mean with its standard error of the mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
}

impl McEstimate {
    pub fn from_draws(draws: &[f64]) -> Result<Self> {
        if draws.is_empty() {
            return Err(C3bvError::InvalidParameter(
                "a Monte Carlo estimate needs at least one draw".into(),
            ));
        }
        let mut sum = KahanSum::default();
        for &x in draws {
            sum.add(x);
        }
        let n = draws.len() as f64;
        let mean = sum.value() / n;
        if draws.len() < 2 {
            return Ok(Self { mean, stderr: 0.0 });
        }
        let mut sq = KahanSum::default();
        for &x in draws {
            let d = x - mean;
            sq.add(d * d);
        }
        let var = (sq.value() / (n - 1.0)).max(0.0);
        Ok(Self {
            mean,
            stderr: (var / n).sqrt(),
        })
    }
}

fn attention_mass(attention: &AttentionWeights) -> f64 {
    let mut sum = KahanSum::default();
    for &r in attention.weights() {
        sum.add(r);
    }
    sum.value()
}

/// Welfare of one non-strategic draw: the attention mass times the value
/// (`u_weights = (trend value, niche value)`) of whichever direction the
/// margin selects, ties selecting trend.
pub fn nonstrategic_welfare_draw(
    lambda: f64,
    p: &PreNtParams,
    u_weights: (f64, f64),
    attention: &AttentionWeights,
    e: &NoiseRealization,
) -> f64 {
    let value = if f_gap(lambda, p, e) >= 0.0 {
        u_weights.0
    } else {
        u_weights.1
    };
    attention_mass(attention) * value
}

/// Welfare of one strategic draw: with every creator at the normalized
/// estimate, each attention slot is worth the estimate's alignment with the
/// true vector `(theta_t, theta_n)`.
pub fn strategic_welfare_draw(
    lambda: f64,
    p: &PreNtParams,
    attention: &AttentionWeights,
    e: &NoiseRealization,
) -> f64 {
    let (t, n) = estimate_coords(lambda, p, e);
    let norm = (t * t + n * n).sqrt();
    attention_mass(attention) * (t * p.theta_t() + n * p.theta_n()) / norm
}

/// Monte Carlo probability that the trend direction is selected at `lambda`
/// (ties count as trend).
pub fn prob_trend(p: &PreNtParams, lambda: f64, n_samples: usize, seed: u64) -> Result<McEstimate> {
    let draws = noise_draws(p, n_samples, seed);
    let values: Vec<f64> = draws
        .iter()
        .map(|e| if f_gap(lambda, p, e) >= 0.0 { 1.0 } else { 0.0 })
        .collect();
    McEstimate::from_draws(&values)
}

/// Monte Carlo expected non-strategic welfare at `lambda` over group-mean
/// noise draws.
pub fn expected_welfare_nonstrategic(
    lambda: f64,
    p: &PreNtParams,
    u_weights: (f64, f64),
    attention: &AttentionWeights,
    n_samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    let draws = noise_draws(p, n_samples, seed);
    let values: Vec<f64> = draws
        .iter()
        .map(|e| nonstrategic_welfare_draw(lambda, p, u_weights, attention, e))
        .collect();
    McEstimate::from_draws(&values)
}

/// Monte Carlo expected strategic welfare at `lambda` over group-mean noise
/// draws.
pub fn expected_welfare_strategic(
    lambda: f64,
    p: &PreNtParams,
    attention: &AttentionWeights,
    n_samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    let draws = noise_draws(p, n_samples, seed);
    let values: Vec<f64> = draws
        .iter()
        .map(|e| strategic_welfare_draw(lambda, p, attention, e))
        .collect();
    McEstimate::from_draws(&values)
}

/// Monte Carlo estimate of the derivative of expected strategic welfare with
/// respect to `lambda`.
pub fn welfare_gradient_strategic(
    lambda: f64,
    p: &PreNtParams,
    attention: &AttentionWeights,
    n_samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    check_lambda(lambda);
    let scale = attention_mass(attention) * (p.nt() - p.nn()) * p.theta_n()
        / ((p.nt() + lambda) * (p.nn() + lambda));
    let draws = noise_draws(p, n_samples, seed);
    let mut values = Vec::with_capacity(draws.len());
    for e in &draws {
        values.push(scale * b_term(lambda, p, e)?);
    }
    McEstimate::from_draws(&values)
}
