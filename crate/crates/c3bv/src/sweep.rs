//! Lambda-sweep orchestration: evaluates welfare over a regularization grid
//! for a baseline (fixed initial contents) and for strategic play under each
//! mechanism, with deterministic coordinate-derived seeds.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{run_dynamics, DynamicsConfig, TraceStep};
use crate::error::{C3bvError, Result};
use crate::estimator::estimate_users;
use crate::game::GameInstance;
use crate::mechanisms::MechanismId;
use crate::prent::McEstimate;
use crate::rng::mix_seed;
use crate::welfare::{nash_social_welfare, per_user_utilities, KahanSum};

/// Stream-domain tag for rating-noise draws ("swpnoise"). Mode-independent
/// so strategic and baseline cells share noise per (grid index, replicate).
const NOISE_TAG: u64 = 0x7377_706e_6f69_7365;
/// Stream-domain tag for creator-update streams ("swpmoves").
const DYN_TAG: u64 = 0x7377_706d_6f76_6573;

/// Which welfare column drives optimal-lambda extraction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    UserWelfare,
    NashSocialWelfare,
}

impl FromStr for Objective {
    type Err = C3bvError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "user_welfare" => Ok(Objective::UserWelfare),
            "nash_social_welfare" => Ok(Objective::NashSocialWelfare),
            other => Err(C3bvError::InvalidParameter(format!(
                "unknown objective {other:?}; use user_welfare or nash_social_welfare"
            ))),
        }
    }
}

/// One platform paradigm: the baseline holds contents at their initial
/// embeddings, the strategic mode lets creators respond under a mechanism.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Mode {
    NonStrategic,
    Strategic(MechanismId),
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::NonStrategic => write!(f, "nonstrategic"),
            Mode::Strategic(m) => write!(f, "{m}"),
        }
    }
}

impl FromStr for Mode {
    type Err = C3bvError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "nonstrategic" {
            Ok(Mode::NonStrategic)
        } else {
            Ok(Mode::Strategic(s.parse()?))
        }
    }
}

impl TryFrom<String> for Mode {
    type Error = C3bvError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Mode> for String {
    fn from(m: Mode) -> Self {
        m.to_string()
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Stable numeric identity of a mode for seed derivation.
fn mode_tag(mode: &Mode) -> u64 {
    match mode {
        Mode::NonStrategic => 0,
        Mode::Strategic(m) => fnv1a(m.to_string().as_bytes()),
    }
}

/// Default grid for synthetic and stylized environments.
pub fn synthetic_default_grid() -> Vec<f64> {
    vec![0.0, 0.1, 1.0, 10.0, 100.0]
}

/// Default grid for dataset environments: 0.0 to 1.0 in steps of 0.1.
pub fn dataset_default_grid() -> Vec<f64> {
    (0..=10).map(|i| f64::from(i) / 10.0).collect()
}

/// Full description of a sweep: the grid, the modes to evaluate, replicate
/// count, objective, creator dynamics, and the master seed from which every
/// cell seed is derived.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub lambda_grid: Vec<f64>,
    pub mechanisms: Vec<MechanismId>,
    pub include_nonstrategic: bool,
    pub replicates: usize,
    pub objective: Objective,
    pub dynamics: DynamicsConfig,
    pub master_seed: u64,
    /// Clamp negative entries of the ridge estimates to zero before ranking.
    pub clamp_estimates: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            lambda_grid: synthetic_default_grid(),
            mechanisms: MechanismId::all_default(),
            include_nonstrategic: true,
            replicates: 50,
            objective: Objective::UserWelfare,
            dynamics: DynamicsConfig::default(),
            master_seed: 0,
            clamp_estimates: false,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_grid.is_empty() {
            return Err(C3bvError::InvalidParameter(
                "lambda grid must be nonempty".into(),
            ));
        }
        for &l in &self.lambda_grid {
            if !l.is_finite() || l < 0.0 {
                return Err(C3bvError::InvalidParameter(format!(
                    "lambda grid values must be finite and nonnegative, got {l}"
                )));
            }
        }
        for w in self.lambda_grid.windows(2) {
            if w[0] >= w[1] {
                return Err(C3bvError::InvalidParameter(format!(
                    "lambda grid must be strictly ascending, got {} before {}",
                    w[0], w[1]
                )));
            }
        }
        if self.replicates < 1 {
            return Err(C3bvError::InvalidParameter(
                "replicates must be at least 1".into(),
            ));
        }
        if !self.include_nonstrategic && self.mechanisms.is_empty() {
            return Err(C3bvError::InvalidParameter(
                "sweep needs the baseline or at least one mechanism".into(),
            ));
        }
        for m in &self.mechanisms {
            m.validate()?;
        }
        self.dynamics.validate()
    }

    /// Evaluation modes in canonical order: baseline first, then one
    /// strategic mode per mechanism in listed order.
    pub fn modes(&self) -> Vec<Mode> {
        let mut modes = Vec::with_capacity(self.mechanisms.len() + 1);
        if self.include_nonstrategic {
            modes.push(Mode::NonStrategic);
        }
        modes.extend(self.mechanisms.iter().cloned().map(Mode::Strategic));
        modes
    }
}

/// One evaluated cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub lambda: f64,
    pub mode: Mode,
    pub replicate: usize,
    pub welfare: f64,
    pub nsw: f64,
}

/// Per-(mode, lambda) summary over replicates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mode: Mode,
    pub lambda: f64,
    pub replicates: usize,
    pub welfare_mean: f64,
    pub welfare_stderr: f64,
    pub nsw_mean: f64,
    pub nsw_stderr: f64,
}

/// Welfare-maximizing grid point for one mode, under the sweep objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub lambda_star: f64,
    pub welfare_mean: f64,
    pub welfare_stderr: f64,
}

/// Everything a sweep produced; aggregates and optima are exactly
/// recomputable from the cells.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub spec: SweepSpec,
    pub cells: Vec<CellResult>,
    pub aggregates: Vec<Aggregate>,
    pub optima: BTreeMap<String, Optimum>,
}

/// Output of a single cell evaluation.
#[derive(Clone, Debug)]
pub struct CellOutput {
    pub welfare: f64,
    pub nsw: f64,
    pub trace: Option<Vec<TraceStep>>,
}

/// Evaluates one cell: substitutes `lambda` into the base instance, draws one
/// rating matrix from `noise_seed`, estimates user vectors from the initial
/// contents, then scores either the initial contents (baseline) or the final
/// profile after creator dynamics (strategic). Estimates stay fixed while
/// creators move.
#[allow(clippy::too_many_arguments)]
pub fn run_cell(
    base: &GameInstance,
    lambda: f64,
    mode: &Mode,
    noise_seed: u64,
    dynamics_seed: u64,
    dynamics: &DynamicsConfig,
    clamp_estimates: bool,
    record_trace: bool,
) -> Result<CellOutput> {
    let instance = base.with_lambda(lambda)?;
    let ratings = instance.generate_ratings(noise_seed)?;
    let estimates = estimate_users(
        &ratings,
        instance.contents_init(),
        lambda,
        clamp_estimates,
    )?;
    let (profile, trace) = match mode {
        Mode::NonStrategic => (instance.contents_init().to_vec(), None),
        Mode::Strategic(mechanism) => {
            let instance = instance.with_mechanism(mechanism.clone())?;
            let cfg = DynamicsConfig {
                seed: dynamics_seed,
                record_trace,
                ..dynamics.clone()
            };
            let run = run_dynamics(&instance, &estimates, &cfg)?;
            (run.profile.strategies, record_trace.then_some(run.trace))
        }
    };
    let per_user = per_user_utilities(
        &profile,
        instance.users_true(),
        &estimates.u_hat,
        instance.attention(),
    )?;
    let mut total = KahanSum::default();
    for &u in &per_user {
        total.add(u);
    }
    Ok(CellOutput {
        welfare: total.value(),
        nsw: nash_social_welfare(&per_user)?,
        trace,
    })
}

/// Runs every (mode, lambda, replicate) cell of the spec against the base
/// instance. Cell seeds depend only on the cell's coordinates, so results
/// are identical for any worker-pool size; any cell failure aborts the sweep
/// with that cell's coordinates attached.
pub fn run_sweep(spec: &SweepSpec, base: &GameInstance) -> Result<SweepResult> {
    spec.validate()?;
    let modes = spec.modes();
    let mut coords = Vec::new();
    for mode in &modes {
        for (li, &lambda) in spec.lambda_grid.iter().enumerate() {
            for replicate in 0..spec.replicates {
                coords.push((mode.clone(), li, lambda, replicate));
            }
        }
    }
    let cells: Vec<CellResult> = coords
        .into_par_iter()
        .map(|(mode, li, lambda, replicate)| {
            let noise_seed = mix_seed(&[spec.master_seed, NOISE_TAG, li as u64, replicate as u64]);
            let dynamics_seed = mix_seed(&[
                spec.master_seed,
                DYN_TAG,
                li as u64,
                mode_tag(&mode),
                replicate as u64,
            ]);
            let out = run_cell(
                base,
                lambda,
                &mode,
                noise_seed,
                dynamics_seed,
                &spec.dynamics,
                spec.clamp_estimates,
                false,
            )
            .map_err(|e| C3bvError::Cell {
                lambda,
                mode: mode.to_string(),
                replicate,
                source: Box::new(e),
            })?;
            Ok(CellResult {
                lambda,
                mode,
                replicate,
                welfare: out.welfare,
                nsw: out.nsw,
            })
        })
        .collect::<Result<_>>()?;
    let aggregates = aggregate_cells(&cells)?;
    let optima = find_optima(&aggregates, spec.objective);
    Ok(SweepResult {
        spec: spec.clone(),
        cells,
        aggregates,
        optima,
    })
}

/// Groups cells by (mode, lambda) in first-appearance order and computes
/// compensated means with standard errors.
pub fn aggregate_cells(cells: &[CellResult]) -> Result<Vec<Aggregate>> {
    let mut order: Vec<(Mode, f64)> = Vec::new();
    let mut groups: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for cell in cells {
        let key = (cell.mode.clone(), cell.lambda);
        let idx = match order
            .iter()
            .position(|(m, l)| *m == key.0 && l.to_bits() == key.1.to_bits())
        {
            Some(i) => i,
            None => {
                order.push(key);
                groups.push((Vec::new(), Vec::new()));
                order.len() - 1
            }
        };
        groups[idx].0.push(cell.welfare);
        groups[idx].1.push(cell.nsw);
    }
    order
        .into_iter()
        .zip(groups)
        .map(|((mode, lambda), (welfare, nsw))| {
            let w = McEstimate::from_draws(&welfare)?;
            let n = McEstimate::from_draws(&nsw)?;
            Ok(Aggregate {
                mode,
                lambda,
                replicates: welfare.len(),
                welfare_mean: w.mean,
                welfare_stderr: w.stderr,
                nsw_mean: n.mean,
                nsw_stderr: n.stderr,
            })
        })
        .collect()
}

/// Argmax of the objective mean per mode; ties break toward the smallest
/// lambda, so plateaus report their left edge.
pub fn find_optima(aggregates: &[Aggregate], objective: Objective) -> BTreeMap<String, Optimum> {
    let mut optima: BTreeMap<String, Optimum> = BTreeMap::new();
    for agg in aggregates {
        let (mean, stderr) = match objective {
            Objective::UserWelfare => (agg.welfare_mean, agg.welfare_stderr),
            Objective::NashSocialWelfare => (agg.nsw_mean, agg.nsw_stderr),
        };
        let key = agg.mode.to_string();
        match optima.get_mut(&key) {
            Some(best) if mean <= best.welfare_mean => {}
            Some(best) => {
                *best = Optimum {
                    lambda_star: agg.lambda,
                    welfare_mean: mean,
                    welfare_stderr: stderr,
                };
            }
            None => {
                optima.insert(
                    key,
                    Optimum {
                        lambda_star: agg.lambda,
                        welfare_mean: mean,
                        welfare_stderr: stderr,
                    },
                );
            }
        }
    }
    optima
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envgen::{build_prent, build_synthetic_market, MarketKind, SyntheticEnvConfig};
    use crate::prent::PreNtParams;
    use crate::welfare::AttentionWeights;

    fn small_prent_base(e_bar: f64) -> GameInstance {
        let p = PreNtParams::new(9, 1, 0.8, 0.6, e_bar).unwrap();
        build_prent(
            &p,
            MechanismId::ExposureTopK,
            AttentionWeights::log_discount(1).unwrap(),
            3,
        )
        .unwrap()
    }

    fn quick_spec() -> SweepSpec {
        SweepSpec {
            lambda_grid: vec![0.0, 0.5],
            mechanisms: vec![MechanismId::ExposureTopK, MechanismId::WinnerValue],
            replicates: 3,
            dynamics: DynamicsConfig {
                horizon: 5,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn spec_validation_rejects_bad_grids() {
        let ok = SweepSpec::default();
        ok.validate().unwrap();
        for grid in [vec![], vec![1.0, 0.5], vec![0.5, 0.5], vec![-1.0]] {
            let spec = SweepSpec {
                lambda_grid: grid,
                ..Default::default()
            };
            assert!(spec.validate().is_err());
        }
        assert!(SweepSpec {
            replicates: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(SweepSpec {
            include_nonstrategic: false,
            mechanisms: vec![],
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn mode_strings_roundtrip() {
        for mode in [
            Mode::NonStrategic,
            Mode::Strategic(MechanismId::ExposureTopK),
            Mode::Strategic(MechanismId::SoftmaxShare { beta: 2.5 }),
        ] {
            let s = mode.to_string();
            assert_eq!(s.parse::<Mode>().unwrap(), mode);
        }
        assert_ne!(mode_tag(&Mode::NonStrategic), mode_tag(&Mode::Strategic(MechanismId::ExposureTopK)));
    }

    #[test]
    fn sweep_counts_cells_and_reruns_bitwise() {
        let base = small_prent_base(0.2);
        let spec = quick_spec();
        let result = run_sweep(&spec, &base).unwrap();
        assert_eq!(result.cells.len(), 2 * 3 * 3);
        assert_eq!(result.aggregates.len(), 2 * 3);
        assert_eq!(result.optima.len(), 3);
        let again = run_sweep(&spec, &base).unwrap();
        assert_eq!(result.cells, again.cells);
        assert_eq!(result.aggregates, again.aggregates);
        let other_seed = run_sweep(
            &SweepSpec {
                master_seed: 1,
                ..spec
            },
            &base,
        )
        .unwrap();
        assert_ne!(result.cells, other_seed.cells);
    }

    #[test]
    fn noiseless_baseline_replicates_are_identical() {
        let base = small_prent_base(0.0);
        let spec = SweepSpec {
            lambda_grid: vec![0.5],
            mechanisms: vec![],
            replicates: 4,
            ..Default::default()
        };
        let result = run_sweep(&spec, &base).unwrap();
        let first = result.cells[0].welfare;
        assert!(result.cells.iter().all(|c| c.welfare == first));
        assert_eq!(result.aggregates[0].welfare_stderr, 0.0);
    }

    #[test]
    fn zero_horizon_strategic_equals_baseline() {
        let base = small_prent_base(0.2);
        let spec = SweepSpec {
            lambda_grid: vec![0.0, 1.0],
            mechanisms: vec![MechanismId::EngagementTopK],
            replicates: 3,
            dynamics: DynamicsConfig {
                horizon: 0,
                ..Default::default()
            },
            ..Default::default()
        };
        let result = run_sweep(&spec, &base).unwrap();
        for cell in result
            .cells
            .iter()
            .filter(|c| c.mode == Mode::NonStrategic)
        {
            let twin = result
                .cells
                .iter()
                .find(|c| {
                    matches!(c.mode, Mode::Strategic(_))
                        && c.lambda == cell.lambda
                        && c.replicate == cell.replicate
                })
                .unwrap();
            assert_eq!(cell.welfare, twin.welfare);
            assert_eq!(cell.nsw, twin.nsw);
        }
    }

    #[test]
    fn aggregates_match_naive_means() {
        let base = small_prent_base(0.2);
        let result = run_sweep(&quick_spec(), &base).unwrap();
        for agg in &result.aggregates {
            let values: Vec<f64> = result
                .cells
                .iter()
                .filter(|c| c.mode == agg.mode && c.lambda == agg.lambda)
                .map(|c| c.welfare)
                .collect();
            assert_eq!(values.len(), agg.replicates);
            let naive = values.iter().sum::<f64>() / values.len() as f64;
            assert!((agg.welfare_mean - naive).abs() < 1e-12);
        }
    }

    #[test]
    fn single_point_grid_is_its_own_optimum() {
        let base = small_prent_base(0.2);
        let spec = SweepSpec {
            lambda_grid: vec![0.7],
            mechanisms: vec![],
            replicates: 2,
            ..Default::default()
        };
        let result = run_sweep(&spec, &base).unwrap();
        assert_eq!(result.optima["nonstrategic"].lambda_star, 0.7);
    }

    #[test]
    fn optima_tie_break_and_transform_invariance() {
        let mk = |lambda: f64, welfare: f64| Aggregate {
            mode: Mode::NonStrategic,
            lambda,
            replicates: 5,
            welfare_mean: welfare,
            welfare_stderr: 0.1,
            nsw_mean: welfare,
            nsw_stderr: 0.1,
        };
        let aggs = vec![mk(0.0, 1.0), mk(0.5, 2.0), mk(1.0, 2.0)];
        let opt = find_optima(&aggs, Objective::UserWelfare);
        assert_eq!(opt["nonstrategic"].lambda_star, 0.5);
        let transformed: Vec<Aggregate> = aggs
            .iter()
            .map(|a| Aggregate {
                welfare_mean: a.welfare_mean.exp(),
                ..a.clone()
            })
            .collect();
        let opt2 = find_optima(&transformed, Objective::UserWelfare);
        assert_eq!(opt2["nonstrategic"].lambda_star, 0.5);
    }

    #[test]
    fn trend_market_baseline_prefers_heavy_regularization() {
        let market = build_synthetic_market(&SyntheticEnvConfig {
            market: MarketKind::Trend,
            m: 60,
            seed: 2,
            ..Default::default()
        })
        .unwrap();
        let spec = SweepSpec {
            lambda_grid: vec![0.0, 10.0],
            mechanisms: vec![],
            replicates: 20,
            ..Default::default()
        };
        let result = run_sweep(&spec, &market.instance).unwrap();
        let mean_at = |lambda: f64| {
            result
                .aggregates
                .iter()
                .find(|a| a.lambda == lambda)
                .unwrap()
                .welfare_mean
        };
        assert!(
            mean_at(10.0) >= mean_at(0.0),
            "baseline welfare fell from {} to {}",
            mean_at(0.0),
            mean_at(10.0)
        );
    }

    #[test]
    fn invalid_specs_fail_before_any_cell_runs() {
        let base = small_prent_base(0.2);
        let spec = SweepSpec {
            mechanisms: vec![MechanismId::SoftmaxShare { beta: f64::NAN }],
            ..Default::default()
        };
        let err = run_sweep(&spec, &base).unwrap_err();
        assert!(matches!(err, C3bvError::InvalidParameter(_)));
        let bad_dynamics = SweepSpec {
            dynamics: DynamicsConfig {
                eta: 2.0,
                ..Default::default()
            },
            ..Default::default()
        };
        assert!(run_sweep(&bad_dynamics, &base).is_err());
    }

    #[test]
    fn cell_failures_carry_their_coordinates() {
        use crate::game::{GameInstance, NoiseModel};
        use crate::space::{UnitNonnegVec, Vector};
        // Ratings overflow to infinity, so estimation fails inside the cell.
        let base = GameInstance::new(
            0.0,
            vec![Vector(vec![1.5e308, 1.5e308])],
            vec![UnitNonnegVec::project(&[1.0, 1.0]).unwrap()],
            NoiseModel::None,
            MechanismId::ExposureTopK,
            AttentionWeights::log_discount(1).unwrap(),
            0,
        )
        .unwrap();
        let spec = SweepSpec {
            lambda_grid: vec![0.25],
            mechanisms: vec![],
            replicates: 1,
            ..Default::default()
        };
        match run_sweep(&spec, &base).unwrap_err() {
            C3bvError::Cell {
                lambda,
                mode,
                replicate,
                ..
            } => {
                assert_eq!(lambda, 0.25);
                assert_eq!(mode, "nonstrategic");
                assert_eq!(replicate, 0);
            }
            other => panic!("expected a cell error, got {other}"),
        }
    }
}
