//! Game instances: true users, initial content, the noise model, and the
//! rating-generation step that feeds estimation.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{C3bvError, Result};
use crate::mechanisms::MechanismId;
use crate::space::{UnitNonnegVec, Vector};
use crate::welfare::AttentionWeights;

/// Dense row-major matrix. Used for rating matrices, score boards, and
/// factor matrices; rows are the natural unit of access everywhere here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RowMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RowMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in &rows {
            if row.len() != c {
                return Err(C3bvError::DimensionMismatch {
                    left: c,
                    right: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(RowMatrix { rows: r, cols: c, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Observation noise on ratings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    Gaussian { sigma_e: f64 },
    Uniform { e_bar: f64 },
    None,
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseModel::Gaussian { sigma_e } => {
                if !sigma_e.is_finite() || *sigma_e <= 0.0 {
                    return Err(C3bvError::InvalidParameter(format!(
                        "gaussian sigma_e must be finite and > 0, got {sigma_e}"
                    )));
                }
            }
            NoiseModel::Uniform { e_bar } => {
                if !e_bar.is_finite() || *e_bar <= 0.0 {
                    return Err(C3bvError::InvalidParameter(format!(
                        "uniform e_bar must be finite and > 0, got {e_bar}"
                    )));
                }
            }
            NoiseModel::None => {}
        }
        Ok(())
    }
}

/// Noisy observation matrix R with the seed it was generated from.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingMatrix {
    pub values: RowMatrix,
    pub generated_from: u64,
}

/// One frozen game setting: ground-truth users, initial content, noise,
/// ranking depth, reward mechanism, and the regularization strength. All
/// fields are private and validated at construction; `with_lambda` /
/// `with_mechanism` produce modified copies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGameInstance", into = "RawGameInstance")]
pub struct GameInstance {
    lambda: f64,
    users_true: Vec<Vector>,
    contents_init: Vec<UnitNonnegVec>,
    noise: NoiseModel,
    mechanism: MechanismId,
    attention: AttentionWeights,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct RawGameInstance {
    lambda: f64,
    users_true: Vec<Vector>,
    contents_init: Vec<UnitNonnegVec>,
    noise: NoiseModel,
    mechanism: MechanismId,
    attention: AttentionWeights,
    seed: u64,
}

impl TryFrom<RawGameInstance> for GameInstance {
    type Error = C3bvError;
    fn try_from(r: RawGameInstance) -> Result<Self> {
        GameInstance::new(
            r.lambda,
            r.users_true,
            r.contents_init,
            r.noise,
            r.mechanism,
            r.attention,
            r.seed,
        )
    }
}

impl From<GameInstance> for RawGameInstance {
    fn from(g: GameInstance) -> RawGameInstance {
        RawGameInstance {
            lambda: g.lambda,
            users_true: g.users_true,
            contents_init: g.contents_init,
            noise: g.noise,
            mechanism: g.mechanism,
            attention: g.attention,
            seed: g.seed,
        }
    }
}

impl GameInstance {
    pub fn new(
        lambda: f64,
        users_true: Vec<Vector>,
        contents_init: Vec<UnitNonnegVec>,
        noise: NoiseModel,
        mechanism: MechanismId,
        attention: AttentionWeights,
        seed: u64,
    ) -> Result<Self> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(C3bvError::InvalidParameter(format!(
                "lambda must be finite and >= 0, got {lambda}"
            )));
        }
        if users_true.is_empty() {
            return Err(C3bvError::InvalidParameter("no users".into()));
        }
        if contents_init.is_empty() {
            return Err(C3bvError::InvalidParameter("no creators".into()));
        }
        let d = contents_init[0].dim();
        for s in &contents_init {
            if s.dim() != d {
                return Err(C3bvError::DimensionMismatch {
                    left: d,
                    right: s.dim(),
                });
            }
        }
        for (i, u) in users_true.iter().enumerate() {
            if u.dim() != d {
                return Err(C3bvError::DimensionMismatch {
                    left: d,
                    right: u.dim(),
                });
            }
            if !u.is_finite() {
                return Err(C3bvError::NonFinite {
                    context: format!("user vector {i}"),
                });
            }
        }
        if attention.k() > contents_init.len() {
            return Err(C3bvError::InvalidParameter(format!(
                "ranking depth {} exceeds creator count {}",
                attention.k(),
                contents_init.len()
            )));
        }
        noise.validate()?;
        mechanism.validate()?;
        Ok(GameInstance {
            lambda,
            users_true,
            contents_init,
            noise,
            mechanism,
            attention,
            seed,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn num_users(&self) -> usize {
        self.users_true.len()
    }

    pub fn num_creators(&self) -> usize {
        self.contents_init.len()
    }

    pub fn dim(&self) -> usize {
        self.contents_init[0].dim()
    }

    /// Ranking depth K; always equals the attention length.
    pub fn k(&self) -> usize {
        self.attention.k()
    }

    pub fn users_true(&self) -> &[Vector] {
        &self.users_true
    }

    pub fn contents_init(&self) -> &[UnitNonnegVec] {
        &self.contents_init
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn mechanism(&self) -> &MechanismId {
        &self.mechanism
    }

    pub fn attention(&self) -> &AttentionWeights {
        &self.attention
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(C3bvError::InvalidParameter(format!(
                "lambda must be finite and >= 0, got {lambda}"
            )));
        }
        let mut g = self.clone();
        g.lambda = lambda;
        Ok(g)
    }

    pub fn with_mechanism(&self, mechanism: MechanismId) -> Result<Self> {
        mechanism.validate()?;
        let mut g = self.clone();
        g.mechanism = mechanism;
        Ok(g)
    }

    /// Generates R_ij = u_i · v_j + ε_ij against the initial contents.
    /// Noise entries are drawn in row-major order from a stream seeded by
    /// `noise_seed`, so the matrix depends only on (instance, seed).
    pub fn generate_ratings(&self, noise_seed: u64) -> Result<RatingMatrix> {
        use rand::Rng;
        let m = self.num_users();
        let n = self.num_creators();
        let mut values = RowMatrix::zeros(m, n);
        let mut rng = crate::rng::stream(noise_seed);
        let gaussian = match &self.noise {
            NoiseModel::Gaussian { sigma_e } => Some(
                Normal::new(0.0, *sigma_e)
                    .map_err(|e| C3bvError::InvalidParameter(format!("noise model: {e}")))?,
            ),
            _ => None,
        };
        for (i, u) in self.users_true.iter().enumerate() {
            let row = values.row_mut(i);
            for (j, v) in self.contents_init.iter().enumerate() {
                let eps = match &self.noise {
                    NoiseModel::Gaussian { .. } => {
                        gaussian.as_ref().expect("built above").sample(&mut rng)
                    }
                    NoiseModel::Uniform { e_bar } => e_bar * (2.0 * rng.random::<f64>() - 1.0),
                    NoiseModel::None => 0.0,
                };
                row[j] = crate::space::dot(&u.0, v.as_slice()) + eps;
            }
        }
        Ok(RatingMatrix {
            values,
            generated_from: noise_seed,
        })
    }
}
