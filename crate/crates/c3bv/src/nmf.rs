//! Nonnegative matrix factorization of rating tables by multiplicative
//! updates (Frobenius objective on the zero-filled dense matrix).

use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::RatingTable;
use crate::error::{C3bvError, Result};
use crate::game::RowMatrix;
use crate::rng::{mix_seed, stream};

/// Stream-domain tag for factor initialization ("nmf_init").
const INIT_TAG: u64 = 0x6e6d_665f_696e_6974;
/// Additive floor in update denominators.
const DENOM_FLOOR: f64 = 1e-12;
/// Identifies the objective variant in persisted manifests: unobserved
/// entries enter the Frobenius loss as zeros.
const OBJECTIVE_KIND: &str = "frobenius_zero_filled";

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct NmfOptions {
    pub rank: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for NmfOptions {
    fn default() -> Self {
        Self {
            rank: 16,
            max_iter: 500,
            tol: 1e-4,
            seed: 0,
        }
    }
}

impl NmfOptions {
    fn validate(&self) -> Result<()> {
        if self.rank < 1 {
            return Err(C3bvError::InvalidParameter(
                "factorization rank must be at least 1".into(),
            ));
        }
        if self.max_iter < 1 {
            return Err(C3bvError::InvalidParameter(
                "max_iter must be at least 1".into(),
            ));
        }
        if !self.tol.is_finite() || self.tol <= 0.0 {
            return Err(C3bvError::InvalidParameter(format!(
                "tol must be finite and positive, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

/// Nonnegative factor pair `W H^T ~ R` with fit diagnostics. `w` has one row
/// per user and `h` one row per item, both with `rank` columns.
#[derive(Clone, Debug, PartialEq)]
pub struct NmfFactors {
    pub w: RowMatrix,
    pub h: RowMatrix,
    pub rank: usize,
    pub seed: u64,
    pub iterations: usize,
    pub objective: f64,
    pub reconstruction_error: f64,
    pub converged: bool,
}

/// Runs multiplicative-update factorization on the zero-filled dense rating
/// matrix. Factors are initialized uniformly at random, scaled so the
/// reconstruction matches the mean observed rating in expectation, and
/// updated until the relative objective change drops below `tol` or
/// `max_iter` is reached (in which case `converged` is false). Deterministic
/// per seed.
pub fn factorize_nmf(table: &RatingTable, opts: &NmfOptions) -> Result<NmfFactors> {
    opts.validate()?;
    let dense = table.dense_matrix();
    let (m, n, d) = (dense.rows(), dense.cols(), opts.rank);
    let r = DMatrix::from_fn(m, n, |i, j| dense.get(i, j));
    let norm_r_sq = r.norm_squared();

    let mut rng = stream(mix_seed(&[opts.seed, INIT_TAG]));
    let scale = 2.0 * (table.mean_rating().max(0.0) / d as f64).sqrt();
    let mut w = DMatrix::from_fn(m, d, |_, _| scale * rng.random::<f64>());
    // Item factors are kept transposed (d x n) so both updates are plain
    // matrix products.
    let mut ht = DMatrix::from_fn(d, n, |_, _| scale * rng.random::<f64>());

    let mut objective = (&r - &w * &ht).norm_squared();
    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..opts.max_iter {
        iterations += 1;
        let num_w = &r * ht.transpose();
        let den_w = &w * (&ht * ht.transpose());
        for ((wv, &nv), &dv) in w.iter_mut().zip(num_w.iter()).zip(den_w.iter()) {
            *wv *= nv / (dv + DENOM_FLOOR);
        }
        let num_h = w.tr_mul(&r);
        let den_h = w.tr_mul(&w) * &ht;
        for ((hv, &nv), &dv) in ht.iter_mut().zip(num_h.iter()).zip(den_h.iter()) {
            *hv *= nv / (dv + DENOM_FLOOR);
        }
        let next = (&r - &w * &ht).norm_squared();
        debug_assert!(
            next <= objective * (1.0 + 1e-9) + 1e-12,
            "objective rose from {objective} to {next}"
        );
        let rel = (objective - next).abs() / objective.max(f64::MIN_POSITIVE);
        objective = next;
        if rel < opts.tol {
            converged = true;
            break;
        }
    }

    let to_rows = |mat: &DMatrix<f64>, transpose: bool| -> RowMatrix {
        let (rows, cols) = if transpose {
            (mat.ncols(), mat.nrows())
        } else {
            (mat.nrows(), mat.ncols())
        };
        let mut out = RowMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                let v = if transpose { mat[(j, i)] } else { mat[(i, j)] };
                out.set(i, j, v);
            }
        }
        out
    };
    let reconstruction_error = if norm_r_sq > 0.0 {
        (objective / norm_r_sq).sqrt()
    } else {
        0.0
    };
    if !objective.is_finite() {
        return Err(C3bvError::NonFinite {
            context: "factorization objective".into(),
        });
    }
    Ok(NmfFactors {
        w: to_rows(&w, false),
        h: to_rows(&ht, true),
        rank: d,
        seed: opts.seed,
        iterations,
        objective,
        reconstruction_error,
        converged,
    })
}

#[derive(Serialize, Deserialize)]
struct NmfManifest {
    rank: usize,
    seed: u64,
    iterations: usize,
    objective: f64,
    reconstruction_error: f64,
    converged: bool,
    objective_kind: String,
    users: usize,
    items: usize,
}

fn io_err(path: &Path, source: std::io::Error) -> C3bvError {
    C3bvError::io(path.display().to_string(), source)
}

fn write_matrix_csv(path: &Path, m: &RowMatrix) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| io_err(path, std::io::Error::other(e)))?;
    for i in 0..m.rows() {
        let record: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
        writer
            .write_record(&record)
            .map_err(|e| io_err(path, std::io::Error::other(e)))?;
    }
    writer.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

fn read_matrix_csv(path: &Path, cols: usize) -> Result<RowMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| io_err(path, std::io::Error::other(e)))?;
    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| C3bvError::Parse {
            path: path.display().to_string(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        let mut row = Vec::with_capacity(cols);
        for field in record.iter() {
            row.push(field.parse::<f64>().map_err(|e| C3bvError::Parse {
                path: path.display().to_string(),
                line: idx + 1,
                message: format!("bad number {field:?}: {e}"),
            })?);
        }
        if row.len() != cols {
            return Err(C3bvError::Parse {
                path: path.display().to_string(),
                line: idx + 1,
                message: format!("expected {cols} columns, got {}", row.len()),
            });
        }
        rows.push(row);
    }
    RowMatrix::from_rows(rows)
}

/// Persists factors as `w.csv`, `h.csv`, and `manifest.json` under `dir`.
pub fn save_factors(factors: &NmfFactors, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write_matrix_csv(&dir.join("w.csv"), &factors.w)?;
    write_matrix_csv(&dir.join("h.csv"), &factors.h)?;
    let manifest = NmfManifest {
        rank: factors.rank,
        seed: factors.seed,
        iterations: factors.iterations,
        objective: factors.objective,
        reconstruction_error: factors.reconstruction_error,
        converged: factors.converged,
        objective_kind: OBJECTIVE_KIND.to_string(),
        users: factors.w.rows(),
        items: factors.h.rows(),
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| io_err(&path, std::io::Error::other(e)))?;
    std::fs::write(&path, text).map_err(|e| io_err(&path, e))?;
    Ok(())
}

/// Loads factors previously written by [`save_factors`].
pub fn load_factors(dir: &Path) -> Result<NmfFactors> {
    let manifest_path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| io_err(&manifest_path, e))?;
    let manifest: NmfManifest = serde_json::from_str(&text).map_err(|e| C3bvError::Parse {
        path: manifest_path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let w = read_matrix_csv(&dir.join("w.csv"), manifest.rank)?;
    let h = read_matrix_csv(&dir.join("h.csv"), manifest.rank)?;
    if w.rows() != manifest.users || h.rows() != manifest.items {
        return Err(C3bvError::InvalidParameter(format!(
            "factor shapes {}x{} / {}x{} disagree with manifest ({} users, {} items)",
            w.rows(),
            w.cols(),
            h.rows(),
            h.cols(),
            manifest.users,
            manifest.items
        )));
    }
    Ok(NmfFactors {
        w,
        h,
        rank: manifest.rank,
        seed: manifest.seed,
        iterations: manifest.iterations,
        objective: manifest.objective,
        reconstruction_error: manifest.reconstruction_error,
        converged: manifest.converged,
    })
}
