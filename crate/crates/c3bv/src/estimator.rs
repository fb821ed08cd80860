//! Closed-form ridge estimation of user feature vectors from noisy ratings.
//!
//! Every user shares the same Gram matrix Σ_j v_j v_jᵀ + λI because the
//! contents are common, so one Cholesky factorization serves all m solves;
//! only the right-hand side Σ_j R_ij v_j varies per user. The system is
//! solved, never inverted.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{C3bvError, Result};
use crate::game::RatingMatrix;
use crate::space::{UnitNonnegVec, Vector};

/// Condition-number threshold beyond which an unregularized Gram matrix is
/// treated as rank-deficient.
pub const COND_LIMIT: f64 = 1e12;

/// Diagonal jitter applied when λ = 0 was requested and the Cholesky
/// factorization fails outright.
pub const GRAM_JITTER: f64 = 1e-10;

/// Ridge estimates for all users, with the λ they were computed at and the
/// jitter that was applied, if any. A nonzero jitter report means the caller
/// asked for λ = 0 on a rank-deficient Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedUsers {
    pub u_hat: Vec<Vector>,
    pub lambda_used: f64,
    pub gram_jitter: Option<f64>,
}

fn gram_matrix(contents: &[UnitNonnegVec], lambda: f64) -> DMatrix<f64> {
    let d = contents[0].dim();
    let mut g = DMatrix::<f64>::zeros(d, d);
    for v in contents {
        let s = v.as_slice();
        for a in 0..d {
            if s[a] == 0.0 {
                continue;
            }
            for b in 0..d {
                g[(a, b)] += s[a] * s[b];
            }
        }
    }
    for a in 0..d {
        g[(a, a)] += lambda;
    }
    g
}

fn condition_number(g: &DMatrix<f64>) -> f64 {
    let eig = g.clone().symmetric_eigen();
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for &e in eig.eigenvalues.iter() {
        lo = lo.min(e);
        hi = hi.max(e);
    }
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

fn validate_inputs(contents: &[UnitNonnegVec], lambda: f64) -> Result<usize> {
    if contents.is_empty() {
        return Err(C3bvError::InvalidParameter("no contents".into()));
    }
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(C3bvError::InvalidParameter(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )));
    }
    Ok(contents[0].dim())
}

fn rhs_for_row(ratings_row: &[f64], contents: &[UnitNonnegVec], d: usize) -> Vec<f64> {
    let mut b = vec![0.0; d];
    for (j, v) in contents.iter().enumerate() {
        let r = ratings_row[j];
        if r == 0.0 {
            continue;
        }
        for (a, &va) in v.as_slice().iter().enumerate() {
            b[a] += r * va;
        }
    }
    b
}

/// Single-user ridge solve. Strict about rank: at λ = 0 the Gram matrix
/// must be well conditioned (condition number below [`COND_LIMIT`]) or this
/// errors; there is no jitter fallback here.
pub fn estimate_user(
    ratings_row: &[f64],
    contents: &[UnitNonnegVec],
    lambda: f64,
) -> Result<Vector> {
    let d = validate_inputs(contents, lambda)?;
    if ratings_row.len() != contents.len() {
        return Err(C3bvError::DimensionMismatch {
            left: ratings_row.len(),
            right: contents.len(),
        });
    }
    let g = gram_matrix(contents, lambda);
    if lambda == 0.0 {
        let cond = condition_number(&g);
        if !(cond < COND_LIMIT) {
            return Err(C3bvError::RankDeficient { cond });
        }
    }
    let chol = Cholesky::new(g.clone())
        .ok_or(C3bvError::RankDeficient {
            cond: condition_number(&g),
        })?;
    let b = nalgebra::DVector::from_vec(rhs_for_row(ratings_row, contents, d));
    let x = chol.solve(&b);
    let out: Vec<f64> = x.iter().copied().collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(C3bvError::NonFinite {
            context: "ridge solution".into(),
        });
    }
    Ok(Vector(out))
}

fn factorize(
    contents: &[UnitNonnegVec],
    lambda: f64,
) -> Result<(Cholesky<f64, Dyn>, Option<f64>)> {
    let g = gram_matrix(contents, lambda);
    match Cholesky::new(g.clone()) {
        Some(c) => Ok((c, None)),
        None if lambda == 0.0 => {
            let mut jittered = g.clone();
            let d = jittered.nrows();
            for a in 0..d {
                jittered[(a, a)] += GRAM_JITTER;
            }
            match Cholesky::new(jittered) {
                Some(c) => Ok((c, Some(GRAM_JITTER))),
                None => Err(C3bvError::RankDeficient {
                    cond: condition_number(&g),
                }),
            }
        }
        None => Err(C3bvError::RankDeficient {
            cond: condition_number(&g),
        }),
    }
}

/// Ridge estimates for every user of a rating matrix, sharing one Gram
/// factorization. When λ = 0 is requested on a Gram matrix whose Cholesky
/// factorization fails, a diagonal jitter of [`GRAM_JITTER`] is applied and
/// reported in the result. `clamp_nonneg` clips negative coordinates of the
/// estimates to zero (off by default everywhere; the raw ridge solution is
/// the reference behavior).
pub fn estimate_users(
    ratings: &RatingMatrix,
    contents: &[UnitNonnegVec],
    lambda: f64,
    clamp_nonneg: bool,
) -> Result<EstimatedUsers> {
    let d = validate_inputs(contents, lambda)?;
    let m = ratings.values.rows();
    if ratings.values.cols() != contents.len() {
        return Err(C3bvError::DimensionMismatch {
            left: ratings.values.cols(),
            right: contents.len(),
        });
    }
    let (chol, gram_jitter) = factorize(contents, lambda)?;
    let mut rhs = DMatrix::<f64>::zeros(d, m);
    for i in 0..m {
        let b = rhs_for_row(ratings.values.row(i), contents, d);
        for a in 0..d {
            rhs[(a, i)] = b[a];
        }
    }
    let solved = chol.solve(&rhs);
    let mut u_hat = Vec::with_capacity(m);
    for i in 0..m {
        let mut v: Vec<f64> = (0..d).map(|a| solved[(a, i)]).collect();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(C3bvError::NonFinite {
                context: format!("ridge solution for user {i}"),
            });
        }
        if clamp_nonneg {
            for x in &mut v {
                if *x < 0.0 {
                    *x = 0.0;
                }
            }
        }
        u_hat.push(Vector(v));
    }
    Ok(EstimatedUsers {
        u_hat,
        lambda_used: lambda,
        gram_jitter,
    })
}
