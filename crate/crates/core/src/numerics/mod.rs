//! Dense kernels, stable reductions and the seeded generator everything else
//! builds on.
//!
//! All arithmetic is `f64`. Gradient checks downstream compare analytic
//! derivatives against central differences at ~1e-6 relative, which single
//! precision cannot resolve.

pub mod gradcheck;
mod matrix;
mod rng;

pub use matrix::{dot, norm, Matrix};
pub use rng::{derive_seed, Rng};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("{op}: dimension mismatch {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{0}: zero-norm vector")]
    ZeroNorm(&'static str),
    #[error("{0}: empty input")]
    Empty(&'static str),
}

/// `ln Σ exp(x_i)` with max-subtraction.
///
/// `-inf` entries contribute nothing; an empty or all-`-inf` slice gives `-inf`.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let s: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + s.ln()
}

/// Row-wise [`logsumexp`].
pub fn logsumexp_rows(m: &Matrix) -> Result<Vec<f64>, NumericsError> {
    if m.is_empty() {
        return Err(NumericsError::Empty("logsumexp_rows"));
    }
    Ok(m.iter_rows().map(logsumexp).collect())
}

/// Squared Euclidean distances between the rows of `a` and the rows of `b`.
///
/// Uses the expanded form `‖x‖² + ‖y‖² − 2x·y`; rounding can push it slightly
/// below zero, so results are clamped at 0.
pub fn pairwise_sqdist(a: &Matrix, b: &Matrix) -> Result<Matrix, NumericsError> {
    if a.cols() != b.cols() {
        return Err(NumericsError::DimensionMismatch {
            op: "pairwise_sqdist",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let an: Vec<f64> = a.iter_rows().map(|r| dot(r, r)).collect();
    let bn: Vec<f64> = b.iter_rows().map(|r| dot(r, r)).collect();
    let mut out = a.matmul_t(b)?;
    for i in 0..a.rows() {
        let row = out.row_mut(i);
        for (j, v) in row.iter_mut().enumerate() {
            *v = (an[i] + bn[j] - 2.0 * *v).max(0.0);
        }
    }
    Ok(out)
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine_sim(u: &[f64], v: &[f64]) -> Result<f64, NumericsError> {
    if u.len() != v.len() {
        return Err(NumericsError::DimensionMismatch {
            op: "cosine_sim",
            left: (1, u.len()),
            right: (1, v.len()),
        });
    }
    let nu = norm(u);
    let nv = norm(v);
    if nu == 0.0 || nv == 0.0 {
        return Err(NumericsError::ZeroNorm("cosine_sim"));
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}
