//! Dot-product kernels shared by importance, selection and metrics.
//!
//! Inputs are f32; every reduction accumulates in f64.

use crate::error::{Error, Result};
use crate::tensor::MatrixView;

/// Rows with an L2 norm at or below this are rejected.
pub const NORM_EPS: f64 = 1e-12;

/// f64-accumulated dot product with a fixed four-lane reduction order.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks_a = a.chunks_exact(4);
    let chunks_b = b.chunks_exact(4);
    let tail: f64 = chunks_a
        .remainder()
        .iter()
        .zip(chunks_b.remainder())
        .map(|(&x, &y)| x as f64 * y as f64)
        .sum();
    for (ca, cb) in chunks_a.zip(chunks_b) {
        acc[0] += ca[0] as f64 * cb[0] as f64;
        acc[1] += ca[1] as f64 * cb[1] as f64;
        acc[2] += ca[2] as f64 * cb[2] as f64;
        acc[3] += ca[3] as f64 * cb[3] as f64;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub fn norm(a: &[f32]) -> f64 {
    dot(a, a).sqrt()
}

/// L2 norm of every row, failing on the first row whose norm is not above [`NORM_EPS`].
pub fn row_norms(m: MatrixView<'_>) -> Result<Vec<f64>> {
    m.iter_rows()
        .enumerate()
        .map(|(row, r)| {
            let n = norm(r);
            if n > NORM_EPS {
                Ok(n)
            } else {
                Err(Error::ZeroNorm { row, norm: n })
            }
        })
        .collect()
}

/// Cosine similarity given precomputed norms, clamped to `[-1, 1]`.
#[inline]
pub fn cosine_with_norms(a: &[f32], b: &[f32], norm_a: f64, norm_b: f64) -> f64 {
    (dot(a, b) / (norm_a * norm_b)).clamp(-1.0, 1.0)
}

/// Cosine distance `1 - cos` given precomputed norms, in `[0, 2]`.
#[inline]
pub fn cosine_distance_with_norms(a: &[f32], b: &[f32], norm_a: f64, norm_b: f64) -> f64 {
    1.0 - cosine_with_norms(a, b, norm_a, norm_b)
}

pub(crate) fn checked_norm(v: &[f32], row: usize) -> Result<f64> {
    let n = norm(v);
    if n > NORM_EPS {
        Ok(n)
    } else {
        Err(Error::ZeroNorm { row, norm: n })
    }
}
