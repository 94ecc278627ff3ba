//! Cross-view fusion, token pooling and cosine scoring.
//!
//! For token matrices `Z1`, `Z2` (rows are tokens, `d` columns) the affinity
//! of token `i` of the first view to token `j` of the second view is
//!
//! ```text
//! l_ij = <Z1_i, Z2_j> / (sqrt(d) * |Z1_i| * |Z2_j|)
//! a_ij = softmax_j(l_ij)
//! ```
//!
//! and the fused token is `Z1_i * (T * a_ii)`: the first view's token gated by
//! the attention mass it places on its own position in the other view, scaled
//! so that uniform attention leaves it unchanged. With a single token
//! `a_11 = 1` and fusion returns `Z1` exactly.

use alloc::vec;
use alloc::vec::Vec;

use crate::tensor::{dot, l2_norm, EmbeddingVector, TokenMatrix};
use crate::{Error, Result};

/// Numerically stable softmax; the maximum is subtracted before `exp`.
pub fn softmax_in_place(xs: &mut [f64]) {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in xs.iter_mut() {
        *x = libm::exp(*x - max);
        sum += *x;
    }
    for x in xs.iter_mut() {
        *x /= sum;
    }
}

/// Unit-normalized rows; zero rows stay zero. Also returns the row norms.
pub(crate) fn normalized_rows(m: &[f64], cols: usize) -> (Vec<f64>, Vec<f64>) {
    let mut out = Vec::with_capacity(m.len());
    let mut norms = Vec::with_capacity(m.len() / cols);
    for row in m.chunks_exact(cols) {
        let n = l2_norm(row);
        norms.push(n);
        if n > 0.0 {
            out.extend(row.iter().map(|x| x / n));
        } else {
            out.extend(core::iter::repeat_n(0.0, cols));
        }
    }
    (out, norms)
}

/// Row-stochastic `T x T` attention from `z1` tokens onto `z2` tokens.
/// A zero-norm row in either view contributes zero affinity, so an all-zero
/// row of `z1` attends uniformly.
pub(crate) fn attention_raw(z1: &[f64], z2: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let (u, _) = normalized_rows(z1, cols);
    let (v, _) = normalized_rows(z2, cols);
    let scale = 1.0 / libm::sqrt(cols as f64);
    let mut a = vec![0.0; rows * rows];
    for i in 0..rows {
        let ui = &u[i * cols..(i + 1) * cols];
        let row = &mut a[i * rows..(i + 1) * rows];
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = dot(ui, &v[j * cols..(j + 1) * cols]) * scale;
        }
        softmax_in_place(row);
    }
    a
}

pub(crate) fn fuse_raw(z1: &[f64], attention: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(z1.len());
    for (i, row) in z1.chunks_exact(cols).enumerate() {
        let gate = rows as f64 * attention[i * rows + i];
        out.extend(row.iter().map(|x| x * gate));
    }
    out
}

fn check_pair(z1: &TokenMatrix, z2: &TokenMatrix) -> Result<()> {
    z1.same_shape(z2)
}

/// Attention weights as a `T x T` token matrix (rows sum to one).
pub fn attention_weights(z1: &TokenMatrix, z2: &TokenMatrix) -> Result<TokenMatrix> {
    check_pair(z1, z2)?;
    let a = attention_raw(z1.as_slice(), z2.as_slice(), z1.rows(), z1.cols());
    TokenMatrix::new(z1.rows(), z1.rows(), a)
}

pub fn cross_attention(z1: &TokenMatrix, z2: &TokenMatrix) -> Result<TokenMatrix> {
    check_pair(z1, z2)?;
    let (rows, cols) = (z1.rows(), z1.cols());
    let a = attention_raw(z1.as_slice(), z2.as_slice(), rows, cols);
    TokenMatrix::new(rows, cols, fuse_raw(z1.as_slice(), &a, rows, cols))
}

/// Mean over token rows.
pub fn pool(z: &TokenMatrix) -> Result<EmbeddingVector> {
    let mut out = vec![0.0; z.cols()];
    for row in z.iter_rows() {
        for (o, x) in out.iter_mut().zip(row) {
            *o += x;
        }
    }
    let n = z.rows() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    EmbeddingVector::new(out)
}

/// Cosine similarity; `degenerate` is set (and the value is 0) when either
/// vector has zero norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub value: f64,
    pub degenerate: bool,
}

pub fn cosine_score(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<Score> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    if a.norm() == 0.0 || b.norm() == 0.0 {
        return Ok(Score {
            value: 0.0,
            degenerate: true,
        });
    }
    Ok(Score {
        value: cosine_with_norms(a.as_slice(), a.norm(), b.as_slice(), b.norm()),
        degenerate: false,
    })
}

/// Cosine from precomputed norms, clamped to [-1, 1]; zero when either norm is zero.
pub(crate) fn cosine_with_norms(a: &[f64], na: f64, b: &[f64], nb: f64) -> f64 {
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}
