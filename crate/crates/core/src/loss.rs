//! View-consistency and contrastive matching losses.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::tensor::TokenMatrix;
use crate::{Error, Result};

/// `0.5 * sum((z1 - z2)^2)` over all entries.
pub fn mse_loss(z1: &TokenMatrix, z2: &TokenMatrix) -> Result<f64> {
    z1.same_shape(z2)?;
    Ok(mse_raw(z1.as_slice(), z2.as_slice()))
}

pub(crate) fn mse_raw(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
}

/// Which softmax directions enter the matching loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimDirection {
    /// For each image, a softmax over the batch's texts.
    #[default]
    ImageToText,
    /// Image-to-text plus, for each text, a softmax over the batch's images.
    Symmetric,
}

/// Square score matrix, `scores[k][i]` = score of text `k` against image `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    n: usize,
    data: Vec<f64>,
}

impl ScoreMatrix {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: data.len(),
            });
        }
        Ok(Self { n, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: r.len() });
            }
            data.extend_from_slice(r);
        }
        Self::new(n, data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, text: usize, image: usize) -> f64 {
        self.data[text * self.n + image]
    }
}

/// `-log softmax(logits)[positive]`, accumulating `d loss / d logits` into `grad`.
fn nce_term(logits: &[f64], positive: usize, grad: &mut [f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|l| libm::exp(l - max)).sum();
    let log_z = max + libm::log(sum);
    for (g, l) in grad.iter_mut().zip(logits) {
        *g += libm::exp(l - log_z);
    }
    grad[positive] -= 1.0;
    log_z - logits[positive]
}

/// Loss and its gradient with respect to every score.
pub fn sim_loss_with_grad(scores: &ScoreMatrix, tau: f64, direction: SimDirection) -> Result<(f64, ScoreMatrix)> {
    let n = scores.n;
    if n < 2 {
        return Err(Error::InvalidParameter(alloc::format!(
            "matching loss needs at least 2 pairs, got {n}"
        )));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(alloc::format!("temperature {tau} must be > 0")));
    }
    if scores.data.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("score matrix"));
    }
    let mut grad = vec![0.0; n * n];
    let mut loss = 0.0;
    let mut logits = vec![0.0; n];
    let mut g = vec![0.0; n];
    for i in 0..n {
        for k in 0..n {
            logits[k] = scores.get(k, i) / tau;
        }
        g.fill(0.0);
        loss += nce_term(&logits, i, &mut g);
        for k in 0..n {
            grad[k * n + i] += g[k] / tau;
        }
    }
    if direction == SimDirection::Symmetric {
        for k in 0..n {
            for i in 0..n {
                logits[i] = scores.get(k, i) / tau;
            }
            g.fill(0.0);
            loss += nce_term(&logits, k, &mut g);
            for i in 0..n {
                grad[k * n + i] += g[i] / tau;
            }
        }
    }
    Ok((loss, ScoreMatrix { n, data: grad }))
}

/// `-sum_i log( exp(s[i][i]/tau) / sum_k exp(s[k][i]/tau) )`.
pub fn sim_loss(scores: &ScoreMatrix, tau: f64) -> Result<f64> {
    sim_loss_with_grad(scores, tau, SimDirection::ImageToText).map(|(l, _)| l)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_mse: f64,
    pub l_sim: f64,
    pub l_total: f64,
    pub alpha: f64,
}

impl LossBreakdown {
    pub fn new(l_mse: f64, l_sim: f64, alpha: f64) -> Self {
        Self {
            l_mse,
            l_sim,
            l_total: total_loss(l_mse, l_sim, alpha),
            alpha,
        }
    }
}

/// `l_mse + alpha * l_sim`.
pub fn total_loss(l_mse: f64, l_sim: f64, alpha: f64) -> f64 {
    l_mse + alpha * l_sim
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_examples() {
        let a = TokenMatrix::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(mse_loss(&a, &a).unwrap(), 0.0);
        let b = TokenMatrix::new(2, 3, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(mse_loss(&a, &b).unwrap(), 3.0);
        let c = TokenMatrix::new(3, 2, vec![0.0; 6]).unwrap();
        assert!(mse_loss(&a, &c).is_err());
    }

    #[test]
    fn sim_loss_closed_form() {
        let s = ScoreMatrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        let expected = 2.0 * libm::log(1.0 + libm::exp(-2.0));
        assert!((sim_loss(&s, 1.0).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.2538).abs() < 1e-4);
    }

    #[test]
    fn sim_loss_uniform_scores() {
        for n in 2..7 {
            let s = ScoreMatrix::new(n, vec![0.3; n * n]).unwrap();
            let nf = n as f64;
            assert!((sim_loss(&s, 1.0).unwrap() - nf * libm::log(nf)).abs() <= 1e-9);
        }
    }

    #[test]
    fn sim_loss_shrinks_as_diagonal_grows() {
        let mut prev = f64::INFINITY;
        for step in 0..12 {
            let d = step as f64;
            let s = ScoreMatrix::from_rows(&[vec![d, 0.0, 0.0], vec![0.0, d, 0.0], vec![0.0, 0.0, d]]).unwrap();
            let l = sim_loss(&s, 1.0).unwrap();
            assert!(l < prev);
            prev = l;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn sim_loss_rejects_bad_input() {
        let one = ScoreMatrix::new(1, vec![1.0]).unwrap();
        assert!(sim_loss(&one, 1.0).is_err());
        let nan = ScoreMatrix::new(2, vec![1.0, f64::NAN, 0.0, 1.0]).unwrap();
        assert_eq!(sim_loss(&nan, 1.0), Err(Error::NonFinite("score matrix")));
        let ok = ScoreMatrix::new(2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(sim_loss(&ok, 0.0).is_err());
    }

    #[test]
    fn total_examples() {
        assert_eq!(total_loss(0.5, 1.0, 1.0), 1.5);
        assert_eq!(total_loss(0.7, 0.0, 1.0), 0.7);
        assert_eq!(total_loss(2.0, 4.0, 0.25), 3.0);
        let b = LossBreakdown::new(2.0, 4.0, 0.25);
        assert_eq!(b.l_total, b.l_mse + b.alpha * b.l_sim);
    }

    #[test]
    fn score_gradient_matches_finite_differences() {
        let rows = [vec![0.3, -0.2, 0.9], vec![0.1, 0.5, -0.4], vec![-0.7, 0.2, 0.6]];
        for direction in [SimDirection::ImageToText, SimDirection::Symmetric] {
            let s = ScoreMatrix::from_rows(&rows).unwrap();
            let (_, g) = sim_loss_with_grad(&s, 0.5, direction).unwrap();
            for idx in 0..9 {
                let h = 1e-5;
                let mut plus = s.clone();
                plus.data[idx] += h;
                let mut minus = s.clone();
                minus.data[idx] -= h;
                let fd = (sim_loss_with_grad(&plus, 0.5, direction).unwrap().0
                    - sim_loss_with_grad(&minus, 0.5, direction).unwrap().0)
                    / (2.0 * h);
                assert!((fd - g.data[idx]).abs() < 1e-8, "{direction:?} {idx}: {fd} vs {}", g.data[idx]);
            }
        }
    }
}
