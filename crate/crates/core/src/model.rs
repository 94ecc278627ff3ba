//! Dual-stream forward pass and its hand-derived backward pass.
//!
//! Per pair `i` of a batch, with `W_i` the frozen text embedding and
//! `A_i`, `B_i` the two augmented views:
//!
//! ```text
//! Za = enc(A_i), Zb = enc(B_i)           token matrices (T x d)
//! F  = fuse(Za, Zb)                       gated cross-view attention
//! P_i = mean_rows(F)
//! S[k][i] = cos(W_k, P_i)
//! L = sum_i 0.5 |Za - Zb|^2 + alpha * InfoNCE(S / tau)
//! ```
//!
//! Only the vision encoder receives gradient. The class-feature vector does
//! not enter the objective, so its gradient is zero.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::fusion::{attention_raw, cosine_with_norms, fuse_raw, normalized_rows};
use crate::loss::{mse_raw, sim_loss_with_grad, LossBreakdown, ScoreMatrix, SimDirection};
use crate::params::{Gradients, ModelParams, GROUP_ORDER, VISION_BIAS, VISION_CLS, VISION_WEIGHT};
use crate::tensor::{dot, l2_norm, EmbeddingVector, TokenMatrix};
use crate::text::{TextEncoder, TokenSequence};
use crate::vision::{VisionEncoder, Volume};
use crate::{fusion, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub alpha: f64,
    pub tau: f64,
    pub enable_mse: bool,
    pub direction: SimDirection,
}

impl Default for Objective {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            tau: 1.0,
            enable_mse: true,
            direction: SimDirection::ImageToText,
        }
    }
}

impl Objective {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParameter(alloc::format!("alpha {} must be > 0", self.alpha)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidParameter(alloc::format!("tau {} must be > 0", self.tau)));
        }
        Ok(())
    }
}

/// One training pair after text encoding and view augmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedItem {
    pub text: EmbeddingVector,
    patches_a: Vec<f64>,
    patches_b: Vec<f64>,
    tokens: usize,
}

impl PreparedItem {
    pub fn new(vision: &VisionEncoder, text: EmbeddingVector, view_a: &Volume, view_b: &Volume) -> Result<Self> {
        if text.dim() != vision.dim {
            return Err(Error::DimensionMismatch {
                expected: vision.dim,
                found: text.dim(),
            });
        }
        if view_a.dims() != view_b.dims() {
            return Err(Error::InvalidParameter(alloc::format!(
                "views have different dims {:?} and {:?}",
                view_a.dims(),
                view_b.dims()
            )));
        }
        let patches_a = vision.patches(view_a)?;
        let patches_b = vision.patches(view_b)?;
        Ok(Self {
            text,
            tokens: patches_a.len() / vision.patch_len(),
            patches_a,
            patches_b,
        })
    }
}

struct ItemForward {
    za: Vec<f64>,
    zb: Vec<f64>,
    attention: Vec<f64>,
    pooled: Vec<f64>,
    pooled_norm: f64,
    mse: f64,
}

fn forward_item(vision: &VisionEncoder, item: &PreparedItem) -> ItemForward {
    let d = vision.dim;
    let t = item.tokens;
    let za = vision.project(&item.patches_a);
    let zb = vision.project(&item.patches_b);
    let attention = attention_raw(&za, &zb, t, d);
    let fused = fuse_raw(&za, &attention, t, d);
    let mut pooled = vec![0.0; d];
    for row in fused.chunks_exact(d) {
        for (p, x) in pooled.iter_mut().zip(row) {
            *p += x;
        }
    }
    pooled.iter_mut().for_each(|p| *p /= t as f64);
    let pooled_norm = l2_norm(&pooled);
    let mse = mse_raw(&za, &zb);
    ItemForward {
        za,
        zb,
        attention,
        pooled,
        pooled_norm,
        mse,
    }
}

fn check_batch(params: &ModelParams, items: &[PreparedItem], objective: &Objective) -> Result<()> {
    objective.validate()?;
    if items.len() < 2 {
        return Err(Error::InvalidParameter(alloc::format!(
            "a batch needs at least 2 pairs, got {}",
            items.len()
        )));
    }
    let plen = params.vision.patch_len();
    for item in items {
        if item.text.dim() != params.vision.dim || item.patches_a.len() != item.tokens * plen {
            return Err(Error::DimensionMismatch {
                expected: params.vision.dim,
                found: item.text.dim(),
            });
        }
    }
    Ok(())
}

fn scores_of(items: &[PreparedItem], forwards: &[ItemForward]) -> Result<ScoreMatrix> {
    let n = items.len();
    let mut data = Vec::with_capacity(n * n);
    for text in items.iter().map(|it| &it.text) {
        for f in forwards {
            data.push(cosine_with_norms(text.as_slice(), text.norm(), &f.pooled, f.pooled_norm));
        }
    }
    ScoreMatrix::new(n, data)
}

fn breakdown(forwards: &[ItemForward], l_sim: f64, objective: &Objective) -> LossBreakdown {
    let l_mse = if objective.enable_mse {
        forwards.iter().map(|f| f.mse).sum()
    } else {
        0.0
    };
    LossBreakdown::new(l_mse, l_sim, objective.alpha)
}

/// Loss of a batch without gradients.
pub fn batch_loss(params: &ModelParams, items: &[PreparedItem], objective: &Objective) -> Result<LossBreakdown> {
    check_batch(params, items, objective)?;
    let forwards: Vec<ItemForward> = items.iter().map(|it| forward_item(&params.vision, it)).collect();
    let scores = scores_of(items, &forwards)?;
    let (l_sim, _) = sim_loss_with_grad(&scores, objective.tau, objective.direction)?;
    Ok(breakdown(&forwards, l_sim, objective))
}

/// Loss and exact gradients of `l_total` for every parameter group.
/// Frozen text-encoder groups receive zero gradient.
pub fn backward(params: &ModelParams, items: &[PreparedItem], objective: &Objective) -> Result<(LossBreakdown, Gradients)> {
    check_batch(params, items, objective)?;
    let vision = &params.vision;
    let d = vision.dim;
    let plen = vision.patch_len();
    let forwards: Vec<ItemForward> = items.iter().map(|it| forward_item(vision, it)).collect();
    let scores = scores_of(items, &forwards)?;
    let (l_sim, dscores) = sim_loss_with_grad(&scores, objective.tau, objective.direction)?;
    let loss = breakdown(&forwards, l_sim, objective);

    let mut g_weight = vec![0.0; vision.weight.len()];
    let mut g_bias = vec![0.0; d];
    let inv_sqrt_d = 1.0 / libm::sqrt(d as f64);

    // Fixed reduction order: items by index.
    for (i, (item, f)) in items.iter().zip(&forwards).enumerate() {
        let t = item.tokens;
        // d l_total / d pooled_i through every cosine in column i.
        let mut d_pooled = vec![0.0; d];
        if f.pooled_norm > 0.0 {
            for (k, text) in items.iter().map(|it| &it.text).enumerate() {
                if text.norm() == 0.0 {
                    continue;
                }
                let upstream = objective.alpha * dscores.get(k, i);
                let s = scores.get(k, i);
                for c in 0..d {
                    let w_hat = text.as_slice()[c] / text.norm();
                    let p_hat = f.pooled[c] / f.pooled_norm;
                    d_pooled[c] += upstream * (w_hat - s * p_hat) / f.pooled_norm;
                }
            }
        }

        let mut dza = vec![0.0; t * d];
        let mut dzb = vec![0.0; t * d];
        let (u, norms_a) = normalized_rows(&f.za, d);
        let (v, norms_b) = normalized_rows(&f.zb, d);
        let mut du = vec![0.0; t * d];
        let mut dv = vec![0.0; t * d];
        for r in 0..t {
            let za_r = &f.za[r * d..(r + 1) * d];
            let a_rr = f.attention[r * t + r];
            let gate = t as f64 * a_rr;
            // Fused row r = za_r * gate, pooled = mean of fused rows.
            let mut d_gate = 0.0;
            for c in 0..d {
                let d_fused = d_pooled[c] / t as f64;
                dza[r * d + c] += gate * d_fused;
                d_gate += d_fused * za_r[c];
            }
            let d_arr = t as f64 * d_gate;
            // Softmax backward with upstream only on the diagonal entry.
            for j in 0..t {
                let a_rj = f.attention[r * t + j];
                let delta = if j == r { 1.0 } else { 0.0 };
                let d_logit = a_rj * (delta - a_rr) * d_arr * inv_sqrt_d;
                if d_logit == 0.0 {
                    continue;
                }
                for c in 0..d {
                    du[r * d + c] += d_logit * v[j * d + c];
                    dv[j * d + c] += d_logit * u[r * d + c];
                }
            }
        }
        // Through the row normalizations.
        for r in 0..t {
            if norms_a[r] > 0.0 {
                let ur = &u[r * d..(r + 1) * d];
                let proj = dot(ur, &du[r * d..(r + 1) * d]);
                for c in 0..d {
                    dza[r * d + c] += (du[r * d + c] - ur[c] * proj) / norms_a[r];
                }
            }
            if norms_b[r] > 0.0 {
                let vr = &v[r * d..(r + 1) * d];
                let proj = dot(vr, &dv[r * d..(r + 1) * d]);
                for c in 0..d {
                    dzb[r * d + c] += (dv[r * d + c] - vr[c] * proj) / norms_b[r];
                }
            }
        }
        if objective.enable_mse {
            for ((ga, gb), (a, b)) in dza.iter_mut().zip(dzb.iter_mut()).zip(f.za.iter().zip(&f.zb)) {
                *ga += a - b;
                *gb -= a - b;
            }
        }
        // Through tanh and the shared patch projection.
        for (dz, z, patches) in [(&dza, &f.za, &item.patches_a), (&dzb, &f.zb, &item.patches_b)] {
            for r in 0..t {
                let patch = &patches[r * plen..(r + 1) * plen];
                for c in 0..d {
                    let zc = z[r * d + c];
                    let dpre = dz[r * d + c] * (1.0 - zc * zc);
                    if dpre == 0.0 {
                        continue;
                    }
                    g_bias[c] += dpre;
                    for (gw, x) in g_weight[c * plen..(c + 1) * plen].iter_mut().zip(patch) {
                        *gw += dpre * x;
                    }
                }
            }
        }
    }

    let mut groups = Vec::with_capacity(GROUP_ORDER.len());
    let mut snapshot = params.clone();
    for (name, _, data) in snapshot.groups_mut() {
        let g = match name {
            VISION_WEIGHT => core::mem::take(&mut g_weight),
            VISION_BIAS => core::mem::take(&mut g_bias),
            VISION_CLS => vec![0.0; data.len()],
            _ => vec![0.0; data.len()],
        };
        groups.push((alloc::string::String::from(name), g));
    }
    Ok((loss, Gradients { groups }))
}

/// Retrieval-time image embedding: both views are the unaugmented volume.
pub fn embed_volume(vision: &VisionEncoder, volume: &Volume) -> Result<EmbeddingVector> {
    let tokens = vision.tokens(volume)?;
    let fused = fusion::cross_attention(&tokens, &tokens)?;
    fusion::pool(&fused)
}

/// Pooled embedding from two explicit views.
pub fn embed_views(vision: &VisionEncoder, view_a: &Volume, view_b: &Volume) -> Result<EmbeddingVector> {
    let za: TokenMatrix = vision.tokens(view_a)?;
    let zb = vision.tokens(view_b)?;
    fusion::pool(&fusion::cross_attention(&za, &zb)?)
}

pub fn embed_text(text: &TextEncoder, tokens: &TokenSequence) -> Result<EmbeddingVector> {
    text.encode(tokens)
}
