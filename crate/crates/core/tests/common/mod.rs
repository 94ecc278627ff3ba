#![allow(dead_code)]

use ctrieve_core::fusion::{cosine_score, cross_attention, pool};
use ctrieve_core::loss::{mse_loss, sim_loss, ScoreMatrix, SimDirection};
use ctrieve_core::model::{Objective, PreparedItem};
use ctrieve_core::params::{ModelParams, VISION_BIAS, VISION_CLS, VISION_WEIGHT};
use ctrieve_core::text::{TextEncoder, TextEncoderVariant};
use ctrieve_core::vision::{augment, AugmentationPolicy, Axis, Rotation, VisionEncoder, Volume};
use ctrieve_core::EmbeddingVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct RawItem {
    pub text: EmbeddingVector,
    pub view_a: Volume,
    pub view_b: Volume,
}

pub fn random_volume(side: usize, rng: &mut ChaCha8Rng) -> Volume {
    Volume::from_fn(side, side, side, |_, _, _| rng.random_range(-1.0..1.0)).unwrap()
}

/// Small model plus `n` random pairs with genuinely different views.
pub fn random_batch(seed: u64, n: usize, dim: usize, side: usize, patch: usize) -> (ModelParams, Vec<RawItem>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let text = TextEncoder::init(12, dim, TextEncoderVariant::Domain, seed).unwrap();
    let mut vision = VisionEncoder::init(patch, dim, seed + 1).unwrap();
    for b in &mut vision.bias {
        *b = rng.random_range(-0.3..0.3);
    }
    let params = ModelParams::new(text, vision).unwrap();
    let volumes: Vec<Volume> = (0..n).map(|_| random_volume(side, &mut rng)).collect();
    let policy_a = AugmentationPolicy {
        noise_sigma: 0.2,
        rotation: Rotation::Random { axis: Axis::Depth },
        ..AugmentationPolicy::identity()
    };
    let policy_b = AugmentationPolicy {
        noise_sigma: 0.2,
        cutmix_fraction: 0.3,
        ..AugmentationPolicy::identity()
    };
    let items = (0..n)
        .map(|i| {
            let w: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let partner = &volumes[(i + 1) % n];
            RawItem {
                text: EmbeddingVector::new(w).unwrap(),
                view_a: augment(&volumes[i], &policy_a.with_seed(rng.random()), Some(partner)).unwrap(),
                view_b: augment(&volumes[i], &policy_b.with_seed(rng.random()), Some(partner)).unwrap(),
            }
        })
        .collect();
    (params, items)
}

pub fn prepare(params: &ModelParams, items: &[RawItem]) -> Vec<PreparedItem> {
    items
        .iter()
        .map(|it| PreparedItem::new(&params.vision, it.text.clone(), &it.view_a, &it.view_b).unwrap())
        .collect()
}

/// Objective recomputed from the public per-operation functions only.
pub fn reference_loss(vision: &VisionEncoder, items: &[RawItem], objective: &Objective) -> f64 {
    let n = items.len();
    let mut mse = 0.0;
    let mut pooled = Vec::new();
    for it in items {
        let za = vision.tokens(&it.view_a).unwrap();
        let zb = vision.tokens(&it.view_b).unwrap();
        mse += mse_loss(&za, &zb).unwrap();
        pooled.push(pool(&cross_attention(&za, &zb).unwrap()).unwrap());
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|k| (0..n).map(|i| cosine_score(&items[k].text, &pooled[i]).unwrap().value).collect())
        .collect();
    let mut sim = sim_loss(&ScoreMatrix::from_rows(&rows).unwrap(), objective.tau).unwrap();
    if objective.direction == SimDirection::Symmetric {
        let transposed: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|k| rows[k][i]).collect()).collect();
        sim += sim_loss(&ScoreMatrix::from_rows(&transposed).unwrap(), objective.tau).unwrap();
    }
    let mse = if objective.enable_mse { mse } else { 0.0 };
    mse + objective.alpha * sim
}

pub fn vision_group_mut<'a>(vision: &'a mut VisionEncoder, name: &str) -> &'a mut Vec<f64> {
    match name {
        VISION_WEIGHT => &mut vision.weight,
        VISION_BIAS => &mut vision.bias,
        VISION_CLS => &mut vision.cls,
        other => panic!("not a vision group: {other}"),
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct GradCheck {
    pub checked: usize,
    pub worst_abs: f64,
    pub worst_rel: f64,
    pub failures: usize,
}

/// Central differences with step `h` on every trainable entry, compared with the
/// analytic gradient at `rel_tol` relative or `abs_tol` absolute.
pub fn check_gradients(
    params: &ModelParams,
    items: &[RawItem],
    objective: &Objective,
    h: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> GradCheck {
    let prepared = prepare(params, items);
    let (_, grads) = ctrieve_core::model::backward(params, &prepared, objective).unwrap();
    let mut out = GradCheck::default();
    for name in [VISION_WEIGHT, VISION_BIAS, VISION_CLS] {
        let analytic = grads.get(name).unwrap();
        let len = analytic.len();
        for j in 0..len {
            let mut plus = params.vision.clone();
            vision_group_mut(&mut plus, name)[j] += h;
            let mut minus = params.vision.clone();
            vision_group_mut(&mut minus, name)[j] -= h;
            let fd = (reference_loss(&plus, items, objective) - reference_loss(&minus, items, objective)) / (2.0 * h);
            let abs = (fd - analytic[j]).abs();
            let rel = abs / fd.abs().max(analytic[j].abs()).max(f64::MIN_POSITIVE);
            out.checked += 1;
            if abs > abs_tol && rel > rel_tol {
                out.failures += 1;
                out.worst_abs = out.worst_abs.max(abs);
                out.worst_rel = out.worst_rel.max(rel);
            }
        }
    }
    out
}
