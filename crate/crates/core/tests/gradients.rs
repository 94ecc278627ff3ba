mod common;

use common::{check_gradients, prepare, random_batch, reference_loss};
use ctrieve_core::loss::SimDirection;
use ctrieve_core::model::{backward, batch_loss, Objective};
use ctrieve_core::params::{TEXT_BIAS, TEXT_EMBEDDING, TEXT_WEIGHT, VISION_CLS};

#[test]
fn analytic_gradients_match_central_differences() {
    let objectives = [
        Objective::default(),
        Objective { alpha: 0.5, tau: 0.2, ..Objective::default() },
        Objective { enable_mse: false, direction: SimDirection::Symmetric, ..Objective::default() },
    ];
    for seed in 0..6u64 {
        let (params, items) = random_batch(seed, 4, 8, 4, 2);
        for objective in &objectives {
            let r = check_gradients(&params, &items, objective, 1e-4, 1e-4, 1e-6);
            assert_eq!(r.failures, 0, "seed {seed} {objective:?}: {r:?}");
        }
    }
}

#[test]
fn model_forward_matches_reference_forward() {
    let (params, items) = random_batch(42, 5, 6, 4, 2);
    let objective = Objective { alpha: 0.7, tau: 0.5, ..Objective::default() };
    let fast = batch_loss(&params, &prepare(&params, &items), &objective).unwrap();
    let slow = reference_loss(&params.vision, &items, &objective);
    assert!((fast.l_total - slow).abs() < 1e-10, "{} vs {slow}", fast.l_total);
}

#[test]
fn frozen_groups_get_zero_gradient() {
    let (params, items) = random_batch(3, 4, 8, 4, 2);
    let (_, grads) = backward(&params, &prepare(&params, &items), &Objective::default()).unwrap();
    for name in [TEXT_EMBEDDING, TEXT_WEIGHT, TEXT_BIAS, VISION_CLS] {
        assert!(grads.get(name).unwrap().iter().all(|&g| g == 0.0), "{name}");
    }
}

#[test]
fn duplicated_pair_batch_gradients() {
    let (params, mut items) = random_batch(8, 3, 8, 4, 2);
    let dup = common::RawItem {
        text: items[0].text.clone(),
        view_a: items[0].view_a.clone(),
        view_b: items[0].view_b.clone(),
    };
    items.push(dup);
    let r = check_gradients(&params, &items, &Objective::default(), 1e-4, 1e-4, 1e-6);
    assert_eq!(r.failures, 0, "{r:?}");
}

#[test]
fn single_pair_batch_is_rejected() {
    let (params, items) = random_batch(1, 2, 4, 4, 2);
    let prepared = prepare(&params, &items[..1]);
    assert!(backward(&params, &prepared, &Objective::default()).is_err());
}
