use std::collections::BTreeSet;

use ctrieve_core::corpus::{self, Manifest, PairedSample, ReportRecord, Split, VolumeRecord};
use ctrieve_core::fusion::{attention_weights, cosine_score, cross_attention, pool};
use ctrieve_core::loss::{mse_loss, sim_loss, ScoreMatrix};
use ctrieve_core::metrics::{recall_at, recall_mdr_mnr};
use ctrieve_core::retrieval::{rank_of, top_k, RetrievalIndex};
use ctrieve_core::vision::VisionEncoder;
use ctrieve_core::{EmbeddingVector, TokenMatrix};
use proptest::prelude::*;

fn matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = TokenMatrix> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(r, c)| {
        prop::collection::vec(-3.0f64..3.0, r * c).prop_map(move |d| TokenMatrix::new(r, c, d).unwrap())
    })
}

fn sample(i: usize) -> PairedSample {
    let id = format!("s{i:04}");
    PairedSample {
        id: id.clone(),
        volume: VolumeRecord {
            id: id.clone(),
            width: 96 + i % 7,
            height: 100 + i % 3,
            depth: 120 + i % 11,
            missing_fraction: 0.0,
            data_path: String::new(),
        },
        report: ReportRecord::new(id, "one two three four five ".repeat(1 + i % 4)),
        keywords: BTreeSet::new(),
        split: Split::Unassigned,
    }
}

fn embedding_set(n: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    // Small integer grid so exact score ties actually occur.
    prop::collection::vec(prop::collection::vec(-2i8..=2, dim), n)
        .prop_map(|rows| rows.into_iter().map(|r| r.into_iter().map(f64::from).collect()).collect())
}

fn oracle_order(index: &[(String, EmbeddingVector)], q: &EmbeddingVector) -> Vec<(String, f64)> {
    let mut all: Vec<(String, f64)> =
        index.iter().map(|(id, v)| (id.clone(), cosine_score(q, v).unwrap().value)).collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    all
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_partitions_the_manifest(n in 1usize..200, seed in any::<u64>()) {
        let m = Manifest::new((0..n).map(sample).collect()).unwrap();
        let s = corpus::split(&m, seed).unwrap();
        let count = |sp| s.in_split(sp).count();
        prop_assert_eq!((count(Split::Train), count(Split::Val), count(Split::Test)), corpus::split_sizes(n));
        prop_assert_eq!(count(Split::Unassigned), 0);
        let ids: Vec<&str> = s.samples().iter().map(|x| x.id.as_str()).collect();
        let orig: Vec<&str> = m.samples().iter().map(|x| x.id.as_str()).collect();
        prop_assert_eq!(ids, orig);
        prop_assert_eq!(corpus::split(&m, seed).unwrap(), s);
    }

    #[test]
    fn stats_match_brute_force(n in 1usize..120) {
        let m = Manifest::new((0..n).map(sample).collect()).unwrap();
        let st = corpus::stats(&m).unwrap();
        let mut depths: Vec<usize> = m.samples().iter().map(|s| s.volume.depth).collect();
        depths.sort_unstable();
        prop_assert_eq!(st.slices.min, depths[0]);
        prop_assert_eq!(st.slices.max, depths[n - 1]);
        prop_assert_eq!(st.slices.median, depths[(n - 1) / 2]);
        let avg = depths.iter().sum::<usize>() as f64 / n as f64;
        prop_assert!((st.slices.average - avg).abs() < 1e-9);
    }

    #[test]
    fn top_k_and_rank_match_full_sort(rows in (2usize..40, 1usize..6).prop_flat_map(|(n, d)| (embedding_set(n, d), prop::collection::vec(-2i8..=2, d))), k in 1usize..50) {
        let (rows, q) = rows;
        let entries: Vec<(String, EmbeddingVector)> = rows
            .into_iter()
            .enumerate()
            .map(|(i, r)| (format!("e{i:03}"), EmbeddingVector::new(r).unwrap()))
            .collect();
        let q = EmbeddingVector::new(q.into_iter().map(f64::from).collect()).unwrap();
        let index = RetrievalIndex::build(entries.clone()).unwrap();
        let oracle = oracle_order(&entries, &q);
        let got = top_k(&index, &q, k).unwrap();
        let want: Vec<(String, f64)> = oracle.iter().take(k).cloned().collect();
        let got: Vec<(String, f64)> = got.hits.into_iter().map(|h| (h.id, h.score)).collect();
        prop_assert_eq!(got, want);
        for (pos, (id, _)) in oracle.iter().enumerate() {
            prop_assert_eq!(rank_of(&index, &q, id).unwrap(), pos + 1);
        }
    }

    #[test]
    fn recall_two_ways(ranks in prop::collection::vec(1usize..60, 1..100), k in 1usize..60) {
        let direct = ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64;
        prop_assert_eq!(recall_at(&ranks, k), direct);
        let summary = recall_mdr_mnr(&ranks).unwrap();
        let mut hits = 0usize;
        for r in &ranks {
            if *r == 1 { hits += 1; }
        }
        prop_assert_eq!(summary.r1, hits as f64 / ranks.len() as f64);
        let below = ranks.iter().filter(|&&r| r < summary.median_rank).count();
        let at_or_below = ranks.iter().filter(|&&r| r <= summary.median_rank).count();
        prop_assert!(below * 2 < ranks.len() + 1 && at_or_below * 2 >= ranks.len());
    }

    #[test]
    fn cosine_ignores_positive_rescaling(a in prop::collection::vec(-5.0f64..5.0, 1..16), s in 0.01f64..100.0) {
        let b: Vec<f64> = a.iter().rev().map(|x| x + 0.5).collect();
        let (a, b) = (EmbeddingVector::new(a).unwrap(), EmbeddingVector::new(b).unwrap());
        let base = cosine_score(&a, &b).unwrap();
        let scaled = cosine_score(&a.scaled(s).unwrap(), &b).unwrap();
        prop_assert!((base.value - scaled.value).abs() < 1e-12);
        prop_assert!(base.value.abs() <= 1.0);
    }

    #[test]
    fn pool_ignores_row_order(z in matrix(8, 6), seed in any::<u64>()) {
        let mut rows: Vec<Vec<f64>> = z.iter_rows().map(<[f64]>::to_vec).collect();
        let k = (seed as usize) % rows.len();
        rows.rotate_left(k);
        rows.reverse();
        let permuted = TokenMatrix::from_rows(&rows).unwrap();
        let (a, b) = (pool(&z).unwrap(), pool(&permuted).unwrap());
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_rows_are_distributions(pair in (1usize..8, 1usize..8).prop_flat_map(|(r, c)| (
        prop::collection::vec(-3.0f64..3.0, r * c), prop::collection::vec(-3.0f64..3.0, r * c), Just((r, c))))) {
        let (a, b, (r, c)) = pair;
        let z1 = TokenMatrix::new(r, c, a).unwrap();
        let z2 = TokenMatrix::new(r, c, b).unwrap();
        let w = attention_weights(&z1, &z2).unwrap();
        for row in w.iter_rows() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&x| x >= 0.0));
        }
        let fused = cross_attention(&z1, &z2).unwrap();
        prop_assert_eq!((fused.rows(), fused.cols()), (r, c));
        if r == 1 {
            prop_assert_eq!(fused, z1);
        }
    }

    #[test]
    fn sim_loss_is_shift_invariant(n in 2usize..12, shift in -50.0f64..50.0, seed in prop::collection::vec(-1.0f64..1.0, 144), tau in 0.05f64..2.0) {
        let data: Vec<f64> = seed[..n * n].to_vec();
        let shifted: Vec<f64> = data.iter().map(|x| x + shift).collect();
        let a = sim_loss(&ScoreMatrix::new(n, data).unwrap(), tau).unwrap();
        let b = sim_loss(&ScoreMatrix::new(n, shifted).unwrap(), tau).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        prop_assert!(a >= 0.0);
    }

    #[test]
    fn mse_is_symmetric(pair in (1usize..6, 1usize..6).prop_flat_map(|(r, c)| (
        prop::collection::vec(-3.0f64..3.0, r * c), prop::collection::vec(-3.0f64..3.0, r * c), Just((r, c))))) {
        let (a, b, (r, c)) = pair;
        let z1 = TokenMatrix::new(r, c, a).unwrap();
        let z2 = TokenMatrix::new(r, c, b).unwrap();
        prop_assert_eq!(mse_loss(&z1, &z2).unwrap(), mse_loss(&z2, &z1).unwrap());
        prop_assert_eq!(mse_loss(&z1, &z1).unwrap(), 0.0);
    }

    #[test]
    fn class_feature_lies_in_token_hull(z in matrix(6, 4), seed in any::<u64>()) {
        let enc = VisionEncoder::init(2, z.cols(), seed).unwrap();
        let cls = enc.class_feature(&z).unwrap();
        for (c, v) in cls.as_slice().iter().enumerate() {
            let col: Vec<f64> = z.iter_rows().map(|r| r[c]).collect();
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(*v >= lo - 1e-12 && *v <= hi + 1e-12);
        }
    }
}
