use std::collections::BTreeSet;

use ctrieve::anonymize::PatternTable;
use ctrieve::formats::{
    decode_checkpoint, decode_volume, encode_checkpoint, encode_volume, manifest_to_string, parse_manifest, Checkpoint,
};
use ctrieve_core::corpus::{Manifest, PairedSample, ReportRecord, Split, VolumeRecord};
use ctrieve_core::params::ModelParams;
use ctrieve_core::text::{TextEncoder, TextEncoderVariant};
use ctrieve_core::vision::{VisionEncoder, Volume};
use proptest::prelude::*;

fn redaction_table() -> PatternTable {
    PatternTable::new([
        (r"\b\d{2}/\d{2}/\d{4}\b", "[DATE]"),
        (r"(?i)\b(mr|mrs|ms)\.? [a-z]+\b", "[NAME]"),
        (r"\b\d{6,}\b", "[ID]"),
    ])
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn anonymization_is_idempotent(text in "[0-9/ a-zMrs.]{0,60}") {
        let table = redaction_table();
        let once = table.apply(&text);
        prop_assert_eq!(table.apply(&once), once);
    }

    #[test]
    fn volume_bytes_round_trip(w in 1usize..5, h in 1usize..5, d in 1usize..5, seed in any::<u32>()) {
        let v = Volume::from_fn(w, h, d, |x, y, z| {
            f64::from((seed as f32) * 1e-6 + (x * 7 + y * 3 + z) as f32)
        })
        .unwrap();
        let raw = decode_volume(&encode_volume(&v)).unwrap();
        prop_assert_eq!(raw.missing_fraction, 0.0);
        prop_assert_eq!(raw.volume, v);
    }

    #[test]
    fn manifest_text_round_trips(n in 1usize..12, words in 0usize..9) {
        let samples: Vec<PairedSample> = (0..n)
            .map(|i| PairedSample {
                id: format!("x{i}"),
                volume: VolumeRecord {
                    id: format!("x{i}"),
                    width: 96 + i,
                    height: 96,
                    depth: 100,
                    missing_fraction: i as f64 / 100.0,
                    data_path: format!("vols/x{i}.vol"),
                },
                report: ReportRecord::new(format!("x{i}"), vec!["word"; words].join(" ")),
                keywords: (0..i % 3).map(|k| format!("kw{k}")).collect::<BTreeSet<_>>(),
                split: [Split::Train, Split::Val, Split::Test, Split::Unassigned][i % 4],
            })
            .collect();
        let m = Manifest::new(samples).unwrap();
        prop_assert_eq!(parse_manifest(&manifest_to_string(&m)).unwrap(), m);
    }
}

#[test]
fn checkpoint_keeps_f32_values_and_variant() {
    for variant in [TextEncoderVariant::Domain, TextEncoderVariant::Generic] {
        let text = TextEncoder::init(9, 6, variant, 3).unwrap();
        let vision = VisionEncoder::init(2, 6, 4).unwrap();
        let params = ModelParams::new(text, vision).unwrap();
        let c = Checkpoint { variant, params: params.to_encoder_params() };
        let back = decode_checkpoint(&encode_checkpoint(&c)).unwrap();
        assert_eq!(back.variant, variant);
        for (a, b) in back.params.groups.iter().zip(&c.params.groups) {
            assert_eq!((&a.name, &a.shape, a.frozen), (&b.name, &b.shape, b.frozen));
            assert!(a.data.iter().zip(&b.data).all(|(x, y)| *x == f64::from(*y as f32)));
        }
        let again = encode_checkpoint(&back);
        assert_eq!(again, encode_checkpoint(&c));
    }
}

#[test]
fn truncated_and_corrupt_inputs_are_data_errors() {
    let v = Volume::from_fn(2, 2, 2, |x, _, _| x as f64).unwrap();
    let bytes = encode_volume(&v);
    assert!(decode_volume(&bytes[..bytes.len() - 1]).is_err());
    assert!(decode_volume(b"2 2\n").is_err());
    let c = Checkpoint {
        variant: TextEncoderVariant::Domain,
        params: ModelParams::new(
            TextEncoder::init(3, 2, TextEncoderVariant::Domain, 0).unwrap(),
            VisionEncoder::init(1, 2, 0).unwrap(),
        )
        .unwrap()
        .to_encoder_params(),
    };
    let enc = encode_checkpoint(&c);
    assert!(decode_checkpoint(&enc[..enc.len() - 2]).is_err());
    let mut bad = enc.clone();
    bad[0] = b'X';
    assert!(decode_checkpoint(&bad).is_err());
    assert!(parse_manifest("{\"schema_version\": 99}\n").is_err());
}
