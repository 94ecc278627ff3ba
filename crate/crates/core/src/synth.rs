//! Synthetic paired corpus with a planted, learnable text/volume link.
//!
//! Every finding word owns a fixed texture: a cube split into 2x2x2 sub-blocks
//! of +1/-1 amplitude with four of each sign. A sample names a distinct set of
//! findings in its report (each finding with a fixed descriptor word), and its volume carries each named texture in a
//! randomly chosen cell on top of Gaussian background noise.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use crate::vision::Volume;
use crate::{rng, Error, Result};

/// Fixed qualifier written in front of each finding, same order as [`FINDINGS`].
pub const DESCRIPTORS: [&str; 16] = [
    "basal",
    "lobar",
    "hilar",
    "pleural",
    "solitary",
    "centrilobular",
    "mild",
    "interstitial",
    "apical",
    "cylindrical",
    "vascular",
    "patchy",
    "septal",
    "spiculated",
    "thin",
    "perihilar",
];

pub const FINDINGS: [&str; 16] = [
    "atelectasis",
    "consolidation",
    "adenopathy",
    "effusion",
    "nodule",
    "emphysema",
    "cardiomegaly",
    "fibrosis",
    "pneumothorax",
    "bronchiectasis",
    "calcification",
    "opacity",
    "thickening",
    "mass",
    "cyst",
    "edema",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub pairs: usize,
    /// Cube side of each volume.
    pub side: usize,
    /// Side of the cells textures are planted in; must divide `side` and be even.
    pub cell: usize,
    pub findings_per_report: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            pairs: 64,
            side: 8,
            cell: 4,
            findings_per_report: 3,
            noise_sigma: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub id: String,
    pub report: String,
    pub keywords: BTreeSet<String>,
    pub volume: Volume,
}

/// Sign pattern (8 sub-blocks, z/y/x order) of finding `k`: the `k`-th
/// 8-bit code with exactly four bits set, in ascending order.
pub fn texture_code(k: usize) -> [f64; 8] {
    let code = (0u32..256)
        .filter(|c| c.count_ones() == 4)
        .nth(k)
        .expect("at most 70 balanced codes");
    core::array::from_fn(|b| if code >> b & 1 == 1 { 1.0 } else { -1.0 })
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == k {
            out.push(current.clone());
            return;
        }
        for i in start..n {
            current.push(i);
            rec(i + 1, n, k, current, out);
            current.pop();
        }
    }
    rec(0, n, k, &mut current, &mut out);
    out
}

/// Comma-separated "descriptor finding" phrases, one per finding index.
pub fn report_text(findings: &[usize]) -> String {
    let phrases: Vec<String> = findings
        .iter()
        .map(|&f| format!("{} {}", DESCRIPTORS[f], FINDINGS[f]))
        .collect();
    phrases.join(", ")
}

pub fn generate(config: &SynthConfig) -> Result<Vec<SynthSample>> {
    let SynthConfig {
        pairs,
        side,
        cell,
        findings_per_report,
        noise_sigma,
        seed,
    } = *config;
    if cell == 0 || cell % 2 != 0 || side % cell != 0 {
        return Err(Error::InvalidParameter(format!(
            "cell {cell} must be even and divide side {side}"
        )));
    }
    let grid = side / cell;
    if findings_per_report == 0 || findings_per_report > FINDINGS.len() || findings_per_report > grid * grid * grid {
        return Err(Error::InvalidParameter(format!(
            "cannot plant {findings_per_report} findings in a {grid}^3 cell grid"
        )));
    }
    let mut combos = combinations(FINDINGS.len(), findings_per_report);
    if pairs > combos.len() {
        return Err(Error::InvalidParameter(format!(
            "only {} distinct finding sets exist, {pairs} requested",
            combos.len()
        )));
    }
    let mut rng = rng::rng(seed);
    combos.shuffle(&mut rng);
    let noise = Normal::new(0.0, noise_sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let half = cell / 2;
    let cells: Vec<[usize; 3]> = (0..grid * grid * grid)
        .map(|c| [c % grid, (c / grid) % grid, c / (grid * grid)])
        .collect();
    let mut out = Vec::with_capacity(pairs);
    for (i, combo) in combos.into_iter().take(pairs).enumerate() {
        let mut placement = cells.clone();
        placement.shuffle(&mut rng);
        let mut voxels: Vec<f64> = (0..side * side * side).map(|_| noise.sample(&mut rng)).collect();
        for (&finding, origin) in combo.iter().zip(&placement) {
            let code = texture_code(finding);
            for dz in 0..cell {
                for dy in 0..cell {
                    for dx in 0..cell {
                        let sub = (dz / half) * 4 + (dy / half) * 2 + dx / half;
                        let [x, y, z] = [origin[0] * cell + dx, origin[1] * cell + dy, origin[2] * cell + dz];
                        voxels[(z * side + y) * side + x] += code[sub];
                    }
                }
            }
        }
        out.push(SynthSample {
            id: format!("syn{i:05}"),
            report: report_text(&combo),
            keywords: combo.iter().map(|&f| FINDINGS[f].to_string()).collect(),
            volume: Volume::new(side, side, side, voxels)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_are_distinct_and_balanced() {
        let codes: Vec<[f64; 8]> = (0..FINDINGS.len()).map(texture_code).collect();
        for (i, a) in codes.iter().enumerate() {
            assert_eq!(a.iter().sum::<f64>(), 0.0);
            for b in &codes[i + 1..] {
                assert_ne!(a, b);
            }
        }
    }

    #[test]
    fn generation_is_seeded_and_distinct() {
        let cfg = SynthConfig::default();
        let a = generate(&cfg).unwrap();
        assert_eq!(a, generate(&cfg).unwrap());
        assert_eq!(a.len(), 64);
        let reports: BTreeSet<&str> = a.iter().map(|s| s.report.as_str()).collect();
        assert_eq!(reports.len(), 64);
        assert!(a.iter().all(|s| s.keywords.len() == 3 && crate::corpus::word_count(&s.report) == 6));
        assert_ne!(a[0].volume, generate(&SynthConfig { seed: 1, ..cfg }).unwrap()[0].volume);
    }

    #[test]
    fn rejects_impossible_requests() {
        let bad = SynthConfig { cell: 3, ..SynthConfig::default() };
        assert!(generate(&bad).is_err());
        let too_many = SynthConfig { pairs: 561, ..SynthConfig::default() };
        assert!(generate(&too_many).is_err());
    }

    #[test]
    fn report_templates() {
        assert_eq!(report_text(&[0, 3, 15]), "basal atelectasis, pleural effusion, perihilar edema");
        assert_eq!(report_text(&[2]), "hilar adenopathy");
    }
}
