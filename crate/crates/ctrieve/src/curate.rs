//! Builds a manifest from a raw directory of `<id>.vol`, `<id>.txt` and
//! optional `<id>.labels` files.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Component, Path, PathBuf};

use ctrieve_core::corpus::{
    filter_report, filter_volume, Manifest, PairedSample, Rejection, ReportRecord, Split, Verdict, VolumeRecord,
};

use crate::anonymize::PatternTable;
use crate::error::{CliError, CliResult};
use crate::formats::read_volume;

#[derive(Debug, Default)]
struct RawEntry {
    volume: Option<PathBuf>,
    report: Option<PathBuf>,
    labels: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurateOutcome {
    pub manifest: Manifest,
    /// Sorted by id.
    pub rejections: Vec<(String, Rejection)>,
}

impl CurateOutcome {
    /// `id<TAB>rule: detail` per rejected sample.
    pub fn rejection_log(&self) -> String {
        let mut out = String::new();
        for (id, r) in &self.rejections {
            out.push_str(&format!("{id}\t{r}\n"));
        }
        out
    }
}

fn scan(raw_dir: &Path) -> CliResult<BTreeMap<String, RawEntry>> {
    let mut entries: BTreeMap<String, RawEntry> = BTreeMap::new();
    for item in fs::read_dir(raw_dir).map_err(CliError::io(raw_dir))? {
        let path = item.map_err(CliError::io(raw_dir))?.path();
        if !path.is_file() {
            continue;
        }
        let (Some(stem), Some(ext)) = (
            path.file_stem().and_then(|s| s.to_str()),
            path.extension().and_then(|s| s.to_str()),
        ) else {
            continue;
        };
        let entry = entries.entry(stem.to_string()).or_default();
        match ext {
            "vol" => entry.volume = Some(path),
            "txt" => entry.report = Some(path),
            "labels" => entry.labels = Some(path),
            _ => {}
        }
    }
    entries.retain(|_, e| e.volume.is_some() || e.report.is_some());
    Ok(entries)
}

/// Path written into the manifest, relative to the manifest directory
/// (climbing with `..` where needed) so manifests stay relocatable.
pub(crate) fn manifest_path(file: &Path, manifest_dir: &Path) -> CliResult<String> {
    let file = fs::canonicalize(file).map_err(CliError::io(file))?;
    let base = fs::canonicalize(manifest_dir).map_err(CliError::io(manifest_dir))?;
    let (fc, bc): (Vec<Component>, Vec<Component>) = (file.components().collect(), base.components().collect());
    let common = fc.iter().zip(&bc).take_while(|(a, b)| a == b).count();
    let shown: PathBuf = if common == 0 {
        file.clone()
    } else {
        std::iter::repeat_n(Component::ParentDir, bc.len() - common).chain(fc[common..].iter().copied()).collect()
    };
    shown
        .to_str()
        .map(str::to_string)
        .ok_or_else(|| CliError::data(format!("path {} is not UTF-8", file.display())))
}

fn read_labels(path: &Path) -> CliResult<BTreeSet<String>> {
    Ok(fs::read_to_string(path)
        .map_err(CliError::io(path))?
        .lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect())
}

/// Screens every raw sample (volume rules first, then the report rule on the
/// anonymized text) and returns the survivors as an unassigned manifest.
pub fn curate(raw_dir: &Path, patterns: &PatternTable, manifest_dir: &Path) -> CliResult<CurateOutcome> {
    let entries = scan(raw_dir)?;
    if entries.is_empty() {
        return Err(CliError::data(format!("{} holds no .vol or .txt files", raw_dir.display())));
    }
    let mut kept = Vec::new();
    let mut rejections = Vec::new();
    for (id, entry) in entries {
        let (Some(vol_path), Some(txt_path)) = (&entry.volume, &entry.report) else {
            rejections.push((id, Rejection::Unpaired));
            continue;
        };
        let raw = read_volume(vol_path)?;
        let [width, height, depth] = raw.volume.dims();
        let volume = VolumeRecord {
            id: id.clone(),
            width,
            height,
            depth,
            missing_fraction: raw.missing_fraction,
            data_path: manifest_path(vol_path, manifest_dir)?,
        };
        if let Verdict::Reject(r) = filter_volume(&volume) {
            rejections.push((id, r));
            continue;
        }
        let text = fs::read_to_string(txt_path).map_err(CliError::io(txt_path))?;
        let report = ReportRecord::new(id.clone(), patterns.apply(text.trim()));
        if let Verdict::Reject(r) = filter_report(&report) {
            rejections.push((id, r));
            continue;
        }
        let keywords = match &entry.labels {
            Some(p) => read_labels(p)?,
            None => BTreeSet::new(),
        };
        kept.push(PairedSample {
            id,
            volume,
            report,
            keywords,
            split: Split::Unassigned,
        });
    }
    if kept.is_empty() {
        return Err(CliError::data(format!(
            "no sample in {} survived curation ({} rejected)",
            raw_dir.display(),
            rejections.len()
        )));
    }
    Ok(CurateOutcome {
        manifest: Manifest::new(kept)?,
        rejections,
    })
}
