//! On-disk formats: manifest JSONL, raw volumes, vocabulary, parameter
//! checkpoints, embeddings and plain word lists.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ctrieve_core::corpus::{Manifest, PairedSample, MANIFEST_SCHEMA_VERSION};
use ctrieve_core::params::{EncoderParams, ParamGroup};
use ctrieve_core::text::{TextEncoderVariant, Vocabulary};
use ctrieve_core::vision::Volume;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(CliError::io(path))
}

/// Writes through a sibling temp file so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(CliError::io(&tmp))?;
    fs::rename(&tmp, path).map_err(CliError::io(path))
}

#[derive(Serialize)]
struct ManifestLineOut<'a> {
    schema_version: u32,
    #[serde(flatten)]
    sample: &'a PairedSample,
}

#[derive(Deserialize)]
struct ManifestLineIn {
    schema_version: u32,
    #[serde(flatten)]
    sample: PairedSample,
}

pub fn manifest_to_string(m: &Manifest) -> String {
    let mut out = String::new();
    for sample in m.samples() {
        let line = ManifestLineOut {
            schema_version: m.schema_version,
            sample,
        };
        out.push_str(&serde_json::to_string(&line).expect("manifest lines serialize"));
        out.push('\n');
    }
    out
}

pub fn parse_manifest(text: &str) -> CliResult<Manifest> {
    let mut samples = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ManifestLineIn =
            serde_json::from_str(line).map_err(|e| CliError::data(format!("manifest line {}: {e}", n + 1)))?;
        if parsed.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(CliError::data(format!(
                "manifest line {}: schema_version {} (expected {MANIFEST_SCHEMA_VERSION})",
                n + 1,
                parsed.schema_version
            )));
        }
        samples.push(parsed.sample);
    }
    Ok(Manifest::new(samples)?)
}

pub fn read_manifest(path: &Path) -> CliResult<Manifest> {
    parse_manifest(&read_text(path)?).map_err(|e| match e {
        CliError::Data(msg) => CliError::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_manifest(path: &Path, m: &Manifest) -> CliResult<()> {
    write_atomic(path, manifest_to_string(m).as_bytes())
}

/// A raw volume as stored: dims, voxels with non-finite values replaced by
/// zero, and the fraction of voxels that were non-finite.
#[derive(Debug, Clone, PartialEq)]
pub struct RawVolume {
    pub volume: Volume,
    pub missing_fraction: f64,
}

/// Header line `W H D`, then `W*H*D` little-endian f32 values, x fastest
/// and z outermost.
pub fn encode_volume(v: &Volume) -> Vec<u8> {
    let [w, h, d] = v.dims();
    let mut out = format!("{w} {h} {d}\n").into_bytes();
    out.reserve(v.voxels().len() * 4);
    for &x in v.voxels() {
        out.extend_from_slice(&(x as f32).to_le_bytes());
    }
    out
}

pub fn decode_volume(bytes: &[u8]) -> CliResult<RawVolume> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| CliError::data("volume header is missing its newline"))?;
    let header = std::str::from_utf8(&bytes[..newline]).map_err(|_| CliError::data("volume header is not UTF-8"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| CliError::data(format!("bad volume header {header:?}"))))
        .collect::<CliResult<_>>()?;
    let [w, h, d] = dims[..] else {
        return Err(CliError::data(format!("volume header {header:?} must hold W H D")));
    };
    let count = w
        .checked_mul(h)
        .and_then(|x| x.checked_mul(d))
        .filter(|&c| c > 0)
        .ok_or_else(|| CliError::data(format!("invalid volume dims {header:?}")))?;
    let payload = &bytes[newline + 1..];
    if payload.len() != count * 4 {
        return Err(CliError::data(format!(
            "volume payload has {} bytes, expected {} for {w}x{h}x{d}",
            payload.len(),
            count * 4
        )));
    }
    let mut missing = 0usize;
    let voxels: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| {
            let x = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            if x.is_finite() {
                f64::from(x)
            } else {
                missing += 1;
                0.0
            }
        })
        .collect();
    Ok(RawVolume {
        volume: Volume::new(w, h, d, voxels)?,
        missing_fraction: missing as f64 / count as f64,
    })
}

pub fn read_volume(path: &Path) -> CliResult<RawVolume> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    decode_volume(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn write_volume(path: &Path, v: &Volume) -> CliResult<()> {
    write_atomic(path, &encode_volume(v))
}

/// Line `i` holds the token with index `i + 2`.
pub fn vocab_to_string(v: &Vocabulary) -> String {
    let mut out = String::new();
    for t in v.real_tokens() {
        out.push_str(t);
        out.push('\n');
    }
    out
}

pub fn parse_vocab(text: &str) -> CliResult<Vocabulary> {
    let tokens: Vec<&str> = text.lines().collect();
    let unique: BTreeSet<&str> = tokens.iter().copied().collect();
    if unique.len() != tokens.len() || tokens.iter().any(|t| t.is_empty()) {
        return Err(CliError::data("vocabulary has duplicate or empty lines"));
    }
    let vocab = Vocabulary::from_tokens(tokens.iter().copied());
    if vocab.real_tokens().len() != tokens.len() {
        return Err(CliError::data("vocabulary uses a reserved token"));
    }
    Ok(vocab)
}

pub fn read_vocab(path: &Path) -> CliResult<Vocabulary> {
    parse_vocab(&read_text(path)?)
}

/// One entry per line, trimmed and lowercased; blank lines skipped.
pub fn read_word_list(path: &Path) -> CliResult<BTreeSet<String>> {
    Ok(read_text(path)?
        .lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect())
}

const PARAMS_MAGIC: &[u8; 8] = b"CTRVPRM1";

/// A checkpoint: the text-encoder variant plus every parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub variant: TextEncoderVariant,
    pub params: EncoderParams,
}

/// Layout, all integers little-endian:
///
/// ```text
/// magic "CTRVPRM1" | variant u8 (0 domain, 1 generic) | group count u32
/// per group: name length u32 | name bytes | frozen u8 | rank u32 |
///            dims u64 x rank | values f32 x product(dims)
/// ```
pub fn encode_checkpoint(c: &Checkpoint) -> Vec<u8> {
    let mut out = PARAMS_MAGIC.to_vec();
    out.push(match c.variant {
        TextEncoderVariant::Domain => 0,
        TextEncoderVariant::Generic => 1,
    });
    out.extend_from_slice(&(c.params.groups.len() as u32).to_le_bytes());
    for g in &c.params.groups {
        out.extend_from_slice(&(g.name.len() as u32).to_le_bytes());
        out.extend_from_slice(g.name.as_bytes());
        out.push(u8::from(g.frozen));
        out.extend_from_slice(&(g.shape.len() as u32).to_le_bytes());
        for &d in &g.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in &g.data {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> CliResult<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| CliError::data("checkpoint is truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> CliResult<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> CliResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> CliResult<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> CliResult<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(PARAMS_MAGIC.len())? != PARAMS_MAGIC {
        return Err(CliError::data("not a ctrieve checkpoint"));
    }
    let variant = match r.u8()? {
        0 => TextEncoderVariant::Domain,
        1 => TextEncoderVariant::Generic,
        v => return Err(CliError::data(format!("unknown encoder variant tag {v}"))),
    };
    let count = r.u32()? as usize;
    let mut groups = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| CliError::data("checkpoint group name is not UTF-8"))?
            .to_string();
        let frozen = match r.u8()? {
            0 => false,
            1 => true,
            v => return Err(CliError::data(format!("bad frozen flag {v}"))),
        };
        let rank = r.u32()? as usize;
        let shape: Vec<usize> = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<CliResult<_>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| CliError::data("checkpoint group is too large"))?;
        let raw = r.take(n.checked_mul(4).ok_or_else(|| CliError::data("checkpoint group is too large"))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        groups.push(ParamGroup::new(name, shape, frozen, data)?);
    }
    if r.pos != bytes.len() {
        return Err(CliError::data("trailing bytes after checkpoint"));
    }
    Ok(Checkpoint {
        variant,
        params: EncoderParams { groups },
    })
}

pub fn read_checkpoint(path: &Path) -> CliResult<Checkpoint> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    decode_checkpoint(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Refuses parameters that overflow the f32 storage format.
pub fn write_checkpoint(path: &Path, c: &Checkpoint) -> CliResult<()> {
    if let Some(g) = c.params.groups.iter().find(|g| g.data.iter().any(|&x| !(x as f32).is_finite())) {
        return Err(CliError::Divergence(format!("parameter group {} overflows f32", g.name)));
    }
    write_atomic(path, &encode_checkpoint(c))
}

/// One line of an embeddings file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingRecord {
    pub id: String,
    pub text: Vec<f64>,
    pub image: Vec<f64>,
    #[serde(default)]
    pub keywords: BTreeSet<String>,
}

pub fn embeddings_to_string(records: &[EmbeddingRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("embedding lines serialize"));
        out.push('\n');
    }
    out
}

pub fn read_embeddings(path: &Path) -> CliResult<Vec<EmbeddingRecord>> {
    read_text(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| CliError::data(format!("{} line {}: {e}", path.display(), n + 1)))
        })
        .collect()
}

/// Writes `text` to `path`, or to standard output when `path` is `None`.
pub fn emit(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(CliError::io("<stdout>"))
        }
    }
}
