//! Volumes, trilinear resizing, view augmentation and the toy patch encoder.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::fusion::softmax_in_place;
use crate::tensor::{dot, EmbeddingVector, TokenMatrix};
use crate::{rng, Error, Result};

/// Default standard side length volumes are resized to.
pub const DEFAULT_STANDARD_SIDE: usize = 96;

/// Voxel grid stored x-fastest, then y, then z (slice-major outermost).
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    width: usize,
    height: usize,
    depth: usize,
    voxels: Vec<f64>,
}

impl Volume {
    pub fn new(width: usize, height: usize, depth: usize, voxels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || depth == 0 {
            return Err(Error::Empty("volume"));
        }
        if voxels.len() != width * height * depth {
            return Err(Error::DimensionMismatch {
                expected: width * height * depth,
                found: voxels.len(),
            });
        }
        if voxels.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("volume"));
        }
        Ok(Self {
            width,
            height,
            depth,
            voxels,
        })
    }

    pub fn filled(width: usize, height: usize, depth: usize, value: f64) -> Result<Self> {
        Self::new(width, height, depth, vec![value; width * height * depth])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        depth: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut voxels = Vec::with_capacity(width * height * depth);
        for z in 0..depth {
            for y in 0..height {
                for x in 0..width {
                    voxels.push(f(x, y, z));
                }
            }
        }
        Self::new(width, height, depth, voxels)
    }

    /// `[width, height, depth]`.
    pub fn dims(&self) -> [usize; 3] {
        [self.width, self.height, self.depth]
    }

    pub fn voxels(&self) -> &[f64] {
        &self.voxels
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.voxels[self.offset(x, y, z)]
    }

    pub fn mean(&self) -> f64 {
        self.voxels.iter().sum::<f64>() / self.voxels.len() as f64
    }

    fn offset(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.height + y) * self.width + x
    }

    fn at(&self, c: [usize; 3]) -> f64 {
        self.voxels[self.offset(c[0], c[1], c[2])]
    }
}

/// Source sample positions for one axis: (lower index, upper index, weight of upper).
fn axis_taps(source: usize, target: usize) -> Vec<(usize, usize, f64)> {
    let scale = source as f64 / target as f64;
    (0..target)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (source - 1) as f64);
            let lo = libm::floor(pos) as usize;
            let hi = (lo + 1).min(source - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// Trilinear resize with half-voxel-centre alignment and edge clamping.
pub fn resize(v: &Volume, target: [usize; 3]) -> Result<Volume> {
    if target.contains(&0) {
        return Err(Error::InvalidParameter(format!("resize target {target:?} has a zero side")));
    }
    if v.voxels.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("volume"));
    }
    if v.dims() == target {
        return Ok(v.clone());
    }
    let tx = axis_taps(v.width, target[0]);
    let ty = axis_taps(v.height, target[1]);
    let tz = axis_taps(v.depth, target[2]);
    let mut out = Vec::with_capacity(target.iter().product());
    for &(z0, z1, wz) in &tz {
        for &(y0, y1, wy) in &ty {
            for &(x0, x1, wx) in &tx {
                let c00 = lerp(v.get(x0, y0, z0), v.get(x1, y0, z0), wx);
                let c10 = lerp(v.get(x0, y1, z0), v.get(x1, y1, z0), wx);
                let c01 = lerp(v.get(x0, y0, z1), v.get(x1, y0, z1), wx);
                let c11 = lerp(v.get(x0, y1, z1), v.get(x1, y1, z1), wx);
                out.push(lerp(lerp(c00, c10, wy), lerp(c01, c11, wy), wz));
            }
        }
    }
    Volume::new(target[0], target[1], target[2], out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Width,
    Height,
    Depth,
}

impl Axis {
    /// The two coordinates that move under a rotation about this axis.
    fn plane(self) -> (usize, usize) {
        match self {
            Axis::Depth => (0, 1),
            Axis::Height => (0, 2),
            Axis::Width => (1, 2),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Axis::Width => "width",
            Axis::Height => "height",
            Axis::Depth => "depth",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Rotation {
    #[default]
    None,
    Fixed { axis: Axis, quarter_turns: u8 },
    Random { axis: Axis },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentationPolicy {
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub rotation: Rotation,
    #[serde(default)]
    pub cutmix_fraction: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

impl Default for AugmentationPolicy {
    fn default() -> Self {
        Self::identity()
    }
}

impl AugmentationPolicy {
    pub fn identity() -> Self {
        Self {
            noise_sigma: 0.0,
            rotation: Rotation::None,
            cutmix_fraction: 0.0,
            rng_seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn is_identity(&self) -> bool {
        self.noise_sigma == 0.0
            && self.cutmix_fraction == 0.0
            && matches!(
                self.rotation,
                Rotation::None | Rotation::Fixed { quarter_turns: 0, .. }
            )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise_sigma {} must be >= 0", self.noise_sigma)));
        }
        if !(0.0..1.0).contains(&self.cutmix_fraction) {
            return Err(Error::InvalidParameter(format!(
                "cutmix_fraction {} must lie in [0, 1)",
                self.cutmix_fraction
            )));
        }
        Ok(())
    }
}

/// Quarter turns about `axis`; odd turn counts need a square rotation plane.
pub fn rotate(v: &Volume, axis: Axis, quarter_turns: u8) -> Result<Volume> {
    let turns = quarter_turns % 4;
    if turns == 0 {
        return Ok(v.clone());
    }
    let (p, q) = axis.plane();
    let dims = v.dims();
    if dims[p] != dims[q] {
        return Err(Error::NonSquareRotation(axis.name()));
    }
    let n = dims[p];
    let mut cur = v.clone();
    for _ in 0..turns {
        let src = cur;
        let mut voxels = Vec::with_capacity(src.voxels.len());
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    let out = [x, y, z];
                    let mut from = out;
                    from[p] = out[q];
                    from[q] = n - 1 - out[p];
                    voxels.push(src.at(from));
                }
            }
        }
        cur = Volume::new(dims[0], dims[1], dims[2], voxels)?;
    }
    Ok(cur)
}

/// Axis-aligned box covering roughly `fraction` of the volume: each side is
/// `round(cbrt(fraction) * side)`. Returns `(start, size)` per axis.
pub fn cutmix_box(dims: [usize; 3], fraction: f64, rng: &mut impl Rng) -> [(usize, usize); 3] {
    let side_fraction = libm::cbrt(fraction);
    dims.map(|d| {
        let size = (libm::round(side_fraction * d as f64) as usize).min(d);
        let start = rng.random_range(0..=d - size);
        (start, size)
    })
}

/// Applies rotation, then cutmix with `partner`, then additive Gaussian noise.
pub fn augment(v: &Volume, policy: &AugmentationPolicy, partner: Option<&Volume>) -> Result<Volume> {
    policy.validate()?;
    let mut rng = rng::rng(policy.rng_seed);
    let mut out = match policy.rotation {
        Rotation::None => v.clone(),
        Rotation::Fixed { axis, quarter_turns } => rotate(v, axis, quarter_turns)?,
        Rotation::Random { axis } => {
            let turns = rng.random_range(0..4u8);
            rotate(v, axis, turns)?
        }
    };
    if policy.cutmix_fraction > 0.0 {
        let partner = partner.ok_or(Error::MissingPartner)?;
        if partner.dims() != out.dims() {
            return Err(Error::MissingPartner);
        }
        let [(x0, sx), (y0, sy), (z0, sz)] = cutmix_box(out.dims(), policy.cutmix_fraction, &mut rng);
        for z in z0..z0 + sz {
            for y in y0..y0 + sy {
                for x in x0..x0 + sx {
                    let o = out.offset(x, y, z);
                    out.voxels[o] = partner.voxels[o];
                }
            }
        }
    }
    if policy.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, policy.noise_sigma)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        for x in &mut out.voxels {
            *x += noise.sample(&mut rng);
        }
    }
    Ok(out)
}

/// Patch encoder: each non-overlapping `p^3` block is flattened and mapped
/// through `tanh(weight * patch + bias)`. A learned vector `cls` scores the
/// resulting tokens for the class-feature readout.
#[derive(Debug, Clone, PartialEq)]
pub struct VisionEncoder {
    pub patch: usize,
    pub dim: usize,
    /// `dim x patch^3`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub cls: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisionEncoding {
    pub tokens: TokenMatrix,
    pub cls: EmbeddingVector,
}

impl VisionEncoder {
    pub fn init(patch: usize, dim: usize, seed: u64) -> Result<Self> {
        if patch == 0 || dim == 0 {
            return Err(Error::InvalidParameter(format!(
                "vision encoder needs patch >= 1 and dim >= 1, got {patch} and {dim}"
            )));
        }
        let fan_in = patch * patch * patch;
        let mut rng = rng::rng(seed);
        let unit = Normal::new(0.0, 1.0).expect("valid normal");
        let w_scale = 1.0 / libm::sqrt(fan_in as f64);
        let weight = (0..dim * fan_in).map(|_| unit.sample(&mut rng) * w_scale).collect();
        let c_scale = 1.0 / libm::sqrt(dim as f64);
        let cls = (0..dim).map(|_| unit.sample(&mut rng) * c_scale).collect();
        Ok(Self {
            patch,
            dim,
            weight,
            bias: vec![0.0; dim],
            cls,
        })
    }

    pub fn patch_len(&self) -> usize {
        self.patch * self.patch * self.patch
    }

    /// Number of tokens produced for a volume of these dims.
    pub fn token_count(&self, dims: [usize; 3]) -> Result<usize> {
        if dims.iter().any(|d| d % self.patch != 0) {
            return Err(Error::NotDivisible { dims, patch: self.patch });
        }
        Ok(dims.iter().map(|d| d / self.patch).product())
    }

    /// Flattened patches, one row of `patch^3` values per token. Patch order is
    /// z-block, y-block, x-block; inside a patch the order is z, y, x.
    pub fn patches(&self, v: &Volume) -> Result<Vec<f64>> {
        let count = self.token_count(v.dims())?;
        let p = self.patch;
        let [bx, by, bz] = v.dims().map(|d| d / p);
        let mut out = Vec::with_capacity(count * self.patch_len());
        for kz in 0..bz {
            for ky in 0..by {
                for kx in 0..bx {
                    for dz in 0..p {
                        for dy in 0..p {
                            let start = v.offset(kx * p, ky * p + dy, kz * p + dz);
                            out.extend_from_slice(&v.voxels[start..start + p]);
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Token rows for pre-extracted patches.
    pub fn project(&self, patches: &[f64]) -> Vec<f64> {
        let len = self.patch_len();
        let mut out = Vec::with_capacity(patches.len() / len * self.dim);
        for patch in patches.chunks_exact(len) {
            for r in 0..self.dim {
                let pre = dot(&self.weight[r * len..(r + 1) * len], patch) + self.bias[r];
                out.push(libm::tanh(pre));
            }
        }
        out
    }

    pub fn tokens(&self, v: &Volume) -> Result<TokenMatrix> {
        let patches = self.patches(v)?;
        let rows = patches.len() / self.patch_len();
        TokenMatrix::new(rows, self.dim, self.project(&patches))
    }

    /// Softmax-weighted mean of token rows under the `cls` scoring vector.
    pub fn class_feature(&self, tokens: &TokenMatrix) -> Result<EmbeddingVector> {
        let mut weights: Vec<f64> = tokens.iter_rows().map(|r| dot(r, &self.cls)).collect();
        softmax_in_place(&mut weights);
        let mut out = vec![0.0; tokens.cols()];
        for (row, w) in tokens.iter_rows().zip(&weights) {
            for (o, x) in out.iter_mut().zip(row) {
                *o += w * x;
            }
        }
        EmbeddingVector::new(out)
    }

    pub fn encode(&self, v: &Volume) -> Result<VisionEncoding> {
        let tokens = self.tokens(v)?;
        let cls = self.class_feature(&tokens)?;
        Ok(VisionEncoding { tokens, cls })
    }
}
