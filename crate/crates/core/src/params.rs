//! Named parameter groups shared by both encoders.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::text::{TextEncoder, TextEncoderVariant};
use crate::vision::VisionEncoder;
use crate::{Error, Result};

pub const TEXT_EMBEDDING: &str = "text.embedding";
pub const TEXT_WEIGHT: &str = "text.weight";
pub const TEXT_BIAS: &str = "text.bias";
pub const VISION_WEIGHT: &str = "vision.weight";
pub const VISION_BIAS: &str = "vision.bias";
pub const VISION_CLS: &str = "vision.cls";

pub const GROUP_ORDER: [&str; 6] = [
    TEXT_EMBEDDING,
    TEXT_WEIGHT,
    TEXT_BIAS,
    VISION_WEIGHT,
    VISION_BIAS,
    VISION_CLS,
];

#[derive(Debug, Clone, PartialEq)]
pub struct ParamGroup {
    pub name: String,
    pub shape: Vec<usize>,
    pub frozen: bool,
    pub data: Vec<f64>,
}

impl ParamGroup {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, frozen: bool, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::DimensionMismatch {
                expected,
                found: data.len(),
            });
        }
        Ok(Self {
            name: name.into(),
            shape,
            frozen,
            data,
        })
    }
}

/// Flat, ordered collection of parameter groups; the on-disk form of a model.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EncoderParams {
    pub groups: Vec<ParamGroup>,
}

impl EncoderParams {
    pub fn get(&self, name: &str) -> Result<&ParamGroup> {
        self.groups
            .iter()
            .find(|g| g.name == name)
            .ok_or_else(|| Error::MissingId(name.to_string()))
    }
}

/// Both encoders of the dual-stream model. Text groups are always frozen.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub text: TextEncoder,
    pub vision: VisionEncoder,
}

/// One gradient buffer per group, in [`GROUP_ORDER`]. Frozen groups hold zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub groups: Vec<(String, Vec<f64>)>,
}

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.groups.iter().find(|(n, _)| n == name).map(|(_, g)| g.as_slice())
    }
}

impl ModelParams {
    pub fn new(text: TextEncoder, vision: VisionEncoder) -> Result<Self> {
        if text.dim != vision.dim {
            return Err(Error::DimensionMismatch {
                expected: text.dim,
                found: vision.dim,
            });
        }
        Ok(Self { text, vision })
    }

    pub fn to_encoder_params(&self) -> EncoderParams {
        let t = &self.text;
        let v = &self.vision;
        let p = v.patch;
        let frozen = t.frozen;
        let group = |name: &str, shape: Vec<usize>, frozen: bool, data: &Vec<f64>| ParamGroup {
            name: name.to_string(),
            shape,
            frozen,
            data: data.clone(),
        };
        EncoderParams {
            groups: vec![
                group(TEXT_EMBEDDING, vec![t.vocab_size, t.dim], frozen, &t.embedding),
                group(TEXT_WEIGHT, vec![t.dim, t.dim], frozen, &t.weight),
                group(TEXT_BIAS, vec![t.dim], frozen, &t.bias),
                group(VISION_WEIGHT, vec![v.dim, p, p, p], false, &v.weight),
                group(VISION_BIAS, vec![v.dim], false, &v.bias),
                group(VISION_CLS, vec![v.dim], false, &v.cls),
            ],
        }
    }

    pub fn from_encoder_params(params: &EncoderParams, variant: TextEncoderVariant) -> Result<Self> {
        let shape_err = |name: &str, shape: &[usize]| {
            Error::InvalidParameter(format!("parameter group {name} has unexpected shape {shape:?}"))
        };
        let emb = params.get(TEXT_EMBEDDING)?;
        let [vocab_size, dim] = emb.shape[..] else {
            return Err(shape_err(TEXT_EMBEDDING, &emb.shape));
        };
        let tw = params.get(TEXT_WEIGHT)?;
        if tw.shape != [dim, dim] {
            return Err(shape_err(TEXT_WEIGHT, &tw.shape));
        }
        let tb = params.get(TEXT_BIAS)?;
        if tb.shape != [dim] {
            return Err(shape_err(TEXT_BIAS, &tb.shape));
        }
        let vw = params.get(VISION_WEIGHT)?;
        let [vdim, p, p2, p3] = vw.shape[..] else {
            return Err(shape_err(VISION_WEIGHT, &vw.shape));
        };
        if p != p2 || p != p3 || p == 0 {
            return Err(shape_err(VISION_WEIGHT, &vw.shape));
        }
        let vb = params.get(VISION_BIAS)?;
        let vc = params.get(VISION_CLS)?;
        if vb.shape != [vdim] {
            return Err(shape_err(VISION_BIAS, &vb.shape));
        }
        if vc.shape != [vdim] {
            return Err(shape_err(VISION_CLS, &vc.shape));
        }
        let text = TextEncoder {
            vocab_size,
            dim,
            embedding: emb.data.clone(),
            weight: tw.data.clone(),
            bias: tb.data.clone(),
            variant,
            frozen: true,
        };
        let vision = VisionEncoder {
            patch: p,
            dim: vdim,
            weight: vw.data.clone(),
            bias: vb.data.clone(),
            cls: vc.data.clone(),
        };
        Self::new(text, vision)
    }

    /// Mutable views of every group with its frozen flag, in [`GROUP_ORDER`].
    pub fn groups_mut(&mut self) -> [(&'static str, bool, &mut Vec<f64>); 6] {
        let frozen = self.text.frozen;
        [
            (TEXT_EMBEDDING, frozen, &mut self.text.embedding),
            (TEXT_WEIGHT, frozen, &mut self.text.weight),
            (TEXT_BIAS, frozen, &mut self.text.bias),
            (VISION_WEIGHT, false, &mut self.vision.weight),
            (VISION_BIAS, false, &mut self.vision.bias),
            (VISION_CLS, false, &mut self.vision.cls),
        ]
    }

    /// Plain gradient step on unfrozen groups.
    pub fn sgd_step(&mut self, grads: &Gradients, learning_rate: f64) -> Result<()> {
        for (name, frozen, data) in self.groups_mut() {
            if frozen {
                continue;
            }
            let g = grads.get(name).ok_or_else(|| Error::MissingId(name.to_string()))?;
            if g.len() != data.len() {
                return Err(Error::DimensionMismatch {
                    expected: data.len(),
                    found: g.len(),
                });
            }
            for (p, d) in data.iter_mut().zip(g) {
                *p -= learning_rate * d;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> ModelParams {
        ModelParams::new(
            TextEncoder::init(10, 4, TextEncoderVariant::Domain, 1).unwrap(),
            VisionEncoder::init(2, 4, 2).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn encoder_params_round_trip() {
        let m = model();
        let p = m.to_encoder_params();
        assert_eq!(p.groups.len(), 6);
        assert!(p.get(TEXT_WEIGHT).unwrap().frozen);
        assert!(!p.get(VISION_CLS).unwrap().frozen);
        assert_eq!(ModelParams::from_encoder_params(&p, TextEncoderVariant::Domain).unwrap(), m);
    }

    #[test]
    fn mismatched_dims_are_rejected() {
        let t = TextEncoder::init(10, 4, TextEncoderVariant::Domain, 1).unwrap();
        let v = VisionEncoder::init(2, 5, 2).unwrap();
        assert_eq!(
            ModelParams::new(t, v),
            Err(Error::DimensionMismatch { expected: 4, found: 5 })
        );
    }

    #[test]
    fn sgd_skips_frozen_groups() {
        let mut m = model();
        let before = m.clone();
        let grads = Gradients {
            groups: GROUP_ORDER
                .iter()
                .zip(before.clone().groups_mut())
                .map(|(n, (_, _, d))| (n.to_string(), vec![1.0; d.len()]))
                .collect(),
        };
        m.sgd_step(&grads, 0.5).unwrap();
        assert_eq!(m.text, before.text);
        assert_eq!(m.vision.bias, before.vision.bias.iter().map(|b| b - 0.5).collect::<Vec<_>>());
    }
}
