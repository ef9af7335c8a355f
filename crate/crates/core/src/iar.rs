//! Intra-frame adaptive relation.
//!
//! Per-object spatial self-attention whose value path is pooled over every
//! object in the frame. One 1x1 convolution yields a map used both as key
//! (`N x HW x C`) and query (`N x C x HW`), so the attention logits are the
//! per-object Gram matrix of spatial positions scaled by `1/sqrt(C)`. A second
//! convolution yields the value map `f_v`; its mean over objects, laid out as
//! `HW x C`, is what every object's attention aggregates. The aggregate is
//! added back onto the ROI features to form the relation features `f_r`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::params::{seeded_rng, Affine, AffineVars};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Stack of per-object ROI feature blocks for one frame, `N x C x H x W`.
#[derive(Clone, Debug, PartialEq)]
pub struct RoiFeatureBatch {
    features: Tensor,
}

impl RoiFeatureBatch {
    pub fn new(features: Tensor) -> Result<Self> {
        if features.rank() != 4 {
            return Err(Error::Shape {
                op: "RoiFeatureBatch",
                lhs: features.shape().to_vec(),
                rhs: alloc::vec![0, 0, 0, 0],
            });
        }
        Ok(RoiFeatureBatch { features })
    }

    /// Stacks `C x H x W` blocks, one per object.
    pub fn from_objects(objects: &[Tensor]) -> Result<Self> {
        let first = objects.first().ok_or(Error::EmptyFrame)?;
        let shape = first.shape();
        if shape.len() != 3 {
            return Err(Error::Shape {
                op: "RoiFeatureBatch",
                lhs: shape.to_vec(),
                rhs: alloc::vec![0, 0, 0],
            });
        }
        let mut data = Vec::with_capacity(objects.len() * first.len());
        for o in objects {
            if o.shape() != shape {
                return Err(Error::Shape {
                    op: "RoiFeatureBatch",
                    lhs: shape.to_vec(),
                    rhs: o.shape().to_vec(),
                });
            }
            data.extend_from_slice(o.data());
        }
        let features = Tensor::new(&[objects.len(), shape[0], shape[1], shape[2]], data)?;
        Ok(RoiFeatureBatch { features })
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn objects(&self) -> usize {
        self.features.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.features.shape()[1]
    }

    pub fn height(&self) -> usize {
        self.features.shape()[2]
    }

    pub fn width(&self) -> usize {
        self.features.shape()[3]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IarParams {
    /// Shared key/query projection, `C -> C`.
    pub kq_proj: Affine,
    /// Value projection, `C -> C`.
    pub v_proj: Affine,
}

#[derive(Clone, Copy, Debug)]
pub struct IarVars {
    pub kq_proj: AffineVars,
    pub v_proj: AffineVars,
}

impl IarParams {
    /// Uniform weights with bound `1/sqrt(C)`, zero biases.
    pub fn init(channels: usize, seed: u64) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Config("channel count must be positive".into()));
        }
        let mut rng = seeded_rng(seed);
        Ok(IarParams {
            kq_proj: Affine::init(channels, channels, &mut rng),
            v_proj: Affine::init(channels, channels, &mut rng),
        })
    }

    pub fn channels(&self) -> usize {
        self.kq_proj.out_dim()
    }

    pub fn register(&self, tape: &mut Tape) -> IarVars {
        IarVars {
            kq_proj: self.kq_proj.register(tape),
            v_proj: self.v_proj.register(tape),
        }
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v = Vec::from(self.kq_proj.tensors());
        v.extend(self.v_proj.tensors());
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = Vec::from(self.kq_proj.tensors_mut());
        v.extend(self.v_proj.tensors_mut());
        v
    }

    /// Evaluates the module outside of any training graph.
    pub fn forward(&self, roi: &RoiFeatureBatch) -> Result<(Tensor, Tensor)> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape);
        let x = tape.leaf(roi.features().clone());
        let out = iar_forward(&mut tape, x, &vars)?;
        Ok((
            tape.value(out.relation).clone(),
            tape.value(out.value).clone(),
        ))
    }
}

/// Tape handles of the two module outputs, both `N x C x H x W`.
#[derive(Clone, Copy, Debug)]
pub struct IarOutput {
    pub relation: Var,
    pub value: Var,
    /// Attention weights, `N x HW x HW`.
    pub attention: Var,
}

/// Records the module on `tape` for ROI features `roi` (`N x C x H x W`).
pub fn iar_forward(tape: &mut Tape, roi: Var, params: &IarVars) -> Result<IarOutput> {
    let shape = tape.shape(roi).to_vec();
    if shape.len() != 4 {
        return Err(Error::Shape {
            op: "iar_forward",
            lhs: shape,
            rhs: alloc::vec![0, 0, 0, 0],
        });
    }
    let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let hw = h * w;
    let wshape = tape.shape(params.kq_proj.weight).to_vec();
    if wshape != [c, c] || tape.shape(params.v_proj.weight) != [c, c] {
        return Err(Error::Shape {
            op: "iar_forward params",
            lhs: shape,
            rhs: wshape,
        });
    }

    let kq = tape.conv1x1(roi, params.kq_proj.weight, params.kq_proj.bias)?;
    let query = tape.reshape(kq, &[n, c, hw])?;
    let key = tape.transpose(query)?;
    let logits = tape.bmm(key, query)?;
    let attention = tape.scaled_softmax(logits, c)?;

    let value = tape.conv1x1(roi, params.v_proj.weight, params.v_proj.bias)?;
    let pooled = tape.mean_axis(value, 0)?;
    let pooled = tape.reshape(pooled, &[c, hw])?;
    let global = tape.transpose(pooled)?;

    let agg = tape.bmm(attention, global)?;
    let agg = tape.transpose(agg)?;
    let agg = tape.reshape(agg, &[n, c, h, w])?;
    let relation = tape.add(roi, agg)?;
    Ok(IarOutput {
        relation,
        value,
        attention,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_configuration_shapes() {
        let params = IarParams::init(256, 7).unwrap();
        assert_eq!(params.kq_proj.weight.shape(), &[256, 256]);
        assert_eq!(params.v_proj.weight.shape(), &[256, 256]);
        let roi = RoiFeatureBatch::new(Tensor::from_fn(&[3, 256, 7, 7], |i| {
            ((i * 37) % 101) as f64 / 101.0 - 0.5
        }))
        .unwrap();
        let (rel, val) = params.forward(&roi).unwrap();
        assert_eq!(rel.shape(), &[3, 256, 7, 7]);
        assert_eq!(val.shape(), &[3, 256, 7, 7]);
    }

    #[test]
    fn init_is_seeded() {
        let a = IarParams::init(4, 1).unwrap();
        assert_eq!(a, IarParams::init(4, 1).unwrap());
        assert_ne!(a, IarParams::init(4, 2).unwrap());
        let bound = 0.5;
        assert!(a.kq_proj.weight.data().iter().all(|w| w.abs() <= bound));
        assert!(a.kq_proj.bias.data().iter().all(|&b| b == 0.0));
        assert!(IarParams::init(0, 1).is_err());
    }

    #[test]
    fn zero_value_projection_is_identity() {
        let mut params = IarParams::init(3, 5).unwrap();
        params.v_proj.weight = Tensor::zeros(&[3, 3]);
        params.v_proj.bias = Tensor::zeros(&[3]);
        let feats = Tensor::from_fn(&[2, 3, 2, 2], |i| (i as f64).sin());
        let roi = RoiFeatureBatch::new(feats.clone()).unwrap();
        let (rel, _) = params.forward(&roi).unwrap();
        assert_eq!(rel.data(), feats.data());
    }

    #[test]
    fn empty_frame_and_channel_mismatch() {
        assert!(matches!(
            RoiFeatureBatch::from_objects(&[]),
            Err(Error::EmptyFrame)
        ));
        let params = IarParams::init(4, 1).unwrap();
        let roi = RoiFeatureBatch::new(Tensor::zeros(&[1, 3, 2, 2])).unwrap();
        assert!(matches!(params.forward(&roi), Err(Error::Shape { .. })));
    }
}
