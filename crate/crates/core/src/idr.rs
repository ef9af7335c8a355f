//! Inter-frame dynamic relation and the refinement head.
//!
//! The per-frame value features are averaged over objects and stacked into a
//! `T x C x H x W` sequence tensor. Three 1x1 convolutions give temporal key,
//! query and value; the `T x T` attention mixes the value maps across frames.
//! Each frame's mixed map is then fused with that frame's relation features by
//! a `(C x HW) . (HW x C)` product per object, pooled to a `C` vector, joined
//! with an embedding of the object's initial mask and scored by a linear head.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::maps::{render_rank_map, Mask, RankMap};
use crate::params::{seeded_rng, Affine, AffineVars};
use crate::ranking::rank_assign;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct IdrParams {
    pub k_proj: Affine,
    pub q_proj: Affine,
    pub v_proj: Affine,
}

#[derive(Clone, Copy, Debug)]
pub struct IdrVars {
    pub k_proj: AffineVars,
    pub q_proj: AffineVars,
    pub v_proj: AffineVars,
}

impl IdrParams {
    pub fn init(channels: usize, seed: u64) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Config("channel count must be positive".into()));
        }
        let mut rng = seeded_rng(seed);
        Ok(IdrParams {
            k_proj: Affine::init(channels, channels, &mut rng),
            q_proj: Affine::init(channels, channels, &mut rng),
            v_proj: Affine::init(channels, channels, &mut rng),
        })
    }

    pub fn register(&self, tape: &mut Tape) -> IdrVars {
        IdrVars {
            k_proj: self.k_proj.register(tape),
            q_proj: self.q_proj.register(tape),
            v_proj: self.v_proj.register(tape),
        }
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        [&self.k_proj, &self.q_proj, &self.v_proj]
            .into_iter()
            .flat_map(|a| a.tensors())
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        [&mut self.k_proj, &mut self.q_proj, &mut self.v_proj]
            .into_iter()
            .flat_map(|a| a.tensors_mut())
            .collect()
    }
}

/// Mask embedding (`HW -> C`) and score head (`2C -> 1`).
#[derive(Clone, Debug, PartialEq)]
pub struct RefinementParams {
    pub mask_embed: Affine,
    pub score_head: Affine,
}

#[derive(Clone, Copy, Debug)]
pub struct RefinementVars {
    pub mask_embed: AffineVars,
    pub score_head: AffineVars,
}

impl RefinementParams {
    pub fn init(channels: usize, height: usize, width: usize, seed: u64) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::Config("extents must be positive".into()));
        }
        let mut rng = seeded_rng(seed);
        Ok(RefinementParams {
            mask_embed: Affine::init(channels, height * width, &mut rng),
            score_head: Affine::init(1, 2 * channels, &mut rng),
        })
    }

    pub fn register(&self, tape: &mut Tape) -> RefinementVars {
        RefinementVars {
            mask_embed: self.mask_embed.register(tape),
            score_head: self.score_head.register(tape),
        }
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v = Vec::from(self.mask_embed.tensors());
        v.extend(self.score_head.tensors());
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = Vec::from(self.mask_embed.tensors_mut());
        v.extend(self.score_head.tensors_mut());
        v
    }
}

/// What the temporal module sees of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameObjects {
    /// `N_t x C x H x W`
    pub relation: Tensor,
    /// `N_t x C x H x W`
    pub value: Tensor,
    /// One rank-agnostic mask per object, all at the frame resolution.
    pub initial_masks: Vec<Mask>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankedFrame {
    pub scores: Vec<f64>,
    pub ranks: Vec<usize>,
    pub rank_map: RankMap,
}

/// Tape handles for one frame.
#[derive(Clone, Copy, Debug)]
pub struct FrameVars {
    pub relation: Var,
    pub value: Var,
    /// Downsampled initial masks, `N_t x HW`.
    pub mask_features: Var,
}

/// Result of [`idr_scores`].
#[derive(Clone, Debug)]
pub struct IdrTrace {
    /// One `N_t` score vector per frame.
    pub scores: Vec<Var>,
    /// `T x C x H x W` per-frame context after temporal mixing.
    pub context: Var,
    /// `T x T` attention, absent when temporal mixing is disabled.
    pub attention: Option<Var>,
}

/// Bilinear downsample of each mask to `H x W`, one row per object.
pub fn mask_features(masks: &[Mask], height: usize, width: usize) -> Result<Tensor> {
    if masks.is_empty() {
        return Err(Error::EmptyFrame);
    }
    let mut data = Vec::with_capacity(masks.len() * height * width);
    for m in masks {
        data.extend(m.downsample(height, width));
    }
    Tensor::new(&[masks.len(), height * width], data)
}

fn frame_dims(tape: &Tape, v: Var) -> Result<[usize; 4]> {
    match *tape.shape(v) {
        [n, c, h, w] => Ok([n, c, h, w]),
        ref other => Err(Error::Shape {
            op: "idr frame",
            lhs: other.to_vec(),
            rhs: alloc::vec![0, 0, 0, 0],
        }),
    }
}

/// Stacks the per-frame object-mean of `values` and, when `temporal` is
/// given, mixes the stack across frames with scaled dot-product attention
/// over flattened `C*H*W` maps.
pub fn temporal_context(
    tape: &mut Tape,
    values: &[Var],
    temporal: Option<&IdrVars>,
) -> Result<(Var, Option<Var>)> {
    let first = *values.first().ok_or(Error::EmptyFrame)?;
    let [_, c, h, w] = frame_dims(tape, first)?;
    let mut means = Vec::with_capacity(values.len());
    for &v in values {
        let [_, vc, vh, vw] = frame_dims(tape, v)?;
        if (vc, vh, vw) != (c, h, w) {
            return Err(Error::Shape {
                op: "idr frames",
                lhs: alloc::vec![c, h, w],
                rhs: alloc::vec![vc, vh, vw],
            });
        }
        means.push(tape.mean_axis(v, 0)?);
    }
    let stacked = tape.stack(&means)?;
    let Some(p) = temporal else {
        return Ok((stacked, None));
    };
    let t = values.len();
    let chw = c * h * w;
    let key = tape.conv1x1(stacked, p.k_proj.weight, p.k_proj.bias)?;
    let query = tape.conv1x1(stacked, p.q_proj.weight, p.q_proj.bias)?;
    let value = tape.conv1x1(stacked, p.v_proj.weight, p.v_proj.bias)?;
    let key = tape.reshape(key, &[t, chw])?;
    let query = tape.reshape(query, &[t, chw])?;
    let query = tape.transpose(query)?;
    let logits = tape.matmul(key, query)?;
    let attention = tape.scaled_softmax(logits, chw)?;
    let value = tape.reshape(value, &[t, chw])?;
    let mixed = tape.matmul(attention, value)?;
    let mixed = tape.reshape(mixed, &[t, c, h, w])?;
    Ok((mixed, Some(attention)))
}

/// Scores every object of one frame against that frame's context map
/// (`C x H x W`). Returns an `N` vector.
pub fn frame_scores(
    tape: &mut Tape,
    relation: Var,
    context: Var,
    mask_features: Var,
    refine: &RefinementVars,
) -> Result<Var> {
    let [n, c, h, w] = frame_dims(tape, relation)?;
    let hw = h * w;
    if tape.shape(mask_features) != [n, hw] {
        return Err(Error::Shape {
            op: "idr masks",
            lhs: alloc::vec![n, hw],
            rhs: tape.shape(mask_features).to_vec(),
        });
    }
    let rel = tape.reshape(relation, &[n, c, hw])?;
    let ctx = tape.reshape(context, &[c, hw])?;
    let ctx = tape.transpose(ctx)?;
    let fused = tape.bmm(rel, ctx)?;
    let pooled = tape.mean_axis(fused, 2)?;
    let embedded = tape.linear(
        mask_features,
        refine.mask_embed.weight,
        refine.mask_embed.bias,
    )?;
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let p = tape.select(pooled, i)?;
        let m = tape.select(embedded, i)?;
        rows.push(tape.concat(&[p, m])?);
    }
    let joined = tape.stack(&rows)?;
    let scores = tape.linear(joined, refine.score_head.weight, refine.score_head.bias)?;
    tape.reshape(scores, &[n])
}

/// Records the temporal module and refinement head for a whole clip.
pub fn idr_scores(
    tape: &mut Tape,
    frames: &[FrameVars],
    temporal: Option<&IdrVars>,
    refine: &RefinementVars,
) -> Result<IdrTrace> {
    if frames.is_empty() {
        return Err(Error::Config(
            "sequence must contain at least one frame".into(),
        ));
    }
    let values: Vec<Var> = frames.iter().map(|f| f.value).collect();
    let (context, attention) = temporal_context(tape, &values, temporal)?;
    let [_, c, h, w] = frame_dims(tape, frames[0].value)?;
    let mut scores = Vec::with_capacity(frames.len());
    for (t, f) in frames.iter().enumerate() {
        let [_, rc, rh, rw] = frame_dims(tape, f.relation)?;
        if (rc, rh, rw) != (c, h, w) || tape.shape(f.relation)[0] != tape.shape(f.value)[0] {
            return Err(Error::Shape {
                op: "idr relation",
                lhs: tape.shape(f.value).to_vec(),
                rhs: tape.shape(f.relation).to_vec(),
            });
        }
        let ctx = tape.select(context, t)?;
        scores.push(frame_scores(
            tape,
            f.relation,
            ctx,
            f.mask_features,
            refine,
        )?);
    }
    Ok(IdrTrace {
        scores,
        context,
        attention,
    })
}

/// Ranks objects by score and renders the rank map from their masks.
pub fn rank_frame(scores: Vec<f64>, masks: &[Mask]) -> Result<RankedFrame> {
    let ranks = rank_assign(&scores)?;
    let dims = masks.first().ok_or(Error::EmptyFrame)?.dims();
    let rank_map = render_rank_map(masks, &ranks, dims)?;
    Ok(RankedFrame {
        scores,
        ranks,
        rank_map,
    })
}

/// Runs the temporal module and refinement head on a clip and ranks every
/// frame.
pub fn idr_forward(
    frames: &[FrameObjects],
    idr: &IdrParams,
    refine: &RefinementParams,
) -> Result<Vec<RankedFrame>> {
    let mut tape = Tape::new();
    let idr_vars = idr.register(&mut tape);
    let refine_vars = refine.register(&mut tape);
    let mut vars = Vec::with_capacity(frames.len());
    for f in frames {
        if f.relation.shape().len() != 4 {
            return Err(Error::Shape {
                op: "idr frame",
                lhs: f.relation.shape().to_vec(),
                rhs: alloc::vec![0, 0, 0, 0],
            });
        }
        let (h, w) = (f.relation.shape()[2], f.relation.shape()[3]);
        if f.initial_masks.len() != f.relation.shape()[0] {
            return Err(Error::Shape {
                op: "idr masks",
                lhs: f.relation.shape().to_vec(),
                rhs: alloc::vec![f.initial_masks.len()],
            });
        }
        let masks = mask_features(&f.initial_masks, h, w)?;
        vars.push(FrameVars {
            relation: tape.leaf(f.relation.clone()),
            value: tape.leaf(f.value.clone()),
            mask_features: tape.leaf(masks),
        });
    }
    let trace = idr_scores(&mut tape, &vars, Some(&idr_vars), &refine_vars)?;
    frames
        .iter()
        .zip(&trace.scores)
        .map(|(f, &s)| rank_frame(tape.value(s).data().to_vec(), &f.initial_masks))
        .collect()
}
