//! Random tiny instances of the relation modules paired with the flat data the
//! reference implementations consume.

use rand::Rng;
use vsor_core::idr::{FrameObjects, IdrParams, RefinementParams};
use vsor_core::maps::Mask;
use vsor_core::params::Affine;

use super::{fixtures, oracle};

pub fn random_idr(
    rng: &mut impl Rng,
    c: usize,
    h: usize,
    w: usize,
) -> (IdrParams, RefinementParams) {
    let mut a = |o: usize, i: usize| {
        Affine::from_parts(
            fixtures::tensor(rng, &[o, i], 1.0),
            fixtures::tensor(rng, &[o], 0.5),
        )
    };
    (
        IdrParams {
            k_proj: a(c, c),
            q_proj: a(c, c),
            v_proj: a(c, c),
        },
        RefinementParams {
            mask_embed: a(c, h * w),
            score_head: a(1, 2 * c),
        },
    )
}

pub fn weights<'a>(idr: &'a IdrParams, refine: &'a RefinementParams) -> oracle::IdrWeights<'a> {
    let p = |a: &'a Affine| (a.weight.data(), a.bias.data());
    oracle::IdrWeights {
        k: p(&idr.k_proj),
        q: p(&idr.q_proj),
        v: p(&idr.v_proj),
        mask_embed: p(&refine.mask_embed),
        head: p(&refine.score_head),
    }
}

pub fn random_frames(
    rng: &mut impl Rng,
    t_len: usize,
    c: usize,
    h: usize,
    w: usize,
) -> (Vec<FrameObjects>, Vec<oracle::FrameRef>) {
    let (mh, mw) = (8, 12);
    let mut frames = Vec::new();
    let mut refs = Vec::new();
    for _ in 0..t_len {
        let n = rng.gen_range(1..=3);
        let relation = fixtures::tensor(rng, &[n, c, h, w], 1.0);
        let value = fixtures::tensor(rng, &[n, c, h, w], 1.0);
        let masks: Vec<Mask> = (0..n)
            .map(|_| {
                let (a, b, cc, d) = fixtures::random_rect(rng, mh, mw);
                Mask::rect(mh, mw, a, b, cc, d)
            })
            .collect();
        let mf: Vec<f64> = masks
            .iter()
            .flat_map(|m| oracle::downsample(m.pixels(), mh, mw, h, w))
            .collect();
        refs.push(oracle::FrameRef {
            n,
            relation: relation.data().to_vec(),
            value: value.data().to_vec(),
            mask_features: mf,
        });
        frames.push(FrameObjects {
            relation,
            value,
            initial_masks: masks,
        });
    }
    (frames, refs)
}
