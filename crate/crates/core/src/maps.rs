//! Binary masks and normalized rank maps.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Binary image, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    pixels: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, pixels: Vec<bool>) -> Result<Self> {
        if pixels.len() != height * width {
            return Err(Error::Layout {
                shape: vec![height, width],
                len: pixels.len(),
            });
        }
        Ok(Mask {
            height,
            width,
            pixels,
        })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Mask {
            height,
            width,
            pixels: vec![false; height * width],
        }
    }

    /// Axis-aligned filled rectangle covering rows `top..bottom` and columns
    /// `left..right`, clipped to the image.
    pub fn rect(
        height: usize,
        width: usize,
        top: usize,
        left: usize,
        bottom: usize,
        right: usize,
    ) -> Self {
        let mut m = Mask::empty(height, width);
        for y in top.min(height)..bottom.min(height) {
            for x in left.min(width)..right.min(width) {
                m.pixels[y * width + x] = true;
            }
        }
        m
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixels(&self) -> &[bool] {
        &self.pixels
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.pixels[y * self.width + x] = v;
    }

    pub fn area(&self) -> usize {
        self.pixels.iter().filter(|&&p| p).count()
    }

    /// Intersection over union; two empty masks have IoU 0.
    pub fn iou(&self, other: &Mask) -> Result<f64> {
        if self.dims() != other.dims() {
            return Err(Error::Dimension {
                expected: self.dims(),
                found: other.dims(),
            });
        }
        let (mut inter, mut union) = (0usize, 0usize);
        for (&a, &b) in self.pixels.iter().zip(&other.pixels) {
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        Ok(if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        })
    }

    /// Bilinear resampling of the 0/1 mask to `out_h x out_w` with
    /// half-pixel centres; returns row-major coverage values in `[0,1]`.
    pub fn downsample(&self, out_h: usize, out_w: usize) -> Vec<f64> {
        let sy = self.height as f64 / out_h as f64;
        let sx = self.width as f64 / out_w as f64;
        let val = |y: usize, x: usize| if self.get(y, x) { 1.0 } else { 0.0 };
        let mut out = Vec::with_capacity(out_h * out_w);
        for i in 0..out_h {
            let fy = ((i as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let y0 = fy as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let wy = fy - y0 as f64;
            for j in 0..out_w {
                let fx = ((j as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
                let x0 = fx as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let wx = fx - x0 as f64;
                let top = val(y0, x0) * (1.0 - wx) + val(y0, x1) * wx;
                let bot = val(y1, x0) * (1.0 - wx) + val(y1, x1) * wx;
                out.push(top * (1.0 - wy) + bot * wy);
            }
        }
        out
    }
}

/// Per-pixel normalized saliency rank in `[0,1]`, 0 = background.
#[derive(Clone, Debug, PartialEq)]
pub struct RankMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl RankMap {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width || height == 0 || width == 0 {
            return Err(Error::Layout {
                shape: vec![height, width],
                len: values.len(),
            });
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Config("rank map values must lie in [0,1]".into()));
        }
        Ok(RankMap {
            height,
            width,
            values,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        RankMap {
            height,
            width,
            values: vec![0.0; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

/// Normalized level of rank `r` among `n` objects: `(n - r + 1) / n`.
pub fn rank_level(rank: usize, n: usize) -> f64 {
    (n + 1 - rank) as f64 / n as f64
}

/// Paints masks in ascending saliency so that lower ranks (more salient)
/// end up on top where masks overlap.
pub fn render_rank_map(
    masks: &[Mask],
    ranks: &[usize],
    out_shape: (usize, usize),
) -> Result<RankMap> {
    if masks.len() != ranks.len() {
        return Err(Error::InvalidRanks(alloc::format!(
            "{} masks but {} ranks",
            masks.len(),
            ranks.len()
        )));
    }
    crate::ranking::validate_permutation(ranks)?;
    let (h, w) = out_shape;
    for m in masks {
        if m.dims() != out_shape {
            return Err(Error::Dimension {
                expected: out_shape,
                found: m.dims(),
            });
        }
    }
    let n = masks.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| ranks[b].cmp(&ranks[a]));
    let mut values = vec![0.0; h * w];
    for i in order {
        let level = rank_level(ranks[i], n);
        for (v, &p) in values.iter_mut().zip(masks[i].pixels()) {
            if p {
                *v = level;
            }
        }
    }
    Ok(RankMap {
        height: h,
        width: w,
        values,
    })
}
