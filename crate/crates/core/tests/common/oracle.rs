//! Straight-line reference computations, written independently of the tape
//! engine: explicit loops over flat row-major buffers, nothing shared with the
//! library beyond plain data.
#![allow(dead_code, clippy::needless_range_loop, clippy::too_many_arguments)]

pub fn softmax_row(row: &[f64], scale_dim: usize) -> Vec<f64> {
    let s = (scale_dim as f64).sqrt();
    let m = row.iter().cloned().fold(f64::MIN, f64::max);
    let e: Vec<f64> = row.iter().map(|v| ((v - m) / s).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

/// `out[n][o][p] = sum_c w[o][c] x[n][c][p] + b[o]`
pub fn conv(x: &[f64], n: usize, c: usize, hw: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
    let co = b.len();
    let mut out = vec![0.0; n * co * hw];
    for i in 0..n {
        for o in 0..co {
            for p in 0..hw {
                let mut acc = b[o];
                for k in 0..c {
                    acc += w[o * c + k] * x[(i * c + k) * hw + p];
                }
                out[(i * co + o) * hw + p] = acc;
            }
        }
    }
    out
}

pub struct IarRef {
    pub relation: Vec<f64>,
    pub value: Vec<f64>,
    pub attention: Vec<f64>,
}

pub fn iar(
    x: &[f64],
    n: usize,
    c: usize,
    hw: usize,
    kq_w: &[f64],
    kq_b: &[f64],
    v_w: &[f64],
    v_b: &[f64],
) -> IarRef {
    let kq = conv(x, n, c, hw, kq_w, kq_b);
    let mut attention = vec![0.0; n * hw * hw];
    for i in 0..n {
        for p in 0..hw {
            let mut row = vec![0.0; hw];
            for q in 0..hw {
                for k in 0..c {
                    row[q] += kq[(i * c + k) * hw + p] * kq[(i * c + k) * hw + q];
                }
            }
            let sm = softmax_row(&row, c);
            attention[(i * hw + p) * hw..(i * hw + p + 1) * hw].copy_from_slice(&sm);
        }
    }
    let value = conv(x, n, c, hw, v_w, v_b);
    // g[q][k] = mean over objects of value[i][k][q]
    let mut g = vec![0.0; hw * c];
    for q in 0..hw {
        for k in 0..c {
            let mut s = 0.0;
            for i in 0..n {
                s += value[(i * c + k) * hw + q];
            }
            g[q * c + k] = s / n as f64;
        }
    }
    let mut relation = x.to_vec();
    for i in 0..n {
        for p in 0..hw {
            for k in 0..c {
                let mut s = 0.0;
                for q in 0..hw {
                    s += attention[(i * hw + p) * hw + q] * g[q * c + k];
                }
                relation[(i * c + k) * hw + p] += s;
            }
        }
    }
    IarRef {
        relation,
        value,
        attention,
    }
}

/// Bilinear resample with half-pixel centres.
pub fn downsample(mask: &[bool], mh: usize, mw: usize, oh: usize, ow: usize) -> Vec<f64> {
    let px = |y: usize, x: usize| if mask[y * mw + x] { 1.0 } else { 0.0 };
    let mut out = Vec::new();
    for i in 0..oh {
        let fy = (((i as f64) + 0.5) * mh as f64 / oh as f64 - 0.5)
            .max(0.0)
            .min((mh - 1) as f64);
        for j in 0..ow {
            let fx = (((j as f64) + 0.5) * mw as f64 / ow as f64 - 0.5)
                .max(0.0)
                .min((mw - 1) as f64);
            let (y0, x0) = (fy.floor() as usize, fx.floor() as usize);
            let (y1, x1) = ((y0 + 1).min(mh - 1), (x0 + 1).min(mw - 1));
            let (dy, dx) = (fy - y0 as f64, fx - x0 as f64);
            out.push(
                px(y0, x0) * (1.0 - dy) * (1.0 - dx)
                    + px(y0, x1) * (1.0 - dy) * dx
                    + px(y1, x0) * dy * (1.0 - dx)
                    + px(y1, x1) * dy * dx,
            );
        }
    }
    out
}

pub struct IdrWeights<'a> {
    pub k: (&'a [f64], &'a [f64]),
    pub q: (&'a [f64], &'a [f64]),
    pub v: (&'a [f64], &'a [f64]),
    pub mask_embed: (&'a [f64], &'a [f64]),
    pub head: (&'a [f64], &'a [f64]),
}

pub struct FrameRef {
    pub n: usize,
    pub relation: Vec<f64>,
    pub value: Vec<f64>,
    /// `n x hw` downsampled masks
    pub mask_features: Vec<f64>,
}

pub struct IdrRef {
    pub attention: Vec<f64>,
    pub context: Vec<f64>,
    pub scores: Vec<Vec<f64>>,
}

/// `temporal = false` skips the projections and attention (context = stacked
/// per-frame means).
pub fn idr(frames: &[FrameRef], c: usize, hw: usize, w: &IdrWeights, temporal: bool) -> IdrRef {
    let t_len = frames.len();
    let chw = c * hw;
    let mut stacked = vec![0.0; t_len * chw];
    for (t, f) in frames.iter().enumerate() {
        for e in 0..chw {
            let mut s = 0.0;
            for i in 0..f.n {
                s += f.value[i * chw + e];
            }
            stacked[t * chw + e] = s / f.n as f64;
        }
    }
    let (attention, context) = if temporal {
        let k = conv(&stacked, t_len, c, hw, w.k.0, w.k.1);
        let q = conv(&stacked, t_len, c, hw, w.q.0, w.q.1);
        let v = conv(&stacked, t_len, c, hw, w.v.0, w.v.1);
        let mut att = vec![0.0; t_len * t_len];
        for a in 0..t_len {
            let mut row = vec![0.0; t_len];
            for b in 0..t_len {
                for e in 0..chw {
                    row[b] += k[a * chw + e] * q[b * chw + e];
                }
            }
            att[a * t_len..(a + 1) * t_len].copy_from_slice(&softmax_row(&row, chw));
        }
        let mut ctx = vec![0.0; t_len * chw];
        for a in 0..t_len {
            for e in 0..chw {
                for b in 0..t_len {
                    ctx[a * chw + e] += att[a * t_len + b] * v[b * chw + e];
                }
            }
        }
        (att, ctx)
    } else {
        (Vec::new(), stacked)
    };

    let mut scores = Vec::new();
    for (t, f) in frames.iter().enumerate() {
        let ctx = &context[t * chw..(t + 1) * chw];
        let mut frame_scores = Vec::new();
        for i in 0..f.n {
            let rel = &f.relation[i * chw..(i + 1) * chw];
            let mut pooled = vec![0.0; c];
            for a in 0..c {
                let mut row = 0.0;
                for b in 0..c {
                    for p in 0..hw {
                        row += rel[a * hw + p] * ctx[b * hw + p];
                    }
                }
                pooled[a] = row / c as f64;
            }
            let mf = &f.mask_features[i * hw..(i + 1) * hw];
            let mut embed = vec![0.0; c];
            for o in 0..c {
                embed[o] = w.mask_embed.1[o];
                for p in 0..hw {
                    embed[o] += w.mask_embed.0[o * hw + p] * mf[p];
                }
            }
            let mut s = w.head.1[0];
            for a in 0..c {
                s += w.head.0[a] * pooled[a] + w.head.0[c + a] * embed[a];
            }
            frame_scores.push(s);
        }
        scores.push(frame_scores);
    }
    IdrRef {
        attention,
        context,
        scores,
    }
}

/// Mean absolute difference by an explicit double loop.
pub fn mae(p: &[f64], g: &[f64], h: usize, w: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..h {
        for j in 0..w {
            total += (p[i * w + j] - g[i * w + j]).abs();
        }
    }
    total / (w * h) as f64
}

/// Single-pass sums formula.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    let vx = n * sxx - sx * sx;
    let vy = n * syy - sy * sy;
    if vx.abs() < 1e-12 || vy.abs() < 1e-12 {
        return None;
    }
    Some((n * sxy - sx * sy) / (vx * vy).sqrt())
}

pub fn iou(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Exhaustive one-to-one assignment over pairs with IoU >= threshold that
/// maximizes the number of matches, then the summed IoU. Returns sorted
/// `(gt, pred)` pairs.
pub fn optimal_matching(gt: &[Vec<bool>], pred: &[Vec<bool>], thr: f64) -> Vec<(usize, usize)> {
    fn search(
        i: usize,
        ious: &[Vec<f64>],
        thr: f64,
        used: &mut Vec<bool>,
        cur: &mut Vec<(usize, usize)>,
        cur_iou: f64,
        best: &mut (usize, f64, Vec<(usize, usize)>),
    ) {
        if i == ious.len() {
            let better = cur.len() > best.0 || (cur.len() == best.0 && cur_iou > best.1 + 1e-12);
            if better {
                *best = (cur.len(), cur_iou, cur.clone());
            }
            return;
        }
        search(i + 1, ious, thr, used, cur, cur_iou, best);
        for j in 0..used.len() {
            if !used[j] && ious[i][j] >= thr {
                used[j] = true;
                cur.push((i, j));
                search(i + 1, ious, thr, used, cur, cur_iou + ious[i][j], best);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let ious: Vec<Vec<f64>> = gt
        .iter()
        .map(|g| pred.iter().map(|p| iou(g, p)).collect())
        .collect();
    let mut best = (0, 0.0, Vec::new());
    search(
        0,
        &ious,
        thr,
        &mut vec![false; pred.len()],
        &mut Vec::new(),
        0.0,
        &mut best,
    );
    let mut pairs = best.2;
    pairs.sort_unstable();
    pairs
}

/// SA-SOR from masks and ranks via the exhaustive matching and the sums
/// formula Pearson. Returns `(pairs, value)`.
pub fn sa_sor(
    gt: &[(Vec<bool>, usize)],
    pred: &[(Vec<bool>, usize)],
    thr: f64,
) -> (Vec<(usize, usize)>, Option<f64>) {
    let gm: Vec<Vec<bool>> = gt.iter().map(|g| g.0.clone()).collect();
    let pm: Vec<Vec<bool>> = pred.iter().map(|p| p.0.clone()).collect();
    let pairs = optimal_matching(&gm, &pm, thr);
    let x: Vec<f64> = gt.iter().map(|g| (gt.len() - g.1 + 1) as f64).collect();
    let mut y = vec![0.0; gt.len()];
    for &(i, j) in &pairs {
        y[i] = (pred.len() - pred[j].1 + 1) as f64;
    }
    (pairs, if x.len() < 2 { None } else { pearson(&x, &y) })
}
