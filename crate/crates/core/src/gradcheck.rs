//! Central finite-difference verification of tape gradients.

use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::iar::{iar_forward, IarParams, IarVars};
use crate::idr::{idr_scores, FrameVars, IdrParams, IdrVars, RefinementParams, RefinementVars};
use crate::params::{seeded_rng, Affine, AffineVars};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Relative discrepancy used throughout: `|a - n| / max(1e-12, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-12)
}

fn eval<F>(f: &F, x: &Tensor, fault: Option<f64>) -> Result<(Tape, Var, Var)>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = match fault {
        Some(factor) => Tape::with_backward_fault(factor),
        None => Tape::new(),
    };
    let input = tape.leaf(x.clone());
    let out = f(&mut tape, input)?;
    if tape.value(out).len() != 1 {
        return Err(Error::NotScalar {
            len: tape.value(out).len(),
        });
    }
    Ok((tape, input, out))
}

/// Compares the tape gradient of the scalar function `f` at `x` against
/// central differences with step `eps` and returns the largest relative error
/// over all elements of `x`.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    grad_check_with(f, x, eps, None)
}

/// Central difference formula used for the numeric gradient.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stencil {
    /// `(f(x+h) - f(x-h)) / 2h`
    ThreePoint,
    /// `(8(f(x+h) - f(x-h)) - (f(x+2h) - f(x-2h))) / 12h`, fourth order.
    FivePoint,
}

/// As [`grad_check`], optionally running the analytic pass on a tape with an
/// injected backward fault.
pub fn grad_check_with<F>(f: F, x: &Tensor, eps: f64, fault: Option<f64>) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    grad_check_stencil(f, x, eps, fault, Stencil::ThreePoint)
}

pub fn grad_check_stencil<F>(
    f: F,
    x: &Tensor,
    eps: f64,
    fault: Option<f64>,
    stencil: Stencil,
) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let (mut tape, input, out) = eval(&f, x, fault)?;
    if !tape.value(out).is_finite() {
        return Err(Error::NonFinite("grad_check forward"));
    }
    tape.backward(out)?;
    let analytic: Vec<f64> = match tape.grad(input) {
        Some(g) => g.to_vec(),
        None => alloc::vec![0.0; x.len()],
    };

    let mut worst: f64 = 0.0;
    let mut probe = x.clone();
    let at = |probe: &mut Tensor, i: usize, v: f64| -> Result<f64> {
        probe.data_mut()[i] = v;
        let (t, _, o) = eval(&f, probe, None)?;
        t.value(o).item()
    };
    for (i, &a) in analytic.iter().enumerate() {
        let orig = x.data()[i];
        let numeric = match stencil {
            Stencil::ThreePoint => {
                (at(&mut probe, i, orig + eps)? - at(&mut probe, i, orig - eps)?) / (2.0 * eps)
            }
            Stencil::FivePoint => {
                let d1 = at(&mut probe, i, orig + eps)? - at(&mut probe, i, orig - eps)?;
                let d2 =
                    at(&mut probe, i, orig + 2.0 * eps)? - at(&mut probe, i, orig - 2.0 * eps)?;
                (8.0 * d1 - d2) / (12.0 * eps)
            }
        };
        probe.data_mut()[i] = orig;
        if !numeric.is_finite() || !a.is_finite() {
            return Err(Error::NonFinite("grad_check difference"));
        }
        worst = worst.max(relative_error(a, numeric));
    }
    Ok(worst)
}

/// Outcome of one named check over several seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub seeds: usize,
    pub max_rel_error: f64,
}

impl CheckResult {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

pub const SUITE_TOLERANCE: f64 = 1e-5;
/// Step for the suite's five-point stencil. Some IDR gradient entries are
/// near 1e-7, where a three-point stencil at any step is limited by either
/// rounding or truncation.
pub const SUITE_EPS: f64 = 1e-3;

fn suite_check<F>(f: F, x: &Tensor, fault: Option<f64>) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    grad_check_stencil(f, x, SUITE_EPS, fault, Stencil::FivePoint)
}

fn rand_tensor(rng: &mut impl Rng, shape: &[usize], scale: f64) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-scale..scale))
}

fn cotangent(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

type Check = fn(&mut ChaCha8Rng, Option<f64>) -> Result<f64>;

/// Projects `out` onto a fixed random cotangent so every Jacobian column is
/// exercised.
fn project(tape: &mut Tape, out: Var, w: &[f64]) -> Result<Var> {
    tape.weighted_sum(out, w)
}

fn check_matmul(rng: &mut ChaCha8Rng, fault: Option<f64>) -> Result<f64> {
    let (m, k, p) = (
        rng.gen_range(1..=3),
        rng.gen_range(1..=4),
        rng.gen_range(1..=4),
    );
    let a = rand_tensor(rng, &[m, k], 1.0);
    let b = rand_tensor(rng, &[k, p], 1.0);
    let w = cotangent(rng, m * p);
    let e1 = suite_check(
        |t, x| {
            let b = t.leaf(b.clone());
            let o = t.matmul(x, b)?;
            project(t, o, &w)
        },
        &a,
        fault,
    )?;
    let e2 = suite_check(
        |t, x| {
            let a = t.leaf(a.clone());
            let o = t.matmul(a, x)?;
            project(t, o, &w)
        },
        &b,
        fault,
    )?;
    Ok(e1.max(e2))
}

fn check_bmm(rng: &mut ChaCha8Rng, fault: Option<f64>) -> Result<f64> {
    let (n, m, k, p) = (
        rng.gen_range(1..=3),
        rng.gen_range(1..=4),
        rng.gen_range(1..=4),
        rng.gen_range(1..=4),
    );
    let shared = rng.gen_bool(0.5);
    let a = rand_tensor(rng, &[n, m, k], 1.0);
    let b = if shared {
        rand_tensor(rng, &[k, p], 1.0)
    } else {
        rand_tensor(rng, &[n, k, p], 1.0)
    };
    let w = cotangent(rng, n * m * p);
    let e1 = suite_check(
        |t, x| {
            let b = t.leaf(b.clone());
            let o = t.bmm(x, b)?;
            project(t, o, &w)
        },
        &a,
        fault,
    )?;
    let e2 = suite_check(
        |t, x| {
            let a = t.leaf(a.clone());
            let o = t.bmm(a, x)?;
            project(t, o, &w)
        },
        &b,
        fault,
    )?;
    Ok(e1.max(e2))
}

fn check_conv1x1(rng: &mut ChaCha8Rng, fault: Option<f64>) -> Result<f64> {
    let (n, c, co) = (
        rng.gen_range(1..=3),
        rng.gen_range(1..=4),
        rng.gen_range(1..=4),
    );
    let x = rand_tensor(rng, &[n, c, 2, 2], 1.0);
    let wt = rand_tensor(rng, &[co, c], 1.0);
    let b = rand_tensor(rng, &[co], 1.0);
    let w = cotangent(rng, n * co * 4);
    let ex = suite_check(
        |t, v| {
            let (wv, bv) = (t.leaf(wt.clone()), t.leaf(b.clone()));
            let o = t.conv1x1(v, wv, bv)?;
            project(t, o, &w)
        },
        &x,
        fault,
    )?;
    let ew = suite_check(
        |t, v| {
            let (xv, bv) = (t.leaf(x.clone()), t.leaf(b.clone()));
            let o = t.conv1x1(xv, v, bv)?;
            project(t, o, &w)
        },
        &wt,
        fault,
    )?;
    let eb = suite_check(
        |t, v| {
            let (xv, wv) = (t.leaf(x.clone()), t.leaf(wt.clone()));
            let o = t.conv1x1(xv, wv, v)?;
            project(t, o, &w)
        },
        &b,
        fault,
    )?;
    Ok(ex.max(ew).max(eb))
}

fn check_softmax(rng: &mut ChaCha8Rng, fault: Option<f64>) -> Result<f64> {
    let (rows, len) = (rng.gen_range(1..=3), rng.gen_range(1..=5));
    let scale = rng.gen_range(1..=8);
    let x = rand_tensor(rng, &[rows, len], 2.0);
    let w = cotangent(rng, rows * len);
    suite_check(
        |t, v| {
            let o = t.scaled_softmax(v, scale)?;
            project(t, o, &w)
        },
        &x,
        fault,
    )
}

fn check_mean_axis(rng: &mut ChaCha8Rng, fault: Option<f64>) -> Result<f64> {
    let shape = [rng.gen_range(1..=3), rng.gen_range(1..=4), 2, 2];
    let axis = rng.gen_range(0..4);
    let x = rand_tensor(rng, &shape, 1.0);
    let out_len = x.len() / shape[axis];
    let w = cotangent(rng, out_len);
    suite_check(
        |t, v| {
            let o = t.mean_axis(v, axis)?;
            project(t, o, &w)
        },
        &x,
        fault,
    )
}

fn check_linear(rng: &mut ChaCha8Rng, fault: Option<f64>) -> Result<f64> {
    let (rows, d, dout) = (
        rng.gen_range(1..=3),
        rng.gen_range(1..=5),
        rng.gen_range(1..=4),
    );
    let x = rand_tensor(rng, &[rows, d], 1.0);
    let wt = rand_tensor(rng, &[dout, d], 1.0);
    let b = rand_tensor(rng, &[dout], 1.0);
    let w = cotangent(rng, rows * dout);
    let ex = suite_check(
        |t, v| {
            let (wv, bv) = (t.leaf(wt.clone()), t.leaf(b.clone()));
            let o = t.linear(v, wv, bv)?;
            project(t, o, &w)
        },
        &x,
        fault,
    )?;
    let ew = suite_check(
        |t, v| {
            let (xv, bv) = (t.leaf(x.clone()), t.leaf(b.clone()));
            let o = t.linear(xv, v, bv)?;
            project(t, o, &w)
        },
        &wt,
        fault,
    )?;
    let eb = suite_check(
        |t, v| {
            let (xv, wv) = (t.leaf(x.clone()), t.leaf(wt.clone()));
            let o = t.linear(xv, wv, v)?;
            project(t, o, &w)
        },
        &b,
        fault,
    )?;
    Ok(ex.max(ew).max(eb))
}

/// Reshape, transpose, select, stack, concat, add and scale in one chain.
fn check_layout_ops(rng: &mut ChaCha8Rng, fault: Option<f64>) -> Result<f64> {
    let (n, c) = (rng.gen_range(2..=3), rng.gen_range(1..=4));
    let x = rand_tensor(rng, &[n, c, 2, 2], 1.0);
    let factor = rng.gen_range(-2.0..2.0);
    let w = cotangent(rng, 2 * 4 * c + 4 * c);
    suite_check(
        |t, v| {
            let r = t.reshape(v, &[n, c, 4])?;
            let tr = t.transpose(r)?;
            let a = t.select(tr, 0)?;
            let b = t.select(tr, n - 1)?;
            let s = t.scale(b, factor)?;
            let sum = t.add(a, s)?;
            let st = t.stack(&[a, sum])?;
            let cat = t.concat(&[st, b])?;
            project(t, cat, &w)
        },
        &x,
        fault,
    )
}

fn check_pairwise_hinge(rng: &mut ChaCha8Rng, fault: Option<f64>) -> Result<f64> {
    let n = rng.gen_range(2..=4);
    let margin = 0.5;
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i < j {
                pairs.push((i, j));
            }
        }
    }
    // keep every pair beyond the stencil's reach from the hinge kink, and skip
    // draws where a score's active pairs cancel to an exactly zero gradient
    let scores = loop {
        let s = rand_tensor(rng, &[n], 1.0);
        let d = s.data();
        if pairs
            .iter()
            .any(|&(i, j)| (margin - (d[i] - d[j])).abs() < 5.0 * SUITE_EPS)
        {
            continue;
        }
        let mut net = alloc::vec![(0i32, 0usize); n];
        for &(i, j) in &pairs {
            if margin - (d[i] - d[j]) > 0.0 {
                net[i].0 -= 1;
                net[j].0 += 1;
                net[i].1 += 1;
                net[j].1 += 1;
            }
        }
        if net.iter().all(|&(sum, used)| used == 0 || sum != 0) {
            break s;
        }
    };
    suite_check(|t, v| t.pairwise_hinge(v, &pairs, margin), &scores, fault)
}

fn check_iar(rng: &mut ChaCha8Rng, fault: Option<f64>) -> Result<f64> {
    let (n, c) = (rng.gen_range(1..=3), rng.gen_range(1..=4));
    let roi = rand_tensor(rng, &[n, c, 2, 2], 1.0);
    let params = IarParams {
        kq_proj: Affine::from_parts(rand_tensor(rng, &[c, c], 1.0), rand_tensor(rng, &[c], 0.5)),
        v_proj: Affine::from_parts(rand_tensor(rng, &[c, c], 1.0), rand_tensor(rng, &[c], 0.5)),
    };
    let mut worst = suite_check(
        |t, v| {
            let vars = params.register(t);
            let out = iar_forward(t, v, &vars)?;
            t.sum(out.relation)
        },
        &roi,
        fault,
    )?;
    for (which, target) in params.tensors().into_iter().enumerate() {
        let e = suite_check(
            |t, v| {
                let vars = params.register(t);
                let vars = match which {
                    0 => IarVars {
                        kq_proj: AffineVars {
                            weight: v,
                            ..vars.kq_proj
                        },
                        ..vars
                    },
                    1 => IarVars {
                        kq_proj: AffineVars {
                            bias: v,
                            ..vars.kq_proj
                        },
                        ..vars
                    },
                    2 => IarVars {
                        v_proj: AffineVars {
                            weight: v,
                            ..vars.v_proj
                        },
                        ..vars
                    },
                    _ => IarVars {
                        v_proj: AffineVars {
                            bias: v,
                            ..vars.v_proj
                        },
                        ..vars
                    },
                };
                let r = t.leaf(roi.clone());
                let out = iar_forward(t, r, &vars)?;
                t.sum(out.relation)
            },
            target,
            fault,
        )?;
        worst = worst.max(e);
    }
    Ok(worst)
}

struct IdrCase {
    values: Vec<Tensor>,
    relations: Vec<Tensor>,
    masks: Vec<Tensor>,
    idr: IdrParams,
    refine: RefinementParams,
}

impl IdrCase {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let t_len = rng.gen_range(1..=3);
        let c = rng.gen_range(1..=4);
        let mut values = Vec::new();
        let mut relations = Vec::new();
        let mut masks = Vec::new();
        for _ in 0..t_len {
            let n = rng.gen_range(1..=3);
            values.push(rand_tensor(rng, &[n, c, 2, 2], 1.0));
            relations.push(rand_tensor(rng, &[n, c, 2, 2], 1.0));
            masks.push(Tensor::from_fn(&[n, 4], |_| rng.gen_range(0.0..1.0)));
        }
        let mut a = |o: usize, i: usize| {
            Affine::from_parts(rand_tensor(rng, &[o, i], 1.0), rand_tensor(rng, &[o], 0.5))
        };
        let idr = IdrParams {
            k_proj: a(c, c),
            q_proj: a(c, c),
            v_proj: a(c, c),
        };
        let refine = RefinementParams {
            mask_embed: a(c, 4),
            score_head: a(1, 2 * c),
        };
        IdrCase {
            values,
            relations,
            masks,
            idr,
            refine,
        }
    }

    /// Mean of all object scores with the tensor named by `probe` replaced by
    /// `v`. Parameter slots count through the IDR tensors, then refinement.
    fn mean_score(&self, t: &mut Tape, probe: Probe, v: Var) -> Result<Var> {
        let iv = self.idr.register(t);
        let rv = self.refine.register(t);
        let mut ivars = [
            iv.k_proj.weight,
            iv.k_proj.bias,
            iv.q_proj.weight,
            iv.q_proj.bias,
            iv.v_proj.weight,
            iv.v_proj.bias,
            rv.mask_embed.weight,
            rv.mask_embed.bias,
            rv.score_head.weight,
            rv.score_head.bias,
        ];
        if let Probe::Param(i) = probe {
            ivars[i] = v;
        }
        let a = |w: Var, b: Var| AffineVars { weight: w, bias: b };
        let iv = IdrVars {
            k_proj: a(ivars[0], ivars[1]),
            q_proj: a(ivars[2], ivars[3]),
            v_proj: a(ivars[4], ivars[5]),
        };
        let rv = RefinementVars {
            mask_embed: a(ivars[6], ivars[7]),
            score_head: a(ivars[8], ivars[9]),
        };
        let mut frames = Vec::new();
        for (i, ((val, rel), m)) in self
            .values
            .iter()
            .zip(&self.relations)
            .zip(&self.masks)
            .enumerate()
        {
            let value = match probe {
                Probe::Value(j) if j == i => v,
                _ => t.leaf(val.clone()),
            };
            let relation = match probe {
                Probe::Relation(j) if j == i => v,
                _ => t.leaf(rel.clone()),
            };
            frames.push(FrameVars {
                relation,
                value,
                mask_features: t.leaf(m.clone()),
            });
        }
        let trace = idr_scores(t, &frames, Some(&iv), &rv)?;
        let all = t.concat(&trace.scores)?;
        let n = t.value(all).len();
        let s = t.sum(all)?;
        t.scale(s, 1.0 / n as f64)
    }

    fn tensor(&self, probe: Probe) -> Tensor {
        match probe {
            Probe::Param(i) => {
                let mut ts = self.idr.tensors();
                ts.extend(self.refine.tensors());
                ts[i].clone()
            }
            Probe::Value(j) => self.values[j].clone(),
            Probe::Relation(j) => self.relations[j].clone(),
        }
    }
}

#[derive(Clone, Copy)]
enum Probe {
    Param(usize),
    Value(usize),
    Relation(usize),
}

fn check_idr(rng: &mut ChaCha8Rng, fault: Option<f64>) -> Result<f64> {
    let case = IdrCase::random(rng);
    // slot 3 is the query bias: it shifts each attention row by a constant,
    // which the softmax removes, so its gradient is identically zero
    let mut probes: Vec<Probe> = (0..10).filter(|&i| i != 3).map(Probe::Param).collect();
    for j in 0..case.values.len() {
        probes.push(Probe::Value(j));
        probes.push(Probe::Relation(j));
    }
    let mut worst: f64 = 0.0;
    for probe in probes {
        let x = case.tensor(probe);
        let e = suite_check(|t, v| case.mean_score(t, probe, v), &x, fault)?;
        worst = worst.max(e);
    }
    Ok(worst)
}

const CHECKS: [(&str, Check); 11] = [
    ("matmul", check_matmul),
    ("bmm", check_bmm),
    ("conv1x1", check_conv1x1),
    ("scaled_softmax", check_softmax),
    ("mean_axis", check_mean_axis),
    ("linear", check_linear),
    (
        "reshape/transpose/select/stack/concat/add/scale",
        check_layout_ops,
    ),
    ("pairwise_hinge", check_pairwise_hinge),
    ("iar_forward", check_iar),
    ("idr_scores", check_idr),
    ("composite matmul+softmax+mean", check_composite),
];

fn check_composite(rng: &mut ChaCha8Rng, fault: Option<f64>) -> Result<f64> {
    let (m, k) = (rng.gen_range(1..=3), rng.gen_range(1..=4));
    let a = rand_tensor(rng, &[m, k], 1.0);
    let b = rand_tensor(rng, &[k, m], 1.0);
    let w = cotangent(rng, m);
    suite_check(
        |t, x| {
            let bv = t.leaf(b.clone());
            let p = t.matmul(x, bv)?;
            let s = t.scaled_softmax(p, k)?;
            let mean = t.mean_axis(s, 1)?;
            let q = t.matmul(s, x)?;
            let qm = t.mean_axis(q, 1)?;
            let sum = t.add(mean, qm)?;
            project(t, sum, &w)
        },
        &a,
        fault,
    )
}

/// Runs every check for `seeds` consecutive seeds starting at `base_seed`
/// and reports the worst relative error per check. With `fault`, analytic
/// gradients come from a deliberately corrupted backward pass.
pub fn gradient_suite(
    base_seed: u64,
    seeds: usize,
    fault: Option<f64>,
) -> Result<Vec<CheckResult>> {
    CHECKS
        .iter()
        .enumerate()
        .map(|(k, &(name, check))| {
            let mut worst: f64 = 0.0;
            for s in 0..seeds as u64 {
                let mut rng = seeded_rng(
                    base_seed
                        .wrapping_mul(1_000_003)
                        .wrapping_add(s)
                        .wrapping_add((k as u64) << 32),
                );
                worst = worst.max(check(&mut rng, fault)?);
            }
            Ok(CheckResult {
                name,
                seeds,
                max_rel_error: worst,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_has_unit_gradient() {
        let x = Tensor::from_fn(&[5], |i| i as f64 - 2.0);
        let err = grad_check(|t, v| t.sum(v), &x, 1e-5).unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn softmax_times_input() {
        let x = Tensor::new(&[4], alloc::vec![0.3, -1.2, 0.7, 2.1]).unwrap();
        let err = grad_check(
            |t, v| {
                // sum(softmax(x) * x) as a 1x4 by 4x1 product
                let s = t.scaled_softmax(v, 4)?;
                let s2 = t.reshape(s, &[1, 1, 4])?;
                let x2 = t.reshape(v, &[4, 1])?;
                let p = t.bmm(s2, x2)?;
                t.sum(p)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn injected_fault_is_detected() {
        let x = Tensor::from_fn(&[3], |i| 0.5 + i as f64);
        let err = grad_check_with(
            |t, v| t.weighted_sum(v, &[1.0, -2.0, 0.5]),
            &x,
            1e-5,
            Some(0.01),
        )
        .unwrap();
        assert!(err > 1e-3);
    }

    #[test]
    fn non_finite_forward_is_an_error() {
        let x = Tensor::full(&[2], f64::INFINITY);
        assert!(grad_check(|t, v| t.sum(v), &x, 1e-5).is_err());
    }
}
