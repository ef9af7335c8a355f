//! Desk-scale training and evaluation of the ranking pipeline.

use alloc::vec::Vec;

use rand::Rng;

use crate::annotation::RankAnnotation;
use crate::error::{Error, Result};
use crate::iar::{iar_forward, IarParams, IarVars};
use crate::idr::{
    idr_scores, mask_features, FrameVars, IdrParams, IdrVars, RefinementParams, RefinementVars,
};
use crate::loss::{rank_loss, RankTarget, DEFAULT_MARGIN};
use crate::maps::{render_rank_map, Mask};
use crate::metrics::{mae, sa_sor, InstanceMask, MetricSummary, DEFAULT_IOU_THRESHOLD};
use crate::params::seeded_rng;
use crate::ranking::rank_assign;
use crate::synth::SequenceSample;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Which relation modules are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Neither module: ROI features serve as relation and value features and
    /// the context is the plain per-frame object mean.
    Basic,
    BasicIar,
    /// Temporal module on raw ROI features.
    BasicIdr,
    Full,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Basic,
        Variant::BasicIar,
        Variant::BasicIdr,
        Variant::Full,
    ];

    pub fn uses_iar(self) -> bool {
        matches!(self, Variant::BasicIar | Variant::Full)
    }

    pub fn uses_idr(self) -> bool {
        matches!(self, Variant::BasicIdr | Variant::Full)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Basic => "basic",
            Variant::BasicIar => "basic_iar",
            Variant::BasicIdr => "basic_idr",
            Variant::Full => "full",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(alloc::format!("unknown variant `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// Frames per training clip (T).
    pub frames: usize,
    pub margin: f64,
    pub learning_rate: f64,
    /// Heavy-ball coefficient; 0 gives plain SGD.
    pub momentum: f64,
    /// Per-step multiplicative shrinkage `p <- (1 - weight_decay) p`.
    pub weight_decay: f64,
    pub iterations: usize,
    pub seed: u64,
    pub iou_threshold: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: Variant::Full,
            channels: 16,
            height: 7,
            width: 7,
            frames: 3,
            margin: DEFAULT_MARGIN,
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 5e-4,
            iterations: 2000,
            seed: 0,
            iou_threshold: DEFAULT_IOU_THRESHOLD,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if self.channels == 0 || self.height == 0 || self.width == 0 || self.frames == 0 {
            return fail("channels, height, width and frames must be positive");
        }
        if self.margin.is_nan() || self.margin <= 0.0 {
            return fail("margin must be positive");
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return fail("learning_rate must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail("momentum must lie in [0,1)");
        }
        if !(0.0..1.0).contains(&self.weight_decay) {
            return fail("weight_decay must lie in [0,1)");
        }
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return fail("iou_threshold must lie in (0,1]");
        }
        Ok(())
    }
}

/// All learnable tensors of the pipeline. Modules switched off by the
/// variant keep their parameters but receive no gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub iar: IarParams,
    pub idr: IdrParams,
    pub refine: RefinementParams,
}

#[derive(Clone, Copy, Debug)]
pub struct ModelVars {
    pub iar: IarVars,
    pub idr: IdrVars,
    pub refine: RefinementVars,
}

impl ModelParams {
    pub fn init(config: &ModelConfig) -> Result<Self> {
        let s = config.seed.wrapping_mul(4);
        Ok(ModelParams {
            iar: IarParams::init(config.channels, s)?,
            idr: IdrParams::init(config.channels, s.wrapping_add(1))?,
            refine: RefinementParams::init(
                config.channels,
                config.height,
                config.width,
                s.wrapping_add(2),
            )?,
        })
    }

    pub fn register(&self, tape: &mut Tape) -> ModelVars {
        ModelVars {
            iar: self.iar.register(tape),
            idr: self.idr.register(tape),
            refine: self.refine.register(tape),
        }
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v = self.iar.tensors();
        v.extend(self.idr.tensors());
        v.extend(self.refine.tensors());
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.iar.tensors_mut();
        v.extend(self.idr.tensors_mut());
        v.extend(self.refine.tensors_mut());
        v
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.tensors().iter().map(|t| t.norm() * t.norm()).sum())
    }
}

impl ModelVars {
    pub fn vars(&self) -> Vec<Var> {
        let mut v = Vec::new();
        v.extend(self.iar.kq_proj.vars());
        v.extend(self.iar.v_proj.vars());
        v.extend(self.idr.k_proj.vars());
        v.extend(self.idr.q_proj.vars());
        v.extend(self.idr.v_proj.vars());
        v.extend(self.refine.mask_embed.vars());
        v.extend(self.refine.score_head.vars());
        v
    }
}

/// Records the configured pipeline for one clip; returns a score vector per
/// frame.
pub fn sequence_scores(
    tape: &mut Tape,
    vars: &ModelVars,
    variant: Variant,
    sample: &SequenceSample,
) -> Result<Vec<Var>> {
    let mut frames = Vec::with_capacity(sample.frames.len());
    for f in &sample.frames {
        let roi = tape.leaf(f.roi.features().clone());
        let (relation, value) = if variant.uses_iar() {
            let out = iar_forward(tape, roi, &vars.iar)?;
            (out.relation, out.value)
        } else {
            (roi, roi)
        };
        let masks = mask_features(&f.masks, f.roi.height(), f.roi.width())?;
        frames.push(FrameVars {
            relation,
            value,
            mask_features: tape.leaf(masks),
        });
    }
    let temporal = variant.uses_idr().then_some(&vars.idr);
    Ok(idr_scores(tape, &frames, temporal, &vars.refine)?.scores)
}

/// Summed rank loss over the frames of one clip.
pub fn sequence_loss(
    tape: &mut Tape,
    vars: &ModelVars,
    variant: Variant,
    sample: &SequenceSample,
    margin: f64,
) -> Result<Var> {
    let scores = sequence_scores(tape, vars, variant, sample)?;
    let mut total: Option<Var> = None;
    for (t, s) in scores.into_iter().enumerate() {
        let target = RankTarget::new(sample.gt_ranks(t))?;
        if target.len() < 2 {
            continue;
        }
        let l = rank_loss(tape, s, &target, margin)?;
        total = Some(match total {
            Some(acc) => tape.add(acc, l)?,
            None => l,
        });
    }
    match total {
        Some(v) => Ok(v),
        None => Err(Error::TooFewObjects { n: 1 }),
    }
}

/// Scores every frame of `sample` without building gradients.
pub fn predict(
    params: &ModelParams,
    variant: Variant,
    sample: &SequenceSample,
) -> Result<Vec<Vec<f64>>> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let scores = sequence_scores(&mut tape, &vars, variant, sample)?;
    Ok(scores
        .into_iter()
        .map(|s| tape.value(s).data().to_vec())
        .collect())
}

/// SGD with heavy-ball momentum and multiplicative weight decay.
#[derive(Clone, Debug)]
pub struct Sgd {
    learning_rate: f64,
    momentum: f64,
    weight_decay: f64,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(learning_rate: f64, momentum: f64, weight_decay: f64) -> Self {
        Sgd {
            learning_rate,
            momentum,
            weight_decay,
            velocity: Vec::new(),
        }
    }

    /// `v <- momentum * v + g; p <- (1 - weight_decay) * p - lr * v`.
    /// Missing gradients count as zero.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Option<&[f64]>]) {
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|p| alloc::vec![0.0; p.len()]).collect();
        }
        let keep = 1.0 - self.weight_decay;
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            for (i, x) in p.data_mut().iter_mut().enumerate() {
                let gi = g.map_or(0.0, |g| g[i]);
                v[i] = self.momentum * v[i] + gi;
                *x = keep * *x - self.learning_rate * v[i];
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    /// Mean over frames where the correlation is defined.
    pub sa_sor: Option<f64>,
    pub mae: f64,
    pub undefined: usize,
    pub frames: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub losses: Vec<f64>,
    pub eval: EvalReport,
    pub wall_clock_secs: Option<f64>,
}

/// SA-SOR and MAE of a predicted ranking against a ground-truth annotation.
pub fn frame_metrics(
    gt: &RankAnnotation,
    pred_masks: &[Mask],
    pred_ranks: &[usize],
    iou_threshold: f64,
) -> Result<(Option<f64>, f64)> {
    let pred_map = render_rank_map(pred_masks, pred_ranks, (gt.height(), gt.width()))?;
    let err = mae(&pred_map, &gt.to_rank_map())?;
    let pred: Vec<(InstanceMask, usize)> = pred_masks
        .iter()
        .zip(pred_ranks)
        .enumerate()
        .filter(|(_, (m, _))| m.area() > 0)
        .map(|(i, (m, &r))| {
            (
                InstanceMask {
                    mask: m.clone(),
                    id: i as u32 + 1,
                },
                r,
            )
        })
        .collect();
    let corr = sa_sor(&gt.instances(), &pred, iou_threshold)?;
    Ok((corr, err))
}

/// Runs the configured pipeline on every clip and averages the metrics.
pub fn evaluate(
    params: &ModelParams,
    config: &ModelConfig,
    eval_set: &[SequenceSample],
) -> Result<EvalReport> {
    if eval_set.is_empty() {
        return Err(Error::Config("evaluation set is empty".into()));
    }
    let mut summary = MetricSummary::default();
    for sample in eval_set {
        let scores = predict(params, config.variant, sample)?;
        for ((frame, gt), s) in sample.frames.iter().zip(&sample.annotations).zip(scores) {
            let ranks = rank_assign(&s)?;
            let (corr, err) = frame_metrics(gt, &frame.masks, &ranks, config.iou_threshold)?;
            summary.push(corr, err);
        }
    }
    Ok(EvalReport {
        sa_sor: summary.sa_sor(),
        mae: summary.mae().unwrap_or(0.0),
        undefined: summary.undefined(),
        frames: summary.frames(),
    })
}

/// Optimizes `params` in place on `train_set` and returns the loss curve.
pub fn fit(
    params: &mut ModelParams,
    config: &ModelConfig,
    train_set: &[SequenceSample],
) -> Result<Vec<f64>> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let mut rng = seeded_rng(config.seed ^ 0x005e_ed0f_7a1e);
    let mut opt = Sgd::new(config.learning_rate, config.momentum, config.weight_decay);
    let mut losses = Vec::with_capacity(config.iterations);
    for iteration in 0..config.iterations {
        let sample = &train_set[rng.gen_range(0..train_set.len())];
        let mut tape = Tape::new();
        let vars = params.register(&mut tape);
        let loss = sequence_loss(&mut tape, &vars, config.variant, sample, config.margin)?;
        let value = tape.value(loss).item()?;
        if !value.is_finite() {
            return Err(Error::Diverged {
                iteration,
                loss: value,
            });
        }
        tape.backward(loss)?;
        let grads: Vec<Option<&[f64]>> = vars.vars().iter().map(|&v| tape.grad(v)).collect();
        opt.step(&mut params.tensors_mut(), &grads);
        losses.push(value);
    }
    Ok(losses)
}

/// Initializes, trains and evaluates on held-out clips.
pub fn train(
    config: &ModelConfig,
    train_set: &[SequenceSample],
    eval_set: &[SequenceSample],
) -> Result<(ModelParams, TrainReport)> {
    config.validate()?;
    if eval_set.is_empty() {
        return Err(Error::Config("evaluation set is empty".into()));
    }
    #[cfg(feature = "std")]
    let start = std::time::Instant::now();
    let mut params = ModelParams::init(config)?;
    let losses = fit(&mut params, config, train_set)?;
    let eval = evaluate(&params, config, eval_set)?;
    #[cfg(feature = "std")]
    let wall_clock_secs = Some(start.elapsed().as_secs_f64());
    #[cfg(not(feature = "std"))]
    let wall_clock_secs = None;
    Ok((
        params,
        TrainReport {
            losses,
            eval,
            wall_clock_secs,
        },
    ))
}
