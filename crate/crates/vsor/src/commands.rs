//! The work behind each subcommand. Every function returns a serializable
//! report; printing and exit codes live in the binary.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Map};
use vsor_core::annotation::{compute_stats, compute_video_stats, RankAnnotation};
use vsor_core::gradcheck::{gradient_suite, SUITE_TOLERANCE};
use vsor_core::metrics::{mae, sa_sor, MetricSummary};
use vsor_core::ranking::rank_assign;
use vsor_core::synth::{synth_generate, SequenceSample, SynthConfig};
use vsor_core::train::{predict, train, ModelConfig, ModelParams, Variant};

use crate::config::{RunConfig, EVAL_SEED_OFFSET};
use crate::error::{Error, Result};
use crate::layout::{discover, write_sample, Manifest, SequenceDir, MANIFEST};
use crate::{pgm, tensor_file};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrameReport {
    pub sequence: String,
    pub frame: u32,
    pub sa_sor: Option<f64>,
    pub mae: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    pub sa_sor: Option<f64>,
    pub sa_sor_undefined_count: usize,
    pub mae: Option<f64>,
    pub frames: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub iou_threshold: f64,
    pub frames: Vec<FrameReport>,
    pub aggregate: Aggregate,
}

fn pair_sequences(gt: &Path, pred: &Path) -> Result<Vec<(SequenceDir, Option<SequenceDir>)>> {
    let gt_seqs = discover(gt)?;
    if gt_seqs.is_empty() {
        return Err(Error::NoSequences(gt.into()));
    }
    if !pred.is_dir() {
        return Err(Error::io(
            pred,
            std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "prediction directory not found",
            ),
        ));
    }
    let pred_seqs = discover(pred)?;
    // two single-sequence directories pair up regardless of their names
    if gt.join(MANIFEST).is_file() && pred.join(MANIFEST).is_file() {
        return Ok(gt_seqs
            .into_iter()
            .zip(pred_seqs.into_iter().map(Some))
            .collect());
    }
    let mut by_name: BTreeMap<String, SequenceDir> =
        pred_seqs.into_iter().map(|s| (s.name.clone(), s)).collect();
    Ok(gt_seqs
        .into_iter()
        .map(|g| {
            let p = by_name.remove(&g.name);
            (g, p)
        })
        .collect())
}

fn dump_rank_map(
    dir: &Path,
    seq: &str,
    idx: u32,
    values: &[f64],
    h: usize,
    w: usize,
) -> Result<()> {
    let out = dir.join(seq);
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let img = pgm::Gray16 {
        width: w,
        height: h,
        samples: values
            .iter()
            .map(|v| (v * 65535.0).round() as u16)
            .collect(),
    };
    pgm::write(&out.join(format!("{idx:05}.pgm")), &img)
}

/// Scores every ground-truth frame against the prediction with the same
/// sequence name and frame index.
pub fn eval_dirs(gt: &Path, pred: &Path, iou: f64, dump_maps: Option<&Path>) -> Result<EvalReport> {
    if !(iou > 0.0 && iou <= 1.0) {
        return Err(Error::Config(format!("--iou must lie in (0,1], got {iou}")));
    }
    let pairs = pair_sequences(gt, pred)?;
    let mut missing = Vec::new();
    let mut jobs = Vec::new();
    for (g, p) in &pairs {
        for &idx in &g.manifest.frames {
            if !g.has_frame(idx) {
                missing.push(format!("{}/{idx} (gt)", g.name));
            } else if !p.as_ref().is_some_and(|p| p.has_frame(idx)) {
                missing.push(format!("{}/{idx}", g.name));
            } else {
                jobs.push((g, p.as_ref().unwrap(), idx));
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingFrames(missing));
    }
    if jobs.is_empty() {
        return Err(Error::NoSequences(gt.into()));
    }
    let frames: Vec<FrameReport> = jobs
        .par_iter()
        .map(|&(g, p, idx)| {
            let ga = g.load_annotation(idx)?;
            let pa = p.load_annotation(idx)?;
            let invalid = |source| Error::Invalid {
                path: p.frame_path(idx),
                source,
            };
            let pred_map = pa.to_rank_map();
            let err = mae(&pred_map, &ga.to_rank_map()).map_err(invalid)?;
            let corr = sa_sor(&ga.instances(), &pa.instances(), iou).map_err(invalid)?;
            if let Some(dir) = dump_maps {
                dump_rank_map(
                    dir,
                    &g.name,
                    idx,
                    pred_map.values(),
                    pa.height(),
                    pa.width(),
                )?;
            }
            Ok(FrameReport {
                sequence: g.name.clone(),
                frame: idx,
                sa_sor: corr,
                mae: err,
            })
        })
        .collect::<Result<_>>()?;
    let mut summary = MetricSummary::default();
    for f in &frames {
        summary.push(f.sa_sor, f.mae);
    }
    Ok(EvalReport {
        iou_threshold: iou,
        aggregate: Aggregate {
            sa_sor: summary.sa_sor(),
            sa_sor_undefined_count: summary.undefined(),
            mae: summary.mae(),
            frames: summary.frames(),
        },
        frames,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum StatsUnit {
    Frame,
    Video,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatsReport {
    pub per: &'static str,
    pub sequences: usize,
    /// Counted units: frames, or videos with `per = "video"`.
    pub frame_count: usize,
    pub invalid_rate: f64,
    /// Fractions of units with at most 1, 2, 3, 4 and 5+ salient objects.
    pub count_histogram: [f64; 5],
}

pub fn stats_dir(root: &Path, per: StatsUnit) -> Result<StatsReport> {
    let seqs = discover(root)?;
    if seqs.is_empty() {
        return Err(Error::NoSequences(root.into()));
    }
    let videos: Vec<Vec<RankAnnotation>> = seqs
        .par_iter()
        .map(SequenceDir::annotations)
        .collect::<Result<_>>()?;
    let stats = match per {
        StatsUnit::Frame => compute_stats(videos.iter().flatten())?,
        StatsUnit::Video => compute_video_stats(videos.iter())?,
    };
    Ok(StatsReport {
        per: match per {
            StatsUnit::Frame => "frame",
            StatsUnit::Video => "video",
        },
        sequences: seqs.len(),
        frame_count: stats.frame_count,
        invalid_rate: stats.invalid_rate,
        count_histogram: stats.count_histogram,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SynthReport {
    pub out: PathBuf,
    pub sequences: usize,
    pub frames: usize,
    pub seed: u64,
}

pub fn sequence_name(i: usize) -> String {
    format!("seq_{i:05}")
}

/// Writes `count` clips seeded `seed, seed + 1, ...` as `<out>/seq_NNNNN`.
pub fn synth_to_dir(out: &Path, count: usize, cfg: &SynthConfig, seed: u64) -> Result<SynthReport> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let frames: Vec<usize> = (0..count)
        .into_par_iter()
        .map(|i| {
            let s = synth_generate(cfg, seed.wrapping_add(i as u64))?;
            write_sample(&out.join(sequence_name(i)), &s)?;
            Ok(s.len())
        })
        .collect::<Result<_>>()?;
    Ok(SynthReport {
        out: out.into(),
        sequences: count,
        frames: frames.iter().sum(),
        seed,
    })
}

pub fn save_params(path: &Path, config: &ModelConfig, params: &ModelParams) -> Result<()> {
    let mut meta = Map::new();
    meta.insert("variant".into(), json!(config.variant.name()));
    meta.insert("channels".into(), json!(config.channels));
    meta.insert("height".into(), json!(config.height));
    meta.insert("width".into(), json!(config.width));
    tensor_file::write_bundle(path, meta, &params.tensors())
}

/// Reads a parameter bundle written by [`save_params`]; the returned config
/// carries the stored variant and extents, defaults elsewhere.
pub fn load_params(path: &Path) -> Result<(ModelConfig, ModelParams)> {
    let (meta, tensors) = tensor_file::read_bundle(path)?;
    let bad = |reason: String| Error::Tensor {
        path: path.into(),
        reason,
    };
    let dim = |k: &str| {
        meta.get(k)
            .and_then(|v| v.as_u64())
            .map(|v| v as usize)
            .ok_or_else(|| bad(format!("missing `{k}`")))
    };
    let variant = meta
        .get("variant")
        .and_then(|v| v.as_str())
        .ok_or_else(|| bad("missing `variant`".into()))?;
    let config = ModelConfig {
        variant: Variant::parse(variant)?,
        channels: dim("channels")?,
        height: dim("height")?,
        width: dim("width")?,
        ..ModelConfig::default()
    };
    let mut params = ModelParams::init(&config)?;
    let slots = params.tensors_mut();
    if slots.len() != tensors.len() {
        return Err(bad(format!(
            "{} tensors, expected {}",
            tensors.len(),
            slots.len()
        )));
    }
    for (slot, t) in slots.into_iter().zip(tensors) {
        if slot.shape() != t.shape() {
            return Err(bad(format!(
                "shape {:?}, expected {:?}",
                t.shape(),
                slot.shape()
            )));
        }
        *slot = t;
    }
    Ok((config, params))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalSummary {
    pub sa_sor: Option<f64>,
    pub mae: f64,
    pub sa_sor_undefined_count: usize,
    pub frames: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainOutput {
    pub variant: &'static str,
    pub iterations: usize,
    pub seed: u64,
    pub train_sequences: usize,
    pub eval_sequences: usize,
    pub initial_loss: Option<f64>,
    pub final_loss: Option<f64>,
    pub losses: Vec<f64>,
    pub eval: EvalSummary,
    pub wall_clock_secs: Option<f64>,
    pub params_out: Option<PathBuf>,
    pub predictions_out: Option<PathBuf>,
}

fn load_or_synth(
    dir: Option<&Path>,
    count: usize,
    cfg: &SynthConfig,
    seed: u64,
) -> Result<Vec<(String, SequenceSample)>> {
    match dir {
        Some(d) => {
            let seqs = discover(d)?;
            if seqs.is_empty() {
                return Err(Error::NoSequences(d.into()));
            }
            seqs.par_iter()
                .map(|s| Ok((s.name.clone(), s.load_sample()?)))
                .collect()
        }
        None => (0..count)
            .into_par_iter()
            .map(|i| {
                Ok((
                    sequence_name(i),
                    synth_generate(cfg, seed.wrapping_add(i as u64))?,
                ))
            })
            .collect(),
    }
}

fn write_predictions(
    out: &Path,
    params: &ModelParams,
    variant: Variant,
    eval: &[(String, SequenceSample)],
) -> Result<()> {
    for (name, sample) in eval {
        let scores = predict(params, variant, sample)?;
        let manifest = Manifest {
            frames: (0..sample.len() as u32).collect(),
            seed: Some(sample.seed),
        };
        let dir = SequenceDir::create(&out.join(name), manifest)?;
        for (t, (frame, s)) in sample.frames.iter().zip(scores).enumerate() {
            let ranks = rank_assign(&s)?;
            dir.save_annotation(t as u32, &RankAnnotation::from_masks(&frame.masks, &ranks)?)?;
        }
    }
    Ok(())
}

pub fn run_training(cfg: &RunConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    let train_set = load_or_synth(
        cfg.train_data.as_deref(),
        cfg.train_sequences,
        &cfg.synth,
        cfg.data_seed,
    )?;
    let eval_set = load_or_synth(
        cfg.eval_data.as_deref(),
        cfg.eval_sequences,
        &cfg.synth,
        cfg.data_seed.wrapping_add(EVAL_SEED_OFFSET),
    )?;
    let train_samples: Vec<SequenceSample> = train_set.into_iter().map(|(_, s)| s).collect();
    let eval_samples: Vec<SequenceSample> = eval_set.iter().map(|(_, s)| s.clone()).collect();
    let (params, report) = train(&cfg.model, &train_samples, &eval_samples)?;
    if let Some(p) = &cfg.params_out {
        save_params(p, &cfg.model, &params)?;
    }
    if let Some(p) = &cfg.predictions_out {
        write_predictions(p, &params, cfg.model.variant, &eval_set)?;
    }
    Ok(TrainOutput {
        variant: cfg.model.variant.name(),
        iterations: cfg.model.iterations,
        seed: cfg.model.seed,
        train_sequences: train_samples.len(),
        eval_sequences: eval_samples.len(),
        initial_loss: report.losses.first().copied(),
        final_loss: report.losses.last().copied(),
        losses: report.losses,
        eval: EvalSummary {
            sa_sor: report.eval.sa_sor,
            mae: report.eval.mae,
            sa_sor_undefined_count: report.eval.undefined,
            frames: report.eval.frames,
        },
        wall_clock_secs: report.wall_clock_secs,
        params_out: cfg.params_out.clone(),
        predictions_out: cfg.predictions_out.clone(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRow {
    pub name: &'static str,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub seed: u64,
    pub seeds_per_check: usize,
    pub tolerance: f64,
    pub checks: Vec<CheckRow>,
    pub passed: bool,
}

pub const GRADCHECK_SEEDS: usize = 20;

/// Runs the finite-difference suite. `fault` corrupts every backward
/// contribution by that relative amount, which must make the suite fail.
pub fn run_gradcheck(seed: u64, fault: Option<f64>) -> Result<GradcheckReport> {
    let results = gradient_suite(seed, GRADCHECK_SEEDS, fault)?;
    let checks: Vec<CheckRow> = results
        .iter()
        .map(|r| CheckRow {
            name: r.name,
            max_rel_error: r.max_rel_error,
            passed: r.passed(SUITE_TOLERANCE),
        })
        .collect();
    Ok(GradcheckReport {
        seed,
        seeds_per_check: GRADCHECK_SEEDS,
        tolerance: SUITE_TOLERANCE,
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}
