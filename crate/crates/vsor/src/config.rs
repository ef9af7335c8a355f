//! Run configuration from `key=value` text or a JSON object.
//!
//! Nested JSON objects flatten to dotted keys, so `{"rank_loss": {"margin":
//! 0.3}}` and `rank_loss.margin = 0.3` are the same setting.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::Value;
use vsor_core::synth::SynthConfig;
use vsor_core::train::{ModelConfig, Variant};

use crate::error::{Error, Result};

/// Everything `vsor train` and `vsor synth` read from a config file.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub synth: SynthConfig,
    pub train_sequences: usize,
    pub eval_sequences: usize,
    /// First seed of the synthesized training clips. Evaluation clips start
    /// at `data_seed + EVAL_SEED_OFFSET`.
    pub data_seed: u64,
    pub train_data: Option<PathBuf>,
    pub eval_data: Option<PathBuf>,
    pub params_out: Option<PathBuf>,
    pub predictions_out: Option<PathBuf>,
}

pub const EVAL_SEED_OFFSET: u64 = 1_000_000;

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            synth: SynthConfig::default(),
            train_sequences: 200,
            eval_sequences: 50,
            data_seed: 0,
            train_data: None,
            eval_data: None,
            params_out: None,
            predictions_out: None,
        }
    }
}

pub const KEYS: &[&str] = &[
    "variant",
    "channels",
    "height",
    "width",
    "frames",
    "learning_rate",
    "momentum",
    "weight_decay",
    "iterations",
    "seed",
    "iou_threshold",
    "rank_loss.margin",
    "train_sequences",
    "eval_sequences",
    "data_seed",
    "train_data",
    "eval_data",
    "params_out",
    "predictions_out",
    "synth.min_objects",
    "synth.max_objects",
    "synth.frame_height",
    "synth.frame_width",
    "synth.rank_swap_prob",
    "synth.noise_level",
    "synth.context_level",
];

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let m = &mut self.model;
        let s = &mut self.synth;
        match key {
            "variant" => m.variant = Variant::parse(value.trim())?,
            "channels" => {
                m.channels = num(key, value)?;
                s.channels = m.channels;
            }
            "height" => {
                m.height = num(key, value)?;
                s.height = m.height;
            }
            "width" => {
                m.width = num(key, value)?;
                s.width = m.width;
            }
            "frames" => {
                m.frames = num(key, value)?;
                s.frames = m.frames;
            }
            "learning_rate" => m.learning_rate = num(key, value)?,
            "momentum" => m.momentum = num(key, value)?,
            "weight_decay" => m.weight_decay = num(key, value)?,
            "iterations" => m.iterations = num(key, value)?,
            "seed" => m.seed = num(key, value)?,
            "iou_threshold" => m.iou_threshold = num(key, value)?,
            "rank_loss.margin" => m.margin = num(key, value)?,
            "train_sequences" => self.train_sequences = num(key, value)?,
            "eval_sequences" => self.eval_sequences = num(key, value)?,
            "data_seed" => self.data_seed = num(key, value)?,
            "train_data" => self.train_data = Some(value.trim().into()),
            "eval_data" => self.eval_data = Some(value.trim().into()),
            "params_out" => self.params_out = Some(value.trim().into()),
            "predictions_out" => self.predictions_out = Some(value.trim().into()),
            "synth.min_objects" => s.min_objects = num(key, value)?,
            "synth.max_objects" => s.max_objects = num(key, value)?,
            "synth.frame_height" => s.frame_resolution.0 = num(key, value)?,
            "synth.frame_width" => s.frame_resolution.1 = num(key, value)?,
            "synth.rank_swap_prob" => s.rank_swap_prob = num(key, value)?,
            "synth.noise_level" => s.noise_level = num(key, value)?,
            "synth.context_level" => s.context_level = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.synth.validate()?;
        Ok(())
    }

    /// Reads `path` (if any), then applies `overrides` in order.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(p) = path {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            for (k, v) in parse_entries(&text)? {
                cfg.set(&k, &v)?;
            }
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) -> Result<()> {
    match v {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, v, out)?;
            }
        }
        Value::String(s) => out.push((prefix.into(), s.clone())),
        Value::Number(n) => out.push((prefix.into(), n.to_string())),
        Value::Bool(b) => out.push((prefix.into(), b.to_string())),
        _ => return Err(Error::Config(format!("`{prefix}`: unsupported value {v}"))),
    }
    Ok(())
}

/// Splits config text into `(key, value)` pairs in file order.
pub fn parse_entries(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    if text.trim_start().starts_with('{') {
        let v: Value =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid JSON: {e}")))?;
        flatten("", &v, &mut out)?;
        return Ok(out);
    }
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        out.push(parse_override(line).map_err(|_| {
            Error::Config(format!("line {}: expected key=value, got `{line}`", n + 1))
        })?);
    }
    Ok(out)
}

/// Parses one `key=value` pair, as given to `--set`.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("expected key=value, got `{s}`")))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(Error::Config(format!("empty key in `{s}`")));
    }
    Ok((k.to_string(), v.trim().to_string()))
}
