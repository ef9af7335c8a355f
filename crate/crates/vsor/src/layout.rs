//! On-disk dataset layout.
//!
//! ```text
//! <seq>/manifest.json        {"frames": [0, 1, 2, ...]}  (temporal order)
//! <seq>/frames/<idx>.pgm     16-bit instance map
//! <seq>/ranks/<idx>.json     {"ranks": {"<id>": <rank>}}
//! <seq>/features/<idx>.f64   ROI features, written by `vsor synth`
//! ```
//!
//! File stems are the frame index zero-padded to five digits; readers also
//! accept the unpadded index.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vsor_core::annotation::RankAnnotation;
use vsor_core::iar::RoiFeatureBatch;
use vsor_core::synth::{SequenceSample, SynthFrame};

use crate::error::{Error, Result};
use crate::{pgm, ranks, tensor_file};

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub frames: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

pub fn load_annotation(map_path: &Path, ranks_path: &Path) -> Result<RankAnnotation> {
    let img = pgm::read(map_path)?;
    let table = ranks::read(ranks_path)?;
    RankAnnotation::new(img.height, img.width, img.samples, table).map_err(|source| {
        Error::Invalid {
            path: ranks_path.into(),
            source,
        }
    })
}

pub fn save_annotation(a: &RankAnnotation, map_path: &Path, ranks_path: &Path) -> Result<()> {
    let img = pgm::Gray16 {
        width: a.width(),
        height: a.height(),
        samples: a.instance_map().to_vec(),
    };
    pgm::write(map_path, &img)?;
    ranks::write(ranks_path, a.ranks())
}

#[derive(Clone, Debug)]
pub struct SequenceDir {
    pub name: String,
    pub root: PathBuf,
    pub manifest: Manifest,
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

impl SequenceDir {
    pub fn open(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        manifest.frames.sort_unstable();
        if let Some(w) = manifest.frames.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Json {
                path,
                reason: format!("frame {} listed twice", w[0]),
            });
        }
        let name = root
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| ".".into());
        Ok(SequenceDir {
            name,
            root: root.into(),
            manifest,
        })
    }

    pub fn create(root: &Path, manifest: Manifest) -> Result<Self> {
        for sub in ["frames", "ranks"] {
            mkdir(&root.join(sub))?;
        }
        let path = root.join(MANIFEST);
        let text = serde_json::to_string_pretty(&manifest).unwrap() + "\n";
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(SequenceDir {
            name: root.file_name().unwrap().to_string_lossy().into_owned(),
            root: root.into(),
            manifest,
        })
    }

    fn file(&self, sub: &str, idx: u32, ext: &str) -> PathBuf {
        let padded = self.root.join(sub).join(format!("{idx:05}.{ext}"));
        if padded.exists() {
            return padded;
        }
        let plain = self.root.join(sub).join(format!("{idx}.{ext}"));
        if plain.exists() {
            plain
        } else {
            padded
        }
    }

    pub fn frame_path(&self, idx: u32) -> PathBuf {
        self.file("frames", idx, "pgm")
    }

    pub fn ranks_path(&self, idx: u32) -> PathBuf {
        self.file("ranks", idx, "json")
    }

    pub fn features_path(&self, idx: u32) -> PathBuf {
        self.file("features", idx, "f64")
    }

    /// Whether both annotation files of frame `idx` exist.
    pub fn has_frame(&self, idx: u32) -> bool {
        self.manifest.frames.contains(&idx)
            && self.frame_path(idx).is_file()
            && self.ranks_path(idx).is_file()
    }

    pub fn load_annotation(&self, idx: u32) -> Result<RankAnnotation> {
        load_annotation(&self.frame_path(idx), &self.ranks_path(idx))
    }

    pub fn save_annotation(&self, idx: u32, a: &RankAnnotation) -> Result<()> {
        save_annotation(a, &self.frame_path(idx), &self.ranks_path(idx))
    }

    pub fn annotations(&self) -> Result<Vec<RankAnnotation>> {
        self.manifest
            .frames
            .iter()
            .map(|&i| self.load_annotation(i))
            .collect()
    }

    /// Rebuilds a training sample from annotations and stored features.
    /// Masks come from the instance map in ascending id order; the latent
    /// saliency is not stored, so `saliency` is left empty.
    pub fn load_sample(&self) -> Result<SequenceSample> {
        let mut frames = Vec::new();
        let mut annotations = Vec::new();
        for &idx in &self.manifest.frames {
            let a = self.load_annotation(idx)?;
            let path = self.features_path(idx);
            let roi =
                RoiFeatureBatch::new(tensor_file::read_features(&path)?).map_err(|source| {
                    Error::Invalid {
                        path: path.clone(),
                        source,
                    }
                })?;
            let masks: Vec<_> = a.instances().into_iter().map(|(m, _)| m.mask).collect();
            if masks.len() != roi.objects() {
                return Err(Error::Invalid {
                    path,
                    source: vsor_core::Error::Config(format!(
                        "{} feature blocks for {} annotated instances",
                        roi.objects(),
                        masks.len()
                    )),
                });
            }
            frames.push(SynthFrame {
                roi,
                masks,
                saliency: Vec::new(),
            });
            annotations.push(a);
        }
        Ok(SequenceSample {
            frames,
            annotations,
            seed: self.manifest.seed.unwrap_or(0),
        })
    }
}

/// Writes a generated sequence (annotations and features) under `root`.
pub fn write_sample(root: &Path, sample: &SequenceSample) -> Result<SequenceDir> {
    let manifest = Manifest {
        frames: (0..sample.len() as u32).collect(),
        seed: Some(sample.seed),
    };
    let dir = SequenceDir::create(root, manifest)?;
    mkdir(&root.join("features"))?;
    for (i, (f, a)) in sample.frames.iter().zip(&sample.annotations).enumerate() {
        let idx = i as u32;
        dir.save_annotation(idx, a)?;
        tensor_file::write_features(&dir.features_path(idx), f.roi.features())?;
    }
    Ok(dir)
}

/// A directory holding a manifest is one sequence; otherwise every
/// subdirectory with a manifest is, in name order.
pub fn discover(root: &Path) -> Result<Vec<SequenceDir>> {
    if root.join(MANIFEST).is_file() {
        return Ok(vec![SequenceDir::open(root)?]);
    }
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let p = entry.path();
        if p.join(MANIFEST).is_file() {
            dirs.push(p);
        }
    }
    dirs.sort();
    dirs.iter().map(|p| SequenceDir::open(p)).collect()
}
