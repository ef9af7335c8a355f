//! Rank annotations and dataset statistics.

use alloc::collections::BTreeMap;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::maps::{rank_level, Mask, RankMap};
use crate::metrics::InstanceMask;
use crate::ranking::validate_permutation;

/// Per-frame instance-id map (0 = background) with an id -> rank table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankAnnotation {
    height: usize,
    width: usize,
    instance_map: Vec<u16>,
    ranks: BTreeMap<u16, usize>,
}

impl RankAnnotation {
    /// Validates that the ids in the map and the rank table coincide and that
    /// the ranks are a permutation of `1..=K`.
    pub fn new(
        height: usize,
        width: usize,
        instance_map: Vec<u16>,
        ranks: BTreeMap<u16, usize>,
    ) -> Result<Self> {
        if instance_map.len() != height * width {
            return Err(Error::Layout {
                shape: alloc::vec![height, width],
                len: instance_map.len(),
            });
        }
        if ranks.contains_key(&0) {
            return Err(Error::IdMismatch("id 0 is reserved for background".into()));
        }
        let present: BTreeSet<u16> = instance_map.iter().copied().filter(|&id| id != 0).collect();
        if let Some(id) = present.iter().find(|id| !ranks.contains_key(id)) {
            return Err(Error::IdMismatch(format!("instance {id} has no rank")));
        }
        if let Some(id) = ranks.keys().find(|id| !present.contains(id)) {
            return Err(Error::IdMismatch(format!(
                "ranked instance {id} absent from map"
            )));
        }
        let values: Vec<usize> = ranks.values().copied().collect();
        validate_permutation(&values)?;
        Ok(RankAnnotation {
            height,
            width,
            instance_map,
            ranks,
        })
    }

    /// Builds an annotation from disjoint masks; mask `i` gets id `i + 1`.
    pub fn from_masks(masks: &[Mask], ranks: &[usize]) -> Result<Self> {
        let (h, w) = masks.first().map(Mask::dims).ok_or(Error::EmptyFrame)?;
        let mut map = alloc::vec![0u16; h * w];
        for (i, m) in masks.iter().enumerate() {
            if m.dims() != (h, w) {
                return Err(Error::Dimension {
                    expected: (h, w),
                    found: m.dims(),
                });
            }
            for (px, &on) in map.iter_mut().zip(m.pixels()) {
                if on {
                    *px = (i + 1) as u16;
                }
            }
        }
        let table = ranks
            .iter()
            .enumerate()
            .map(|(i, &r)| ((i + 1) as u16, r))
            .collect();
        RankAnnotation::new(h, w, map, table)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn instance_map(&self) -> &[u16] {
        &self.instance_map
    }

    pub fn ranks(&self) -> &BTreeMap<u16, usize> {
        &self.ranks
    }

    /// Number of annotated instances.
    pub fn instance_count(&self) -> usize {
        self.ranks.len()
    }

    /// Instance masks with their ranks, ordered by id.
    pub fn instances(&self) -> Vec<(InstanceMask, usize)> {
        self.ranks
            .iter()
            .map(|(&id, &rank)| {
                let pixels = self.instance_map.iter().map(|&v| v == id).collect();
                let mask = Mask::new(self.height, self.width, pixels)
                    .expect("instance map matches its own dimensions");
                (
                    InstanceMask {
                        mask,
                        id: id as u32,
                    },
                    rank,
                )
            })
            .collect()
    }

    /// Pixel of an instance with rank `r` becomes `(K - r + 1) / K`.
    pub fn to_rank_map(&self) -> RankMap {
        let k = self.ranks.len();
        let values = self
            .instance_map
            .iter()
            .map(|id| match self.ranks.get(id) {
                Some(&r) => rank_level(r, k),
                None => 0.0,
            })
            .collect();
        RankMap::new(self.height, self.width, values).expect("levels lie in [0,1]")
    }
}

/// Free-function form of [`RankAnnotation::to_rank_map`].
pub fn annotation_to_rank_map(a: &RankAnnotation) -> RankMap {
    a.to_rank_map()
}

/// Histogram of salient-object counts over frames (or videos).
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetStats {
    /// Number of counted units: frames, or videos for per-video statistics.
    pub frame_count: usize,
    /// Fraction of units with fewer than two salient objects.
    pub invalid_rate: f64,
    /// Fractions with at most 1, 2, 3, 4 and 5+ objects.
    pub count_histogram: [f64; 5],
}

fn bin(count: usize) -> usize {
    count.clamp(1, 5) - 1
}

/// Histogram over raw per-unit object counts. Units with no object at all
/// land in the first bin alongside single-object units, both being invalid
/// for ranking.
pub fn stats_from_counts(counts: impl IntoIterator<Item = usize>) -> Result<DatasetStats> {
    let mut hist = [0usize; 5];
    let mut total = 0usize;
    for c in counts {
        hist[bin(c)] += 1;
        total += 1;
    }
    if total == 0 {
        return Err(Error::Config(
            "statistics need at least one annotation".into(),
        ));
    }
    let count_histogram = hist.map(|h| h as f64 / total as f64);
    Ok(DatasetStats {
        frame_count: total,
        invalid_rate: count_histogram[0],
        count_histogram,
    })
}

/// Per-frame statistics.
pub fn compute_stats<'a>(
    annotations: impl IntoIterator<Item = &'a RankAnnotation>,
) -> Result<DatasetStats> {
    stats_from_counts(annotations.into_iter().map(RankAnnotation::instance_count))
}

/// Per-video statistics: a video counts with the largest number of salient
/// objects seen in any of its frames.
pub fn compute_video_stats<'a, V>(videos: impl IntoIterator<Item = V>) -> Result<DatasetStats>
where
    V: IntoIterator<Item = &'a RankAnnotation>,
{
    stats_from_counts(videos.into_iter().map(|frames| {
        frames
            .into_iter()
            .map(RankAnnotation::instance_count)
            .max()
            .unwrap_or(0)
    }))
}
