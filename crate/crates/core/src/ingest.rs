//! Gallery cleansing: exact and near-duplicate removal, quality filtering.
//!
//! Every stage is an order-preserving filter; the first occurrence in file
//! order always survives.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingRecord, Gallery, NormedVectors};
use crate::error::{Error, Result};

pub const DEFAULT_NEAR_THRESHOLD: f64 = 0.995;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RemovalReason {
    ExactDuplicate,
    NearDuplicate,
    LowQuality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    pub id: String,
    pub reason: RemovalReason,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CleansingReport {
    pub input_count: usize,
    pub exact_duplicates_removed: usize,
    pub near_duplicates_removed: usize,
    pub low_quality_removed: usize,
    pub output_count: usize,
    pub removed_ids: Vec<Removal>,
}

impl CleansingReport {
    fn from_removals(input_count: usize, removed: Vec<Removal>) -> Self {
        let count = |reason| removed.iter().filter(|r| r.reason == reason).count();
        CleansingReport {
            input_count,
            exact_duplicates_removed: count(RemovalReason::ExactDuplicate),
            near_duplicates_removed: count(RemovalReason::NearDuplicate),
            low_quality_removed: count(RemovalReason::LowQuality),
            output_count: input_count - removed.len(),
            removed_ids: removed,
        }
    }

    /// Chains a later stage's report onto this one.
    pub fn merge(mut self, next: CleansingReport) -> Self {
        debug_assert_eq!(self.output_count, next.input_count);
        self.exact_duplicates_removed += next.exact_duplicates_removed;
        self.near_duplicates_removed += next.near_duplicates_removed;
        self.low_quality_removed += next.low_quality_removed;
        self.output_count = next.output_count;
        self.removed_ids.extend(next.removed_ids);
        self
    }
}

fn split(
    gallery: Gallery,
    mut keep: impl FnMut(usize, &EmbeddingRecord) -> Option<RemovalReason>,
) -> (Gallery, CleansingReport) {
    let dimension = gallery.dimension();
    let input_count = gallery.len();
    let mut kept = Vec::with_capacity(input_count);
    let mut removed = Vec::new();
    for (i, r) in gallery.into_records().into_iter().enumerate() {
        match keep(i, &r) {
            None => kept.push(r),
            Some(reason) => removed.push(Removal { id: r.id, reason }),
        }
    }
    (
        Gallery::derived(dimension, kept),
        CleansingReport::from_removals(input_count, removed),
    )
}

/// Drops every record whose vector is bitwise identical to an earlier one.
pub fn dedup_exact(gallery: Gallery) -> (Gallery, CleansingReport) {
    let mut seen: HashSet<Vec<u32>> = HashSet::new();
    split(gallery, |_, r| {
        let key: Vec<u32> = r.vector.iter().map(|v| v.to_bits()).collect();
        if seen.insert(key) {
            None
        } else {
            Some(RemovalReason::ExactDuplicate)
        }
    })
}

/// Greedy near-duplicate removal within each make/model: a record is dropped
/// when its match score to an already-kept record of the same label reaches
/// `sim_threshold`.
pub fn dedup_near(gallery: Gallery, sim_threshold: f64) -> Result<(Gallery, CleansingReport)> {
    if !(0.0..=1.0).contains(&sim_threshold) {
        return Err(Error::InvalidArgument(format!(
            "near-duplicate threshold {sim_threshold} outside [0,1]"
        )));
    }
    let removed: Vec<bool> = {
        let scorer = NormedVectors::new(gallery.records())?;
        // kept indices per (make, model)
        let mut kept: HashMap<(&str, &str), Vec<usize>> = HashMap::new();
        gallery
            .records()
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let group = kept.entry((r.make.as_str(), r.model.as_str())).or_default();
                let dup = group.iter().any(|&j| scorer.score(i, j) >= sim_threshold);
                if !dup {
                    group.push(i);
                }
                dup
            })
            .collect()
    };
    let out = split(gallery, |i, _| removed[i].then_some(RemovalReason::NearDuplicate));
    Ok(out)
}

/// Keeps records with `quality >= min_quality`. Records without a quality
/// value are kept.
pub fn filter_quality(gallery: Gallery, min_quality: f64) -> (Gallery, CleansingReport) {
    split(gallery, |_, r| match r.quality {
        Some(q) if q < min_quality => Some(RemovalReason::LowQuality),
        _ => None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CleansingOptions {
    pub near_threshold: Option<f64>,
    pub min_quality: Option<f64>,
}

impl Default for CleansingOptions {
    fn default() -> Self {
        CleansingOptions {
            near_threshold: Some(DEFAULT_NEAR_THRESHOLD),
            min_quality: None,
        }
    }
}

/// Exact dedup, then near dedup, then quality filtering.
pub fn cleanse(gallery: Gallery, opts: CleansingOptions) -> Result<(Gallery, CleansingReport)> {
    let (g, mut report) = dedup_exact(gallery);
    let g = match opts.near_threshold {
        Some(t) => {
            let (g, r) = dedup_near(g, t)?;
            report = report.merge(r);
            g
        }
        None => g,
    };
    let g = match opts.min_quality {
        Some(q) => {
            let (g, r) = filter_quality(g, q);
            report = report.merge(r);
            g
        }
        None => g,
    };
    Ok((g, report))
}
