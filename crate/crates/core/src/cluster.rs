//! Density-peak label refinement.
//!
//! Each make/model group is split into sub-clusters by repeatedly taking the
//! unassigned record with the most unassigned neighbours (match score at or
//! above a fixed threshold) and turning its neighbourhood into a cluster.
//! Clusters smaller than the minimum size are discarded; the rest become the
//! refined classes `model#k`.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingRecord, Gallery, NormedVectors};
use crate::error::{Error, Result};

pub const DEFAULT_CLUSTER_THRESHOLD: f64 = 0.75;
pub const DEFAULT_MIN_CLUSTER_SIZE: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClusterParams {
    pub sim_threshold: f64,
    pub min_cluster_size: usize,
}

impl ClusterParams {
    pub fn new(sim_threshold: f64, min_cluster_size: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&sim_threshold) {
            return Err(Error::InvalidArgument(format!(
                "cluster threshold {sim_threshold} outside [0,1]"
            )));
        }
        if min_cluster_size == 0 {
            return Err(Error::InvalidArgument("minimum cluster size must be >= 1".into()));
        }
        Ok(ClusterParams {
            sim_threshold,
            min_cluster_size,
        })
    }
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            sim_threshold: DEFAULT_CLUSTER_THRESHOLD,
            min_cluster_size: DEFAULT_MIN_CLUSTER_SIZE,
        }
    }
}

/// Symmetric `n x n` matrix of match scores with a unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    n: usize,
    data: Vec<f64>,
}

impl ScoreMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

pub fn pairwise_scores<'a>(
    records: impl IntoIterator<Item = &'a EmbeddingRecord>,
) -> Result<ScoreMatrix> {
    let scorer = NormedVectors::new(records)?;
    let n = scorer.len();
    let mut data = vec![0.0; n * n];
    data.par_chunks_mut(n.max(1))
        .enumerate()
        .for_each(|(i, row)| {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = if i == j { 1.0 } else { scorer.score(i, j) };
            }
        });
    Ok(ScoreMatrix { n, data })
}

/// One extraction step: the density peak and the members it claimed, as
/// indices into the group's record list (ascending).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extraction {
    pub peak: usize,
    pub density: usize,
    pub members: Vec<usize>,
}

/// Runs the extraction loop over a precomputed score matrix. Densities are
/// maintained incrementally, so the whole loop is `O(n^2)`.
pub fn extract_peaks(scores: &ScoreMatrix, sim_threshold: f64) -> Vec<Extraction> {
    let n = scores.len();
    let neighbours: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            scores
                .row(i)
                .iter()
                .enumerate()
                .filter(|&(_, &s)| s >= sim_threshold)
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    let mut density: Vec<usize> = neighbours.iter().map(Vec::len).collect();
    let mut alive = vec![true; n];
    let mut remaining = n;
    let mut out = Vec::new();
    while remaining > 0 {
        let mut peak = usize::MAX;
        for i in 0..n {
            if alive[i] && (peak == usize::MAX || density[i] > density[peak]) {
                peak = i;
            }
        }
        let peak_density = density[peak];
        let members: Vec<usize> = neighbours[peak].iter().copied().filter(|&j| alive[j]).collect();
        debug_assert!(members.contains(&peak));
        for &m in &members {
            alive[m] = false;
        }
        for &m in &members {
            for &k in &neighbours[m] {
                if alive[k] {
                    density[k] -= 1;
                }
            }
        }
        remaining -= members.len();
        out.push(Extraction {
            peak,
            density: peak_density,
            members,
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClusterAssignment {
    pub record_id: String,
    pub make: String,
    pub model: String,
    /// `None` marks a record whose cluster fell below the minimum size.
    pub cluster_index: Option<usize>,
}

impl ClusterAssignment {
    pub fn is_discarded(&self) -> bool {
        self.cluster_index.is_none()
    }
}

/// Per make/model summary, used for the cluster report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GroupSummary {
    pub make: String,
    pub model: String,
    pub record_count: usize,
    /// Sizes of accepted clusters in extraction order.
    pub cluster_sizes: Vec<usize>,
    pub discarded_count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClusteringResult {
    pub params: Option<ClusterParams>,
    pub assignments: Vec<ClusterAssignment>,
    pub cluster_count: usize,
    pub discarded_count: usize,
    pub class_count_before: usize,
    pub class_count_after: usize,
    pub groups: Vec<GroupSummary>,
}

impl ClusteringResult {
    fn merge(params: ClusterParams, parts: Vec<ClusteringResult>) -> Self {
        let mut out = ClusteringResult {
            params: Some(params),
            ..Default::default()
        };
        for p in parts {
            out.assignments.extend(p.assignments);
            out.cluster_count += p.cluster_count;
            out.discarded_count += p.discarded_count;
            out.class_count_before += p.class_count_before;
            out.class_count_after += p.class_count_after;
            out.groups.extend(p.groups);
        }
        out
    }
}

/// Clusters one make/model group. All records must share make and model.
pub fn extract_density_clusters(
    records: &[EmbeddingRecord],
    params: ClusterParams,
) -> Result<ClusteringResult> {
    let Some(first) = records.first() else {
        return Ok(ClusteringResult {
            params: Some(params),
            ..Default::default()
        });
    };
    if let Some(r) = records
        .iter()
        .find(|r| r.make != first.make || r.model != first.model)
    {
        return Err(Error::InvalidArgument(format!(
            "record {:?} is {}/{}, expected {}/{}",
            r.id, r.make, r.model, first.make, first.model
        )));
    }
    let scores = pairwise_scores(records)?;
    let extractions = extract_peaks(&scores, params.sim_threshold);

    let mut assignments = Vec::with_capacity(records.len());
    let mut cluster_sizes = Vec::new();
    let mut discarded = 0;
    for e in &extractions {
        let index = if e.members.len() >= params.min_cluster_size {
            cluster_sizes.push(e.members.len());
            Some(cluster_sizes.len() - 1)
        } else {
            discarded += e.members.len();
            None
        };
        assignments.extend(e.members.iter().map(|&m| ClusterAssignment {
            record_id: records[m].id.clone(),
            make: first.make.clone(),
            model: first.model.clone(),
            cluster_index: index,
        }));
    }
    let accepted = cluster_sizes.len();
    Ok(ClusteringResult {
        params: Some(params),
        assignments,
        cluster_count: accepted,
        discarded_count: discarded,
        class_count_before: 1,
        class_count_after: accepted,
        groups: vec![GroupSummary {
            make: first.make.clone(),
            model: first.model.clone(),
            record_count: records.len(),
            cluster_sizes,
            discarded_count: discarded,
        }],
    })
}

/// Clusters every make/model group of the gallery independently. Output is
/// ordered by `(make, model)` and then by extraction order.
pub fn cluster_gallery(gallery: &Gallery, params: ClusterParams) -> Result<ClusteringResult> {
    let mut groups: BTreeMap<(&str, &str), Vec<EmbeddingRecord>> = BTreeMap::new();
    for r in gallery.records() {
        groups
            .entry((r.make.as_str(), r.model.as_str()))
            .or_default()
            .push(r.clone());
    }
    let parts = groups
        .into_par_iter()
        .map(|(_, recs)| extract_density_clusters(&recs, params))
        .collect::<Result<Vec<_>>>()?;
    Ok(ClusteringResult::merge(params, parts))
}

/// Rewrites `model` to `model#k` for each record's accepted cluster. Records
/// in discarded clusters are dropped or left with their original label.
pub fn relabel_gallery(
    gallery: &Gallery,
    result: &ClusteringResult,
    drop_discarded: bool,
) -> Result<Gallery> {
    let by_id: HashMap<&str, &ClusterAssignment> = result
        .assignments
        .iter()
        .map(|a| (a.record_id.as_str(), a))
        .collect();
    let mut out = Vec::with_capacity(gallery.len());
    for r in gallery.records() {
        let a = by_id
            .get(r.id.as_str())
            .ok_or_else(|| Error::MissingAssignment(r.id.clone()))?;
        match a.cluster_index {
            Some(k) => {
                let mut r = r.clone();
                r.model = format!("{}#{k}", r.model);
                out.push(r);
            }
            None if drop_discarded => {}
            None => out.push(r.clone()),
        }
    }
    Ok(Gallery::derived(gallery.dimension(), out))
}
