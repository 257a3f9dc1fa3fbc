use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingRecord, Gallery, NormedVectors};
use crate::error::{Error, Result};

pub const BIN_COUNT: usize = 256;

/// Which records count as the same class for client pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pairing {
    /// Same make and base model (cluster suffix ignored).
    Model,
    /// Same make, model and cluster index. Records without a cluster suffix
    /// never form client pairs in this view.
    RefinedCluster,
}

impl std::str::FromStr for Pairing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "model" => Ok(Pairing::Model),
            "cluster" | "refined-cluster" => Ok(Pairing::RefinedCluster),
            other => Err(Error::InvalidArgument(format!("unknown pairing {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairKind {
    Client,
    Impostor,
    /// Same model but a different cluster (or no cluster) in the refined view.
    Excluded,
}

/// Classifies a pair. Impostors are always cross-model, in both views.
pub fn pair_kind(a: &EmbeddingRecord, b: &EmbeddingRecord, pairing: Pairing) -> PairKind {
    if a.make != b.make || a.base_model() != b.base_model() {
        return PairKind::Impostor;
    }
    match pairing {
        Pairing::Model => PairKind::Client,
        Pairing::RefinedCluster => match (a.cluster_index(), b.cluster_index()) {
            (Some(x), Some(y)) if x == y => PairKind::Client,
            _ => PairKind::Excluded,
        },
    }
}

/// Raw client and impostor scores over all unordered pairs, in pair order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairScores {
    pub client: Vec<f64>,
    pub impostor: Vec<f64>,
}

pub fn pair_scores(gallery: &Gallery, pairing: Pairing) -> Result<PairScores> {
    let recs = gallery.records();
    let scorer = NormedVectors::new(recs)?;
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..recs.len())
        .into_par_iter()
        .map(|i| {
            let mut client = Vec::new();
            let mut impostor = Vec::new();
            for j in i + 1..recs.len() {
                match pair_kind(&recs[i], &recs[j], pairing) {
                    PairKind::Client => client.push(scorer.score(i, j)),
                    PairKind::Impostor => impostor.push(scorer.score(i, j)),
                    PairKind::Excluded => {}
                }
            }
            (client, impostor)
        })
        .collect();
    let mut out = PairScores::default();
    for (c, i) in rows {
        out.client.extend(c);
        out.impostor.extend(i);
    }
    Ok(out)
}

/// Client/impostor histograms over `[0, 1]`, plus the exact sorted scores
/// that threshold sweeps are computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScoreDensities {
    pub bin_edges: Vec<f64>,
    pub client_counts: Vec<u64>,
    pub impostor_counts: Vec<u64>,
    pub client_total: u64,
    pub impostor_total: u64,
    #[serde(skip)]
    client_scores: Vec<f64>,
    #[serde(skip)]
    impostor_scores: Vec<f64>,
}

fn bin_of(score: f64) -> usize {
    ((score * BIN_COUNT as f64) as usize).min(BIN_COUNT - 1)
}

fn sorted_checked(mut v: Vec<f64>) -> Result<Vec<f64>> {
    if let Some(s) = v.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::InvalidArgument(format!("score {s} outside [0,1]")));
    }
    v.sort_by(f64::total_cmp);
    Ok(v)
}

impl ScoreDensities {
    /// Builds densities from raw scores. Either side may be empty here;
    /// threshold sweeps reject empty sides.
    pub fn from_scores(client: Vec<f64>, impostor: Vec<f64>) -> Result<Self> {
        let client = sorted_checked(client)?;
        let impostor = sorted_checked(impostor)?;
        let hist = |scores: &[f64]| {
            let mut h = vec![0u64; BIN_COUNT];
            scores.iter().for_each(|&s| h[bin_of(s)] += 1);
            h
        };
        Ok(ScoreDensities {
            bin_edges: (0..=BIN_COUNT).map(|i| i as f64 / BIN_COUNT as f64).collect(),
            client_counts: hist(&client),
            impostor_counts: hist(&impostor),
            client_total: client.len() as u64,
            impostor_total: impostor.len() as u64,
            client_scores: client,
            impostor_scores: impostor,
        })
    }

    /// Sorted client scores.
    pub fn client_scores(&self) -> &[f64] {
        &self.client_scores
    }

    /// Sorted impostor scores.
    pub fn impostor_scores(&self) -> &[f64] {
        &self.impostor_scores
    }

    /// Fraction of client scores strictly below `t`.
    pub fn client_mass_below(&self, t: f64) -> f64 {
        if self.client_scores.is_empty() {
            return 0.0;
        }
        self.client_scores.partition_point(|&s| s < t) as f64 / self.client_scores.len() as f64
    }

    /// Nearest-rank percentile of the impostor scores, `p` in `[0, 100]`.
    pub fn impostor_percentile(&self, p: f64) -> Option<f64> {
        percentile(&self.impostor_scores, p)
    }
}

/// Nearest-rank percentile of sorted values.
pub fn percentile(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// All-pairs client/impostor densities of a gallery.
pub fn score_densities(gallery: &Gallery, pairing: Pairing) -> Result<ScoreDensities> {
    let scores = pair_scores(gallery, pairing)?;
    if scores.client.is_empty() {
        return Err(Error::NoClientPairs);
    }
    if scores.impostor.is_empty() {
        return Err(Error::NoImpostorPairs);
    }
    ScoreDensities::from_scores(scores.client, scores.impostor)
}
