use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::density::ScoreDensities;
use crate::embedding::{split_class_label, split_cluster_suffix, EmbeddingRecord, Gallery};
use crate::error::{Error, Result};
use crate::head::{HeadModel, Prediction};

/// Label level at which a rank-1 prediction is judged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Granularity {
    Make,
    /// Make and model; cluster suffixes are ignored on both sides.
    MakeModel,
}

impl std::str::FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "make" => Ok(Granularity::Make),
            "make-model" | "makemodel" => Ok(Granularity::MakeModel),
            other => Err(Error::InvalidArgument(format!("unknown granularity {other:?}"))),
        }
    }
}

/// Whether a predicted head label names the record's class at `granularity`.
pub fn is_correct(record: &EmbeddingRecord, predicted_label: &str, granularity: Granularity) -> bool {
    let (make, model) = split_class_label(predicted_label);
    match granularity {
        Granularity::Make => make == record.make,
        Granularity::MakeModel => make == record.make && split_cluster_suffix(model).0 == record.base_model(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Rank1Report {
    /// Correct fraction of accepted records; NaN when nothing was accepted.
    pub accuracy: f64,
    pub coverage: f64,
    pub correct: usize,
    pub accepted: usize,
    pub total: usize,
}

impl Rank1Report {
    pub fn no_accepts(&self) -> bool {
        self.accepted == 0
    }
}

pub fn predict_all(model: &HeadModel, gallery: &Gallery) -> Result<Vec<Prediction>> {
    gallery
        .records()
        .iter()
        .map(|r| model.predict(&r.vector).map_err(|e| e.for_record(&r.id)))
        .collect()
}

/// Rank-1 accuracy, optionally rejecting predictions scoring below
/// `threshold`.
pub fn rank1_accuracy(
    model: &HeadModel,
    gallery: &Gallery,
    threshold: Option<f64>,
    granularity: Granularity,
) -> Result<Rank1Report> {
    let predictions = predict_all(model, gallery)?;
    Ok(rank1_from_predictions(gallery.records(), &predictions, threshold, granularity))
}

pub fn rank1_from_predictions(
    records: &[EmbeddingRecord],
    predictions: &[Prediction],
    threshold: Option<f64>,
    granularity: Granularity,
) -> Rank1Report {
    let mut accepted = 0;
    let mut correct = 0;
    for (r, p) in records.iter().zip(predictions) {
        if threshold.is_some_and(|t| p.score < t) {
            continue;
        }
        accepted += 1;
        if is_correct(r, &p.label, granularity) {
            correct += 1;
        }
    }
    let total = records.len();
    Rank1Report {
        accuracy: if accepted == 0 { f64::NAN } else { correct as f64 / accepted as f64 },
        coverage: if total == 0 { 0.0 } else { accepted as f64 / total as f64 },
        correct,
        accepted,
        total,
    }
}

/// Open-set score densities of a head over a labeled gallery. Per record,
/// the client score is the best score among head labels naming its class
/// and the impostor score the best among all other labels. A threshold on
/// these trades rejected correct classifications against accepted wrong
/// ones, on the same scale as `predict` scores.
pub fn rank1_densities(
    model: &HeadModel,
    gallery: &Gallery,
    granularity: Granularity,
) -> Result<ScoreDensities> {
    let (mut client, mut impostor) = (Vec::new(), Vec::new());
    for r in gallery.records() {
        let scores = model.class_scores(&r.vector).map_err(|e| e.for_record(&r.id))?;
        let (mut best_client, mut best_impostor) = (None::<f64>, None::<f64>);
        for (label, &s) in model.labels().iter().zip(&scores) {
            let slot = if is_correct(r, label, granularity) {
                &mut best_client
            } else {
                &mut best_impostor
            };
            *slot = Some(slot.map_or(s, |b| b.max(s)));
        }
        client.extend(best_client);
        impostor.extend(best_impostor);
    }
    ScoreDensities::from_scores(client, impostor)
}

/// Recall of each true class, averaged over the classes present.
pub fn balanced_accuracy(records: &[EmbeddingRecord], predictions: &[Prediction], granularity: Granularity) -> f64 {
    let mut per_class: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (r, p) in records.iter().zip(predictions) {
        let key = match granularity {
            Granularity::Make => r.make.clone(),
            Granularity::MakeModel => format!("{}/{}", r.make, r.base_model()),
        };
        let e = per_class.entry(key).or_default();
        e.1 += 1;
        if is_correct(r, &p.label, granularity) {
            e.0 += 1;
        }
    }
    if per_class.is_empty() {
        return f64::NAN;
    }
    per_class.values().map(|&(c, n)| c as f64 / n as f64).sum::<f64>() / per_class.len() as f64
}
