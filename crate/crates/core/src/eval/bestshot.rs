use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::rank1::{is_correct, Granularity};
use crate::embedding::{EmbeddingRecord, Gallery};
use crate::error::{Error, Result};
use crate::head::HeadModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrackBestShot {
    pub track_id: String,
    pub record_id: String,
    pub quality: f64,
    pub predicted_label: String,
    pub score: f64,
}

/// Orders candidates so the best shot comes first: higher quality, then
/// lower frame (records without a frame last), then smaller id.
fn best_first(a: &EmbeddingRecord, b: &EmbeddingRecord) -> Ordering {
    let qa = a.quality.unwrap_or(f64::NEG_INFINITY);
    let qb = b.quality.unwrap_or(f64::NEG_INFINITY);
    qb.total_cmp(&qa)
        .then_with(|| a.frame.unwrap_or(u64::MAX).cmp(&b.frame.unwrap_or(u64::MAX)))
        .then_with(|| a.id.cmp(&b.id))
}

/// Groups records by track, in track-id order. Every record needs a track
/// id and a quality.
pub fn group_tracks(gallery: &Gallery) -> Result<BTreeMap<&str, Vec<&EmbeddingRecord>>> {
    let mut tracks: BTreeMap<&str, Vec<&EmbeddingRecord>> = BTreeMap::new();
    for r in gallery.records() {
        let track = r
            .track_id
            .as_deref()
            .ok_or_else(|| Error::MissingTrackId(r.id.clone()))?;
        if r.quality.is_none() {
            return Err(Error::MissingQuality(r.id.clone()));
        }
        tracks.entry(track).or_default().push(r);
    }
    Ok(tracks)
}

/// The best-shot record of one track's members.
pub fn select_best<'a>(members: &[&'a EmbeddingRecord]) -> Option<&'a EmbeddingRecord> {
    members.iter().copied().min_by(|a, b| best_first(a, b))
}

/// One classified best shot per track, ordered by track id.
pub fn best_shots(gallery: &Gallery, model: &HeadModel) -> Result<Vec<TrackBestShot>> {
    group_tracks(gallery)?
        .into_iter()
        .map(|(track, members)| {
            let best = select_best(&members).expect("tracks are non-empty");
            let p = model.predict(&best.vector).map_err(|e| e.for_record(&best.id))?;
            Ok(TrackBestShot {
                track_id: track.to_string(),
                record_id: best.id.clone(),
                quality: best.quality.unwrap_or_default(),
                predicted_label: p.label,
                score: p.score,
            })
        })
        .collect()
}

/// Fraction of tracks whose best-shot prediction is correct.
pub fn best_shot_accuracy(gallery: &Gallery, shots: &[TrackBestShot], granularity: Granularity) -> f64 {
    if shots.is_empty() {
        return f64::NAN;
    }
    let correct = shots
        .iter()
        .filter(|s| {
            gallery
                .get(&s.record_id)
                .is_some_and(|r| is_correct(r, &s.predicted_label, granularity))
        })
        .count();
    correct as f64 / shots.len() as f64
}
