use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embedding::{split_class_label, split_cluster_suffix, Color, EmbeddingRecord, Gallery};
use crate::error::{Error, Result};
use crate::eval::{group_tracks, select_best};
use crate::head::{HeadModel, Variant};

pub const INDEX_FORMAT: &str = "reident-index/1";
pub const DEFAULT_LIMIT: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IndexMeta {
    pub gallery_count: usize,
    pub track_count: usize,
    pub head_variant: Variant,
    pub dimension: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Member {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frame: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quality: Option<f64>,
}

/// One track: its classified best shot plus every member detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrackEntry {
    pub track_id: String,
    pub record_id: String,
    pub quality: f64,
    pub predicted_label: String,
    pub predicted_make: String,
    /// Predicted model without any cluster suffix.
    pub predicted_model: String,
    pub shape_score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub color: Option<Color>,
    /// Ordered by frame (frameless last), then id.
    pub members: Vec<Member>,
}

/// Persisted re-identification index. Tracks are ordered by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Index {
    pub format: String,
    pub meta: IndexMeta,
    pub tracks: Vec<TrackEntry>,
}

fn frame_order(a: &EmbeddingRecord, b: &EmbeddingRecord) -> std::cmp::Ordering {
    a.frame
        .unwrap_or(u64::MAX)
        .cmp(&b.frame.unwrap_or(u64::MAX))
        .then_with(|| a.id.cmp(&b.id))
}

/// Classifies the best shot of every track once and records all members.
pub fn build_index(gallery: &Gallery, head: &HeadModel) -> Result<Index> {
    let tracks: BTreeMap<&str, Vec<&EmbeddingRecord>> = group_tracks(gallery)?;
    let mut entries = Vec::with_capacity(tracks.len());
    for (track, mut members) in tracks {
        let best = select_best(&members).expect("tracks are non-empty");
        let p = head.predict(&best.vector).map_err(|e| e.for_record(&best.id))?;
        let (make, model) = split_class_label(&p.label);
        let entry = TrackEntry {
            track_id: track.to_string(),
            record_id: best.id.clone(),
            quality: best.quality.unwrap_or_default(),
            predicted_make: make.to_string(),
            predicted_model: split_cluster_suffix(model).0.to_string(),
            predicted_label: p.label.clone(),
            shape_score: p.score,
            color: best.color.clone(),
            members: Vec::new(),
        };
        members.sort_by(|a, b| frame_order(a, b));
        entries.push(TrackEntry {
            members: members
                .iter()
                .map(|r| Member {
                    id: r.id.clone(),
                    frame: r.frame,
                    quality: r.quality,
                })
                .collect(),
            ..entry
        });
    }
    Ok(Index {
        format: INDEX_FORMAT.to_string(),
        meta: IndexMeta {
            gallery_count: gallery.len(),
            track_count: entries.len(),
            head_variant: head.variant(),
            dimension: gallery.dimension(),
        },
        tracks: entries,
    })
}

impl Index {
    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("index serializes");
        out.push(b'\n');
        out
    }

    pub fn from_json(bytes: &[u8], source: &str) -> Result<Self> {
        let index: Index = serde_json::from_slice(bytes).map_err(|e| Error::parse(source, e.to_string()))?;
        if index.format != INDEX_FORMAT {
            return Err(Error::parse(source, format!("unsupported index format {:?}", index.format)));
        }
        if index.meta.track_count != index.tracks.len() {
            return Err(Error::parse(source, "track count does not match meta"));
        }
        if index.tracks.windows(2).any(|w| w[0].track_id >= w[1].track_id) {
            return Err(Error::parse(source, "tracks are not strictly ordered by id"));
        }
        Ok(index)
    }

    pub fn track(&self, track_id: &str) -> Option<&TrackEntry> {
        self.tracks
            .binary_search_by(|t| t.track_id.as_str().cmp(track_id))
            .ok()
            .map(|i| &self.tracks[i])
    }
}

/// Writes next to `path` and renames over it, so readers see either the
/// old or the new file in full.
pub fn save_index(index: &Index, path: &Path) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("{} is not a file path", path.display())))?;
    let mut tmp = PathBuf::from(dir);
    tmp.push(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&index.to_json())?;
        f.sync_all()
    };
    if let Err(e) = write() {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(&tmp, e));
    }
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn load_index(path: &Path) -> Result<Index> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Index::from_json(&bytes, &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SearchQuery {
    pub make: Option<String>,
    pub model: Option<String>,
    pub color: Option<String>,
    pub min_score: f64,
    pub limit: usize,
}

impl Default for SearchQuery {
    fn default() -> Self {
        SearchQuery {
            make: None,
            model: None,
            color: None,
            min_score: 0.0,
            limit: DEFAULT_LIMIT,
        }
    }
}

impl SearchQuery {
    pub fn validate(&self) -> Result<()> {
        let given = |f: &Option<String>| f.as_deref().is_some_and(|s| !s.is_empty());
        if !given(&self.make) && !given(&self.model) && !given(&self.color) {
            return Err(Error::BadQuery("at least one of make, model, color is required".into()));
        }
        if !(0.0..=1.0).contains(&self.min_score) {
            return Err(Error::BadQuery(format!("min_score {} outside [0, 1]", self.min_score)));
        }
        if self.limit == 0 {
            return Err(Error::BadQuery("limit must be positive".into()));
        }
        Ok(())
    }

    fn matches(&self, t: &TrackEntry) -> bool {
        let eq = |want: &Option<String>, have: &str| {
            want.as_deref()
                .filter(|w| !w.is_empty())
                .is_none_or(|w| w.to_lowercase() == have.to_lowercase())
        };
        eq(&self.make, &t.predicted_make)
            && eq(&self.model, &t.predicted_model)
            && self
                .color
                .as_deref()
                .filter(|c| !c.is_empty())
                .is_none_or(|c| t.color.as_ref().is_some_and(|tc| tc.name == c))
            && t.shape_score >= self.min_score
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SearchEntry {
    pub track_id: String,
    pub record_id: String,
    pub predicted_make: String,
    pub predicted_model: String,
    pub predicted_label: String,
    pub shape_score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub color_name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub color_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub entries: Vec<SearchEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrackDetail {
    pub track_id: String,
    pub best_shot_record_id: String,
    pub members: Vec<Member>,
}

impl Index {
    /// Filters best shots, highest shape score first (ties by track id).
    pub fn search(&self, q: &SearchQuery) -> Result<SearchResult> {
        q.validate()?;
        let mut hits: Vec<&TrackEntry> = self.tracks.iter().filter(|t| q.matches(t)).collect();
        hits.sort_by(|a, b| {
            b.shape_score
                .total_cmp(&a.shape_score)
                .then_with(|| a.track_id.cmp(&b.track_id))
        });
        hits.truncate(q.limit);
        Ok(SearchResult {
            entries: hits
                .into_iter()
                .map(|t| SearchEntry {
                    track_id: t.track_id.clone(),
                    record_id: t.record_id.clone(),
                    predicted_make: t.predicted_make.clone(),
                    predicted_model: t.predicted_model.clone(),
                    predicted_label: t.predicted_label.clone(),
                    shape_score: t.shape_score,
                    color_name: t.color.as_ref().map(|c| c.name.clone()),
                    color_score: t.color.as_ref().map(|c| c.score),
                })
                .collect(),
        })
    }

    pub fn track_detail(&self, track_id: &str) -> Result<TrackDetail> {
        let t = self
            .track(track_id)
            .ok_or_else(|| Error::UnknownTrack(track_id.to_string()))?;
        Ok(TrackDetail {
            track_id: t.track_id.clone(),
            best_shot_record_id: t.record_id.clone(),
            members: t.members.clone(),
        })
    }
}
