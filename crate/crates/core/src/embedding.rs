//! Embedding records, galleries and the matching score shared by every stage.
//!
//! The matching score is cosine similarity rescaled onto `[0, 1]`, so score
//! densities, acceptance thresholds and prior-free classification scores all
//! live on one axis.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Color {
    pub name: String,
    pub score: f64,
}

/// One detection: identity, coarse label, optional video metadata and its
/// feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub id: String,
    pub make: String,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub track_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<Color>,
    #[serde(rename = "vec")]
    pub vector: Vec<f32>,
}

impl EmbeddingRecord {
    pub fn new(
        id: impl Into<String>,
        make: impl Into<String>,
        model: impl Into<String>,
        vector: Vec<f32>,
    ) -> Self {
        EmbeddingRecord {
            id: id.into(),
            make: make.into(),
            model: model.into(),
            track_id: None,
            frame: None,
            quality: None,
            color: None,
            vector,
        }
    }

    /// Model name with any `#k` cluster suffix removed.
    pub fn base_model(&self) -> &str {
        split_cluster_suffix(&self.model).0
    }

    /// Cluster index encoded in the model name by relabeling, if any.
    pub fn cluster_index(&self) -> Option<usize> {
        split_cluster_suffix(&self.model).1
    }

    /// Head class label for this record: `make/model`.
    pub fn class_label(&self) -> String {
        class_label(&self.make, &self.model)
    }

    fn validate(&self, dimension: usize) -> Result<()> {
        if self.vector.len() != dimension {
            return Err(Error::DimensionMismatch {
                expected: dimension,
                actual: self.vector.len(),
                record: Some(self.id.clone()),
            });
        }
        if let Some(i) = self.vector.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "record {:?}: vector entry {i} is not finite",
                self.id
            )));
        }
        if let Some(q) = self.quality {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::InvalidArgument(format!(
                    "record {:?}: quality {q} outside [0,1]",
                    self.id
                )));
            }
        }
        if let Some(c) = &self.color {
            if !(0.0..=1.0).contains(&c.score) {
                return Err(Error::InvalidArgument(format!(
                    "record {:?}: color score {} outside [0,1]",
                    self.id, c.score
                )));
            }
        }
        Ok(())
    }
}

/// Joins make and model into the class label used by classification heads.
pub fn class_label(make: &str, model: &str) -> String {
    format!("{make}/{model}")
}

/// Splits a class label into `(make, model)` at the first `/`.
pub fn split_class_label(label: &str) -> (&str, &str) {
    label.split_once('/').unwrap_or((label, ""))
}

/// Splits `"C#3"` into `("C", Some(3))`; names without a numeric suffix are
/// returned whole.
pub fn split_cluster_suffix(model: &str) -> (&str, Option<usize>) {
    if let Some((base, suffix)) = model.rsplit_once('#') {
        if !suffix.is_empty() && suffix.bytes().all(|b| b.is_ascii_digit()) {
            if let Ok(k) = suffix.parse() {
                return (base, Some(k));
            }
        }
    }
    (model, None)
}

/// An ordered set of records sharing one vector dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Gallery {
    dimension: usize,
    records: Vec<EmbeddingRecord>,
}

impl Gallery {
    /// Validates and wraps `records`. The dimension is taken from the first
    /// record.
    pub fn new(records: Vec<EmbeddingRecord>) -> Result<Self> {
        let first = records.first().ok_or(Error::EmptyGallery)?;
        let dimension = first.vector.len();
        if dimension == 0 {
            return Err(Error::InvalidArgument(format!(
                "record {:?} has an empty vector",
                first.id
            )));
        }
        Self::with_dimension(dimension, records)
    }

    /// Like [`Gallery::new`] but with an explicit dimension; an empty record
    /// list is allowed here so that filtering stages can report "nothing
    /// survived" without losing the dimension.
    pub fn with_dimension(dimension: usize, records: Vec<EmbeddingRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            r.validate(dimension)?;
            if !seen.insert(r.id.as_str()) {
                return Err(Error::DuplicateId(r.id.clone()));
            }
        }
        Ok(Gallery { dimension, records })
    }

    /// Builds a gallery from a subset of another gallery's records; the
    /// invariants already hold.
    pub(crate) fn derived(dimension: usize, records: Vec<EmbeddingRecord>) -> Self {
        Gallery { dimension, records }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<EmbeddingRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&EmbeddingRecord> {
        self.records.iter().find(|r| r.id == id)
    }
}

/// Euclidean norm accumulated in `f64`.
pub fn norm<T: Copy + Into<f64>>(v: &[T]) -> f64 {
    v.iter()
        .map(|&x| {
            let x: f64 = x.into();
            x * x
        })
        .sum::<f64>()
        .sqrt()
}

/// Dot product accumulated in `f64`.
pub fn dot<T: Copy + Into<f64>>(a: &[T], b: &[T]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let x: f64 = x.into();
            let y: f64 = y.into();
            x * y
        })
        .sum()
}

fn check_pair<T>(a: &[T], b: &[T]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
            record: None,
        });
    }
    Ok(())
}

/// Cosine of precomputed parts, clamped against rounding.
#[inline]
pub(crate) fn cosine_from_parts(dot: f64, norm_a: f64, norm_b: f64) -> f64 {
    (dot / (norm_a * norm_b)).clamp(-1.0, 1.0)
}

pub fn cosine_similarity<T: Copy + Into<f64>>(a: &[T], b: &[T]) -> Result<f64> {
    check_pair(a, b)?;
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNormVector(None));
    }
    Ok(cosine_from_parts(dot(a, b), na, nb))
}

/// Maps a cosine onto the `[0, 1]` score axis.
#[inline]
pub fn cosine_to_score(cosine: f64) -> f64 {
    (cosine + 1.0) / 2.0
}

/// `(cos(a, b) + 1) / 2`.
pub fn match_score<T: Copy + Into<f64>>(a: &[T], b: &[T]) -> Result<f64> {
    cosine_similarity(a, b).map(cosine_to_score)
}

/// Scores a set of vectors against each other with norms computed once.
/// Produces exactly the values [`match_score`] would.
pub(crate) struct NormedVectors<'a> {
    vectors: Vec<&'a [f32]>,
    norms: Vec<f64>,
}

impl<'a> NormedVectors<'a> {
    pub(crate) fn new(records: impl IntoIterator<Item = &'a EmbeddingRecord>) -> Result<Self> {
        let mut vectors = Vec::new();
        let mut norms = Vec::new();
        for r in records {
            let n = norm(&r.vector);
            if n == 0.0 {
                return Err(Error::ZeroNormVector(Some(r.id.clone())));
            }
            vectors.push(r.vector.as_slice());
            norms.push(n);
        }
        Ok(NormedVectors { vectors, norms })
    }

    pub(crate) fn len(&self) -> usize {
        self.vectors.len()
    }

    #[inline]
    pub(crate) fn score(&self, i: usize, j: usize) -> f64 {
        cosine_to_score(cosine_from_parts(
            dot(self.vectors[i], self.vectors[j]),
            self.norms[i],
            self.norms[j],
        ))
    }
}
