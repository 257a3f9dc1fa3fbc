//! Linear classification heads over fixed embeddings.
//!
//! Two variants share one model type:
//!
//! * `Biased` is an ordinary affine layer, `W x + b`, scored by softmax
//!   probability. Trained on imbalanced data its bias (and row norms) absorb
//!   the class frequencies.
//! * `PriorFree` has no bias and keeps every centroid row on the unit sphere;
//!   inputs are normalized too, so each logit is the cosine between the input
//!   and a class centroid and nothing can encode a class prior. Its score is
//!   the winning cosine mapped onto the match-score axis.

mod file;
mod train;

pub use file::{load_head, read_head, save_head, write_head, HEAD_MAGIC, HEAD_VERSION};
pub use train::{
    gradient_check, loss_and_gradient, train_head, Gradient, Sample, TrainConfig,
};

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::embedding::{cosine_to_score, norm};
use crate::error::{Error, Result};

/// Tolerance on centroid norms for prior-free heads.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// Standard deviation of freshly initialized centroid entries.
pub const INIT_STD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Biased,
    PriorFree,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Biased => "biased",
            Variant::PriorFree => "prior-free",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "biased" => Ok(Variant::Biased),
            "prior-free" => Ok(Variant::PriorFree),
            other => Err(Error::InvalidArgument(format!("unknown head variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadModel {
    labels: Vec<String>,
    dimension: usize,
    /// Row-major `C x D`.
    centroids: Vec<f64>,
    bias: Option<Vec<f64>>,
    variant: Variant,
    seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class_index: usize,
    pub label: String,
    pub score: f64,
}

impl HeadModel {
    /// Builds a model and checks every invariant. Prior-free rows must
    /// already be unit length; use [`HeadModel::normalized`] to project them.
    pub fn new(
        labels: Vec<String>,
        dimension: usize,
        centroids: Vec<f64>,
        bias: Option<Vec<f64>>,
        variant: Variant,
        seed: u64,
    ) -> Result<Self> {
        let m = HeadModel {
            labels,
            dimension,
            centroids,
            bias,
            variant,
            seed,
        };
        m.validate()?;
        Ok(m)
    }

    /// Builds a prior-free model, projecting each row onto the unit sphere.
    pub fn normalized(labels: Vec<String>, dimension: usize, centroids: Vec<f64>, seed: u64) -> Result<Self> {
        let mut m = HeadModel {
            labels,
            dimension,
            centroids,
            bias: None,
            variant: Variant::PriorFree,
            seed,
        };
        m.check_shape()?;
        m.normalize_rows()?;
        m.validate()?;
        Ok(m)
    }

    /// Fresh model with seeded `N(0, INIT_STD^2)` rows and zero bias.
    pub fn random(labels: Vec<String>, dimension: usize, variant: Variant, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centroids = random_rows(&mut rng, labels.len(), dimension);
        let bias = (variant == Variant::Biased).then(|| vec![0.0; labels.len()]);
        let mut m = HeadModel {
            labels,
            dimension,
            centroids,
            bias,
            variant,
            seed,
        };
        m.check_shape()?;
        if variant == Variant::PriorFree {
            m.normalize_rows()?;
        }
        m.validate()?;
        Ok(m)
    }

    fn check_shape(&self) -> Result<()> {
        if self.labels.is_empty() {
            return Err(Error::InvalidArgument("head needs at least one class".into()));
        }
        if self.dimension == 0 {
            return Err(Error::InvalidArgument("head dimension must be positive".into()));
        }
        if self.centroids.len() != self.labels.len() * self.dimension {
            return Err(Error::InvalidArgument(format!(
                "centroid block has {} values, expected {} x {}",
                self.centroids.len(),
                self.labels.len(),
                self.dimension
            )));
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        self.check_shape()?;
        let mut seen = HashSet::new();
        for l in &self.labels {
            if !seen.insert(l) {
                return Err(Error::InvalidArgument(format!("duplicate class label {l:?}")));
            }
        }
        if self.centroids.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite centroid entry".into()));
        }
        match self.variant {
            Variant::Biased => match &self.bias {
                Some(b) if b.len() == self.labels.len() => {
                    if b.iter().any(|v| !v.is_finite()) {
                        return Err(Error::InvalidArgument("non-finite bias entry".into()));
                    }
                }
                Some(b) => {
                    return Err(Error::InvalidArgument(format!(
                        "bias has {} entries for {} classes",
                        b.len(),
                        self.labels.len()
                    )))
                }
                None => return Err(Error::InvalidArgument("biased head without bias".into())),
            },
            Variant::PriorFree => {
                if self.bias.is_some() {
                    return Err(Error::InvalidArgument("prior-free head with a bias".into()));
                }
                for (k, row) in self.rows().enumerate() {
                    let n = norm(row);
                    if (n - 1.0).abs() > UNIT_NORM_TOLERANCE {
                        return Err(Error::InvalidArgument(format!(
                            "prior-free centroid {k} has norm {n}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub(crate) fn normalize_rows(&mut self) -> Result<()> {
        let d = self.dimension;
        for row in self.centroids.chunks_mut(d) {
            let n = norm(row);
            if n == 0.0 {
                return Err(Error::ZeroNormVector(None));
            }
            row.iter_mut().for_each(|v| *v /= n);
        }
        Ok(())
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.labels.len()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn centroids(&self) -> &[f64] {
        &self.centroids
    }

    pub fn bias(&self) -> Option<&[f64]> {
        self.bias.as_deref()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.centroids[k * self.dimension..(k + 1) * self.dimension]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.centroids.chunks(self.dimension)
    }

    pub(crate) fn centroids_mut(&mut self) -> &mut [f64] {
        &mut self.centroids
    }

    pub(crate) fn bias_mut(&mut self) -> Option<&mut [f64]> {
        self.bias.as_deref_mut()
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// The input as the head sees it: raw for biased heads, unit-normalized
    /// for prior-free heads.
    pub(crate) fn prepare_input<T: Copy + Into<f64>>(&self, x: &[T]) -> Result<Vec<f64>> {
        if x.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                actual: x.len(),
                record: None,
            });
        }
        let mut v: Vec<f64> = x.iter().map(|&a| a.into()).collect();
        if self.variant == Variant::PriorFree {
            let n = norm(&v);
            if n == 0.0 {
                return Err(Error::ZeroNormVector(None));
            }
            v.iter_mut().for_each(|a| *a /= n);
        }
        Ok(v)
    }

    pub(crate) fn logits_prepared(&self, x: &[f64]) -> Vec<f64> {
        let mut z: Vec<f64> = self
            .rows()
            .map(|row| row.iter().zip(x).map(|(w, v)| w * v).sum())
            .collect();
        if let Some(b) = &self.bias {
            z.iter_mut().zip(b).for_each(|(z, b)| *z += b);
        }
        z
    }

    pub fn logits<T: Copy + Into<f64>>(&self, x: &[T]) -> Result<Vec<f64>> {
        Ok(self.logits_prepared(&self.prepare_input(x)?))
    }

    /// Per-class scores on the scale `predict` reports: softmax
    /// probabilities for biased heads, `(cos + 1) / 2` for prior-free heads.
    pub fn class_scores<T: Copy + Into<f64>>(&self, x: &[T]) -> Result<Vec<f64>> {
        let z = self.logits(x)?;
        Ok(match self.variant {
            Variant::Biased => softmax(&z),
            Variant::PriorFree => z.iter().map(|c| cosine_to_score(c.clamp(-1.0, 1.0))).collect(),
        })
    }

    /// Rank-1 class and its score; ties go to the lowest class index.
    pub fn predict<T: Copy + Into<f64>>(&self, x: &[T]) -> Result<Prediction> {
        let scores = self.class_scores(x)?;
        let mut best = 0;
        for (k, &v) in scores.iter().enumerate() {
            if v > scores[best] {
                best = k;
            }
        }
        Ok(Prediction {
            class_index: best,
            label: self.labels[best].clone(),
            score: scores[best],
        })
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

fn random_rows(rng: &mut ChaCha8Rng, rows: usize, dimension: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, INIT_STD).expect("valid normal");
    (0..rows * dimension).map(|_| normal.sample(rng)).collect()
}

/// Replaces the class set of a head. Rows (and bias entries) of labels that
/// also exist in `old` are copied verbatim; the others are freshly drawn from
/// `seed`. The variant is preserved.
pub fn reinit_classification_layer(old: &HeadModel, new_labels: Vec<String>, seed: u64) -> Result<HeadModel> {
    if new_labels.is_empty() {
        return Err(Error::InvalidArgument("new label set is empty".into()));
    }
    let d = old.dimension;
    let old_index: HashMap<&str, usize> = old
        .labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = Vec::with_capacity(new_labels.len() * d);
    let mut bias = old.bias.as_ref().map(|_| Vec::with_capacity(new_labels.len()));
    for label in &new_labels {
        // draw for every row so fresh rows do not depend on which labels overlap
        let mut fresh = random_rows(&mut rng, 1, d);
        match old_index.get(label.as_str()) {
            Some(&k) => {
                centroids.extend_from_slice(old.row(k));
                if let (Some(b), Some(ob)) = (bias.as_mut(), old.bias.as_ref()) {
                    b.push(ob[k]);
                }
            }
            None => {
                if old.variant == Variant::PriorFree {
                    let n = norm(&fresh);
                    fresh.iter_mut().for_each(|v| *v /= n);
                }
                centroids.extend_from_slice(&fresh);
                if let Some(b) = bias.as_mut() {
                    b.push(0.0);
                }
            }
        }
    }
    HeadModel::new(new_labels, d, centroids, bias, old.variant, seed)
}
