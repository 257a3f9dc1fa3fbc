//! Embedding-gallery toolkit for make/model classification and vehicle
//! re-identification.
//!
//! Pipeline stages, each usable on its own:
//!
//! 1. [`ingest`] removes exact and near-duplicate records and low-quality
//!    detections.
//! 2. [`cluster`] splits every make/model label into density-peak
//!    sub-clusters (`model#k`), discarding clusters below a minimum size.
//! 3. [`head`] trains a linear classification head, either biased or
//!    prior-free (bias removed, centroids hard-normalized).
//! 4. [`eval`] builds client/impostor score densities, FAR/FRR curves,
//!    threshold policies, rank-1 accuracy and per-track best shots.
//! 5. [`reid`] indexes best shots of a video gallery and answers filtered
//!    searches, locally or over HTTP.

pub mod cluster;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod format;
pub mod head;
pub mod ingest;
pub mod reid;
pub mod synth;

pub use embedding::{cosine_similarity, match_score, Color, EmbeddingRecord, Gallery};
pub use error::{Error, Result};
pub use format::{load_gallery, save_gallery, GalleryFormat};
pub use head::{HeadModel, Prediction, TrainConfig, Variant};
