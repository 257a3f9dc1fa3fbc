//! Verification and classification metrics: client/impostor score
//! densities, FAR/FRR curves and threshold policies, rank-1 accuracy and
//! per-track best-shot classification.

mod bestshot;
mod curves;
mod density;
mod rank1;
mod rates;

pub use bestshot::{best_shot_accuracy, best_shots, group_tracks, select_best, TrackBestShot};
pub use curves::{
    emit_densities, emit_error_rates, write_densities, write_error_rates, DENSITY_HEADER,
    RATES_HEADER,
};
pub use density::{
    pair_kind, pair_scores, percentile, score_densities, PairKind, PairScores, Pairing,
    ScoreDensities, BIN_COUNT,
};
pub use rank1::{
    balanced_accuracy, is_correct, predict_all, rank1_accuracy, rank1_densities,
    rank1_from_predictions, Granularity, Rank1Report,
};
pub use rates::{
    error_rates, error_rates_on, pick_threshold, uniform_grid, ErrorRates, ThresholdPolicy,
    DEFAULT_GRID_SIZE,
};
