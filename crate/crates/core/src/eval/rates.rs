use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::density::ScoreDensities;
use crate::error::{Error, Result};

pub const DEFAULT_GRID_SIZE: usize = 1001;

/// FAR/FRR over an ascending threshold grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ErrorRates {
    pub thresholds: Vec<f64>,
    pub far: Vec<f64>,
    pub frr: Vec<f64>,
    pub eer: f64,
    pub eer_threshold: f64,
}

impl ErrorRates {
    /// FAR non-increasing and FRR non-decreasing along the grid.
    pub fn is_monotone(&self) -> bool {
        self.far.windows(2).all(|w| w[1] <= w[0]) && self.frr.windows(2).all(|w| w[1] >= w[0])
    }
}

pub fn uniform_grid(size: usize) -> Vec<f64> {
    match size {
        0 => vec![],
        1 => vec![0.0],
        n => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

/// FAR/FRR on a uniform grid of `grid_size` thresholds over `[0, 1]`.
pub fn error_rates(d: &ScoreDensities, grid_size: usize) -> Result<ErrorRates> {
    if grid_size < 2 {
        return Err(Error::InvalidArgument(format!("grid size {grid_size} < 2")));
    }
    error_rates_on(d, uniform_grid(grid_size))
}

/// FAR(t) = #{impostor >= t} / impostors, FRR(t) = #{client < t} / clients,
/// counted on the exact sorted scores.
pub fn error_rates_on(d: &ScoreDensities, thresholds: Vec<f64>) -> Result<ErrorRates> {
    let client = d.client_scores();
    let impostor = d.impostor_scores();
    if client.is_empty() || impostor.is_empty() {
        return Err(Error::EmptyDensity);
    }
    if thresholds.is_empty() || thresholds.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("thresholds must be non-empty and ascending".into()));
    }
    let (nc, ni) = (client.len() as f64, impostor.len() as f64);
    let far: Vec<f64> = thresholds
        .iter()
        .map(|&t| (impostor.len() - impostor.partition_point(|&s| s < t)) as f64 / ni)
        .collect();
    let frr: Vec<f64> = thresholds
        .iter()
        .map(|&t| client.partition_point(|&s| s < t) as f64 / nc)
        .collect();
    let mut best = 0;
    for i in 1..thresholds.len() {
        if (far[i] - frr[i]).abs() < (far[best] - frr[best]).abs() {
            best = i;
        }
    }
    Ok(ErrorRates {
        eer: (far[best] + frr[best]) / 2.0,
        eer_threshold: thresholds[best],
        thresholds,
        far,
        frr,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ThresholdPolicy {
    Eer,
    FarAtMost(f64),
    FrrAtMost(f64),
}

impl fmt::Display for ThresholdPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdPolicy::Eer => write!(f, "eer"),
            ThresholdPolicy::FarAtMost(a) => write!(f, "far:{a}"),
            ThresholdPolicy::FrrAtMost(b) => write!(f, "frr:{b}"),
        }
    }
}

impl FromStr for ThresholdPolicy {
    type Err = Error;

    /// `eer`, `far:<alpha>` or `frr:<beta>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("bad threshold policy {s:?}; use eer, far:<a> or frr:<b>"));
        if s == "eer" {
            return Ok(ThresholdPolicy::Eer);
        }
        let (kind, value) = s.split_once(':').ok_or_else(bad)?;
        let v: f64 = value.parse().map_err(|_| bad())?;
        if !(0.0..=1.0).contains(&v) {
            return Err(bad());
        }
        match kind {
            "far" => Ok(ThresholdPolicy::FarAtMost(v)),
            "frr" => Ok(ThresholdPolicy::FrrAtMost(v)),
            _ => Err(bad()),
        }
    }
}

pub fn pick_threshold(e: &ErrorRates, policy: ThresholdPolicy) -> Result<f64> {
    let found = match policy {
        ThresholdPolicy::Eer => Some(e.eer_threshold),
        ThresholdPolicy::FarAtMost(alpha) => e
            .far
            .iter()
            .position(|&f| f <= alpha)
            .map(|i| e.thresholds[i]),
        ThresholdPolicy::FrrAtMost(beta) => e
            .frr
            .iter()
            .rposition(|&f| f <= beta)
            .map(|i| e.thresholds[i]),
    };
    found.ok_or_else(|| Error::Unsatisfiable(policy.to_string()))
}
