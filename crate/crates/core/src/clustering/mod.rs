//! K-means load-profile clustering over 36-entry ratio vectors, with inertia
//! and silhouette diagnostics for choosing k, and nearest-centroid assignment
//! of full or partial profiles.

mod kmeans;
mod silhouette;

pub use kmeans::{kmeans, lloyd, KMeansFit, MAX_ITERATIONS};
pub use silhouette::silhouette_score;

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{ProfileVector, MONTHS, PROFILE_LEN, SLOTS};

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_RESTARTS: usize = 10;
pub const DEFAULT_K: usize = 5;
/// k selection keeps the smallest k whose silhouette is within this of the best.
pub const SILHOUETTE_TOLERANCE: f64 = 0.01;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("vector lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no points to cluster")]
    NoPoints,
    #[error("invalid cluster count k = {0}")]
    BadK(usize),
    #[error("{points} vectors cannot form {k} clusters")]
    TooFewPoints { points: usize, k: usize },
    #[error("restarts must be at least 1")]
    NoRestarts,
    #[error("silhouette needs at least two clusters")]
    SingleCluster,
    #[error("profile vector is not fully observed")]
    NotFullyObserved,
    #[error("profile vector has no observed months")]
    NoObservedMonths,
    #[error("k range {start}..={end} must lie within 2..={max}")]
    BadKRange { start: usize, end: usize, max: usize },
    #[error("cluster id {0} out of range")]
    BadClusterId(usize),
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

pub(crate) fn squared_distance(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub(crate) fn euclidean(p: &[f64], q: &[f64]) -> f64 {
    squared_distance(p, q).sqrt()
}

/// `sqrt(Σ (p_i - q_i)²)`.
pub fn euclidean_distance(p: &[f64], q: &[f64]) -> Result<f64, ClusterError> {
    if p.len() != q.len() {
        return Err(ClusterError::LengthMismatch(p.len(), q.len()));
    }
    Ok(euclidean(p, q))
}

/// Fitted consumption profiles. Cluster ids are centroid indices, 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub seed: u64,
    pub restarts: usize,
    pub inertia: f64,
    pub silhouette: f64,
    pub centroids: Vec<Vec<f64>>,
    pub member_counts: Vec<usize>,
}

impl ClusterModel {
    pub fn centroid(&self, id: usize) -> Result<&[f64], ClusterError> {
        self.centroids
            .get(id)
            .map(Vec::as_slice)
            .ok_or(ClusterError::BadClusterId(id))
    }

    pub fn validate(&self) -> Result<(), ClusterError> {
        let bad = |m: String| Err(ClusterError::InvalidModel(m));
        if self.k < 2 {
            return bad(format!("k = {} (need at least 2)", self.k));
        }
        if self.centroids.len() != self.k || self.member_counts.len() != self.k {
            return bad(format!(
                "k = {} but {} centroids and {} member counts",
                self.k,
                self.centroids.len(),
                self.member_counts.len()
            ));
        }
        if let Some(c) = self.centroids.iter().find(|c| c.len() != PROFILE_LEN) {
            return bad(format!("centroid of length {} (need {PROFILE_LEN})", c.len()));
        }
        if self.centroids.iter().flatten().any(|x| !x.is_finite() || *x < 0.0) {
            return bad("centroid entries must be finite and non-negative".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ClusterError> {
        let model: ClusterModel =
            serde_json::from_str(text).map_err(|e| ClusterError::InvalidModel(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }
}

/// A model together with the labels its training vectors received.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterFit {
    pub model: ClusterModel,
    pub labels: Vec<usize>,
}

fn full_entries(vectors: &[ProfileVector]) -> Result<Vec<Vec<f64>>, ClusterError> {
    vectors
        .iter()
        .map(|v| {
            if v.is_full() {
                Ok(v.entries().to_vec())
            } else {
                Err(ClusterError::NotFullyObserved)
            }
        })
        .collect()
}

fn build_model(points: &[Vec<f64>], fit: KMeansFit, seed: u64, restarts: usize) -> ClusterFit {
    let k = fit.centroids.len();
    let mut member_counts = vec![0; k];
    fit.labels.iter().for_each(|&l| member_counts[l] += 1);
    // 0 when all points collapsed into one cluster
    let silhouette = silhouette_score(points, &fit.labels).unwrap_or(0.0);
    ClusterFit {
        model: ClusterModel {
            k,
            seed,
            restarts,
            inertia: fit.inertia,
            silhouette,
            centroids: fit.centroids,
            member_counts,
        },
        labels: fit.labels,
    }
}

fn check_k(k: usize) -> Result<(), ClusterError> {
    if k < 2 {
        Err(ClusterError::BadK(k))
    } else {
        Ok(())
    }
}

/// Fits k profiles to fully observed vectors and keeps the training labels.
pub fn kmeans_fit_labeled(
    vectors: &[ProfileVector],
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<ClusterFit, ClusterError> {
    check_k(k)?;
    let points = full_entries(vectors)?;
    let fit = kmeans(&points, k, seed, restarts)?;
    Ok(build_model(&points, fit, seed, restarts))
}

pub fn kmeans_fit(
    vectors: &[ProfileVector],
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<ClusterModel, ClusterError> {
    kmeans_fit_labeled(vectors, k, seed, restarts).map(|f| f.model)
}

/// Diagnostics for one k of the elbow table.
#[derive(Debug, Clone, PartialEq)]
pub struct KCandidate {
    pub k: usize,
    pub inertia: f64,
    pub silhouette: f64,
    pub fit: ClusterFit,
}

/// Fits every k in the range. Each k after the first is also warm-started from
/// the previous k's centroids plus the worst-fitting point, so the inertia
/// column never increases.
pub fn select_k(
    vectors: &[ProfileVector],
    k_range: RangeInclusive<usize>,
    seed: u64,
    restarts: usize,
) -> Result<Vec<KCandidate>, ClusterError> {
    let (start, end) = (*k_range.start(), *k_range.end());
    let max = vectors.len().saturating_sub(1);
    if start < 2 || end < start || end > max {
        return Err(ClusterError::BadKRange { start, end, max });
    }
    let points = full_entries(vectors)?;
    let mut table: Vec<KCandidate> = Vec::new();
    for k in k_range {
        let mut fit = kmeans(&points, k, seed, restarts)?;
        if let Some(prev) = table.last() {
            let warm = lloyd(&points, grow_centroids(&points, &prev.fit));
            if warm.inertia < fit.inertia {
                fit = warm;
            }
        }
        let fit = build_model(&points, fit, seed, restarts);
        table.push(KCandidate {
            k,
            inertia: fit.model.inertia,
            silhouette: fit.model.silhouette,
            fit,
        });
    }
    Ok(table)
}

fn grow_centroids(points: &[Vec<f64>], prev: &ClusterFit) -> Vec<Vec<f64>> {
    let mut worst = (0, -1.0);
    for (i, (p, &l)) in points.iter().zip(&prev.labels).enumerate() {
        let d = squared_distance(p, &prev.model.centroids[l]);
        if d > worst.1 {
            worst = (i, d);
        }
    }
    let mut centroids = prev.model.centroids.clone();
    centroids.push(points[worst.0].clone());
    centroids
}

/// Smallest k whose silhouette is within [`SILHOUETTE_TOLERANCE`] of the best.
pub fn choose_k(table: &[KCandidate]) -> Option<usize> {
    let best = table
        .iter()
        .map(|c| c.silhouette)
        .fold(f64::NEG_INFINITY, f64::max);
    table
        .iter()
        .filter(|c| c.silhouette >= best - SILHOUETTE_TOLERANCE)
        .map(|c| c.k)
        .min()
}

/// Nearest centroid to a fully observed vector; lowest id on ties.
pub fn assign_full(vector: &ProfileVector, model: &ClusterModel) -> Result<usize, ClusterError> {
    if !vector.is_full() {
        return Err(ClusterError::NotFullyObserved);
    }
    Ok(kmeans::nearest(vector.entries(), &model.centroids).0)
}

/// How a centroid is cut down to a partial user's observed months.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Truncation {
    /// Keep the observed entries and rescale them to sum to 1.
    #[default]
    Renormalize,
    /// Keep the observed entries as they are.
    TruncateOnly,
}

/// Observed-month slice of a centroid under the given truncation.
pub fn truncated_centroid(centroid: &[f64], observed: &[bool; MONTHS], mode: Truncation) -> Vec<f64> {
    let mut kept: Vec<f64> = (0..MONTHS)
        .filter(|&m| observed[m])
        .flat_map(|m| centroid[m * SLOTS..(m + 1) * SLOTS].iter().copied())
        .collect();
    if mode == Truncation::Renormalize {
        let mass: f64 = kept.iter().sum();
        if mass > 0.0 {
            kept.iter_mut().for_each(|x| *x /= mass);
        }
    }
    kept
}

/// Distance from a partial profile to every truncated centroid.
pub fn partial_distances(
    vector: &ProfileVector,
    model: &ClusterModel,
    mode: Truncation,
) -> Result<Vec<f64>, ClusterError> {
    if vector.observed_count() == 0 {
        return Err(ClusterError::NoObservedMonths);
    }
    let observed = vector.observed();
    let user = truncated_centroid(vector.entries(), observed, Truncation::TruncateOnly);
    Ok(model
        .centroids
        .iter()
        .map(|c| euclidean(&user, &truncated_centroid(c, observed, mode)))
        .collect())
}

fn argmin(distances: &[f64]) -> usize {
    let mut best = 0;
    for (j, &d) in distances.iter().enumerate() {
        if d < distances[best] {
            best = j;
        }
    }
    best
}

pub fn assign_partial_with(
    vector: &ProfileVector,
    model: &ClusterModel,
    mode: Truncation,
) -> Result<usize, ClusterError> {
    partial_distances(vector, model, mode).map(|d| argmin(&d))
}

/// Nearest profile over the observed months only, against renormalized
/// truncated centroids.
pub fn assign_partial(vector: &ProfileVector, model: &ClusterModel) -> Result<usize, ClusterError> {
    assign_partial_with(vector, model, Truncation::Renormalize)
}
