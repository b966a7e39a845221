//! SMAPE scoring of back-filled months and the oldest-months hold-out protocol.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backfill::{backfill_from_profile, BackfillError, BackfillOptions};
use crate::clustering::{assign_partial_with, ClusterModel};
use crate::features::{ratio_vector, Slot, SlotUsage, MONTHS, SLOTS};
use crate::ingest::Mprn;

/// Longest run of removed months the hold-out protocol covers.
pub const MAX_REMOVED_MONTHS: usize = 6;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("SMAPE needs at least one point")]
    Empty,
    #[error("forecast has {forecast} points but actual has {actual}")]
    LengthMismatch { forecast: usize, actual: usize },
    #[error("SMAPE operands must be finite and non-negative")]
    NegativeValue,
    #[error("user must have all 12 months observed")]
    NotFullyObserved,
    #[error("removed months must be between 1 and {MAX_REMOVED_MONTHS}, got {0}")]
    BadRemovedMonths(usize),
    #[error(transparent)]
    Backfill(#[from] BackfillError),
}

/// Symmetric mean absolute percentage error in percent, with denominator
/// `|A| + |F|` so the result lies in [0, 100]. A point with `F = A = 0` scores 0.
pub fn smape(forecast: &[f64], actual: &[f64]) -> Result<f64, EvalError> {
    if forecast.len() != actual.len() {
        return Err(EvalError::LengthMismatch {
            forecast: forecast.len(),
            actual: actual.len(),
        });
    }
    if forecast.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut sum = 0.0;
    for (&f, &a) in forecast.iter().zip(actual) {
        if !(f >= 0.0 && a >= 0.0 && f.is_finite() && a.is_finite()) {
            return Err(EvalError::NegativeValue);
        }
        let denom = a.abs() + f.abs();
        if denom > 0.0 {
            sum += (f - a).abs() / denom;
        }
    }
    Ok(100.0 * sum / forecast.len() as f64)
}

/// Combines slot SMAPEs weighted by their 13/9/2 daily hours.
pub fn weighted_smape(day: f64, night: f64, peak: f64) -> f64 {
    let hours = |s: Slot| f64::from(s.hours());
    (hours(Slot::Day) * day + hours(Slot::Night) * night + hours(Slot::Peak) * peak) / 24.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmapeReport {
    /// Indexed by [`Slot::index`].
    pub per_slot: [f64; SLOTS],
    pub weighted: f64,
    pub n_points: usize,
}

impl SmapeReport {
    pub fn slot(&self, slot: Slot) -> f64 {
        self.per_slot[slot.index()]
    }
}

/// Scores the given months of `forecast` against `actual`, slot by slot.
pub fn smape_report(
    forecast: &[SlotUsage],
    actual: &[SlotUsage],
    months: &[usize],
) -> Result<SmapeReport, EvalError> {
    let pick = |set: &[SlotUsage], s: Slot| -> Vec<f64> {
        months
            .iter()
            .filter_map(|&m| set.iter().find(|u| u.month_index == m))
            .map(|u| u.kwh(s))
            .collect()
    };
    let mut per_slot = [0.0; SLOTS];
    for s in Slot::ALL {
        per_slot[s.index()] = smape(&pick(forecast, s), &pick(actual, s))?;
    }
    Ok(SmapeReport {
        weighted: weighted_smape(per_slot[0], per_slot[1], per_slot[2]),
        per_slot,
        n_points: months.len(),
    })
}

/// Weighted SMAPE of every profile for each number of removed oldest months.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutMatrix {
    /// `cells[profile][d - 1]` is the weighted SMAPE with `d` months removed.
    pub cells: Vec<Vec<f64>>,
    /// Freely assigned profile for each removal length.
    pub assigned: Vec<usize>,
}

impl HoldoutMatrix {
    pub fn profiles(&self) -> usize {
        self.cells.len()
    }

    pub fn durations(&self) -> usize {
        self.assigned.len()
    }

    pub fn cell(&self, profile: usize, removed: usize) -> f64 {
        self.cells[profile][removed - 1]
    }

    /// Whether the assigned profile scores the column minimum for `removed`.
    pub fn assigned_is_best(&self, removed: usize) -> bool {
        let a = self.cell(self.assigned[removed - 1], removed);
        (0..self.profiles()).all(|p| a <= self.cell(p, removed))
    }
}

/// Removes the `d` oldest months for `d = 1..=max_removed`, back-fills the gap
/// from every profile and scores the imputed months against the real ones.
pub fn holdout_eval(
    full_user: &[SlotUsage],
    model: &ClusterModel,
    max_removed: usize,
    options: BackfillOptions,
) -> Result<HoldoutMatrix, EvalError> {
    if !(1..=MAX_REMOVED_MONTHS).contains(&max_removed) {
        return Err(EvalError::BadRemovedMonths(max_removed));
    }
    let mut actual = full_user.to_vec();
    actual.sort_by_key(|u| u.month_index);
    if actual.len() != MONTHS || actual.iter().enumerate().any(|(i, u)| u.month_index != i) {
        return Err(EvalError::NotFullyObserved);
    }

    let mut cells = vec![Vec::with_capacity(max_removed); model.k];
    let mut assigned = Vec::with_capacity(max_removed);
    for d in 1..=max_removed {
        let kept = &actual[d..];
        let removed: Vec<usize> = (0..d).collect();
        let profile = ratio_vector(kept).map_err(BackfillError::from)?;
        assigned.push(assign_partial_with(&profile, model, options.truncation).map_err(BackfillError::from)?);
        for (p, row) in cells.iter_mut().enumerate() {
            let filled = backfill_from_profile(kept, model, p, options.scale)?;
            row.push(smape_report(&filled.completed, &actual, &removed)?.weighted);
        }
    }
    Ok(HoldoutMatrix { cells, assigned })
}

const HOLDOUT_HEADER: [&str; 5] = ["user", "profile_id", "removed_months", "weighted_smape_pct", "assigned"];

/// One row per (user, profile, removed months); profile ids are written 1-based.
pub fn write_holdout_csv<W: std::io::Write>(
    writer: W,
    rows: &[(Mprn, HoldoutMatrix)],
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HOLDOUT_HEADER)?;
    for (user, matrix) in rows {
        for p in 0..matrix.profiles() {
            for d in 1..=matrix.durations() {
                w.write_record([
                    user.as_str(),
                    &(p + 1).to_string(),
                    &d.to_string(),
                    &matrix.cell(p, d).to_string(),
                    if matrix.assigned[d - 1] == p { "1" } else { "0" },
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
