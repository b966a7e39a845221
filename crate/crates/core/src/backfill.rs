//! Completes a partial year of slot usage from the nearest consumption profile.
//!
//! The user is matched to a profile on the months they have, the profile's
//! ratios supply the shape of the missing months, and a scale estimated from
//! the observed consumption turns those ratios into kWh.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{assign_partial_with, ClusterError, ClusterModel, Truncation};
use crate::features::{ratio_vector, FeatureError, Slot, SlotUsage, MONTHS, SLOTS};
use crate::ingest::Mprn;

/// Below this much centroid mass over the observed months the scale is undefined.
pub const MIN_CENTROID_MASS: f64 = 1e-9;

/// Back-filling beyond this many missing months has not been validated.
pub const VALIDATED_MISSING_MONTHS: usize = 6;

#[derive(Debug, Error, PartialEq)]
pub enum BackfillError {
    #[error("no observed months")]
    NoObservedMonths,
    #[error("observed consumption is zero")]
    ZeroConsumption,
    #[error("profile {cluster_id} has negligible mass over the observed months")]
    NegligibleMass { cluster_id: usize },
    #[error(transparent)]
    Feature(FeatureError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for BackfillError {
    fn from(e: csv::Error) -> Self {
        BackfillError::Csv(e.to_string())
    }
}

impl From<FeatureError> for BackfillError {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::NoMonths => BackfillError::NoObservedMonths,
            FeatureError::DegenerateProfile => BackfillError::ZeroConsumption,
            other => BackfillError::Feature(other),
        }
    }
}

/// How observed consumption is turned into a scale for the profile ratios.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ScaleMode {
    /// One annual total estimated over all observed (month, slot) cells.
    #[default]
    Joint,
    /// A separate estimate for each of day, night and peak.
    PerSlot,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BackfillOptions {
    pub scale: ScaleMode,
    pub truncation: Truncation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackfillResult {
    pub completed: [SlotUsage; MONTHS],
    /// `true` where the month was imputed.
    pub filled_mask: [bool; MONTHS],
    pub cluster_id: usize,
    /// Estimated annual consumption implied by the observed months.
    pub scale_kwh: f64,
}

impl BackfillResult {
    pub fn missing_months(&self) -> usize {
        self.filled_mask.iter().filter(|&&f| f).count()
    }
}

/// Back-fills against the nearest profile with the default options.
pub fn backfill(partial: &[SlotUsage], model: &ClusterModel) -> Result<BackfillResult, BackfillError> {
    backfill_with(partial, model, BackfillOptions::default())
}

pub fn backfill_with(
    partial: &[SlotUsage],
    model: &ClusterModel,
    options: BackfillOptions,
) -> Result<BackfillResult, BackfillError> {
    let profile = ratio_vector(partial)?;
    let cluster_id = assign_partial_with(&profile, model, options.truncation)?;
    backfill_from_profile(partial, model, cluster_id, options.scale)
}

/// Back-fills from a given profile regardless of which one is nearest.
pub fn backfill_from_profile(
    partial: &[SlotUsage],
    model: &ClusterModel,
    cluster_id: usize,
    scale: ScaleMode,
) -> Result<BackfillResult, BackfillError> {
    let profile = ratio_vector(partial)?;
    let centroid = model.centroid(cluster_id)?;
    let observed = *profile.observed();
    let cell = |m: usize, s: Slot| centroid[m * SLOTS + s.index()];

    let mut observed_kwh = [0.0; SLOTS];
    let mut observed_mass = [0.0; SLOTS];
    for u in partial {
        for s in Slot::ALL {
            observed_kwh[s.index()] += u.kwh(s);
            observed_mass[s.index()] += cell(u.month_index, s);
        }
    }

    let (slot_scale, scale_kwh) = match scale {
        ScaleMode::Joint => {
            let mass: f64 = observed_mass.iter().sum();
            if mass < MIN_CENTROID_MASS {
                return Err(BackfillError::NegligibleMass { cluster_id });
            }
            let t = observed_kwh.iter().sum::<f64>() / mass;
            let centroid_total: f64 = centroid.iter().sum();
            ([t; SLOTS], t * centroid_total)
        }
        ScaleMode::PerSlot => {
            if observed_mass.iter().any(|&m| m < MIN_CENTROID_MASS) {
                return Err(BackfillError::NegligibleMass { cluster_id });
            }
            let t: [f64; SLOTS] = std::array::from_fn(|i| observed_kwh[i] / observed_mass[i]);
            let annual = Slot::ALL
                .iter()
                .map(|&s| t[s.index()] * (0..MONTHS).map(|m| cell(m, s)).sum::<f64>())
                .sum();
            (t, annual)
        }
    };

    let completed: [SlotUsage; MONTHS] = std::array::from_fn(|m| {
        match partial.iter().find(|u| u.month_index == m) {
            Some(u) => *u,
            None => SlotUsage::new(m, std::array::from_fn(|i| cell(m, Slot::ALL[i]) * slot_scale[i])),
        }
    });

    Ok(BackfillResult {
        completed,
        filled_mask: observed.map(|o| !o),
        cluster_id,
        scale_kwh,
    })
}

const COMPLETED_HEADER: [&str; 7] = ["mprn", "month_index", "slot", "kwh", "imputed", "cluster_id", "scale_kwh"];

pub fn write_completed_csv<W: std::io::Write>(
    writer: W,
    rows: &[(Mprn, BackfillResult)],
) -> Result<(), BackfillError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(COMPLETED_HEADER)?;
    for (mprn, r) in rows {
        for u in &r.completed {
            for s in Slot::ALL {
                w.write_record([
                    mprn.as_str(),
                    &u.month_index.to_string(),
                    s.as_str(),
                    &u.kwh(s).to_string(),
                    if r.filled_mask[u.month_index] { "1" } else { "0" },
                    &r.cluster_id.to_string(),
                    &r.scale_kwh.to_string(),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| BackfillError::Csv(e.to_string()))?;
    Ok(())
}

/// Reads a completed-usage CSV. Every user must carry all 36 cells.
pub fn read_completed_csv<R: std::io::Read>(reader: R) -> Result<Vec<(Mprn, BackfillResult)>, BackfillError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(COMPLETED_HEADER) {
        return Err(BackfillError::Row {
            line: 1,
            message: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    let mut out: Vec<(Mprn, BackfillResult, [[bool; SLOTS]; MONTHS])> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let fail = |message: String| BackfillError::Row { line, message };
        if rec.len() != COMPLETED_HEADER.len() {
            return Err(fail(format!("expected 7 fields, found {}", rec.len())));
        }
        let mprn: Mprn = rec[0].parse().map_err(fail)?;
        let month: usize = rec[1].parse().map_err(|e| fail(format!("month_index: {e}")))?;
        if month >= MONTHS {
            return Err(fail(format!("month_index {month} out of range")));
        }
        let slot: Slot = rec[2].parse().map_err(fail)?;
        let kwh: f64 = rec[3].parse().map_err(|e| fail(format!("kwh: {e}")))?;
        if !(kwh.is_finite() && kwh >= 0.0) {
            return Err(fail(format!("kwh must be finite and non-negative, got {kwh}")));
        }
        let imputed = match &rec[4] {
            "0" => false,
            "1" => true,
            other => return Err(fail(format!("imputed must be 0 or 1, got {other:?}"))),
        };
        let cluster_id: usize = rec[5].parse().map_err(|e| fail(format!("cluster_id: {e}")))?;
        let scale_kwh: f64 = rec[6].parse().map_err(|e| fail(format!("scale_kwh: {e}")))?;

        if out.last().is_none_or(|(m, ..)| *m != mprn) {
            if out.iter().any(|(m, ..)| *m == mprn) {
                return Err(fail(format!("rows for {mprn} are not contiguous")));
            }
            out.push((
                mprn.clone(),
                BackfillResult {
                    completed: std::array::from_fn(SlotUsage::empty),
                    filled_mask: [false; MONTHS],
                    cluster_id,
                    scale_kwh,
                },
                [[false; SLOTS]; MONTHS],
            ));
        }
        let (_, r, seen) = out.last_mut().expect("pushed above");
        if seen[month][slot.index()] {
            return Err(fail(format!("duplicate cell ({month}, {})", slot.as_str())));
        }
        seen[month][slot.index()] = true;
        *r.completed[month].kwh_mut(slot) = kwh;
        r.filled_mask[month] = imputed;
    }
    out.into_iter()
        .map(|(mprn, r, seen)| {
            if seen.iter().flatten().all(|&s| s) {
                Ok((mprn, r))
            } else {
                Err(BackfillError::Row {
                    line: 0,
                    message: format!("{mprn} does not cover all 12 months and 3 slots"),
                })
            }
        })
        .collect()
}
