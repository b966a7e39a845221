//! Day/night/peak slot totals per month and the 36-entry ratio profile.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{NaiveTime, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{interval_energy, AnalysisWindow, MonthQuality, Mprn, ReadingSeries};

pub const MONTHS: usize = AnalysisWindow::MONTHS;
pub const SLOTS: usize = 3;
/// Length of a profile vector: 12 months × 3 slots.
pub const PROFILE_LEN: usize = MONTHS * SLOTS;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("no months of usage supplied")]
    NoMonths,
    #[error("month index {0} is outside 0..12")]
    MonthOutOfRange(usize),
    #[error("month index {0} supplied twice")]
    DuplicateMonth(usize),
    #[error("negative or non-finite usage in month {0}")]
    BadUsage(usize),
    #[error("degenerate profile: total consumption is zero")]
    DegenerateProfile,
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for FeatureError {
    fn from(e: csv::Error) -> Self {
        FeatureError::Csv(e.to_string())
    }
}

/// Daily tariff timeslot. Day is 08:00-17:00 and 19:00-23:00, Peak is
/// 17:00-19:00 and Night is 23:00-08:00, all half-open.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Slot {
    Day,
    Night,
    Peak,
}

impl Slot {
    pub const ALL: [Slot; SLOTS] = [Slot::Day, Slot::Night, Slot::Peak];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Daily duration in hours.
    pub fn hours(self) -> u32 {
        match self {
            Slot::Day => 13,
            Slot::Night => 9,
            Slot::Peak => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Slot::Day => "day",
            Slot::Night => "night",
            Slot::Peak => "peak",
        }
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Slot {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "day" => Ok(Slot::Day),
            "night" => Ok(Slot::Night),
            "peak" => Ok(Slot::Peak),
            _ => Err(format!("bad slot {s:?}")),
        }
    }
}

/// Slot containing the interval that starts at `interval_start`.
pub fn slot_of(interval_start: NaiveTime) -> Slot {
    let minute = interval_start.hour() * 60 + interval_start.minute();
    match minute {
        m if (17 * 60..19 * 60).contains(&m) => Slot::Peak,
        m if (8 * 60..17 * 60).contains(&m) || (19 * 60..23 * 60).contains(&m) => Slot::Day,
        _ => Slot::Night,
    }
}

/// kWh consumed in each slot during one month of the window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotUsage {
    pub month_index: usize,
    pub day_kwh: f64,
    pub night_kwh: f64,
    pub peak_kwh: f64,
}

impl SlotUsage {
    pub fn new(month_index: usize, [day_kwh, night_kwh, peak_kwh]: [f64; SLOTS]) -> Self {
        Self {
            month_index,
            day_kwh,
            night_kwh,
            peak_kwh,
        }
    }

    pub fn empty(month_index: usize) -> Self {
        Self::new(month_index, [0.0; SLOTS])
    }

    pub fn kwh(&self, slot: Slot) -> f64 {
        match slot {
            Slot::Day => self.day_kwh,
            Slot::Night => self.night_kwh,
            Slot::Peak => self.peak_kwh,
        }
    }

    pub fn kwh_mut(&mut self, slot: Slot) -> &mut f64 {
        match slot {
            Slot::Day => &mut self.day_kwh,
            Slot::Night => &mut self.night_kwh,
            Slot::Peak => &mut self.peak_kwh,
        }
    }

    pub fn values(&self) -> [f64; SLOTS] {
        [self.day_kwh, self.night_kwh, self.peak_kwh]
    }

    pub fn total(&self) -> f64 {
        self.day_kwh + self.night_kwh + self.peak_kwh
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(self.month_index, self.values().map(|v| v * factor))
    }
}

/// Sums Import energy per (month, slot) over the months not excluded by the
/// quality check. Readings are placed by the start of their interval.
pub fn aggregate_monthly(
    series: &ReadingSeries,
    window: &AnalysisWindow,
    quality: &[MonthQuality],
) -> Vec<SlotUsage> {
    let mut included = [false; MONTHS];
    for q in quality {
        if q.month_index < MONTHS {
            included[q.month_index] = !q.excluded;
        }
    }
    let mut usage: Vec<SlotUsage> = (0..MONTHS).map(SlotUsage::empty).collect();
    for r in series.imports() {
        let start = r.interval_start();
        let Some(m) = window.month_of(start) else {
            continue;
        };
        if included[m] {
            *usage[m].kwh_mut(slot_of(start.time())) += interval_energy(r);
        }
    }
    usage.retain(|u| included[u.month_index]);
    usage
}

/// Monthly slot ratios normalized over the observed months, with unobserved
/// months held at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileVector {
    entries: Vec<f64>,
    observed: [bool; MONTHS],
}

impl ProfileVector {
    pub fn from_parts(entries: Vec<f64>, observed: [bool; MONTHS]) -> Self {
        assert_eq!(entries.len(), PROFILE_LEN, "profile vectors have 36 entries");
        Self { entries, observed }
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn entry(&self, month: usize, slot: Slot) -> f64 {
        self.entries[month * SLOTS + slot.index()]
    }

    pub fn observed(&self) -> &[bool; MONTHS] {
        &self.observed
    }

    pub fn observed_months(&self) -> impl Iterator<Item = usize> + '_ {
        (0..MONTHS).filter(|&m| self.observed[m])
    }

    pub fn observed_count(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    pub fn is_full(&self) -> bool {
        self.observed.iter().all(|&o| o)
    }
}

fn check_usages(usages: &[SlotUsage]) -> Result<[bool; MONTHS], FeatureError> {
    if usages.is_empty() {
        return Err(FeatureError::NoMonths);
    }
    let mut seen = [false; MONTHS];
    for u in usages {
        let m = u.month_index;
        if m >= MONTHS {
            return Err(FeatureError::MonthOutOfRange(m));
        }
        if seen[m] {
            return Err(FeatureError::DuplicateMonth(m));
        }
        if u.values().iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(FeatureError::BadUsage(m));
        }
        seen[m] = true;
    }
    Ok(seen)
}

/// Builds the ratio profile of the supplied months. Missing months are left
/// unobserved.
pub fn ratio_vector(usages: &[SlotUsage]) -> Result<ProfileVector, FeatureError> {
    let observed = check_usages(usages)?;
    let total: f64 = usages.iter().map(SlotUsage::total).sum();
    if total <= 0.0 {
        return Err(FeatureError::DegenerateProfile);
    }
    let mut entries = vec![0.0; PROFILE_LEN];
    for u in usages {
        for slot in Slot::ALL {
            entries[u.month_index * SLOTS + slot.index()] = u.kwh(slot) / total;
        }
    }
    Ok(ProfileVector { entries, observed })
}

/// One household's monthly usage and its profile.
#[derive(Debug, Clone, PartialEq)]
pub struct UserFeatures {
    pub mprn: Mprn,
    pub usages: Vec<SlotUsage>,
    pub profile: ProfileVector,
}

impl UserFeatures {
    pub fn new(mprn: Mprn, mut usages: Vec<SlotUsage>) -> Result<Self, FeatureError> {
        usages.sort_by_key(|u| u.month_index);
        let profile = ratio_vector(&usages)?;
        Ok(Self {
            mprn,
            usages,
            profile,
        })
    }

    pub fn usage(&self, month: usize) -> Option<&SlotUsage> {
        self.usages.iter().find(|u| u.month_index == month)
    }
}

const FEATURE_HEADER: [&str; 6] = ["mprn", "month_index", "slot", "kwh", "ratio", "observed"];

/// Writes 36 rows per user; unobserved months carry zeros.
pub fn write_feature_csv<W: std::io::Write>(
    writer: W,
    users: &[UserFeatures],
) -> Result<(), FeatureError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(FEATURE_HEADER)?;
    for user in users {
        for m in 0..MONTHS {
            let usage = user.usage(m).copied().unwrap_or(SlotUsage::empty(m));
            let observed = user.profile.observed()[m];
            for slot in Slot::ALL {
                w.write_record([
                    user.mprn.as_str(),
                    &m.to_string(),
                    slot.as_str(),
                    &usage.kwh(slot).to_string(),
                    &user.profile.entry(m, slot).to_string(),
                    if observed { "1" } else { "0" },
                ])?;
            }
        }
    }
    w.flush().map_err(|e| FeatureError::Csv(e.to_string()))?;
    Ok(())
}

/// Reads the feature CSV back into per-user observed usages. Users keep the
/// order of first appearance.
pub fn read_feature_csv<R: std::io::Read>(reader: R) -> Result<Vec<UserFeatures>, FeatureError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(FEATURE_HEADER) {
        return Err(FeatureError::Row {
            line: 1,
            message: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    let mut order: Vec<Mprn> = Vec::new();
    let mut users: BTreeMap<Mprn, BTreeMap<usize, SlotUsage>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let fail = |message: String| FeatureError::Row { line, message };
        if rec.len() != FEATURE_HEADER.len() {
            return Err(fail(format!("expected 6 fields, found {}", rec.len())));
        }
        let mprn: Mprn = rec[0].parse().map_err(fail)?;
        let month: usize = rec[1].parse().map_err(|_| fail(format!("bad month {:?}", &rec[1])))?;
        if month >= MONTHS {
            return Err(fail(format!("bad month {month}")));
        }
        let slot: Slot = rec[2].parse().map_err(fail)?;
        let kwh: f64 = rec[3].parse().map_err(|_| fail(format!("bad kwh {:?}", &rec[3])))?;
        let entry = users.entry(mprn.clone()).or_insert_with(|| {
            order.push(mprn.clone());
            BTreeMap::new()
        });
        match &rec[5] {
            "1" => {
                *entry
                    .entry(month)
                    .or_insert_with(|| SlotUsage::empty(month))
                    .kwh_mut(slot) = kwh;
            }
            "0" => {}
            other => return Err(fail(format!("bad observed flag {other:?}"))),
        }
    }
    order
        .into_iter()
        .map(|mprn| {
            let usages = users.remove(&mprn).unwrap_or_default().into_values().collect();
            UserFeatures::new(mprn, usages)
        })
        .collect()
}
