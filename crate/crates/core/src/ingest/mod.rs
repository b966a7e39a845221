//! Smart-meter HDF ingestion: parsing, per-meter merging, window trimming
//! and month-level data-quality assessment.

mod hdf;
mod quality;

pub use hdf::{
    parse_hdf, read_canonical_csv, write_canonical_csv, write_hdf, HdfParse, RowDiagnostic,
    HDF_HEADER,
};
pub use quality::{assess_months, read_quality_csv, write_quality_csv, AnalysisWindow, MonthQuality};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Length of one metering interval in hours.
pub const INTERVAL_HOURS: f64 = 0.5;

/// Number of half-hour intervals in a day.
pub const INTERVALS_PER_DAY: u32 = 48;

#[derive(Debug, Error, PartialEq)]
pub enum IngestError {
    #[error("missing or unexpected header, expected \"{expected}\", found \"{found}\"")]
    BadHeader { expected: &'static str, found: String },
    #[error("input is empty")]
    Empty,
    #[error("readings from more than one MPRN cannot be merged ({first} vs {other})")]
    MixedMprn { first: Mprn, other: Mprn },
    #[error("no readings to merge")]
    NoReadings,
    #[error("analysis window must start on the first day of a month, got {0}")]
    WindowNotMonthStart(chrono::NaiveDate),
    #[error("line {line}: {message}")]
    Canonical { line: u64, message: String },
    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for IngestError {
    fn from(e: csv::Error) -> Self {
        IngestError::Csv(e.to_string())
    }
}

/// Meter Point Registration Number: 11 ASCII digits.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Mprn(String);

impl Mprn {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for Mprn {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() == 11 && s.bytes().all(|b| b.is_ascii_digit()) {
            Ok(Mprn(s.to_owned()))
        } else {
            Err(format!("bad MPRN {s:?} (expected 11 digits)"))
        }
    }
}

impl fmt::Display for Mprn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ReadType {
    Import,
    Export,
}

impl ReadType {
    /// Literal used in the HDF "Read Type" column.
    pub fn hdf_label(self) -> &'static str {
        match self {
            ReadType::Import => "Import (kW)",
            ReadType::Export => "Export (kW)",
        }
    }

    pub fn from_hdf_label(s: &str) -> Option<Self> {
        match s {
            "Import (kW)" => Some(ReadType::Import),
            "Export (kW)" => Some(ReadType::Export),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ReadType::Import => "import",
            ReadType::Export => "export",
        }
    }
}

impl FromStr for ReadType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "import" => Ok(ReadType::Import),
            "export" => Ok(ReadType::Export),
            other => ReadType::from_hdf_label(other).ok_or_else(|| format!("bad read type {other:?}")),
        }
    }
}

/// One half-hourly HDF record. `timestamp` marks the end of the interval and
/// `value` is the average power over it in kW.
#[derive(Debug, Clone, PartialEq)]
pub struct RawReading {
    pub mprn: Mprn,
    pub value: f64,
    pub read_type: ReadType,
    pub timestamp: NaiveDateTime,
}

impl RawReading {
    pub fn key(&self) -> (NaiveDateTime, ReadType) {
        (self.timestamp, self.read_type)
    }

    /// Start of the interval this reading covers.
    pub fn interval_start(&self) -> NaiveDateTime {
        self.timestamp - chrono::Duration::minutes(30)
    }
}

/// Energy in kWh delivered over one reading's half-hour interval.
pub fn interval_energy(reading: &RawReading) -> f64 {
    reading.value * INTERVAL_HOURS
}

/// All readings of one meter, sorted by `(timestamp, read_type)` with unique keys.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadingSeries {
    mprn: Mprn,
    readings: Vec<RawReading>,
}

impl ReadingSeries {
    pub fn mprn(&self) -> &Mprn {
        &self.mprn
    }

    pub fn readings(&self) -> &[RawReading] {
        &self.readings
    }

    pub fn len(&self) -> usize {
        self.readings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.readings.is_empty()
    }

    pub fn imports(&self) -> impl Iterator<Item = &RawReading> {
        self.readings.iter().filter(|r| r.read_type == ReadType::Import)
    }
}

/// A key supplied by more than one part; the later value was kept.
#[derive(Debug, Clone, PartialEq)]
pub struct DuplicateReading {
    pub timestamp: NaiveDateTime,
    pub read_type: ReadType,
    pub replaced: f64,
    pub kept: f64,
}

/// Merges several uploads of the same meter. Later parts win on duplicate keys.
pub fn merge_series(
    parts: &[Vec<RawReading>],
) -> Result<(ReadingSeries, Vec<DuplicateReading>), IngestError> {
    let mprn = parts
        .iter()
        .flatten()
        .next()
        .map(|r| r.mprn.clone())
        .ok_or(IngestError::NoReadings)?;

    let mut merged: BTreeMap<(NaiveDateTime, ReadType), RawReading> = BTreeMap::new();
    let mut duplicates = Vec::new();
    for reading in parts.iter().flatten() {
        if reading.mprn != mprn {
            return Err(IngestError::MixedMprn {
                first: mprn,
                other: reading.mprn.clone(),
            });
        }
        if let Some(old) = merged.insert(reading.key(), reading.clone()) {
            duplicates.push(DuplicateReading {
                timestamp: reading.timestamp,
                read_type: reading.read_type,
                replaced: old.value,
                kept: reading.value,
            });
        }
    }

    Ok((
        ReadingSeries {
            mprn,
            readings: merged.into_values().collect(),
        },
        duplicates,
    ))
}

/// Keeps readings stamped within `[window.start, window.end)`.
pub fn trim_window(series: &ReadingSeries, window: &AnalysisWindow) -> ReadingSeries {
    ReadingSeries {
        mprn: series.mprn.clone(),
        readings: series
            .readings
            .iter()
            .filter(|r| window.contains(r.timestamp))
            .cloned()
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn at(y: i32, m: u32, d: u32, h: u32, min: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(y, m, d)
            .unwrap()
            .and_hms_opt(h, min, 0)
            .unwrap()
    }

    fn reading(mprn: &str, value: f64, ts: NaiveDateTime) -> RawReading {
        RawReading {
            mprn: mprn.parse().unwrap(),
            value,
            read_type: ReadType::Import,
            timestamp: ts,
        }
    }

    const M: &str = "10000000000";

    #[test]
    fn interval_energy_is_half_the_power() {
        let ts = at(2024, 4, 30, 12, 30);
        assert!((interval_energy(&reading(M, 0.218, ts)) - 0.109).abs() < 1e-15);
        assert_eq!(interval_energy(&reading(M, 0.0, ts)), 0.0);
        assert_eq!(interval_energy(&reading(M, 1.0, ts)), 0.5);
    }

    #[test]
    fn mprn_must_be_eleven_digits() {
        assert!("10000000000".parse::<Mprn>().is_ok());
        assert!("1000000000".parse::<Mprn>().is_err());
        assert!("1000000000a".parse::<Mprn>().is_err());
    }

    #[test]
    fn merge_disjoint_parts_sorts() {
        let a = vec![reading(M, 0.1, at(2024, 1, 2, 0, 30))];
        let b = vec![reading(M, 0.2, at(2024, 1, 1, 0, 30))];
        let (s, dups) = merge_series(&[a, b]).unwrap();
        assert!(dups.is_empty());
        assert_eq!(s.len(), 2);
        assert_eq!(s.readings()[0].value, 0.2);
        assert_eq!(s.readings()[1].value, 0.1);
    }

    #[test]
    fn merge_last_value_wins() {
        let ts = at(2024, 1, 1, 0, 30);
        let (s, dups) =
            merge_series(&[vec![reading(M, 0.2, ts)], vec![reading(M, 0.3, ts)]]).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.readings()[0].value, 0.3);
        assert_eq!(
            dups,
            vec![DuplicateReading {
                timestamp: ts,
                read_type: ReadType::Import,
                replaced: 0.2,
                kept: 0.3
            }]
        );
    }

    #[test]
    fn import_and_export_at_same_time_are_distinct() {
        let ts = at(2024, 1, 1, 0, 30);
        let mut export = reading(M, 0.007, ts);
        export.read_type = ReadType::Export;
        let (s, dups) = merge_series(&[vec![export, reading(M, 0.2, ts)]]).unwrap();
        assert!(dups.is_empty());
        assert_eq!(s.len(), 2);
        assert_eq!(s.readings()[0].read_type, ReadType::Import);
    }

    #[test]
    fn merge_single_part_is_sorted_identity() {
        let part = vec![
            reading(M, 0.3, at(2024, 1, 1, 1, 0)),
            reading(M, 0.1, at(2024, 1, 1, 0, 0)),
            reading(M, 0.2, at(2024, 1, 1, 0, 30)),
        ];
        let (s, _) = merge_series(std::slice::from_ref(&part)).unwrap();
        let mut sorted = part.clone();
        sorted.sort_by_key(|r| r.key());
        assert_eq!(s.readings(), &sorted[..]);
    }

    #[test]
    fn merge_rejects_mixed_mprns() {
        let ts = at(2024, 1, 1, 0, 30);
        let err = merge_series(&[
            vec![reading(M, 0.1, ts)],
            vec![reading("10000000001", 0.1, ts)],
        ])
        .unwrap_err();
        assert!(matches!(err, IngestError::MixedMprn { .. }));
        assert_eq!(merge_series(&[vec![]]).unwrap_err(), IngestError::NoReadings);
    }

    #[test]
    fn trim_window_boundaries() {
        let window = AnalysisWindow::new(NaiveDate::from_ymd_opt(2023, 5, 1).unwrap()).unwrap();
        let part = vec![
            reading(M, 0.1, at(2023, 4, 30, 23, 30)),
            reading(M, 0.2, at(2023, 5, 1, 0, 0)),
            reading(M, 0.3, at(2024, 4, 30, 23, 30)),
            reading(M, 0.4, at(2024, 5, 1, 0, 0)),
        ];
        let (s, _) = merge_series(&[part]).unwrap();
        let kept: Vec<f64> = trim_window(&s, &window)
            .readings()
            .iter()
            .map(|r| r.value)
            .collect();
        assert_eq!(kept, vec![0.2, 0.3]);
    }

    proptest::proptest! {
        #[test]
        fn merge_is_idempotent(
            cells in proptest::collection::vec((0i64..200, 0u32..5000, proptest::bool::ANY), 1..80),
        ) {
            let base = at(2024, 1, 1, 0, 0);
            let part: Vec<RawReading> = cells
                .iter()
                .map(|&(slot, w, export)| RawReading {
                    mprn: M.parse().unwrap(),
                    value: f64::from(w) / 1000.0,
                    read_type: if export { ReadType::Export } else { ReadType::Import },
                    timestamp: base + chrono::Duration::minutes(30 * slot),
                })
                .collect();
            let (once, _) = merge_series(std::slice::from_ref(&part)).unwrap();
            let (twice, dups) = merge_series(&[part.clone(), part.clone()]).unwrap();
            proptest::prop_assert_eq!(once.readings(), twice.readings());
            proptest::prop_assert!(dups.len() >= once.len());
            let (again, _) = merge_series(&[once.readings().to_vec()]).unwrap();
            proptest::prop_assert_eq!(once, again);
        }
    }
}
