use chrono::{Datelike, Months, NaiveDate, NaiveDateTime};

use super::{IngestError, Mprn, ReadingSeries, INTERVALS_PER_DAY};

/// Twelve calendar months starting at local midnight on the first of a month.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnalysisWindow {
    start: NaiveDate,
}

impl AnalysisWindow {
    pub const MONTHS: usize = 12;

    pub fn new(start: NaiveDate) -> Result<Self, IngestError> {
        if start.day() != 1 {
            return Err(IngestError::WindowNotMonthStart(start));
        }
        Ok(Self { start })
    }

    pub fn start_date(&self) -> NaiveDate {
        self.start
    }

    pub fn start(&self) -> NaiveDateTime {
        self.start.and_time(chrono::NaiveTime::MIN)
    }

    pub fn end(&self) -> NaiveDateTime {
        self.month_start(Self::MONTHS)
    }

    /// Midnight on the first day of month `index` of the window; `index == 12`
    /// gives the exclusive end.
    pub fn month_start(&self, index: usize) -> NaiveDateTime {
        (self.start + Months::new(index as u32)).and_time(chrono::NaiveTime::MIN)
    }

    pub fn days_in_month(&self, index: usize) -> u32 {
        (self.month_start(index + 1) - self.month_start(index)).num_days() as u32
    }

    pub fn contains(&self, t: NaiveDateTime) -> bool {
        self.start() <= t && t < self.end()
    }

    /// Position (0-11) of the calendar month containing `t`, if inside the window.
    pub fn month_of(&self, t: NaiveDateTime) -> Option<usize> {
        if !self.contains(t) {
            return None;
        }
        let months = (t.year() - self.start.year()) * 12 + t.month() as i32
            - self.start.month() as i32;
        Some(months as usize)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonthQuality {
    pub month_index: usize,
    pub expected_count: u32,
    pub observed_count: u32,
    pub missing_fraction: f64,
    pub excluded: bool,
}

impl MonthQuality {
    fn new(month_index: usize, expected_count: u32, observed_count: u32) -> Self {
        let missing = expected_count.saturating_sub(observed_count);
        Self {
            month_index,
            expected_count,
            observed_count,
            missing_fraction: missing as f64 / expected_count as f64,
            // strictly more than 10% missing
            excluded: u64::from(missing) * 10 > u64::from(expected_count),
        }
    }
}

/// Per-month completeness of the Import readings. Readings are assigned to the
/// calendar month of their timestamp; DST days are ignored.
pub fn assess_months(series: &ReadingSeries, window: &AnalysisWindow) -> Vec<MonthQuality> {
    let mut observed = [0u32; AnalysisWindow::MONTHS];
    for r in series.imports() {
        if let Some(m) = window.month_of(r.timestamp) {
            observed[m] += 1;
        }
    }
    observed
        .iter()
        .enumerate()
        .map(|(m, &n)| MonthQuality::new(m, window.days_in_month(m) * INTERVALS_PER_DAY, n))
        .collect()
}

const QUALITY_HEADER: [&str; 6] = [
    "mprn",
    "month_index",
    "expected_count",
    "observed_count",
    "missing_fraction",
    "excluded",
];

pub fn write_quality_csv<W: std::io::Write>(
    writer: W,
    rows: &[(Mprn, Vec<MonthQuality>)],
) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(QUALITY_HEADER)?;
    for (mprn, months) in rows {
        for q in months {
            w.write_record([
                mprn.as_str(),
                &q.month_index.to_string(),
                &q.expected_count.to_string(),
                &q.observed_count.to_string(),
                &q.missing_fraction.to_string(),
                if q.excluded { "1" } else { "0" },
            ])?;
        }
    }
    w.flush().map_err(|e| IngestError::Csv(e.to_string()))?;
    Ok(())
}

pub fn read_quality_csv<R: std::io::Read>(
    reader: R,
) -> Result<Vec<(Mprn, MonthQuality)>, IngestError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let fail = |message: String| IngestError::Canonical { line, message };
        if rec.len() != QUALITY_HEADER.len() {
            return Err(fail(format!("expected 6 fields, found {}", rec.len())));
        }
        let int = |i: usize| rec[i].parse::<u32>().map_err(|e| fail(e.to_string()));
        let q = MonthQuality::new(int(1)? as usize, int(2)?, int(3)?);
        out.push((rec[0].parse().map_err(fail)?, q));
    }
    Ok(out)
}
