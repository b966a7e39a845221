use std::fmt::Write as _;

use chrono::{NaiveDateTime, Timelike};

use super::{IngestError, Mprn, RawReading, ReadType};

pub const HDF_HEADER: &str = "MPRN,Value,Read Type,Read Date and Time";
const HDF_TIME_FORMAT: &str = "%d-%m-%Y %H:%M";
const ISO_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

const CANONICAL_HEADER: [&str; 4] = ["mprn", "timestamp_iso8601", "read_type", "value_kw"];

/// A row that could not be turned into a reading.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowDiagnostic {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HdfParse {
    pub readings: Vec<RawReading>,
    pub diagnostics: Vec<RowDiagnostic>,
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes())
}

/// Parses an ESB Networks HDF export. A missing header is fatal; bad rows are
/// reported and skipped.
pub fn parse_hdf(text: &str) -> Result<HdfParse, IngestError> {
    let mut rdr = reader(text);
    let mut records = rdr.records();

    let header = match records.next() {
        Some(rec) => rec?,
        None => return Err(IngestError::Empty),
    };
    let found = header.iter().collect::<Vec<_>>().join(",");
    if found.trim_start_matches('\u{feff}') != HDF_HEADER {
        return Err(IngestError::BadHeader {
            expected: HDF_HEADER,
            found,
        });
    }

    let mut out = HdfParse::default();
    for rec in records {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                out.diagnostics.push(RowDiagnostic {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        match parse_row(&rec) {
            Ok(r) => out.readings.push(r),
            Err(message) => out.diagnostics.push(RowDiagnostic { line, message }),
        }
    }
    Ok(out)
}

fn parse_row(rec: &csv::StringRecord) -> Result<RawReading, String> {
    if rec.len() != 4 {
        return Err(format!("expected 4 fields, found {}", rec.len()));
    }
    let mprn: Mprn = rec[0].parse()?;
    let value = parse_value(&rec[1])?;
    let read_type =
        ReadType::from_hdf_label(&rec[2]).ok_or_else(|| format!("bad read type {:?}", &rec[2]))?;
    let timestamp = NaiveDateTime::parse_from_str(&rec[3], HDF_TIME_FORMAT)
        .map_err(|_| format!("bad timestamp {:?}", &rec[3]))?;
    check_half_hour(timestamp)?;
    Ok(RawReading {
        mprn,
        value,
        read_type,
        timestamp,
    })
}

fn parse_value(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
        Ok(_) => Err(format!("bad value {s:?} (must be finite and non-negative)")),
        Err(_) => Err(format!("bad value {s:?}")),
    }
}

fn check_half_hour(ts: NaiveDateTime) -> Result<(), String> {
    if ts.minute().is_multiple_of(30) && ts.second() == 0 {
        Ok(())
    } else {
        Err(format!("bad timestamp {ts}: not on a half-hour boundary"))
    }
}

/// Serializes readings back to HDF text, in the given order.
pub fn write_hdf(readings: &[RawReading]) -> String {
    let mut out = String::with_capacity(48 * (readings.len() + 1));
    out.push_str(HDF_HEADER);
    out.push('\n');
    for r in readings {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.mprn,
            r.value,
            r.read_type.hdf_label(),
            r.timestamp.format(HDF_TIME_FORMAT)
        );
    }
    out
}

pub fn write_canonical_csv<W: std::io::Write>(
    writer: W,
    readings: &[RawReading],
) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CANONICAL_HEADER)?;
    for r in readings {
        w.write_record([
            r.mprn.as_str(),
            &r.timestamp.format(ISO_FORMAT).to_string(),
            r.read_type.as_str(),
            &r.value.to_string(),
        ])?;
    }
    w.flush().map_err(|e| IngestError::Csv(e.to_string()))?;
    Ok(())
}

/// Reads the canonical readings CSV. Any malformed row is fatal since the file
/// is machine-written.
pub fn read_canonical_csv<R: std::io::Read>(reader: R) -> Result<Vec<RawReading>, IngestError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(CANONICAL_HEADER) {
        return Err(IngestError::BadHeader {
            expected: "mprn,timestamp_iso8601,read_type,value_kw",
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let fail = |message: String| IngestError::Canonical { line, message };
        if rec.len() != 4 {
            return Err(fail(format!("expected 4 fields, found {}", rec.len())));
        }
        let timestamp = NaiveDateTime::parse_from_str(&rec[1], ISO_FORMAT)
            .map_err(|_| fail(format!("bad timestamp {:?}", &rec[1])))?;
        check_half_hour(timestamp).map_err(fail)?;
        out.push(RawReading {
            mprn: rec[0].parse().map_err(fail)?,
            timestamp,
            read_type: rec[2].parse().map_err(fail)?,
            value: parse_value(&rec[3]).map_err(fail)?,
        });
    }
    Ok(out)
}
