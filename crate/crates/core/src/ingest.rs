//! Waypoint file parsing and journey assembly.
//!
//! Format: UTF-8, comma separated, `#` comment lines, and a header naming the
//! speed unit:
//!
//! ```text
//! journey_id,timestamp_ms,lat,lon,speed_mps,heading_deg
//! J1,1622800000000,40.7500,-74.2000,29.06,91.0
//! ```
//!
//! `speed_mph` in place of `speed_mps` makes the parser convert to m/s.
//! Blank lines are ignored like comments; every other line becomes either a
//! record or a [`Rejection`].

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::MPS_PER_MPH;

/// Default journey split threshold, milliseconds.
pub const DEFAULT_GAP_SPLIT_MS: i64 = 30_000;

const HEADER_PREFIX: [&str; 4] = ["journey_id", "timestamp_ms", "lat", "lon"];

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum IngestError {
    #[error("line {line}: expected header 'journey_id,timestamp_ms,lat,lon,speed_mps|speed_mph,heading_deg', found '{found}'")]
    BadHeader { line: usize, found: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpeedUnit {
    MetersPerSecond,
    MilesPerHour,
}

impl SpeedUnit {
    fn to_mps(self, v: f64) -> f64 {
        match self {
            SpeedUnit::MetersPerSecond => v,
            SpeedUnit::MilesPerHour => v * MPS_PER_MPH,
        }
    }
}

/// One ping. Speed is always m/s after parsing.
#[derive(Clone, Debug, PartialEq)]
pub struct WaypointRecord {
    pub journey_id: Arc<str>,
    pub timestamp_ms: i64,
    pub lat: f64,
    pub lon: f64,
    pub speed_mps: f64,
    pub heading_deg: f64,
}

impl WaypointRecord {
    pub fn validate(&self) -> Result<(), RejectReason> {
        if self.journey_id.is_empty() {
            return Err(RejectReason::EmptyJourneyId);
        }
        if !(-90.0..=90.0).contains(&self.lat) {
            return Err(RejectReason::LatOutOfRange);
        }
        if !(-180.0..=180.0).contains(&self.lon) {
            return Err(RejectReason::LonOutOfRange);
        }
        if !(self.speed_mps >= 0.0) || !self.speed_mps.is_finite() {
            return Err(RejectReason::SpeedOutOfRange);
        }
        if !(0.0..360.0).contains(&self.heading_deg) {
            return Err(RejectReason::HeadingOutOfRange);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RejectReason {
    FieldCount(usize),
    InvalidNumber(&'static str),
    InvalidUtf8,
    EmptyJourneyId,
    LatOutOfRange,
    LonOutOfRange,
    SpeedOutOfRange,
    HeadingOutOfRange,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::FieldCount(n) => write!(f, "expected 6 fields, found {n}"),
            RejectReason::InvalidNumber(field) => write!(f, "unparsable {field}"),
            RejectReason::InvalidUtf8 => f.write_str("invalid UTF-8"),
            RejectReason::EmptyJourneyId => f.write_str("empty journey_id"),
            RejectReason::LatOutOfRange => f.write_str("lat out of range"),
            RejectReason::LonOutOfRange => f.write_str("lon out of range"),
            RejectReason::SpeedOutOfRange => f.write_str("speed out of range"),
            RejectReason::HeadingOutOfRange => f.write_str("heading out of range"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rejection {
    /// 1-based line number in the input.
    pub line: usize,
    pub reason: RejectReason,
}

#[derive(Debug, Default)]
pub struct ParsedRecords {
    pub records: Vec<WaypointRecord>,
    pub rejections: Vec<Rejection>,
    pub unit: Option<SpeedUnit>,
}

fn parse_header(line: &str) -> Option<SpeedUnit> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 6 || fields[..4] != HEADER_PREFIX || fields[5] != "heading_deg" {
        return None;
    }
    match fields[4] {
        "speed_mps" => Some(SpeedUnit::MetersPerSecond),
        "speed_mph" => Some(SpeedUnit::MilesPerHour),
        _ => None,
    }
}

fn parse_line(bytes: &[u8], unit: SpeedUnit) -> Result<WaypointRecord, RejectReason> {
    let line = std::str::from_utf8(bytes).map_err(|_| RejectReason::InvalidUtf8)?;
    let line = line.trim_end_matches('\r');
    let mut it = line.split(',');
    let mut fields = [""; 6];
    let mut n = 0;
    for f in it.by_ref() {
        if n < 6 {
            fields[n] = f.trim();
        }
        n += 1;
    }
    if n != 6 {
        return Err(RejectReason::FieldCount(n));
    }
    fn num(s: &str, field: &'static str) -> Result<f64, RejectReason> {
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or(RejectReason::InvalidNumber(field))
    }
    let timestamp_ms = fields[1]
        .parse::<i64>()
        .map_err(|_| RejectReason::InvalidNumber("timestamp_ms"))?;
    let rec = WaypointRecord {
        journey_id: Arc::from(fields[0]),
        timestamp_ms,
        lat: num(fields[2], "lat")?,
        lon: num(fields[3], "lon")?,
        speed_mps: unit.to_mps(num(fields[4], "speed")?),
        heading_deg: num(fields[5], "heading_deg")?,
    };
    rec.validate()?;
    Ok(rec)
}

/// Parses a waypoint file. The first non-comment, non-blank line must be the
/// header; data lines are parsed in parallel and reported in file order.
pub fn parse_records(input: &[u8]) -> Result<ParsedRecords, IngestError> {
    let mut unit = None;
    let mut data: Vec<(usize, &[u8])> = Vec::new();
    for (idx, raw) in input.split(|&b| b == b'\n').enumerate() {
        let trimmed = raw.trim_ascii();
        if trimmed.is_empty() || trimmed.starts_with(b"#") {
            continue;
        }
        if unit.is_none() {
            let text = String::from_utf8_lossy(trimmed);
            unit = Some(parse_header(&text).ok_or_else(|| IngestError::BadHeader {
                line: idx + 1,
                found: text.into_owned(),
            })?);
            continue;
        }
        data.push((idx + 1, raw));
    }
    let Some(unit) = unit else {
        return Ok(ParsedRecords::default());
    };

    let parsed: Vec<Result<WaypointRecord, Rejection>> = data
        .par_iter()
        .map(|&(line, bytes)| parse_line(bytes, unit).map_err(|reason| Rejection { line, reason }))
        .collect();

    let mut out = ParsedRecords {
        records: Vec::with_capacity(parsed.len()),
        rejections: Vec::new(),
        unit: Some(unit),
    };
    for r in parsed {
        match r {
            Ok(rec) => out.records.push(rec),
            Err(rej) => out.rejections.push(rej),
        }
    }
    Ok(out)
}

/// Time-ordered pings of one trip.
#[derive(Clone, Debug, PartialEq)]
pub struct Journey {
    pub journey_id: Arc<str>,
    pub waypoints: Vec<WaypointRecord>,
}

/// Groups records by journey, sorts by time, drops repeated timestamps (the
/// first record in input order wins), and splits at gaps longer than
/// `gap_split_ms`. Split parts are named `<id>#0`, `<id>#1`, ...
/// Output is sorted by journey id.
pub fn assemble_journeys(records: Vec<WaypointRecord>, gap_split_ms: i64) -> Vec<Journey> {
    let mut groups: HashMap<Arc<str>, Vec<(usize, WaypointRecord)>> = HashMap::new();
    for (order, rec) in records.into_iter().enumerate() {
        groups.entry(rec.journey_id.clone()).or_default().push((order, rec));
    }
    let mut groups: Vec<_> = groups.into_iter().collect();
    groups.sort_unstable_by(|a, b| a.0.cmp(&b.0));

    let mut journeys: Vec<Journey> = groups
        .into_par_iter()
        .flat_map_iter(|(id, mut recs)| {
            recs.sort_unstable_by_key(|(order, r)| (r.timestamp_ms, *order));
            recs.dedup_by_key(|(_, r)| r.timestamp_ms);

            let mut parts: Vec<Vec<WaypointRecord>> = vec![Vec::new()];
            let mut last_ts: Option<i64> = None;
            for (_, rec) in recs {
                if last_ts.is_some_and(|t| rec.timestamp_ms - t > gap_split_ms) {
                    parts.push(Vec::new());
                }
                last_ts = Some(rec.timestamp_ms);
                parts.last_mut().expect("non-empty").push(rec);
            }
            let split = parts.len() > 1;
            parts.into_iter().enumerate().map(move |(i, mut waypoints)| {
                let journey_id: Arc<str> = if split {
                    Arc::from(format!("{id}#{i}"))
                } else {
                    id.clone()
                };
                if split {
                    for w in &mut waypoints {
                        w.journey_id = journey_id.clone();
                    }
                }
                Journey {
                    journey_id,
                    waypoints,
                }
            })
        })
        .collect();
    journeys.sort_by(|a, b| a.journey_id.cmp(&b.journey_id));
    journeys
}

/// Formats one record as a waypoint-file line in m/s, full float precision.
pub fn format_record(rec: &WaypointRecord) -> String {
    format!(
        "{},{},{},{},{},{}",
        rec.journey_id, rec.timestamp_ms, rec.lat, rec.lon, rec.speed_mps, rec.heading_deg
    )
}

/// Header line for m/s files.
pub const MPS_HEADER: &str = "journey_id,timestamp_ms,lat,lon,speed_mps,heading_deg";
