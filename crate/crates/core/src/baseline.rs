//! Historical per-slot statistics and z-score anomaly flags.
//!
//! A slot is `(direction, segment, interval-of-day, day type)`. Every table
//! row contributes one observation per column to the slot its interval falls
//! in, so a multi-day table contributes once per day it covers.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::aggregate::CellKey;
use crate::route::Direction;
use crate::table::{CellTable, GridMeta, TableError};

const DAY_MS: i64 = 86_400_000;

#[derive(Error, Debug)]
pub enum BaselineError {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("need at least {needed} tables, got {got}")]
    InsufficientDays { needed: usize, got: usize },
    #[error("bad baseline file: {0}")]
    Format(String),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Anomaly cutoffs on |z| (after polarity).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectConfig {
    pub z_info: Option<f64>,
    pub z_warn: f64,
    pub z_alert: f64,
    /// Floor on the std used for z, as a fraction of |baseline mean|.
    pub std_floor_frac: f64,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            z_info: None,
            z_warn: 2.0,
            z_alert: 3.0,
            std_floor_frac: 0.05,
        }
    }
}

impl DetectConfig {
    pub fn validate(&self) -> Result<(), String> {
        let ok = |z: f64| z.is_finite() && z > 0.0;
        if !ok(self.z_warn) || !ok(self.z_alert) || self.z_info.is_some_and(|z| !ok(z)) {
            return Err("z cutoffs must be positive and finite".into());
        }
        if self.z_alert < self.z_warn || self.z_info.is_some_and(|z| z > self.z_warn) {
            return Err("z cutoffs must satisfy z_info <= z_warn <= z_alert".into());
        }
        if !(self.std_floor_frac.is_finite() && self.std_floor_frac >= 0.0) {
            return Err("std_floor_frac must be non-negative".into());
        }
        Ok(())
    }

    pub fn severity(&self, badness: f64) -> Option<Severity> {
        if badness >= self.z_alert {
            Some(Severity::Alert)
        } else if badness >= self.z_warn {
            Some(Severity::Warn)
        } else if self.z_info.is_some_and(|z| badness >= z) {
            Some(Severity::Info)
        } else {
            None
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Severity {
    Info,
    Warn,
    Alert,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Info => "info",
            Severity::Warn => "warn",
            Severity::Alert => "alert",
        })
    }
}

impl FromStr for Severity {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "info" => Ok(Severity::Info),
            "warn" => Ok(Severity::Warn),
            "alert" => Ok(Severity::Alert),
            _ => Err(format!("unknown severity '{s}'")),
        }
    }
}

/// Which side of the baseline counts as bad for a metric.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Polarity {
    HighIsBad,
    LowIsBad,
    Both,
}

pub fn polarity(metric: &str) -> Polarity {
    match metric {
        "mean_speed_mps" => Polarity::LowIsBad,
        "n_vehicles" | "n_waypoints" => Polarity::Both,
        _ => Polarity::HighIsBad,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DayType {
    Weekday,
    Weekend,
}

impl DayType {
    /// Day type of a day number counted from 1970-01-01 (a Thursday).
    pub fn of_day(day: i64) -> Self {
        match (day + 4).rem_euclid(7) {
            0 | 6 => DayType::Weekend,
            _ => DayType::Weekday,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            DayType::Weekday => "weekday",
            DayType::Weekend => "weekend",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SlotKey {
    pub direction: Direction,
    pub segment: u32,
    pub interval_of_day: u32,
    pub day_type: DayType,
}

/// Maps a table interval to its slot and local day number.
pub fn slot_of(grid: &GridMeta, key: &CellKey) -> (SlotKey, i64) {
    let local = grid.epoch_start_ms + i64::from(key.interval) * grid.interval_ms() + i64::from(grid.utc_offset_min) * 60_000;
    let day = local.div_euclid(DAY_MS);
    let interval_of_day = (local.rem_euclid(DAY_MS) / grid.interval_ms()) as u32;
    let slot = SlotKey {
        direction: key.direction,
        segment: key.segment,
        interval_of_day,
        day_type: DayType::of_day(day),
    };
    (slot, day)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ColumnStats {
    pub mean: f64,
    pub std: f64,
    pub days: u32,
}

impl ColumnStats {
    /// Population statistics; exact for identical observations.
    pub fn from_values(values: &[f64]) -> Option<Self> {
        let (&first, _) = values.split_first()?;
        let n = values.len() as f64;
        let mean = first + values.iter().map(|v| v - first).sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: var.sqrt(),
            days: values.len() as u32,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineProfile {
    pub grid: GridMeta,
    pub columns: Vec<String>,
    pub min_days: usize,
    pub slots: BTreeMap<SlotKey, Vec<Option<ColumnStats>>>,
}

pub fn build_baseline(tables: &[CellTable], min_days: usize) -> Result<BaselineProfile, BaselineError> {
    if tables.len() < min_days.max(1) {
        return Err(BaselineError::InsufficientDays {
            needed: min_days.max(1),
            got: tables.len(),
        });
    }
    let first = &tables[0];
    for t in &tables[1..] {
        if !t.grid.compatible_with(&first.grid) {
            return Err(BaselineError::GridMismatch(format!(
                "'{}' vs '{}'",
                first.grid.to_comment(),
                t.grid.to_comment()
            )));
        }
        if t.columns != first.columns {
            return Err(BaselineError::GridMismatch("tables have different columns".into()));
        }
    }

    let ncol = first.columns.len();
    let mut obs: BTreeMap<SlotKey, Vec<Vec<f64>>> = BTreeMap::new();
    for t in tables {
        for (key, row) in &t.rows {
            let (slot, _) = slot_of(&t.grid, key);
            let cols = obs.entry(slot).or_insert_with(|| vec![Vec::new(); ncol]);
            for (c, v) in row.iter().enumerate() {
                if let Some(v) = v {
                    cols[c].push(*v);
                }
            }
        }
    }
    let slots = obs
        .into_iter()
        .map(|(slot, cols)| (slot, cols.iter().map(|v| ColumnStats::from_values(v)).collect()))
        .collect();
    let mut grid = first.grid.clone();
    grid.intervals = (DAY_MS / grid.interval_ms()) as u32;
    Ok(BaselineProfile {
        grid,
        columns: first.columns.clone(),
        min_days,
        slots,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnomalyFlag {
    pub key: CellKey,
    pub metric: String,
    pub observed: f64,
    pub mean: f64,
    pub z: f64,
    pub severity: Severity,
}

fn z_score(observed: f64, stats: &ColumnStats, floor_frac: f64) -> f64 {
    let scale = stats.std.max(floor_frac * stats.mean.abs());
    let d = observed - stats.mean;
    if d == 0.0 {
        0.0
    } else {
        d / scale
    }
}

/// Flags every (cell, metric) whose polarity-adjusted |z| reaches a cutoff.
/// Cells whose slot is missing or low-confidence are not scored.
pub fn detect_anomalies(
    table: &CellTable,
    baseline: &BaselineProfile,
    cfg: &DetectConfig,
) -> Result<Vec<AnomalyFlag>, BaselineError> {
    if !table.grid.compatible_with(&baseline.grid) {
        return Err(BaselineError::GridMismatch(format!(
            "table '{}' vs baseline '{}'",
            table.grid.to_comment(),
            baseline.grid.to_comment()
        )));
    }
    let pairs: Vec<(usize, usize, Polarity)> = table
        .columns
        .iter()
        .enumerate()
        .filter_map(|(ti, name)| {
            let bi = baseline.columns.iter().position(|c| c == name)?;
            Some((ti, bi, polarity(name)))
        })
        .collect();

    let rows: Vec<_> = table.rows.iter().collect();
    let flags = rows
        .par_iter()
        .flat_map_iter(|(key, row)| {
            let (slot, _) = slot_of(&table.grid, key);
            let stats = baseline.slots.get(&slot);
            pairs.iter().filter_map(move |&(ti, bi, pol)| {
                let observed = row[ti]?;
                let s = stats?[bi]?;
                if (s.days as usize) < baseline.min_days {
                    return None;
                }
                let z = z_score(observed, &s, cfg.std_floor_frac);
                let badness = match pol {
                    Polarity::HighIsBad => z,
                    Polarity::LowIsBad => -z,
                    Polarity::Both => z.abs(),
                };
                cfg.severity(badness).map(|severity| AnomalyFlag {
                    key: **key,
                    metric: table.columns[ti].clone(),
                    observed,
                    mean: s.mean,
                    z,
                    severity,
                })
            })
        })
        .collect();
    Ok(flags)
}

pub const REPORT_HEADER: &str = "direction,segment,interval,metric,observed,mean,z,severity";

pub fn format_report(flags: &[AnomalyFlag]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for f in flags {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            f.key.direction, f.key.segment, f.key.interval, f.metric, f.observed, f.mean, f.z, f.severity
        ));
    }
    out
}

impl BaselineProfile {
    pub fn to_csv(&self) -> String {
        let mut out = self.grid.to_comment();
        out.push_str(&format!("\n# baseline min_days={}\n", self.min_days));
        let mut header = vec!["direction".to_string(), "segment".into(), "interval_of_day".into(), "day_type".into()];
        for c in &self.columns {
            header.extend([format!("{c}_mean"), format!("{c}_std"), format!("{c}_days")]);
        }
        out.push_str(&header.join(","));
        out.push('\n');
        for (slot, stats) in &self.slots {
            let mut rec = vec![
                slot.direction.to_string(),
                slot.segment.to_string(),
                slot.interval_of_day.to_string(),
                slot.day_type.as_str().to_string(),
            ];
            for s in stats {
                match s {
                    Some(s) => rec.extend([s.mean.to_string(), s.std.to_string(), s.days.to_string()]),
                    None => rec.extend([String::new(), String::new(), "0".into()]),
                }
            }
            out.push_str(&rec.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, BaselineError> {
        let fmt_err = |m: String| BaselineError::Format(m);
        let grid_line = text
            .lines()
            .find(|l| l.trim_start().starts_with("# grid"))
            .ok_or(TableError::MissingGrid)?;
        let grid = GridMeta::from_comment(grid_line)?;
        let min_days = text
            .lines()
            .find_map(|l| l.trim().strip_prefix("# baseline min_days="))
            .ok_or_else(|| fmt_err("missing '# baseline' line".into()))?
            .trim()
            .parse()
            .map_err(|_| fmt_err("bad min_days".into()))?;

        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = rdr.headers()?.clone();
        let names: Vec<&str> = headers.iter().collect();
        if names.len() < 4 || names[..4] != ["direction", "segment", "interval_of_day", "day_type"] || (names.len() - 4) % 3 != 0 {
            return Err(fmt_err("unexpected header".into()));
        }
        let mut columns = Vec::new();
        for chunk in names[4..].chunks(3) {
            let base = chunk[0]
                .strip_suffix("_mean")
                .ok_or_else(|| fmt_err(format!("expected '*_mean', got '{}'", chunk[0])))?;
            if chunk[1] != format!("{base}_std") || chunk[2] != format!("{base}_days") {
                return Err(fmt_err(format!("bad column triple for '{base}'")));
            }
            columns.push(base.to_string());
        }

        let mut slots = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let bad = |what: &str| fmt_err(format!("line {line}: bad {what}"));
            let slot = SlotKey {
                direction: rec[0].parse().map_err(|_| bad("direction"))?,
                segment: rec[1].parse().map_err(|_| bad("segment"))?,
                interval_of_day: rec[2].parse().map_err(|_| bad("interval_of_day"))?,
                day_type: match &rec[3] {
                    "weekday" => DayType::Weekday,
                    "weekend" => DayType::Weekend,
                    _ => return Err(bad("day_type")),
                },
            };
            let fields: Vec<&str> = rec.iter().skip(4).collect();
            let mut stats = Vec::with_capacity(columns.len());
            for t in fields.chunks(3) {
                let days: u32 = t[2].parse().map_err(|_| bad("days"))?;
                if days == 0 {
                    stats.push(None);
                    continue;
                }
                let mean: f64 = t[0].parse().map_err(|_| bad("mean"))?;
                let std: f64 = t[1].parse().map_err(|_| bad("std"))?;
                if !(std >= 0.0) {
                    return Err(bad("std"));
                }
                stats.push(Some(ColumnStats { mean, std, days }));
            }
            slots.insert(slot, stats);
        }
        Ok(Self {
            grid,
            columns,
            min_days,
            slots,
        })
    }
}
