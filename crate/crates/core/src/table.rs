//! Cell-table files: the metrics table, the indexed table, and anything else
//! keyed by `direction,segment,interval`.
//!
//! The first line is a `# grid ...` comment carrying the binning parameters so
//! that downstream commands (baseline, render) can check compatibility and
//! recover time of day. Floats are written in shortest round-trip form; an
//! empty field is a missing value.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::aggregate::{CellKey, CellMetrics};
use crate::indices::IndexedCell;
use crate::route::Direction;

pub const KEY_COLUMNS: [&str; 3] = ["direction", "segment", "interval"];

pub const METRIC_COLUMNS: [&str; 11] = [
    "n_vehicles",
    "n_waypoints",
    "mean_speed_mps",
    "std_speed_mps",
    "waypoints_per_vehicle",
    "pct_brakes",
    "pct_high_jerk",
    "hard_accel_count",
    "hard_brake_count",
    "avg_heading_change",
    "avg_fuel_ml_per_veh",
];

pub const INDEX_COLUMNS: [&str; 3] = ["safety_index", "comfort_index", "stability_index"];

pub const STABILITY_PER_WAYPOINT_COLUMN: &str = "stability_per_waypoint";

#[derive(Error, Debug)]
pub enum TableError {
    #[error("missing '# grid' metadata line")]
    MissingGrid,
    #[error("bad grid metadata: {0}")]
    BadGrid(String),
    #[error("missing column '{0}'")]
    MissingColumn(String),
    #[error("line {line}: {message}")]
    BadRow { line: u64, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Binning parameters shared by every table of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct GridMeta {
    pub segment_length_mi: f64,
    pub interval_min: u32,
    pub epoch_start_ms: i64,
    pub utc_offset_min: i32,
    /// Number of intervals spanned by the run.
    pub intervals: u32,
    /// Segment count per direction.
    pub segments: BTreeMap<Direction, u32>,
}

impl GridMeta {
    pub fn interval_ms(&self) -> i64 {
        i64::from(self.interval_min) * 60_000
    }

    /// True when two grids bin space and time-of-day identically.
    pub fn compatible_with(&self, other: &GridMeta) -> bool {
        self.segment_length_mi == other.segment_length_mi
            && self.interval_min == other.interval_min
            && self.utc_offset_min == other.utc_offset_min
            && self.segments == other.segments
    }

    pub fn to_comment(&self) -> String {
        let mut s = format!(
            "# grid segment_length_mi={} interval_min={} epoch_start_ms={} utc_offset_min={} intervals={}",
            self.segment_length_mi, self.interval_min, self.epoch_start_ms, self.utc_offset_min, self.intervals
        );
        for (d, n) in &self.segments {
            s.push_str(&format!(" segments.{d}={n}"));
        }
        s
    }

    pub fn from_comment(line: &str) -> Result<Self, TableError> {
        let body = line
            .trim()
            .strip_prefix("# grid")
            .ok_or(TableError::MissingGrid)?;
        let mut fields = BTreeMap::new();
        for tok in body.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| TableError::BadGrid(format!("token '{tok}'")))?;
            fields.insert(k, v);
        }
        fn get<T: std::str::FromStr>(f: &BTreeMap<&str, &str>, k: &str) -> Result<T, TableError> {
            f.get(k)
                .ok_or_else(|| TableError::BadGrid(format!("missing {k}")))?
                .parse()
                .map_err(|_| TableError::BadGrid(format!("unparsable {k}")))
        }
        let mut segments = BTreeMap::new();
        for d in Direction::ALL {
            if let Some(v) = fields.get(format!("segments.{d}").as_str()) {
                let n = v
                    .parse()
                    .map_err(|_| TableError::BadGrid(format!("unparsable segments.{d}")))?;
                segments.insert(d, n);
            }
        }
        Ok(Self {
            segment_length_mi: get(&fields, "segment_length_mi")?,
            interval_min: get(&fields, "interval_min")?,
            epoch_start_ms: get(&fields, "epoch_start_ms")?,
            utc_offset_min: get(&fields, "utc_offset_min")?,
            intervals: get(&fields, "intervals")?,
            segments,
        })
    }
}

/// Named numeric columns per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellTable {
    pub grid: GridMeta,
    pub columns: Vec<String>,
    pub rows: BTreeMap<CellKey, Vec<Option<f64>>>,
}

fn u(v: u64) -> Option<f64> {
    Some(v as f64)
}

fn metric_values(m: &CellMetrics) -> [Option<f64>; 11] {
    [
        u(m.n_vehicles),
        u(m.n_waypoints),
        Some(m.mean_speed_mps),
        Some(m.std_speed_mps),
        Some(m.waypoints_per_vehicle),
        Some(m.pct_brakes),
        Some(m.pct_high_jerk),
        u(m.hard_accel_count),
        u(m.hard_brake_count),
        Some(m.avg_heading_change),
        Some(m.avg_fuel_ml_per_veh),
    ]
}

impl CellTable {
    pub fn from_metrics(grid: GridMeta, cells: &BTreeMap<CellKey, CellMetrics>) -> Self {
        Self {
            grid,
            columns: METRIC_COLUMNS.iter().map(|s| s.to_string()).collect(),
            rows: cells.iter().map(|(k, m)| (*k, metric_values(m).to_vec())).collect(),
        }
    }

    pub fn from_indexed(grid: GridMeta, cells: &[IndexedCell], stability_per_waypoint: bool) -> Self {
        let mut columns: Vec<String> = METRIC_COLUMNS.iter().chain(&INDEX_COLUMNS).map(|s| s.to_string()).collect();
        if stability_per_waypoint {
            columns.push(STABILITY_PER_WAYPOINT_COLUMN.to_string());
        }
        let rows = cells
            .iter()
            .map(|c| {
                let mut v = metric_values(&c.metrics).to_vec();
                v.extend([c.safety, Some(c.comfort), Some(c.stability)]);
                if stability_per_waypoint {
                    v.push(Some(c.stability_per_waypoint));
                }
                (c.key, v)
            })
            .collect();
        Self { grid, columns, rows }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn value(&self, key: &CellKey, column: usize) -> Option<f64> {
        self.rows.get(key).and_then(|r| r.get(column).copied().flatten())
    }

    /// Rebuilds finalized metrics from the metric columns.
    pub fn metrics(&self) -> Result<BTreeMap<CellKey, CellMetrics>, TableError> {
        let idx: Vec<usize> = METRIC_COLUMNS
            .iter()
            .map(|c| self.column(c).ok_or_else(|| TableError::MissingColumn(c.to_string())))
            .collect::<Result<_, _>>()?;
        self.rows
            .iter()
            .map(|(k, row)| {
                let get = |i: usize| {
                    row[idx[i]].ok_or_else(|| TableError::BadRow {
                        line: 0,
                        message: format!("{k:?}: missing {}", METRIC_COLUMNS[i]),
                    })
                };
                Ok((*k, CellMetrics {
                    n_vehicles: get(0)? as u64,
                    n_waypoints: get(1)? as u64,
                    mean_speed_mps: get(2)?,
                    std_speed_mps: get(3)?,
                    waypoints_per_vehicle: get(4)?,
                    pct_brakes: get(5)?,
                    pct_high_jerk: get(6)?,
                    hard_accel_count: get(7)? as u64,
                    hard_brake_count: get(8)? as u64,
                    avg_heading_change: get(9)?,
                    avg_fuel_ml_per_veh: get(10)?,
                }))
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.grid.to_comment();
        out.push('\n');
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let header: Vec<&str> = KEY_COLUMNS.iter().copied().chain(self.columns.iter().map(String::as_str)).collect();
        w.write_record(&header).expect("in-memory write");
        for (k, row) in &self.rows {
            let mut rec = vec![k.direction.to_string(), k.segment.to_string(), k.interval.to_string()];
            rec.extend(row.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
            w.write_record(&rec).expect("in-memory write");
        }
        out.push_str(std::str::from_utf8(&w.into_inner().expect("flush")).expect("utf8"));
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, TableError> {
        let grid_line = text
            .lines()
            .map(str::trim)
            .find(|l| l.starts_with("# grid"))
            .ok_or(TableError::MissingGrid)?;
        let grid = GridMeta::from_comment(grid_line)?;

        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = rdr.headers()?.clone();
        for (i, k) in KEY_COLUMNS.iter().enumerate() {
            if headers.get(i) != Some(*k) {
                return Err(TableError::MissingColumn(k.to_string()));
            }
        }
        let columns: Vec<String> = headers.iter().skip(3).map(str::to_string).collect();
        let mut rows = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let bad = |message: String| TableError::BadRow { line, message };
            let direction: Direction = rec[0].parse().map_err(bad)?;
            let segment: u32 = rec[1].parse().map_err(|_| bad(format!("bad segment '{}'", &rec[1])))?;
            let interval: u32 = rec[2].parse().map_err(|_| bad(format!("bad interval '{}'", &rec[2])))?;
            let values = rec
                .iter()
                .skip(3)
                .map(|f| {
                    if f.is_empty() {
                        Ok(None)
                    } else {
                        f.parse::<f64>().map(Some).map_err(|_| bad(format!("bad number '{f}'")))
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            let key = CellKey::new(direction, segment, interval);
            if rows.insert(key, values).is_some() {
                return Err(bad(format!("duplicate cell {direction},{segment},{interval}")));
            }
        }
        Ok(Self { grid, columns, rows })
    }
}
