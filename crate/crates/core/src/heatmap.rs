//! Segment x interval grids of one metric, written as a CSV matrix and a
//! binary PGM image.

use thiserror::Error;

use crate::aggregate::CellKey;
use crate::route::Direction;
use crate::table::CellTable;

#[derive(Error, Debug, PartialEq)]
pub enum HeatmapError {
    #[error("unknown metric '{metric}' (available: {available})")]
    UnknownMetric { metric: String, available: String },
    #[error("direction {0} is not in the table's grid")]
    UnknownDirection(Direction),
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeatmapGrid {
    pub metric: String,
    pub direction: Direction,
    pub segments: usize,
    pub intervals: usize,
    /// Row-major, one row per segment.
    pub values: Vec<Option<f64>>,
}

impl HeatmapGrid {
    pub fn from_table(table: &CellTable, metric: &str, direction: Direction) -> Result<Self, HeatmapError> {
        let col = table.column(metric).ok_or_else(|| HeatmapError::UnknownMetric {
            metric: metric.to_string(),
            available: table.columns.join(", "),
        })?;
        let segments = *table.grid.segments.get(&direction).ok_or(HeatmapError::UnknownDirection(direction))? as usize;
        let intervals = table.grid.intervals as usize;
        let mut values = vec![None; segments * intervals];
        for s in 0..segments {
            for i in 0..intervals {
                values[s * intervals + i] = table.value(&CellKey::new(direction, s as u32, i as u32), col);
            }
        }
        Ok(Self {
            metric: metric.to_string(),
            direction,
            segments,
            intervals,
            values,
        })
    }

    pub fn get(&self, segment: usize, interval: usize) -> Option<f64> {
        self.values[segment * self.intervals + interval]
    }

    /// Min and max over present finite values.
    pub fn range(&self) -> Option<(f64, f64)> {
        self.values.iter().flatten().filter(|v| v.is_finite()).fold(None, |acc, &v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
    }

    /// Cell holding the largest value; ties go to the first in row-major order.
    pub fn argmax(&self) -> Option<(usize, usize)> {
        let mut best: Option<(usize, f64)> = None;
        for (idx, v) in self.values.iter().enumerate() {
            if let Some(v) = *v {
                if v.is_finite() && best.map_or(true, |(_, b)| v > b) {
                    best = Some((idx, v));
                }
            }
        }
        best.map(|(idx, _)| (idx / self.intervals, idx % self.intervals))
    }

    pub fn to_matrix_csv(&self) -> String {
        let mut out = String::new();
        for s in 0..self.segments {
            let row: Vec<String> = (0..self.intervals)
                .map(|i| self.get(s, i).map(|v| v.to_string()).unwrap_or_default())
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Grey level per cell: linear in value between min and max, absent or
    /// non-finite cells 0, and all zeros when min equals max.
    pub fn pixels(&self) -> Vec<u8> {
        let Some((lo, hi)) = self.range() else {
            return vec![0; self.values.len()];
        };
        let span = hi - lo;
        self.values
            .iter()
            .map(|v| match v {
                Some(v) if v.is_finite() && span > 0.0 => ((v - lo) / span * 255.0).round() as u8,
                _ => 0,
            })
            .collect()
    }

    /// Binary PGM, width = intervals, height = segments.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.intervals, self.segments).into_bytes();
        out.extend(self.pixels());
        out
    }
}
