//! Cell binning and mergeable accumulators.
//!
//! A cell is one `(direction, segment, interval)` bin. Accumulators form a
//! commutative monoid under [`CellAccumulator::merge`]: counts and journey
//! sets merge exactly, float fields agree with sequential accumulation to
//! rounding. Speed moments use Welford updates and Chan's pairwise merge so a
//! constant-speed cell has a standard deviation of exactly zero.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::kinematics::{EventFlags, KinematicSample};
use crate::route::Direction;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum AggregateError {
    #[error("timestamp {timestamp_ms} precedes epoch start {epoch_ms}")]
    TimestampBeforeEpoch { timestamp_ms: i64, epoch_ms: i64 },
    #[error("cell key mismatch: accumulator {expected:?}, got {found:?}")]
    KeyMismatch { expected: CellKey, found: CellKey },
    #[error("cell {0:?} holds no waypoints")]
    EmptyCell(CellKey),
    #[error("interval length must be at least one minute")]
    ZeroInterval,
}

/// Orders as `(direction, segment, interval)`, the output row order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub direction: Direction,
    pub segment: u32,
    pub interval: u32,
}

impl CellKey {
    pub fn new(direction: Direction, segment: u32, interval: u32) -> Self {
        Self {
            direction,
            segment,
            interval,
        }
    }
}

/// Left-closed time intervals of fixed length counted from `epoch_ms`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Binning {
    pub epoch_ms: i64,
    pub interval_ms: i64,
}

impl Binning {
    pub fn new(epoch_ms: i64, interval_min: u32) -> Result<Self, AggregateError> {
        if interval_min == 0 {
            return Err(AggregateError::ZeroInterval);
        }
        Ok(Self {
            epoch_ms,
            interval_ms: i64::from(interval_min) * 60_000,
        })
    }

    pub fn interval_of(&self, timestamp_ms: i64) -> Result<u32, AggregateError> {
        if timestamp_ms < self.epoch_ms {
            return Err(AggregateError::TimestampBeforeEpoch {
                timestamp_ms,
                epoch_ms: self.epoch_ms,
            });
        }
        Ok(((timestamp_ms - self.epoch_ms) / self.interval_ms) as u32)
    }

    pub fn assign_cell(&self, sample: &KinematicSample) -> Result<CellKey, AggregateError> {
        Ok(CellKey::new(
            sample.direction,
            sample.segment_index as u32,
            self.interval_of(sample.timestamp_ms)?,
        ))
    }
}

/// Running count / mean / sum of squared deviations.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SpeedMoments {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl SpeedMoments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &SpeedMoments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = self.count + other.count;
        let delta = other.mean - self.mean;
        let w = other.count as f64 / n as f64;
        self.mean += delta * w;
        self.m2 += other.m2 + delta * delta * self.count as f64 * w;
        self.count = n;
    }

    /// Population standard deviation; tiny negative round-off clamps to 0.
    pub fn population_std(&self) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        (self.m2 / self.count as f64).max(0.0).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellAccumulator {
    key: CellKey,
    pub journeys: HashSet<Arc<str>>,
    pub waypoints: u64,
    pub speed: SpeedMoments,
    pub brake_count: u64,
    pub high_jerk_count: u64,
    pub hard_brake_count: u64,
    pub hard_accel_count: u64,
    pub sum_abs_heading_delta_deg: f64,
    pub sum_fuel_ml: f64,
}

impl CellAccumulator {
    pub fn new(key: CellKey) -> Self {
        Self {
            key,
            journeys: HashSet::new(),
            waypoints: 0,
            speed: SpeedMoments::default(),
            brake_count: 0,
            high_jerk_count: 0,
            hard_brake_count: 0,
            hard_accel_count: 0,
            sum_abs_heading_delta_deg: 0.0,
            sum_fuel_ml: 0.0,
        }
    }

    pub fn key(&self) -> CellKey {
        self.key
    }

    pub fn accumulate(&mut self, sample: &KinematicSample, binning: &Binning) -> Result<(), AggregateError> {
        let key = binning.assign_cell(sample)?;
        if key != self.key {
            return Err(AggregateError::KeyMismatch {
                expected: self.key,
                found: key,
            });
        }
        self.push_unchecked(sample);
        Ok(())
    }

    fn push_unchecked(&mut self, s: &KinematicSample) {
        self.waypoints += 1;
        self.speed.push(s.speed_mps);
        let f = s.flags;
        self.brake_count += u64::from(f.contains(EventFlags::BRAKE));
        self.hard_brake_count += u64::from(f.contains(EventFlags::HARD_BRAKE));
        self.hard_accel_count += u64::from(f.contains(EventFlags::HARD_ACCEL));
        self.high_jerk_count += u64::from(f.contains(EventFlags::HIGH_JERK));
        self.sum_abs_heading_delta_deg += s.heading_delta_deg;
        self.sum_fuel_ml += s.fuel_ml;
        if !self.journeys.contains(&s.journey_id) {
            self.journeys.insert(s.journey_id.clone());
        }
    }

    pub fn merge(&mut self, other: &CellAccumulator) -> Result<(), AggregateError> {
        if other.key != self.key {
            return Err(AggregateError::KeyMismatch {
                expected: self.key,
                found: other.key,
            });
        }
        self.waypoints += other.waypoints;
        self.speed.merge(&other.speed);
        self.brake_count += other.brake_count;
        self.hard_brake_count += other.hard_brake_count;
        self.hard_accel_count += other.hard_accel_count;
        self.high_jerk_count += other.high_jerk_count;
        self.sum_abs_heading_delta_deg += other.sum_abs_heading_delta_deg;
        self.sum_fuel_ml += other.sum_fuel_ml;
        self.journeys.extend(other.journeys.iter().cloned());
        Ok(())
    }

    pub fn finalize(&self) -> Result<CellMetrics, AggregateError> {
        if self.waypoints == 0 || self.journeys.is_empty() {
            return Err(AggregateError::EmptyCell(self.key));
        }
        let m = self.waypoints as f64;
        let n = self.journeys.len() as f64;
        Ok(CellMetrics {
            n_vehicles: self.journeys.len() as u64,
            n_waypoints: self.waypoints,
            mean_speed_mps: self.speed.mean,
            std_speed_mps: self.speed.population_std(),
            waypoints_per_vehicle: m / n,
            pct_brakes: self.brake_count as f64 / m,
            pct_high_jerk: self.high_jerk_count as f64 / m,
            hard_accel_count: self.hard_accel_count,
            hard_brake_count: self.hard_brake_count,
            avg_heading_change: (self.sum_abs_heading_delta_deg / 360.0) / n,
            avg_fuel_ml_per_veh: self.sum_fuel_ml / n,
        })
    }
}

/// Finalized per-cell measurements. Speeds in m/s, fuel in mL.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellMetrics {
    pub n_vehicles: u64,
    pub n_waypoints: u64,
    pub mean_speed_mps: f64,
    pub std_speed_mps: f64,
    pub waypoints_per_vehicle: f64,
    pub pct_brakes: f64,
    pub pct_high_jerk: f64,
    pub hard_accel_count: u64,
    pub hard_brake_count: u64,
    /// Summed |heading change| over 360, per vehicle.
    pub avg_heading_change: f64,
    pub avg_fuel_ml_per_veh: f64,
}

pub type CellMap = BTreeMap<CellKey, CellAccumulator>;

/// Accumulators plus the number of samples dropped for preceding the epoch.
#[derive(Clone, Debug, Default)]
pub struct Aggregation {
    pub cells: CellMap,
    pub before_epoch: u64,
}

impl Aggregation {
    pub fn push(&mut self, sample: &KinematicSample, binning: &Binning) {
        match binning.assign_cell(sample) {
            Ok(key) => self
                .cells
                .entry(key)
                .or_insert_with(|| CellAccumulator::new(key))
                .push_unchecked(sample),
            Err(_) => self.before_epoch += 1,
        }
    }

    pub fn merge(mut self, other: Aggregation) -> Aggregation {
        self.before_epoch += other.before_epoch;
        for (key, acc) in other.cells {
            match self.cells.get_mut(&key) {
                Some(mine) => mine.merge(&acc).expect("keys agree by construction"),
                None => {
                    self.cells.insert(key, acc);
                }
            }
        }
        self
    }

    pub fn finalize(&self) -> BTreeMap<CellKey, CellMetrics> {
        self.cells
            .iter()
            .map(|(k, acc)| (*k, acc.finalize().expect("cells are created with one sample")))
            .collect()
    }

    /// Total waypoints over all cells.
    pub fn waypoint_total(&self) -> u64 {
        self.cells.values().map(|c| c.waypoints).sum()
    }
}

pub fn accumulate_samples<'a>(samples: impl IntoIterator<Item = &'a KinematicSample>, binning: &Binning) -> Aggregation {
    let mut agg = Aggregation::default();
    for s in samples {
        agg.push(s, binning);
    }
    agg
}

/// How partial aggregations are combined across workers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ReductionMode {
    /// One partial per unit, merged left to right in unit order. Bitwise
    /// identical for any worker count.
    #[default]
    Canonical,
    /// Work-stealing fold/reduce; floats may differ in the last bits between
    /// worker counts.
    Unordered,
}

/// Aggregates the samples produced by each unit (typically one journey) on
/// the current rayon pool.
pub fn aggregate_units<T, F>(units: &[T], binning: &Binning, mode: ReductionMode, samples_of: F) -> Aggregation
where
    T: Sync,
    F: Fn(&T) -> Vec<KinematicSample> + Sync,
{
    match mode {
        ReductionMode::Canonical => {
            let partials: Vec<Aggregation> = units
                .par_iter()
                .map(|u| accumulate_samples(&samples_of(u), binning))
                .collect();
            partials.into_iter().fold(Aggregation::default(), Aggregation::merge)
        }
        ReductionMode::Unordered => units
            .par_iter()
            .fold(Aggregation::default, |mut agg, u| {
                for s in &samples_of(u) {
                    agg.push(s, binning);
                }
                agg
            })
            .reduce(Aggregation::default, Aggregation::merge),
    }
}
