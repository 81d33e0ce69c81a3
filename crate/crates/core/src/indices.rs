//! Profiling indices computed from finalized cell metrics.
//!
//! * safety: `w_vc * sigma/mu + w_vr * drop + w_hc * h`, where `drop` is the
//!   relative shortfall of the mean speed below the posted limit
//! * comfort: `w_pb * p_brake + w_pj * p_jerk`
//! * stability: `w_na * n_hard_accel + w_nb * n_hard_brake` (raw counts)
//! * fuel: cubic cruise term plus an acceleration term that only applies for
//!   `a > 0`

use std::collections::BTreeMap;

use thiserror::Error;

use crate::aggregate::{CellKey, CellMetrics};
use crate::kinematics::KinematicSample;
use crate::route::Direction;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum IndexError {
    #[error("cell {0:?} has zero mean speed; safety index undefined")]
    ZeroMeanSpeed(CellKey),
    #[error("no speed limit covers {direction} segment {segment}")]
    MissingSpeedLimit { direction: Direction, segment: u32 },
    #[error("weight {name} must be finite and non-negative, got {value}")]
    InvalidWeight { name: &'static str, value: f64 },
    #[error("speed limit spans for {direction}: {reason}")]
    InvalidSpeedLimits { direction: Direction, reason: String },
    #[error("fuel cruise rate must be positive on [0, 60] m/s; f_cruise({speed}) = {rate}")]
    NonPositiveCruiseFuel { speed: f64, rate: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IndexWeights {
    pub w_vc: f64,
    pub w_vr: f64,
    pub w_hc: f64,
    pub w_pb: f64,
    pub w_pj: f64,
    pub w_na: f64,
    pub w_nb: f64,
}

impl Default for IndexWeights {
    fn default() -> Self {
        Self {
            w_vc: 1.0,
            w_vr: 1.0,
            w_hc: 1.0,
            w_pb: 1.0,
            w_pj: 1.0,
            w_na: 1.0,
            w_nb: 1.0,
        }
    }
}

impl IndexWeights {
    pub fn validate(&self) -> Result<(), IndexError> {
        for (name, value) in [
            ("w_vc", self.w_vc),
            ("w_vr", self.w_vr),
            ("w_hc", self.w_hc),
            ("w_pb", self.w_pb),
            ("w_pj", self.w_pj),
            ("w_na", self.w_na),
            ("w_nb", self.w_nb),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(IndexError::InvalidWeight { name, value });
            }
        }
        Ok(())
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            w_vc: self.w_vc * k,
            w_vr: self.w_vr * k,
            w_hc: self.w_hc * k,
            w_pb: self.w_pb * k,
            w_pj: self.w_pj * k,
            w_na: self.w_na * k,
            w_nb: self.w_nb * k,
        }
    }
}

/// How the speed term of the safety index treats cells above the limit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SpeedDropMode {
    /// `max(0, (v_d - mu) / v_d)`: only a shortfall below the limit counts.
    #[default]
    Clamped,
    /// `(mu - v_d) / v_d` taken literally, negative under congestion.
    Signed,
}

/// One posted-limit span along a carriageway, mileposts in miles.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpeedLimitSpan {
    pub start_mi: f64,
    pub end_mi: f64,
    pub limit_mps: f64,
}

/// Contiguous, non-overlapping limit spans starting at milepost 0.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SpeedLimitMap {
    spans: BTreeMap<Direction, Vec<SpeedLimitSpan>>,
}

impl SpeedLimitMap {
    /// One limit for every milepost of both directions.
    pub fn uniform(limit_mps: f64) -> Result<Self, IndexError> {
        let mut map = Self::default();
        for d in Direction::ALL {
            map.set(d, vec![SpeedLimitSpan {
                start_mi: 0.0,
                end_mi: f64::INFINITY,
                limit_mps,
            }])?;
        }
        Ok(map)
    }

    pub fn set(&mut self, direction: Direction, mut spans: Vec<SpeedLimitSpan>) -> Result<(), IndexError> {
        let bad = |reason: String| IndexError::InvalidSpeedLimits { direction, reason };
        if spans.is_empty() {
            return Err(bad("no spans".into()));
        }
        spans.sort_by(|a, b| a.start_mi.total_cmp(&b.start_mi));
        if spans[0].start_mi != 0.0 {
            return Err(bad(format!("first span starts at {} instead of 0", spans[0].start_mi)));
        }
        for (i, s) in spans.iter().enumerate() {
            if !(s.limit_mps.is_finite() && s.limit_mps > 0.0) {
                return Err(bad(format!("limit {} must be positive", s.limit_mps)));
            }
            if !(s.end_mi > s.start_mi) {
                return Err(bad(format!("span [{}, {}] is empty", s.start_mi, s.end_mi)));
            }
            if i > 0 && s.start_mi != spans[i - 1].end_mi {
                return Err(bad(format!(
                    "spans must be contiguous: {} follows {}",
                    s.start_mi,
                    spans[i - 1].end_mi
                )));
            }
        }
        self.spans.insert(direction, spans);
        Ok(())
    }

    pub fn spans(&self, direction: Direction) -> Option<&[SpeedLimitSpan]> {
        self.spans.get(&direction).map(Vec::as_slice)
    }

    /// The lowest limit among spans overlapping segment `segment`.
    pub fn limit_for_segment(&self, direction: Direction, segment: u32, segment_length_mi: f64) -> Option<f64> {
        let lo = f64::from(segment) * segment_length_mi;
        let hi = lo + segment_length_mi;
        self.spans
            .get(&direction)?
            .iter()
            .filter(|s| s.start_mi < hi && s.end_mi > lo)
            .map(|s| s.limit_mps)
            .min_by(f64::total_cmp)
    }
}

/// Polynomial instantaneous fuel model coefficients, fuel in mL/s for speed in
/// m/s and acceleration in m/s^2. Defaults are the published passenger-car
/// values from Kamal et al. (IEEE TCST, 2013).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FuelParams {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for FuelParams {
    fn default() -> Self {
        Self {
            b0: 0.1569,
            b1: 2.450e-2,
            b2: -7.415e-4,
            b3: 5.975e-5,
            c0: 0.07224,
            c1: 9.681e-2,
            c2: 1.075e-3,
        }
    }
}

impl FuelParams {
    pub fn cruise_rate(&self, v: f64) -> f64 {
        self.b0 + self.b1 * v + self.b2 * v * v + self.b3 * v * v * v
    }

    /// Checks `f_cruise > 0` on `[0, 60]` m/s at the endpoints and at every
    /// interior stationary point of the cubic.
    pub fn validate(&self) -> Result<(), IndexError> {
        let mut candidates = vec![0.0, 60.0];
        // f' = b1 + 2 b2 v + 3 b3 v^2
        let (qa, qb, qc) = (3.0 * self.b3, 2.0 * self.b2, self.b1);
        if qa != 0.0 {
            let disc = qb * qb - 4.0 * qa * qc;
            if disc >= 0.0 {
                let r = disc.sqrt();
                candidates.push((-qb + r) / (2.0 * qa));
                candidates.push((-qb - r) / (2.0 * qa));
            }
        } else if qb != 0.0 {
            candidates.push(-qc / qb);
        }
        for v in candidates.into_iter().filter(|v| (0.0..=60.0).contains(v)) {
            let rate = self.cruise_rate(v);
            if !(rate > 0.0 && rate.is_finite()) {
                return Err(IndexError::NonPositiveCruiseFuel { speed: v, rate });
            }
        }
        Ok(())
    }
}

/// Instantaneous fuel rate, mL/s. Deceleration contributes nothing beyond the
/// cruise term.
pub fn fuel_rate(v: f64, a: f64, p: &FuelParams) -> f64 {
    let cruise = p.cruise_rate(v);
    if a > 0.0 {
        cruise + a * (p.c0 + p.c1 * v + p.c2 * v * v)
    } else {
        cruise
    }
}

/// Sets `fuel_ml = fuel_rate * dt` on every sample with a predecessor in its
/// chain; chain starts get zero.
pub fn attach_fuel(samples: &mut [KinematicSample], p: &FuelParams) {
    for s in samples {
        s.fuel_ml = match (s.acceleration, s.dt_s) {
            (Some(a), Some(dt)) => fuel_rate(s.speed_mps, a, p) * dt,
            _ => 0.0,
        };
    }
}

pub fn safety_index(
    key: CellKey,
    m: &CellMetrics,
    limit_mps: f64,
    w: &IndexWeights,
    mode: SpeedDropMode,
) -> Result<f64, IndexError> {
    if !(m.mean_speed_mps > 0.0) {
        return Err(IndexError::ZeroMeanSpeed(key));
    }
    let cv = m.std_speed_mps / m.mean_speed_mps;
    let drop = match mode {
        SpeedDropMode::Clamped => ((limit_mps - m.mean_speed_mps) / limit_mps).max(0.0),
        SpeedDropMode::Signed => (m.mean_speed_mps - limit_mps) / limit_mps,
    };
    Ok(w.w_vc * cv + w.w_vr * drop + w.w_hc * m.avg_heading_change)
}

pub fn comfort_index(m: &CellMetrics, w: &IndexWeights) -> f64 {
    w.w_pb * m.pct_brakes + w.w_pj * m.pct_high_jerk
}

pub fn stability_index(m: &CellMetrics, w: &IndexWeights) -> f64 {
    w.w_na * m.hard_accel_count as f64 + w.w_nb * m.hard_brake_count as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct IndexedCell {
    pub key: CellKey,
    pub metrics: CellMetrics,
    /// `None` when the cell's mean speed is zero.
    pub safety: Option<f64>,
    pub comfort: f64,
    pub stability: f64,
    /// Stability divided by the cell's waypoint count.
    pub stability_per_waypoint: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IndexOptions {
    pub weights: IndexWeights,
    pub drop_mode: SpeedDropMode,
}

pub fn index_all(
    cells: &BTreeMap<CellKey, CellMetrics>,
    limits: &SpeedLimitMap,
    segment_length_mi: f64,
    opts: &IndexOptions,
) -> Result<Vec<IndexedCell>, IndexError> {
    cells
        .iter()
        .map(|(key, m)| {
            let limit = limits
                .limit_for_segment(key.direction, key.segment, segment_length_mi)
                .ok_or(IndexError::MissingSpeedLimit {
                    direction: key.direction,
                    segment: key.segment,
                })?;
            let stability = stability_index(m, &opts.weights);
            Ok(IndexedCell {
                key: *key,
                metrics: *m,
                safety: safety_index(*key, m, limit, &opts.weights, opts.drop_mode).ok(),
                comfort: comfort_index(m, &opts.weights),
                stability,
                stability_per_waypoint: stability / m.n_waypoints as f64,
            })
        })
        .collect()
}
