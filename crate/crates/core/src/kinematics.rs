//! Finite-difference kinematics and event classification.
//!
//! Acceleration is the first difference of reported speed, jerk the first
//! difference of acceleration, both over the ping spacing in seconds. No
//! smoothing is applied. A spacing above `max_dt_ms` restarts the chain.

use std::sync::Arc;

use bitflags::bitflags;
use thiserror::Error;

use crate::ingest::WaypointRecord;
use crate::route::{angle_between_deg, Direction, MatchResult};

bitflags! {
    #[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
    pub struct EventFlags: u8 {
        const BRAKE = 1;
        const HARD_BRAKE = 1 << 1;
        const HARD_ACCEL = 1 << 2;
        const HIGH_JERK = 1 << 3;
    }
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum ThresholdError {
    #[error("acceleration thresholds must satisfy hard_brake_max < brake_accel_max < 0 < hard_accel_min (got {hard_brake}, {brake}, {hard_accel})")]
    AccelOrder { hard_brake: f64, brake: f64, hard_accel: f64 },
    #[error("jerk thresholds must satisfy jerk_neg_max < 0 < jerk_pos_min (got {neg}, {pos})")]
    JerkOrder { neg: f64, pos: f64 },
    #[error("max_dt_ms must be positive, got {0}")]
    MaxDt(i64),
}

/// Inclusive classification bounds. Defaults: hard brake at 2.638 m/s^2 of
/// deceleration, hard acceleration at 3.8 m/s^2, jerk outside
/// [-1.47, +1.07] m/s^3, ordinary brake at -1.0 m/s^2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EventThresholds {
    pub brake_accel_max: f64,
    pub hard_brake_max: f64,
    pub hard_accel_min: f64,
    pub jerk_pos_min: f64,
    pub jerk_neg_max: f64,
    pub max_dt_ms: i64,
}

impl Default for EventThresholds {
    fn default() -> Self {
        Self {
            brake_accel_max: -1.0,
            hard_brake_max: -2.638,
            hard_accel_min: 3.8,
            jerk_pos_min: 1.07,
            jerk_neg_max: -1.47,
            max_dt_ms: 10_000,
        }
    }
}

impl EventThresholds {
    pub fn validate(&self) -> Result<(), ThresholdError> {
        let ordered = self.hard_brake_max < self.brake_accel_max
            && self.brake_accel_max < 0.0
            && 0.0 < self.hard_accel_min;
        if !ordered {
            return Err(ThresholdError::AccelOrder {
                hard_brake: self.hard_brake_max,
                brake: self.brake_accel_max,
                hard_accel: self.hard_accel_min,
            });
        }
        if !(self.jerk_neg_max < 0.0 && 0.0 < self.jerk_pos_min) {
            return Err(ThresholdError::JerkOrder {
                neg: self.jerk_neg_max,
                pos: self.jerk_pos_min,
            });
        }
        if self.max_dt_ms <= 0 {
            return Err(ThresholdError::MaxDt(self.max_dt_ms));
        }
        Ok(())
    }
}

/// Flags for one sample. Absent derivatives never set a flag.
pub fn classify_events(acceleration: Option<f64>, jerk: Option<f64>, th: &EventThresholds) -> EventFlags {
    let mut flags = EventFlags::empty();
    if let Some(a) = acceleration {
        flags.set(EventFlags::BRAKE, a <= th.brake_accel_max);
        flags.set(EventFlags::HARD_BRAKE, a <= th.hard_brake_max);
        flags.set(EventFlags::HARD_ACCEL, a >= th.hard_accel_min);
    }
    if let Some(j) = jerk {
        flags.set(EventFlags::HIGH_JERK, j >= th.jerk_pos_min || j <= th.jerk_neg_max);
    }
    flags
}

/// A matched waypoint enriched with derivatives.
#[derive(Clone, Debug, PartialEq)]
pub struct KinematicSample {
    pub journey_id: Arc<str>,
    pub timestamp_ms: i64,
    pub milepost: f64,
    pub segment_index: usize,
    pub direction: Direction,
    pub speed_mps: f64,
    pub acceleration: Option<f64>,
    pub jerk: Option<f64>,
    /// Spacing to the previous ping of the chain, seconds; present iff
    /// `acceleration` is.
    pub dt_s: Option<f64>,
    pub heading_delta_deg: f64,
    pub flags: EventFlags,
    /// Fuel attributed to this sample, mL. Zero until fuel is attached.
    pub fuel_ml: f64,
}

/// A waypoint and where it landed on the corridor.
#[derive(Clone, Debug)]
pub struct MatchedWaypoint {
    pub record: WaypointRecord,
    pub matched: MatchResult,
}

/// Derives one sample per matched waypoint. `waypoints` must be in time order.
pub fn derive_kinematics(waypoints: &[MatchedWaypoint], th: &EventThresholds) -> Vec<KinematicSample> {
    let mut out: Vec<KinematicSample> = Vec::with_capacity(waypoints.len());
    let mut prev: Option<&MatchedWaypoint> = None;
    let mut prev_accel: Option<f64> = None;
    for w in waypoints {
        let (acceleration, jerk, dt_s, heading_delta_deg) = match prev {
            Some(p) if within_chain(p.record.timestamp_ms, w.record.timestamp_ms, th.max_dt_ms) => {
                let dt = (w.record.timestamp_ms - p.record.timestamp_ms) as f64 / 1000.0;
                let a = (w.record.speed_mps - p.record.speed_mps) / dt;
                let j = prev_accel.map(|pa| (a - pa) / dt);
                let dh = angle_between_deg(p.record.heading_deg, w.record.heading_deg);
                (Some(a), j, Some(dt), dh)
            }
            _ => (None, None, None, 0.0),
        };
        out.push(KinematicSample {
            journey_id: w.record.journey_id.clone(),
            timestamp_ms: w.record.timestamp_ms,
            milepost: w.matched.milepost,
            segment_index: w.matched.segment_index,
            direction: w.matched.direction,
            speed_mps: w.record.speed_mps,
            acceleration,
            jerk,
            dt_s,
            heading_delta_deg,
            flags: classify_events(acceleration, jerk, th),
            fuel_ml: 0.0,
        });
        prev = Some(w);
        prev_accel = acceleration;
    }
    out
}

fn within_chain(prev_ms: i64, cur_ms: i64, max_dt_ms: i64) -> bool {
    let dt = cur_ms - prev_ms;
    dt > 0 && dt <= max_dt_ms
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn journey(points: &[(i64, f64, f64)]) -> Vec<MatchedWaypoint> {
        points
            .iter()
            .map(|&(ts, speed, heading)| MatchedWaypoint {
                record: WaypointRecord {
                    journey_id: Arc::from("J"),
                    timestamp_ms: ts,
                    lat: 40.0,
                    lon: -74.0,
                    speed_mps: speed,
                    heading_deg: heading,
                },
                matched: MatchResult {
                    segment_index: 0,
                    milepost: 0.1,
                    lateral_offset_m: 0.0,
                    direction: Direction::EB,
                },
            })
            .collect()
    }

    #[test]
    fn hard_brake_from_speed_drop() {
        let s = derive_kinematics(&journey(&[(0, 30.0, 90.0), (3000, 22.0, 90.0)]), &EventThresholds::default());
        let a = s[1].acceleration.unwrap();
        assert!((a + 2.6667).abs() < 1e-4);
        assert!(s[1].flags.contains(EventFlags::BRAKE | EventFlags::HARD_BRAKE));
        assert_eq!(s[0].acceleration, None);
        assert_eq!(s[0].flags, EventFlags::empty());
    }

    #[test]
    fn constant_motion_is_quiet() {
        let pts: Vec<_> = (0..6).map(|i| (i * 3000, 25.0, 45.0)).collect();
        let s = derive_kinematics(&journey(&pts), &EventThresholds::default());
        for x in &s[1..] {
            assert_eq!(x.acceleration, Some(0.0));
            assert_eq!(x.heading_delta_deg, 0.0);
            assert!(x.flags.is_empty());
        }
        for x in &s[2..] {
            assert_eq!(x.jerk, Some(0.0));
        }
    }

    #[test]
    fn heading_wraps() {
        let s = derive_kinematics(&journey(&[(0, 20.0, 359.0), (3000, 20.0, 1.0)]), &EventThresholds::default());
        assert_eq!(s[1].heading_delta_deg, 2.0);
    }

    #[test]
    fn high_jerk_chain() {
        // frozen from a hand finite-difference: a = [-, 0, 3.3], jerk = [-, -, 1.1]
        let s = derive_kinematics(
            &journey(&[(0, 20.0, 0.0), (3000, 20.0, 0.0), (6000, 29.9, 0.0)]),
            &EventThresholds::default(),
        );
        assert_eq!(s[1].jerk, None);
        assert!((s[2].acceleration.unwrap() - 3.3).abs() < 1e-12);
        assert!((s[2].jerk.unwrap() - 1.1).abs() < 1e-12);
        assert!(s[2].flags.contains(EventFlags::HIGH_JERK));
        assert!(!s[2].flags.contains(EventFlags::HARD_ACCEL));
    }

    #[test]
    fn gap_restarts_chain() {
        let s = derive_kinematics(
            &journey(&[(0, 20.0, 0.0), (3000, 21.0, 0.0), (15_000, 10.0, 90.0), (18_000, 10.0, 90.0)]),
            &EventThresholds::default(),
        );
        assert_eq!(s[2].acceleration, None);
        assert_eq!(s[2].dt_s, None);
        assert_eq!(s[2].heading_delta_deg, 0.0);
        assert_eq!(s[3].acceleration, Some(0.0));
        assert_eq!(s[3].jerk, None);
    }

    #[test]
    fn single_waypoint_journey() {
        let s = derive_kinematics(&journey(&[(0, 20.0, 0.0)]), &EventThresholds::default());
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].acceleration, None);
        assert_eq!(s[0].jerk, None);
    }

    #[test]
    fn classify_boundaries() {
        let th = EventThresholds::default();
        assert!(classify_events(Some(-2.638), None, &th).contains(EventFlags::HARD_BRAKE));
        assert!(!classify_events(Some(3.79), None, &th).contains(EventFlags::HARD_ACCEL));
        assert!(classify_events(Some(3.8), None, &th).contains(EventFlags::HARD_ACCEL));
        assert!(classify_events(Some(0.0), Some(-1.5), &th).contains(EventFlags::HIGH_JERK));
        assert!(classify_events(None, None, &th).is_empty());
        assert_eq!(classify_events(Some(-1.0), None, &th), EventFlags::BRAKE);
    }

    #[test]
    fn threshold_validation() {
        assert!(EventThresholds::default().validate().is_ok());
        let bad = EventThresholds {
            brake_accel_max: -3.0,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(ThresholdError::AccelOrder { .. })));
        let bad = EventThresholds {
            jerk_pos_min: -0.1,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(ThresholdError::JerkOrder { .. })));
    }

    proptest! {
        #[test]
        fn hard_brake_implies_brake(
            a in -10.0f64..10.0,
            hard in -8.0f64..-0.01,
            gap in 0.001f64..5.0,
        ) {
            let th = EventThresholds { hard_brake_max: hard - gap, brake_accel_max: hard, ..Default::default() };
            prop_assume!(th.validate().is_ok());
            let f = classify_events(Some(a), None, &th);
            prop_assert!(!f.contains(EventFlags::HARD_BRAKE) || f.contains(EventFlags::BRAKE));
        }

        #[test]
        fn heading_delta_range_and_wrap_invariance(h1 in 0.0f64..360.0, h2 in 0.0f64..360.0, k in -3i32..3) {
            let d = angle_between_deg(h1, h2);
            prop_assert!((0.0..=180.0).contains(&d));
            let shifted = angle_between_deg(h1 + 360.0 * k as f64, h2);
            prop_assert!((shifted - d).abs() < 1e-9);
        }

        #[test]
        fn jerk_implies_acceleration(speeds in proptest::collection::vec(0.0f64..40.0, 1..30), gaps in proptest::collection::vec(500i64..15_000, 30)) {
            let mut ts = 0;
            let pts: Vec<_> = speeds.iter().zip(&gaps).map(|(&v, &g)| { ts += g; (ts, v, 0.0) }).collect();
            for s in derive_kinematics(&journey(&pts), &EventThresholds::default()) {
                prop_assert!(s.jerk.is_none() || s.acceleration.is_some());
                prop_assert_eq!(s.dt_s.is_some(), s.acceleration.is_some());
            }
        }
    }
}
