//! Synthetic corridors and journeys with known kinematics.
//!
//! The corridor is straight: the EB carriageway runs east along a parallel
//! from the origin, the WB carriageway runs west 20 m to the north. Vehicles
//! enter at a fixed rate and follow a prescribed speed profile without
//! interacting. Positions follow the noiseless profile; only the reported
//! speed carries noise.
//!
//! With an incident, vehicles whose free-flow arrival at the start of the
//! slow zone (incident range extended upstream by the queue) falls inside the
//! incident window brake at a fixed rate to the reduced speed, hold it through
//! the zone, then accelerate back to cruise.
//!
//! Spec file keys (flat `key = value`):
//!
//! | key | default |
//! |-----|---------|
//! | `length_mi` | 10 |
//! | `directions` | `EB` (`EB`, `WB`, or `EB,WB`) |
//! | `vehicles` | 1 (per direction) |
//! | `rate_per_hour` | 60 |
//! | `start` | `2021-06-06T00:00:00Z` |
//! | `cruise_mps` | 26.8224 |
//! | `ping_s` | 3 |
//! | `ping_phase_s` | half the ping interval |
//! | `noise_std_mps` | 0 |
//! | `origin_lat`, `origin_lon` | 40.78, -74.30 |
//! | `seed` | 0 |
//! | `incident.start_mi`, `incident.end_mi` | required for an incident |
//! | `incident.start_min`, `incident.end_min` | window, minutes after `start` |
//! | `incident.reduced_mps` | required for an incident |
//! | `incident.queue_mi` | 0 |
//! | `incident.exit_accel_mps2` | 2 |
//! | `incident.directions` | all generated directions |

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::aggregate::{CellKey, CellMetrics};
use crate::config::{parse_epoch, RunConfig};
use crate::ingest::{format_record, WaypointRecord, MPS_HEADER};
use crate::kv::{KvError, KvSource};
use crate::route::{format_route, initial_bearing_deg, Corridor, Direction, LatLon, RouteError, RoutePolyline, EARTH_RADIUS_M};
use crate::table::{CellTable, GridMeta};
use crate::{METERS_PER_MILE, MPS_PER_MPH};

/// Braking rate into the slow zone, m/s^2.
pub const INCIDENT_DECEL_MPS2: f64 = 3.0;
/// Lateral separation of the two carriageways, m.
pub const CARRIAGEWAY_OFFSET_M: f64 = 20.0;
const VERTEX_SPACING_M: f64 = 0.25 * METERS_PER_MILE;
/// Pings closer than this to a segment boundary make the oracle refuse.
pub const BOUNDARY_GUARD_MI: f64 = 1e-6;

#[derive(Error, Debug)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
    #[error("unsupported by the oracle: {0}")]
    UnsupportedSpec(String),
    #[error(transparent)]
    Parse(#[from] KvError),
    #[error(transparent)]
    Route(#[from] RouteError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct IncidentSpec {
    pub start_mi: f64,
    pub end_mi: f64,
    pub start_min: f64,
    pub end_min: f64,
    pub reduced_mps: f64,
    pub queue_mi: f64,
    pub exit_accel_mps2: f64,
    pub directions: Vec<Direction>,
}

impl IncidentSpec {
    /// Slow zone in metres: the incident range plus the upstream queue.
    pub fn zone_m(&self) -> (f64, f64) {
        ((self.start_mi - self.queue_mi) * METERS_PER_MILE, self.end_mi * METERS_PER_MILE)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub length_mi: f64,
    pub directions: Vec<Direction>,
    pub vehicles: u32,
    pub rate_per_hour: f64,
    pub start_ms: i64,
    pub cruise_mps: f64,
    pub ping_ms: i64,
    pub ping_phase_ms: i64,
    pub noise_std_mps: f64,
    pub origin: LatLon,
    pub seed: u64,
    pub incident: Option<IncidentSpec>,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            length_mi: 10.0,
            directions: vec![Direction::EB],
            vehicles: 1,
            rate_per_hour: 60.0,
            start_ms: 1_622_937_600_000,
            cruise_mps: 60.0 * MPS_PER_MPH,
            ping_ms: 3000,
            ping_phase_ms: 1500,
            noise_std_mps: 0.0,
            origin: LatLon::new(40.78, -74.30),
            seed: 0,
            incident: None,
        }
    }
}

fn parse_directions(raw: &str) -> Result<Vec<Direction>, String> {
    let mut out: Vec<Direction> = raw
        .split(',')
        .map(|d| d.trim().parse::<Direction>())
        .collect::<Result<_, _>>()?;
    out.sort();
    out.dedup();
    if out.is_empty() {
        return Err("no directions".into());
    }
    Ok(out)
}

fn seconds_to_ms(s: f64) -> Result<i64, String> {
    let ms = s * 1000.0;
    if !ms.is_finite() || (ms - ms.round()).abs() > 1e-6 {
        return Err(format!("{s} s is not a whole number of milliseconds"));
    }
    Ok(ms.round() as i64)
}

impl ScenarioSpec {
    pub fn from_text(text: &str, name: &str) -> Result<Self, SynthError> {
        let mut kv = KvSource::parse(text, name)?;
        let mut s = ScenarioSpec::default();
        kv.take_into("length_mi", &mut s.length_mi)?;
        if let Some(d) = kv.take_with("directions", parse_directions)? {
            s.directions = d;
        }
        kv.take_into("vehicles", &mut s.vehicles)?;
        kv.take_into("rate_per_hour", &mut s.rate_per_hour)?;
        if let Some(ms) = kv.take_with("start", parse_epoch)? {
            s.start_ms = ms;
        }
        kv.take_into("cruise_mps", &mut s.cruise_mps)?;
        let ping = kv.take_with("ping_s", |r| seconds_to_ms(r.parse().map_err(|_| format!("cannot parse '{r}'"))?))?;
        if let Some(p) = ping {
            s.ping_ms = p;
        }
        s.ping_phase_ms = match kv.take_with("ping_phase_s", |r| seconds_to_ms(r.parse().map_err(|_| format!("cannot parse '{r}'"))?))? {
            Some(p) => p,
            None => s.ping_ms / 2,
        };
        kv.take_into("noise_std_mps", &mut s.noise_std_mps)?;
        kv.take_into("origin_lat", &mut s.origin.lat)?;
        kv.take_into("origin_lon", &mut s.origin.lon)?;
        kv.take_into("seed", &mut s.seed)?;

        let start_mi: Option<f64> = kv.take("incident.start_mi")?;
        let end_mi: Option<f64> = kv.take("incident.end_mi")?;
        let start_min: Option<f64> = kv.take("incident.start_min")?;
        let end_min: Option<f64> = kv.take("incident.end_min")?;
        let reduced: Option<f64> = kv.take("incident.reduced_mps")?;
        let queue: Option<f64> = kv.take("incident.queue_mi")?;
        let exit: Option<f64> = kv.take("incident.exit_accel_mps2")?;
        let inc_dirs = kv.take_with("incident.directions", parse_directions)?;
        let any = start_mi.is_some() || end_mi.is_some() || start_min.is_some() || end_min.is_some() || reduced.is_some();
        if any {
            let need = |v: Option<f64>, k: &str| v.ok_or_else(|| SynthError::InvalidSpec(format!("incident needs '{k}'")));
            s.incident = Some(IncidentSpec {
                start_mi: need(start_mi, "incident.start_mi")?,
                end_mi: need(end_mi, "incident.end_mi")?,
                start_min: need(start_min, "incident.start_min")?,
                end_min: need(end_min, "incident.end_min")?,
                reduced_mps: need(reduced, "incident.reduced_mps")?,
                queue_mi: queue.unwrap_or(0.0),
                exit_accel_mps2: exit.unwrap_or(2.0),
                directions: inc_dirs.unwrap_or_else(|| s.directions.clone()),
            });
        }
        kv.finish()?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.to_string()));
        let pos = |x: f64| x.is_finite() && x > 0.0;
        if !pos(self.length_mi) {
            return bad("length_mi must be positive");
        }
        if self.directions.is_empty() {
            return bad("no directions");
        }
        if self.vehicles > 0 && !pos(self.rate_per_hour) {
            return bad("rate_per_hour must be positive");
        }
        if !pos(self.cruise_mps) {
            return bad("cruise_mps must be positive");
        }
        if self.ping_ms <= 0 {
            return bad("ping_s must be positive");
        }
        if !(0..self.ping_ms).contains(&self.ping_phase_ms) {
            return bad("ping_phase_s must lie in [0, ping_s)");
        }
        if !(self.noise_std_mps.is_finite() && self.noise_std_mps >= 0.0) {
            return bad("noise_std_mps must be non-negative");
        }
        if !self.origin.is_valid() || self.origin.lat.abs() > 80.0 {
            return bad("origin must be a valid coordinate below 80 degrees latitude");
        }
        if let Some(inc) = &self.incident {
            if !(0.0 <= inc.start_mi && inc.start_mi < inc.end_mi && inc.end_mi <= self.length_mi) {
                return bad("incident range must satisfy 0 <= start_mi < end_mi <= length_mi");
            }
            if !(inc.queue_mi >= 0.0 && inc.start_mi - inc.queue_mi >= 0.0) {
                return bad("incident queue must be non-negative and stay within the corridor");
            }
            if !(inc.start_min.is_finite() && inc.start_min < inc.end_min && inc.end_min.is_finite()) {
                return bad("incident window must satisfy start_min < end_min");
            }
            if !(pos(inc.reduced_mps) && inc.reduced_mps < self.cruise_mps) {
                return bad("incident.reduced_mps must lie in (0, cruise_mps)");
            }
            if !pos(inc.exit_accel_mps2) {
                return bad("incident.exit_accel_mps2 must be positive");
            }
            let braking = (self.cruise_mps.powi(2) - inc.reduced_mps.powi(2)) / (2.0 * INCIDENT_DECEL_MPS2);
            if braking > inc.zone_m().0 {
                return bad("not enough room to brake before the slow zone");
            }
            if inc.directions.iter().any(|d| !self.directions.contains(d)) {
                return bad("incident.directions must be a subset of directions");
            }
        }
        Ok(())
    }

    pub fn headway_ms(&self) -> i64 {
        (3_600_000.0 / self.rate_per_hour).round() as i64
    }

    pub fn length_m(&self) -> f64 {
        self.length_mi * METERS_PER_MILE
    }

    fn entry_ms(&self, j: u32) -> i64 {
        self.start_ms + i64::from(j) * self.headway_ms()
    }

    fn incident_for(&self, d: Direction) -> Option<&IncidentSpec> {
        self.incident.as_ref().filter(|i| i.directions.contains(&d))
    }

    /// Carriageway polylines, each of haversine length `length_mi`.
    pub fn polylines(&self) -> Result<Vec<RoutePolyline>, SynthError> {
        let edges = (self.length_m() / VERTEX_SPACING_M).ceil().max(1.0) as usize;
        let edge_m = self.length_m() / edges as f64;
        let line = |lat: f64, reverse: bool| {
            let dlon = 2.0 * ((edge_m / (2.0 * EARTH_RADIUS_M)).sin() / lat.to_radians().cos()).asin();
            let dlon = dlon.to_degrees();
            (0..=edges)
                .map(|i| {
                    let k = if reverse { edges - i } else { i };
                    LatLon::new(lat, self.origin.lon + k as f64 * dlon)
                })
                .collect::<Vec<_>>()
        };
        let wb_lat = self.origin.lat + (CARRIAGEWAY_OFFSET_M / EARTH_RADIUS_M).to_degrees();
        self.directions
            .iter()
            .map(|&d| {
                let verts = match d {
                    Direction::EB => line(self.origin.lat, false),
                    Direction::WB => line(wb_lat, true),
                };
                Ok(RoutePolyline::new(verts, d)?)
            })
            .collect()
    }

    pub fn corridor(&self, segment_length_mi: f64) -> Result<Corridor, SynthError> {
        Ok(Corridor::new(self.polylines()?, segment_length_mi)?)
    }
}

#[derive(Clone, Copy, Debug)]
struct Phase {
    t0: f64,
    s0: f64,
    v0: f64,
    a: f64,
}

/// Noiseless motion of one vehicle, time in seconds since entry.
#[derive(Clone, Debug)]
struct Trajectory {
    phases: Vec<Phase>,
    cruise: f64,
}

impl Trajectory {
    fn new(spec: &ScenarioSpec, incident: Option<&IncidentSpec>, entry_ms: i64) -> Self {
        let vc = spec.cruise_mps;
        let cruise = Phase { t0: 0.0, s0: 0.0, v0: vc, a: 0.0 };
        let Some(inc) = incident else {
            return Self { phases: vec![cruise], cruise: vc };
        };
        let (zlo, zhi) = inc.zone_m();
        let arrival_ms = entry_ms as f64 + zlo / vc * 1000.0;
        let w0 = spec.start_ms as f64 + inc.start_min * 60_000.0;
        let w1 = spec.start_ms as f64 + inc.end_min * 60_000.0;
        if !(w0 <= arrival_ms && arrival_ms < w1) {
            return Self { phases: vec![cruise], cruise: vc };
        }
        let vr = inc.reduced_mps;
        let d = INCIDENT_DECEL_MPS2;
        let ax = inc.exit_accel_mps2;
        let s1 = zlo - (vc * vc - vr * vr) / (2.0 * d);
        let t1 = s1 / vc;
        let t2 = t1 + (vc - vr) / d;
        let t3 = t2 + (zhi - zlo) / vr;
        let t4 = t3 + (vc - vr) / ax;
        let s4 = zhi + (vc * vc - vr * vr) / (2.0 * ax);
        Self {
            phases: vec![
                cruise,
                Phase { t0: t1, s0: s1, v0: vc, a: -d },
                Phase { t0: t2, s0: zlo, v0: vr, a: 0.0 },
                Phase { t0: t3, s0: zhi, v0: vr, a: ax },
                Phase { t0: t4, s0: s4, v0: vc, a: 0.0 },
            ],
            cruise: vc,
        }
    }

    /// Position (m) and speed (m/s) at `t` seconds after entry.
    fn at(&self, t: f64) -> (f64, f64) {
        let p = self.phases.iter().rev().find(|p| p.t0 <= t).unwrap_or(&self.phases[0]);
        let tau = t - p.t0;
        (p.s0 + p.v0 * tau + 0.5 * p.a * tau * tau, p.v0 + p.a * tau)
    }
}

/// One noiseless ping.
#[derive(Clone, Copy, Debug)]
struct Ping {
    ts: i64,
    s_m: f64,
    v: f64,
}

fn pings(spec: &ScenarioSpec, d: Direction, j: u32) -> (Vec<Ping>, f64) {
    let entry = spec.entry_ms(j);
    let traj = Trajectory::new(spec, spec.incident_for(d), entry);
    let len = spec.length_m();
    let mut out = Vec::new();
    for k in 0.. {
        let rel = spec.ping_phase_ms + k * spec.ping_ms;
        let (s_m, v) = traj.at(rel as f64 / 1000.0);
        if s_m > len {
            break;
        }
        out.push(Ping { ts: entry + rel, s_m, v });
    }
    (out, traj.cruise)
}

fn journey_id(d: Direction, j: u32) -> String {
    format!("{d}-{j:06}")
}

/// Generated waypoints in canonical order (direction, vehicle, time).
pub fn generate(spec: &ScenarioSpec) -> Result<Vec<WaypointRecord>, SynthError> {
    spec.validate()?;
    let polylines = spec.polylines()?;
    let units: Vec<(usize, Direction, u32)> = spec
        .directions
        .iter()
        .enumerate()
        .flat_map(|(di, &d)| (0..spec.vehicles).map(move |j| (di, d, j)))
        .collect();
    let noise = (spec.noise_std_mps > 0.0).then(|| Normal::new(0.0, spec.noise_std_mps).expect("finite std"));
    let per_vehicle: Vec<Vec<WaypointRecord>> = units
        .par_iter()
        .map(|&(di, d, j)| {
            let line = &polylines[di];
            let heading = initial_bearing_deg(line.vertices()[0], line.vertices()[1]);
            let id: Arc<str> = Arc::from(journey_id(d, j));
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(((di as u64) << 32) | u64::from(j));
            pings(spec, d, j)
                .0
                .into_iter()
                .map(|p| {
                    let pos = line.point_at(p.s_m / METERS_PER_MILE);
                    let speed = match &noise {
                        Some(n) => (p.v + n.sample(&mut rng)).max(0.0),
                        None => p.v,
                    };
                    WaypointRecord {
                        journey_id: id.clone(),
                        timestamp_ms: p.ts,
                        lat: pos.lat,
                        lon: pos.lon,
                        speed_mps: speed,
                        heading_deg: heading,
                    }
                })
                .collect()
        })
        .collect();
    Ok(per_vehicle.into_iter().flatten().collect())
}

pub fn waypoints_csv(records: &[WaypointRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 64 + 64);
    out.push_str(MPS_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format_record(r));
        out.push('\n');
    }
    out
}

pub fn route_text(spec: &ScenarioSpec) -> Result<String, SynthError> {
    Ok(format_route(&spec.polylines()?))
}

#[derive(Default, Debug)]
struct OracleCell {
    journeys: BTreeSet<String>,
    speeds: Vec<f64>,
    cruise_only: bool,
    brakes: u64,
    hard_brakes: u64,
    hard_accels: u64,
    high_jerks: u64,
    fuel_ml: f64,
}

struct OracleGrid {
    seg_mi: f64,
    segments: u32,
    epoch: i64,
    interval_ms: i64,
}

fn oracle_grid(spec: &ScenarioSpec, cfg: &RunConfig) -> OracleGrid {
    let off = i64::from(cfg.utc_offset_min) * 60_000;
    let first = spec.start_ms + spec.ping_phase_ms;
    let epoch = cfg
        .epoch_start_ms
        .unwrap_or_else(|| (first + off).div_euclid(86_400_000) * 86_400_000 - off);
    OracleGrid {
        seg_mi: cfg.segment_length_mi,
        segments: ((spec.length_mi / cfg.segment_length_mi - 1e-9).ceil() as u32).max(1),
        epoch,
        interval_ms: i64::from(cfg.interval_min) * 60_000,
    }
}

/// Walks every noiseless ping, differentiating and binning it directly.
fn analytic_cells(spec: &ScenarioSpec, cfg: &RunConfig, guard_boundaries: bool) -> Result<BTreeMap<CellKey, OracleCell>, SynthError> {
    let g = oracle_grid(spec, cfg);
    let th = &cfg.thresholds;
    let f = &cfg.fuel;
    let mut cells: BTreeMap<CellKey, OracleCell> = BTreeMap::new();
    for &d in &spec.directions {
        for j in 0..spec.vehicles {
            let id = journey_id(d, j);
            let (ps, cruise) = pings(spec, d, j);
            let mut prev: Option<(i64, f64, Option<f64>)> = None;
            for p in ps {
                let mp = p.s_m / METERS_PER_MILE;
                if guard_boundaries {
                    let k = (mp / g.seg_mi).round();
                    if k >= 1.0 && k < f64::from(g.segments) && (mp - k * g.seg_mi).abs() < BOUNDARY_GUARD_MI {
                        return Err(SynthError::UnsupportedSpec(format!(
                            "ping of {id} at {mp} mi is within {BOUNDARY_GUARD_MI} mi of a segment boundary"
                        )));
                    }
                }
                let (a, jerk, dt) = match prev {
                    Some((t0, v0, a0)) if p.ts - t0 <= th.max_dt_ms => {
                        let dt = (p.ts - t0) as f64 / 1000.0;
                        let a = (p.v - v0) / dt;
                        (Some(a), a0.map(|a0| (a - a0) / dt), dt)
                    }
                    _ => (None, None, 0.0),
                };
                prev = Some((p.ts, p.v, a));
                if p.ts < g.epoch {
                    continue;
                }
                let seg = ((mp / g.seg_mi).floor() as u32).min(g.segments - 1);
                let interval = ((p.ts - g.epoch) / g.interval_ms) as u32;
                let c = cells.entry(CellKey::new(d, seg, interval)).or_insert_with(|| OracleCell {
                    cruise_only: true,
                    ..Default::default()
                });
                c.journeys.insert(id.clone());
                c.speeds.push(p.v);
                c.cruise_only &= p.v == cruise;
                if let Some(a) = a {
                    c.brakes += u64::from(a <= th.brake_accel_max);
                    c.hard_brakes += u64::from(a <= th.hard_brake_max);
                    c.hard_accels += u64::from(a >= th.hard_accel_min);
                    let v = p.v;
                    let mut rate = f.b0 + f.b1 * v + f.b2 * v * v + f.b3 * v * v * v;
                    if a > 0.0 {
                        rate += a * (f.c0 + f.c1 * v + f.c2 * v * v);
                    }
                    c.fuel_ml += rate * dt;
                }
                if let Some(jk) = jerk {
                    c.high_jerks += u64::from(jk >= th.jerk_pos_min || jk <= th.jerk_neg_max);
                }
            }
        }
    }
    Ok(cells)
}

/// Expected cell metrics computed straight from the scenario. Only noiseless
/// scenarios are supported, and none with a ping so close to a segment
/// boundary that map matching could place it either side.
pub fn oracle_metrics(spec: &ScenarioSpec, cfg: &RunConfig) -> Result<BTreeMap<CellKey, CellMetrics>, SynthError> {
    spec.validate()?;
    if spec.noise_std_mps != 0.0 {
        return Err(SynthError::UnsupportedSpec("speed noise is non-zero".into()));
    }
    let cells = analytic_cells(spec, cfg, true)?;
    Ok(cells
        .into_iter()
        .map(|(k, c)| {
            let m = c.speeds.len() as f64;
            let n = c.journeys.len() as f64;
            // Shifted by the first speed so constant cells come out exact.
            let first = c.speeds[0];
            let mean = first + c.speeds.iter().map(|v| v - first).sum::<f64>() / m;
            let var = c.speeds.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
            let metrics = CellMetrics {
                n_vehicles: c.journeys.len() as u64,
                n_waypoints: c.speeds.len() as u64,
                mean_speed_mps: mean,
                std_speed_mps: var.sqrt(),
                waypoints_per_vehicle: m / n,
                pct_brakes: c.brakes as f64 / m,
                pct_high_jerk: c.high_jerks as f64 / m,
                hard_accel_count: c.hard_accels,
                hard_brake_count: c.hard_brakes,
                avg_heading_change: 0.0,
                avg_fuel_ml_per_veh: c.fuel_ml / n,
            };
            (k, metrics)
        })
        .collect())
}

/// Cells lying wholly inside the slow zone during the part of the incident
/// window when only slowed vehicles can be there.
pub fn affected_cells(spec: &ScenarioSpec, cfg: &RunConfig) -> Result<BTreeSet<CellKey>, SynthError> {
    let Some(inc) = &spec.incident else {
        return Ok(BTreeSet::new());
    };
    let g = oracle_grid(spec, cfg);
    let (zlo, zhi) = inc.zone_m();
    let clear_ms = spec.start_ms as f64 + inc.start_min * 60_000.0 + (zhi - zlo) / spec.cruise_mps * 1000.0;
    let end_ms = spec.start_ms as f64 + inc.end_min * 60_000.0;
    let cells = analytic_cells(spec, cfg, false)?;
    Ok(cells
        .keys()
        .filter(|k| inc.directions.contains(&k.direction))
        .filter(|k| {
            let lo = f64::from(k.segment) * g.seg_mi * METERS_PER_MILE;
            let hi = f64::from(k.segment + 1) * g.seg_mi * METERS_PER_MILE;
            let t_lo = (g.epoch + i64::from(k.interval) * g.interval_ms) as f64;
            let t_hi = t_lo + g.interval_ms as f64;
            zlo <= lo && hi <= zhi && clear_ms <= t_lo && t_hi <= end_ms
        })
        .copied()
        .collect())
}

/// Cells in which every noiseless ping is at cruise speed.
pub fn free_flow_cells(spec: &ScenarioSpec, cfg: &RunConfig) -> Result<BTreeSet<CellKey>, SynthError> {
    Ok(analytic_cells(spec, cfg, false)?
        .into_iter()
        .filter(|(_, c)| c.cruise_only)
        .map(|(k, _)| k)
        .collect())
}

pub const TRUTH_COLUMNS: [&str; 6] = [
    "n_vehicles",
    "n_waypoints",
    "mean_speed_mps",
    "hard_brake_count",
    "affected",
    "free_flow",
];

/// Ground truth from the noiseless trajectories: occupancy, mean true speed,
/// injected hard brakes, and the affected/free-flow cell labels (1 or 0).
pub fn ground_truth(spec: &ScenarioSpec, cfg: &RunConfig) -> Result<CellTable, SynthError> {
    let cells = analytic_cells(spec, cfg, false)?;
    let affected = affected_cells(spec, cfg)?;
    let g = oracle_grid(spec, cfg);
    let rows = cells
        .iter()
        .map(|(k, c)| {
            let m = c.speeds.len() as f64;
            let flag = |b: bool| Some(if b { 1.0 } else { 0.0 });
            (*k, vec![
                Some(c.journeys.len() as f64),
                Some(m),
                Some(c.speeds.iter().sum::<f64>() / m),
                Some(c.hard_brakes as f64),
                flag(affected.contains(k)),
                flag(c.cruise_only),
            ])
        })
        .collect();
    let grid = GridMeta {
        segment_length_mi: cfg.segment_length_mi,
        interval_min: cfg.interval_min,
        epoch_start_ms: g.epoch,
        utc_offset_min: cfg.utc_offset_min,
        intervals: cells.keys().map(|k| k.interval + 1).max().unwrap_or(0),
        segments: spec.directions.iter().map(|&d| (d, g.segments)).collect(),
    };
    Ok(CellTable {
        grid,
        columns: TRUTH_COLUMNS.iter().map(|s| s.to_string()).collect(),
        rows,
    })
}
