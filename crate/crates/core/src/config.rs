//! Run configuration: a flat `key = value` file, every key optional.
//!
//! Environment variables `CVPROFILE_<KEY>` (upper case, `.` replaced by `_`)
//! override the file. Unknown keys are rejected.
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `segment_length_mi` | 0.5 | segment length, miles |
//! | `interval_min` | 30 | interval length, minutes |
//! | `epoch_start` | local midnight of the earliest record | ms, RFC 3339, or `YYYY-MM-DD` |
//! | `utc_offset_min` | 0 | local time offset used for day boundaries |
//! | `brake_accel_max` .. `max_dt_ms` | see [`EventThresholds`] | event thresholds |
//! | `w_vc` .. `w_nb` | 1 | index weights |
//! | `fuel_b0` .. `fuel_c2` | see [`FuelParams`] | fuel model |
//! | `speed_limit_mps` | 29.0576 (65 mph) | uniform posted limit |
//! | `speed_limits.eb`, `speed_limits.wb` | - | `start-end:limit, ...` spans in miles and m/s |
//! | `speed_drop_signed` | false | literal signed speed term in the safety index |
//! | `off_route_m` | 50 | max lateral offset for a match |
//! | `gap_split_ms` | 30000 | journey split gap |
//! | `deterministic` | true | canonical reduction order |
//! | `stability_per_waypoint` | false | emit the normalized stability column |
//! | `baseline_min_days` | 2 | days before a baseline slot is trusted |
//! | `z_info`, `z_warn`, `z_alert` | off, 2, 3 | anomaly cutoffs |
//! | `std_floor_frac` | 0.05 | std floor as a fraction of the baseline mean |

use chrono::{DateTime, NaiveDate};

use crate::aggregate::ReductionMode;
use crate::baseline::DetectConfig;
use crate::indices::{FuelParams, IndexOptions, IndexWeights, SpeedDropMode, SpeedLimitMap, SpeedLimitSpan};
use crate::ingest::DEFAULT_GAP_SPLIT_MS;
use crate::kinematics::EventThresholds;
use crate::kv::{KvError, KvSource, Origin};
use crate::route::{Direction, DEFAULT_MAX_OFFSET_M};
use crate::MPS_PER_MPH;

pub use crate::kv::{KvError as ConfigError, Origin as ConfigOrigin};

pub const ENV_PREFIX: &str = "CVPROFILE_";

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub segment_length_mi: f64,
    pub interval_min: u32,
    pub epoch_start_ms: Option<i64>,
    pub utc_offset_min: i32,
    pub thresholds: EventThresholds,
    pub weights: IndexWeights,
    pub fuel: FuelParams,
    pub speed_limits: SpeedLimitMap,
    pub speed_drop: SpeedDropMode,
    pub off_route_m: f64,
    pub gap_split_ms: i64,
    pub deterministic: bool,
    pub stability_per_waypoint: bool,
    pub baseline_min_days: usize,
    pub detect: DetectConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            segment_length_mi: 0.5,
            interval_min: 30,
            epoch_start_ms: None,
            utc_offset_min: 0,
            thresholds: EventThresholds::default(),
            weights: IndexWeights::default(),
            fuel: FuelParams::default(),
            speed_limits: SpeedLimitMap::uniform(65.0 * MPS_PER_MPH).expect("positive limit"),
            speed_drop: SpeedDropMode::Clamped,
            off_route_m: DEFAULT_MAX_OFFSET_M,
            gap_split_ms: DEFAULT_GAP_SPLIT_MS,
            deterministic: true,
            stability_per_waypoint: false,
            baseline_min_days: 2,
            detect: DetectConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parses a config file without environment overrides.
    pub fn from_text(text: &str, name: &str) -> Result<Self, ConfigError> {
        Self::from_text_with_env(text, name, &|_| None)
    }

    /// Parses a config file, letting `env` supply `CVPROFILE_*` overrides.
    pub fn from_text_with_env(text: &str, name: &str, env: &dyn Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let mut kv = KvSource::parse(text, name)?.with_env(ENV_PREFIX, env);
        let mut c = RunConfig::default();

        kv.take_into("segment_length_mi", &mut c.segment_length_mi)?;
        kv.take_into("interval_min", &mut c.interval_min)?;
        c.epoch_start_ms = kv.take_with("epoch_start", parse_epoch)?;
        kv.take_into("utc_offset_min", &mut c.utc_offset_min)?;

        let th = &mut c.thresholds;
        kv.take_into("brake_accel_max", &mut th.brake_accel_max)?;
        kv.take_into("hard_brake_max", &mut th.hard_brake_max)?;
        kv.take_into("hard_accel_min", &mut th.hard_accel_min)?;
        kv.take_into("jerk_pos_min", &mut th.jerk_pos_min)?;
        kv.take_into("jerk_neg_max", &mut th.jerk_neg_max)?;
        kv.take_into("max_dt_ms", &mut th.max_dt_ms)?;

        let w = &mut c.weights;
        kv.take_into("w_vc", &mut w.w_vc)?;
        kv.take_into("w_vr", &mut w.w_vr)?;
        kv.take_into("w_hc", &mut w.w_hc)?;
        kv.take_into("w_pb", &mut w.w_pb)?;
        kv.take_into("w_pj", &mut w.w_pj)?;
        kv.take_into("w_na", &mut w.w_na)?;
        kv.take_into("w_nb", &mut w.w_nb)?;

        let f = &mut c.fuel;
        kv.take_into("fuel_b0", &mut f.b0)?;
        kv.take_into("fuel_b1", &mut f.b1)?;
        kv.take_into("fuel_b2", &mut f.b2)?;
        kv.take_into("fuel_b3", &mut f.b3)?;
        kv.take_into("fuel_c0", &mut f.c0)?;
        kv.take_into("fuel_c1", &mut f.c1)?;
        kv.take_into("fuel_c2", &mut f.c2)?;

        if let Some((raw, origin)) = kv.take_raw("speed_limit_mps") {
            let limit: f64 = raw.parse().map_err(|_| err(origin.clone(), "speed_limit_mps", format!("cannot parse '{raw}'")))?;
            c.speed_limits = SpeedLimitMap::uniform(limit).map_err(|e| err(origin, "speed_limit_mps", e.to_string()))?;
        }
        for d in Direction::ALL {
            let key = format!("speed_limits.{}", d.as_str().to_ascii_lowercase());
            if let Some((raw, origin)) = kv.take_raw(&key) {
                let spans = parse_spans(&raw).map_err(|m| err(origin.clone(), &key, m))?;
                c.speed_limits.set(d, spans).map_err(|e| err(origin, &key, e.to_string()))?;
            }
        }
        let mut signed = false;
        kv.take_bool("speed_drop_signed", &mut signed)?;
        c.speed_drop = if signed { SpeedDropMode::Signed } else { SpeedDropMode::Clamped };

        kv.take_into("off_route_m", &mut c.off_route_m)?;
        kv.take_into("gap_split_ms", &mut c.gap_split_ms)?;
        kv.take_bool("deterministic", &mut c.deterministic)?;
        kv.take_bool("stability_per_waypoint", &mut c.stability_per_waypoint)?;
        kv.take_into("baseline_min_days", &mut c.baseline_min_days)?;
        c.detect.z_info = kv.take("z_info")?;
        kv.take_into("z_warn", &mut c.detect.z_warn)?;
        kv.take_into("z_alert", &mut c.detect.z_alert)?;
        kv.take_into("std_floor_frac", &mut c.detect.std_floor_frac)?;
        kv.finish()?;

        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |key: &str, message: String| Err(err(Origin::Default, key, message));
        if !(self.segment_length_mi.is_finite() && self.segment_length_mi > 0.0) {
            return fail("segment_length_mi", "must be positive".into());
        }
        if self.interval_min == 0 {
            return fail("interval_min", "must be at least 1".into());
        }
        if let Err(e) = self.thresholds.validate() {
            return fail("thresholds", e.to_string());
        }
        if let Err(e) = self.weights.validate() {
            return fail("weights", e.to_string());
        }
        if let Err(e) = self.fuel.validate() {
            return fail("fuel", e.to_string());
        }
        if !(self.off_route_m.is_finite() && self.off_route_m > 0.0) {
            return fail("off_route_m", "must be positive".into());
        }
        if self.gap_split_ms <= 0 {
            return fail("gap_split_ms", "must be positive".into());
        }
        if self.baseline_min_days == 0 {
            return fail("baseline_min_days", "must be at least 1".into());
        }
        if let Err(m) = self.detect.validate() {
            return fail("z_warn", m);
        }
        Ok(())
    }

    pub fn reduction_mode(&self) -> ReductionMode {
        if self.deterministic {
            ReductionMode::Canonical
        } else {
            ReductionMode::Unordered
        }
    }

    pub fn index_options(&self) -> IndexOptions {
        IndexOptions {
            weights: self.weights,
            drop_mode: self.speed_drop,
        }
    }
}

fn err(origin: Origin, key: &str, message: String) -> KvError {
    KvError {
        origin,
        key: key.to_string(),
        message,
    }
}

pub(crate) fn parse_epoch(raw: &str) -> Result<i64, String> {
    if let Ok(ms) = raw.parse::<i64>() {
        return Ok(ms);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Ok(dt.timestamp_millis());
    }
    if let Ok(d) = NaiveDate::parse_from_str(raw, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp_millis());
    }
    Err(format!("'{raw}' is not epoch milliseconds, RFC 3339, or YYYY-MM-DD"))
}

/// `start-end:limit` spans separated by `,` or `;`; `end` may be `inf`.
fn parse_spans(raw: &str) -> Result<Vec<SpeedLimitSpan>, String> {
    raw.split([',', ';'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let bad = || format!("span '{item}' is not 'start-end:limit'");
            let (range, limit) = item.split_once(':').ok_or_else(bad)?;
            let (start, end) = range.split_once('-').ok_or_else(bad)?;
            let start: f64 = start.trim().parse().map_err(|_| bad())?;
            let end: f64 = match end.trim() {
                "inf" => f64::INFINITY,
                e => e.parse().map_err(|_| bad())?,
            };
            let limit_mps: f64 = limit.trim().parse().map_err(|_| bad())?;
            Ok(SpeedLimitSpan {
                start_mi: start,
                end_mi: end,
                limit_mps,
            })
        })
        .collect()
}
