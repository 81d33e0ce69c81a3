//! End-to-end profiling: parse, assemble journeys, match, differentiate,
//! attach fuel, aggregate.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::aggregate::{aggregate_units, AggregateError, Binning, CellKey, CellMetrics};
use crate::config::RunConfig;
use crate::indices::attach_fuel;
use crate::ingest::{assemble_journeys, parse_records, IngestError, Journey, Rejection};
use crate::kinematics::{derive_kinematics, KinematicSample, MatchedWaypoint};
use crate::route::{Corridor, LatLon};
use crate::table::{CellTable, GridMeta};

const DAY_MS: i64 = 86_400_000;

#[derive(Error, Debug)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub records_read: u64,
    pub rejected: u64,
    pub off_route: u64,
    pub journeys: u64,
    pub cells: u64,
    /// Matched waypoints dropped for preceding the epoch.
    pub before_epoch: u64,
    pub epoch_start_ms: i64,
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "records read: {}\nrejected: {}\noff-route: {}\njourneys: {}\ncells: {}\nbefore epoch: {}\nepoch_start_ms: {}",
            self.records_read, self.rejected, self.off_route, self.journeys, self.cells, self.before_epoch, self.epoch_start_ms
        )
    }
}

#[derive(Clone, Debug)]
pub struct ProfileOutput {
    pub grid: GridMeta,
    pub cells: BTreeMap<CellKey, CellMetrics>,
    pub summary: RunSummary,
    pub rejections: Vec<Rejection>,
}

impl ProfileOutput {
    pub fn table(&self) -> CellTable {
        CellTable::from_metrics(self.grid.clone(), &self.cells)
    }
}

/// Local midnight, expressed in UTC milliseconds, of the day containing `ts`.
pub fn local_midnight_ms(ts: i64, utc_offset_min: i32) -> i64 {
    let off = i64::from(utc_offset_min) * 60_000;
    (ts + off).div_euclid(DAY_MS) * DAY_MS - off
}

/// Matches every waypoint of every journey; unmatched pings are dropped and
/// counted.
pub fn match_journeys(journeys: &[Journey], corridor: &Corridor, cfg: &RunConfig) -> (Vec<Vec<MatchedWaypoint>>, u64) {
    let matched: Vec<(Vec<MatchedWaypoint>, u64)> = journeys
        .par_iter()
        .map(|j| {
            let mut off = 0;
            let ws = j
                .waypoints
                .iter()
                .filter_map(|r| {
                    let m = corridor.match_point(LatLon::new(r.lat, r.lon), r.heading_deg, cfg.off_route_m);
                    if m.is_none() {
                        off += 1;
                    }
                    m.map(|matched| MatchedWaypoint {
                        record: r.clone(),
                        matched,
                    })
                })
                .collect();
            (ws, off)
        })
        .collect();
    let off_route = matched.iter().map(|(_, o)| o).sum();
    (matched.into_iter().map(|(w, _)| w).collect(), off_route)
}

/// Kinematic samples, fuel attached, for one matched journey.
pub fn journey_samples(waypoints: &[MatchedWaypoint], cfg: &RunConfig) -> Vec<KinematicSample> {
    let mut samples = derive_kinematics(waypoints, &cfg.thresholds);
    attach_fuel(&mut samples, &cfg.fuel);
    samples
}

pub fn grid_meta(corridor: &Corridor, cfg: &RunConfig, epoch_start_ms: i64, intervals: u32) -> GridMeta {
    GridMeta {
        segment_length_mi: cfg.segment_length_mi,
        interval_min: cfg.interval_min,
        epoch_start_ms,
        utc_offset_min: cfg.utc_offset_min,
        intervals,
        segments: corridor
            .directions()
            .map(|d| (d, corridor.grid(d).expect("listed direction").segment_count() as u32))
            .collect(),
    }
}

/// Runs the full pipeline over the bytes of a waypoint file. Uses the current
/// rayon pool.
pub fn profile(input: &[u8], corridor: &Corridor, cfg: &RunConfig) -> Result<ProfileOutput, PipelineError> {
    let parsed = parse_records(input)?;
    let records_read = (parsed.records.len() + parsed.rejections.len()) as u64;
    let rejected = parsed.rejections.len() as u64;
    let epoch = cfg.epoch_start_ms.unwrap_or_else(|| {
        parsed
            .records
            .iter()
            .map(|r| r.timestamp_ms)
            .min()
            .map_or(0, |ts| local_midnight_ms(ts, cfg.utc_offset_min))
    });
    let binning = Binning::new(epoch, cfg.interval_min)?;

    let journeys = assemble_journeys(parsed.records, cfg.gap_split_ms);
    let (matched, off_route) = match_journeys(&journeys, corridor, cfg);
    drop(journeys);
    let agg = aggregate_units(&matched, &binning, cfg.reduction_mode(), |ws| journey_samples(ws, cfg));
    let cells = agg.finalize();
    let intervals = cells.keys().map(|k| k.interval + 1).max().unwrap_or(0);

    Ok(ProfileOutput {
        grid: grid_meta(corridor, cfg, epoch, intervals),
        summary: RunSummary {
            records_read,
            rejected,
            off_route,
            journeys: matched.len() as u64,
            cells: cells.len() as u64,
            before_epoch: agg.before_epoch,
            epoch_start_ms: epoch,
        },
        cells,
        rejections: parsed.rejections,
    })
}
