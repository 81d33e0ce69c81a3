//! Connected-vehicle traffic profiling.
//!
//! Raw waypoint pings are matched onto a linearly referenced corridor, turned
//! into kinematic samples (acceleration, jerk, heading change, event flags),
//! binned into `(direction, segment, interval)` cells with mergeable
//! accumulators, and finalized into per-cell mobility metrics and the safety,
//! comfort, stability and fuel indices. Historical baselines, anomaly flags,
//! heatmap emission and a synthetic scenario generator with an independent
//! oracle round out the crate.
//!
//! Stages, in pipeline order:
//!
//! | module | stage |
//! |--------|-------|
//! | [`route`] | corridor polylines, projection to mileposts, segment grid |
//! | [`ingest`] | waypoint file parsing and journey assembly |
//! | [`kinematics`] | finite-difference derivatives and event classification |
//! | [`aggregate`] | cell binning, accumulators, finalized metrics |
//! | [`indices`] | safety / comfort / stability / fuel |
//! | [`baseline`] | per-slot baselines and z-score anomaly flags |
//! | [`synth`] | synthetic corridors and journeys, closed-form oracle |
//! | [`heatmap`] | matrix and PGM emission |
//!
//! [`pipeline`] wires the stages together; [`config`] and [`table`] hold the
//! flat config format and the cell-table file formats.

pub mod aggregate;
pub mod baseline;
pub mod config;
pub mod heatmap;
pub mod indices;
pub mod ingest;
pub mod kinematics;
mod kv;
pub mod pipeline;
pub mod route;
pub mod synth;
pub mod table;

pub use aggregate::{Binning, CellAccumulator, CellKey, CellMetrics, ReductionMode};
pub use baseline::{AnomalyFlag, BaselineProfile, DetectConfig, Severity};
pub use config::RunConfig;
pub use indices::{FuelParams, IndexWeights, IndexedCell, SpeedLimitMap};
pub use ingest::{Journey, WaypointRecord};
pub use kinematics::{EventFlags, EventThresholds, KinematicSample};
pub use pipeline::{profile, ProfileOutput, RunSummary};
pub use route::{Corridor, Direction, LatLon, MatchResult, RoutePolyline, SegmentGrid};
pub use synth::ScenarioSpec;
pub use table::{CellTable, GridMeta};

/// Meters in one international mile.
pub const METERS_PER_MILE: f64 = 1609.344;

/// Meters per second in one mile per hour.
pub const MPS_PER_MPH: f64 = 0.44704;
