//! Input builders shared by the benchmarks.

use cvprofile_core::route::{parse_route, Corridor};
use cvprofile_core::synth::{generate, route_text, waypoints_csv, ScenarioSpec};
use cvprofile_core::RunConfig;

/// A noisy two-direction corridor scenario with roughly `waypoints` pings.
pub fn scenario(waypoints: usize) -> ScenarioSpec {
    // 10 mi at 60 mph with 3 s pings is 200 pings per vehicle.
    let vehicles = (waypoints / 400).max(1);
    let text = format!(
        "length_mi = 10\ndirections = EB,WB\nvehicles = {vehicles}\nrate_per_hour = 600\nnoise_std_mps = 0.4\nseed = 1\n"
    );
    ScenarioSpec::from_text(&text, "bench").expect("valid bench scenario")
}

pub struct Input {
    pub waypoints_csv: String,
    pub corridor: Corridor,
    pub config: RunConfig,
}

/// Waypoint file bytes plus the corridor loaded the way the CLI loads it.
pub fn input(waypoints: usize) -> Input {
    let spec = scenario(waypoints);
    let config = RunConfig::default();
    let lines = parse_route(&route_text(&spec).expect("route")).expect("route parses");
    Input {
        waypoints_csv: waypoints_csv(&generate(&spec).expect("scenario generates")),
        corridor: Corridor::new(lines, config.segment_length_mi).expect("corridor"),
        config,
    }
}
