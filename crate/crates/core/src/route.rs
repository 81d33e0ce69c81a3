//! Linearly referenced corridor geometry.
//!
//! A [`RoutePolyline`] is one directed carriageway; mileposts are cumulative
//! haversine distances from its first vertex. Projection works per edge in a
//! local equirectangular frame anchored at the edge start, so a point built by
//! [`RoutePolyline::point_at`] projects back onto itself.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::METERS_PER_MILE;

/// Mean Earth radius (IUGG), meters.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Default off-route tolerance, meters.
pub const DEFAULT_MAX_OFFSET_M: f64 = 50.0;

/// Edges longer than this are split when a corridor is loaded from file.
pub const MAX_EDGE_M: f64 = 1_000.0;

/// Two directional offsets closer than this are treated as a tie and resolved
/// by heading agreement.
pub const DIRECTION_TIE_TOLERANCE_M: f64 = 1.0;

/// Fraction of a segment below which a trailing remainder is folded into the
/// previous segment.
pub const SLIVER_TOLERANCE: f64 = 1e-9;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum RouteError {
    #[error("polyline needs at least 2 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("invalid coordinate at vertex {index}: ({lat}, {lon})")]
    InvalidCoordinate { index: usize, lat: f64, lon: f64 },
    #[error("zero-length edge between vertices {0} and {}", .0 + 1)]
    DegenerateEdge(usize),
    #[error("segment length must be positive and finite, got {0}")]
    InvalidSegmentLength(f64),
    #[error("milepost {milepost} outside route [0, {route_length}]")]
    OutOfRange { milepost: f64, route_length: f64 },
    #[error("route file line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("route file defines no vertices")]
    Empty,
}

/// Travel direction of a carriageway.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    EB,
    WB,
}

impl Direction {
    pub const ALL: [Direction; 2] = [Direction::EB, Direction::WB];

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::EB => "EB",
            Direction::WB => "WB",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "EB" => Ok(Direction::EB),
            "WB" => Ok(Direction::WB),
            other => Err(format!("unknown direction '{other}' (expected EB or WB)")),
        }
    }
}

/// Geographic position in degrees.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    pub fn is_valid(&self) -> bool {
        self.lat.is_finite()
            && self.lon.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..=180.0).contains(&self.lon)
    }
}

/// Great-circle distance in meters on a sphere of radius [`EARTH_RADIUS_M`].
pub fn haversine_m(a: LatLon, b: LatLon) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dphi = phi2 - phi1;
    let dlambda = wrap_lon_deg(b.lon - a.lon).to_radians();
    let h = (dphi * 0.5).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda * 0.5).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Initial great-circle bearing from `a` to `b`, degrees in `[0, 360)`.
pub fn initial_bearing_deg(a: LatLon, b: LatLon) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dlambda = wrap_lon_deg(b.lon - a.lon).to_radians();
    let y = dlambda.sin() * phi2.cos();
    let x = phi1.cos() * phi2.sin() - phi1.sin() * phi2.cos() * dlambda.cos();
    y.atan2(x).to_degrees().rem_euclid(360.0)
}

/// Smallest absolute angle between two headings, degrees in `[0, 180]`.
pub fn angle_between_deg(a: f64, b: f64) -> f64 {
    // `%` is exact, so headings in [0, 360] fold without extra rounding.
    let d = (b - a).abs() % 360.0;
    d.min(360.0 - d)
}

fn wrap_lon_deg(d: f64) -> f64 {
    if d > 180.0 {
        d - 360.0
    } else if d < -180.0 {
        d + 360.0
    } else {
        d
    }
}

/// Per-edge planar frame, anchored at the edge start vertex.
#[derive(Clone, Debug)]
struct EdgeFrame {
    cos_lat0: f64,
    dx: f64,
    dy: f64,
    len2: f64,
    bearing_deg: f64,
    lat_min: f64,
    lat_max: f64,
    lon_min: f64,
    lon_max: f64,
}

/// Result of projecting a point onto one polyline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub milepost: f64,
    pub lateral_offset_m: f64,
    pub edge: usize,
}

/// The point lies farther than the allowed offset from every edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OffRoute;

#[derive(Clone, Debug)]
pub struct RoutePolyline {
    direction: Direction,
    vertices: Vec<LatLon>,
    mileposts: Vec<f64>,
    edges: Vec<EdgeFrame>,
}

impl RoutePolyline {
    /// Builds a polyline, computing cumulative mileposts from haversine
    /// distances between consecutive vertices.
    pub fn new(vertices: Vec<LatLon>, direction: Direction) -> Result<Self, RouteError> {
        if vertices.len() < 2 {
            return Err(RouteError::TooFewVertices(vertices.len()));
        }
        if let Some((index, v)) = vertices.iter().enumerate().find(|(_, v)| !v.is_valid()) {
            return Err(RouteError::InvalidCoordinate {
                index,
                lat: v.lat,
                lon: v.lon,
            });
        }
        let mut mileposts = Vec::with_capacity(vertices.len());
        mileposts.push(0.0);
        let mut edges = Vec::with_capacity(vertices.len() - 1);
        for (i, pair) in vertices.windows(2).enumerate() {
            let (a, b) = (pair[0], pair[1]);
            let len_m = haversine_m(a, b);
            if len_m <= 0.0 {
                return Err(RouteError::DegenerateEdge(i));
            }
            let prev = mileposts[i];
            mileposts.push(prev + len_m / METERS_PER_MILE);

            let cos_lat0 = a.lat.to_radians().cos();
            let dx = EARTH_RADIUS_M * cos_lat0 * wrap_lon_deg(b.lon - a.lon).to_radians();
            let dy = EARTH_RADIUS_M * (b.lat - a.lat).to_radians();
            edges.push(EdgeFrame {
                cos_lat0,
                dx,
                dy,
                len2: dx * dx + dy * dy,
                bearing_deg: initial_bearing_deg(a, b),
                lat_min: a.lat.min(b.lat),
                lat_max: a.lat.max(b.lat),
                lon_min: a.lon.min(b.lon),
                lon_max: a.lon.max(b.lon),
            });
        }
        Ok(Self {
            direction,
            vertices,
            mileposts,
            edges,
        })
    }

    /// Splits every edge longer than `max_edge_m` into equal pieces by linear
    /// interpolation in latitude/longitude.
    pub fn densified(&self, max_edge_m: f64) -> Result<Self, RouteError> {
        let mut out = Vec::with_capacity(self.vertices.len());
        out.push(self.vertices[0]);
        for pair in self.vertices.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let pieces = (haversine_m(a, b) / max_edge_m).ceil().max(1.0) as usize;
            for j in 1..pieces {
                let t = j as f64 / pieces as f64;
                out.push(LatLon::new(
                    a.lat + t * (b.lat - a.lat),
                    a.lon + t * wrap_lon_deg(b.lon - a.lon),
                ));
            }
            out.push(b);
        }
        Self::new(out, self.direction)
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn vertices(&self) -> &[LatLon] {
        &self.vertices
    }

    pub fn cumulative_mileposts(&self) -> &[f64] {
        &self.mileposts
    }

    /// Total length in miles.
    pub fn length_mi(&self) -> f64 {
        *self.mileposts.last().expect("at least two vertices")
    }

    /// Initial bearing of edge `edge`, degrees.
    pub fn edge_bearing_deg(&self, edge: usize) -> f64 {
        self.edges[edge].bearing_deg
    }

    /// Point at `milepost`, clamped to the route ends.
    pub fn point_at(&self, milepost: f64) -> LatLon {
        let m = milepost.clamp(0.0, self.length_mi());
        let edge = self
            .mileposts
            .partition_point(|&mp| mp <= m)
            .saturating_sub(1)
            .min(self.edges.len() - 1);
        let (m0, m1) = (self.mileposts[edge], self.mileposts[edge + 1]);
        let t = (m - m0) / (m1 - m0);
        let (a, b) = (self.vertices[edge], self.vertices[edge + 1]);
        LatLon::new(
            a.lat + t * (b.lat - a.lat),
            a.lon + t * wrap_lon_deg(b.lon - a.lon),
        )
    }

    /// Nearest point on the polyline. Ties between edges go to the lower
    /// milepost.
    pub fn project(&self, point: LatLon, max_offset_m: f64) -> Result<Projection, OffRoute> {
        // Bounding-box prefilter, with slack for the per-edge frame.
        let lat_margin = (max_offset_m / EARTH_RADIUS_M).to_degrees() * 1.05 + 1e-9;
        let lon_margin = lat_margin / point.lat.to_radians().cos().max(1e-6);

        let mut best: Option<(f64, usize, f64)> = None;
        for (i, e) in self.edges.iter().enumerate() {
            if point.lat < e.lat_min - lat_margin
                || point.lat > e.lat_max + lat_margin
                || point.lon < e.lon_min - lon_margin
                || point.lon > e.lon_max + lon_margin
            {
                continue;
            }
            let origin = self.vertices[i];
            let px = EARTH_RADIUS_M * e.cos_lat0 * wrap_lon_deg(point.lon - origin.lon).to_radians();
            let py = EARTH_RADIUS_M * (point.lat - origin.lat).to_radians();
            let t = ((px * e.dx + py * e.dy) / e.len2).clamp(0.0, 1.0);
            let d = (px - t * e.dx).hypot(py - t * e.dy);
            if best.map_or(true, |(bd, _, _)| d < bd) {
                best = Some((d, i, t));
            }
        }
        let (d, edge, t) = best.ok_or(OffRoute)?;
        if d > max_offset_m {
            return Err(OffRoute);
        }
        let milepost = if t <= 0.0 {
            self.mileposts[edge]
        } else if t >= 1.0 {
            self.mileposts[edge + 1]
        } else {
            let (m0, m1) = (self.mileposts[edge], self.mileposts[edge + 1]);
            m0 + t * (m1 - m0)
        };
        Ok(Projection {
            milepost,
            lateral_offset_m: d,
            edge,
        })
    }
}

/// Fixed-length discretization of one carriageway.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentGrid {
    segment_length_mi: f64,
    route_length_mi: f64,
    segment_count: usize,
}

impl SegmentGrid {
    pub fn new(segment_length_mi: f64, route_length_mi: f64) -> Result<Self, RouteError> {
        if !(segment_length_mi.is_finite() && segment_length_mi > 0.0) {
            return Err(RouteError::InvalidSegmentLength(segment_length_mi));
        }
        // A route that overshoots a whole number of segments by rounding
        // noise does not get a sliver segment.
        let segment_count = ((route_length_mi / segment_length_mi - SLIVER_TOLERANCE).ceil() as usize).max(1);
        Ok(Self {
            segment_length_mi,
            route_length_mi,
            segment_count,
        })
    }

    pub fn segment_length_mi(&self) -> f64 {
        self.segment_length_mi
    }

    pub fn route_length_mi(&self) -> f64 {
        self.route_length_mi
    }

    pub fn segment_count(&self) -> usize {
        self.segment_count
    }

    /// `floor(milepost / segment_length)`, with the route end folded into the
    /// last segment.
    pub fn segment_of(&self, milepost: f64) -> Result<usize, RouteError> {
        if !(0.0..=self.route_length_mi).contains(&milepost) {
            return Err(RouteError::OutOfRange {
                milepost,
                route_length: self.route_length_mi,
            });
        }
        let s = (milepost / self.segment_length_mi).floor() as usize;
        Ok(s.min(self.segment_count - 1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchResult {
    pub segment_index: usize,
    pub milepost: f64,
    pub lateral_offset_m: f64,
    pub direction: Direction,
}

/// One or two directional carriageways with their segment grids.
#[derive(Clone, Debug)]
pub struct Corridor {
    lanes: Vec<(RoutePolyline, SegmentGrid)>,
}

impl Corridor {
    /// At most one polyline per direction; later duplicates replace earlier.
    pub fn new(polylines: Vec<RoutePolyline>, segment_length_mi: f64) -> Result<Self, RouteError> {
        if polylines.is_empty() {
            return Err(RouteError::Empty);
        }
        let mut by_dir = BTreeMap::new();
        for p in polylines {
            by_dir.insert(p.direction(), p);
        }
        let lanes = by_dir
            .into_values()
            .map(|p| {
                let grid = SegmentGrid::new(segment_length_mi, p.length_mi())?;
                Ok((p, grid))
            })
            .collect::<Result<Vec<_>, RouteError>>()?;
        Ok(Self { lanes })
    }

    pub fn directions(&self) -> impl Iterator<Item = Direction> + '_ {
        self.lanes.iter().map(|(p, _)| p.direction())
    }

    pub fn polyline(&self, direction: Direction) -> Option<&RoutePolyline> {
        self.lanes.iter().find(|(p, _)| p.direction() == direction).map(|(p, _)| p)
    }

    pub fn grid(&self, direction: Direction) -> Option<&SegmentGrid> {
        self.lanes.iter().find(|(p, _)| p.direction() == direction).map(|(_, g)| g)
    }

    /// Matches a waypoint to the carriageway with the smaller lateral offset.
    /// Offsets within [`DIRECTION_TIE_TOLERANCE_M`] are decided by whether the
    /// heading is within 90 degrees of the matched edge bearing.
    pub fn match_point(&self, point: LatLon, heading_deg: f64, max_offset_m: f64) -> Option<MatchResult> {
        let mut best: Option<(Projection, &RoutePolyline, &SegmentGrid, bool)> = None;
        for (poly, grid) in &self.lanes {
            let Ok(proj) = poly.project(point, max_offset_m) else {
                continue;
            };
            let agrees = angle_between_deg(heading_deg, poly.edge_bearing_deg(proj.edge)) <= 90.0;
            let replace = match &best {
                None => true,
                Some((bp, _, _, b_agrees)) => {
                    let diff = proj.lateral_offset_m - bp.lateral_offset_m;
                    if diff.abs() <= DIRECTION_TIE_TOLERANCE_M && agrees != *b_agrees {
                        agrees
                    } else {
                        diff < 0.0
                    }
                }
            };
            if replace {
                best = Some((proj, poly, grid, agrees));
            }
        }
        let (proj, poly, grid, _) = best?;
        let segment_index = grid.segment_of(proj.milepost).ok()?;
        Some(MatchResult {
            segment_index,
            milepost: proj.milepost,
            lateral_offset_m: proj.lateral_offset_m,
            direction: poly.direction(),
        })
    }
}

/// Parses the route geometry table: `direction,lat,lon` per line, `#`
/// comments, optional header. Vertices keep file order per direction; edges
/// longer than [`MAX_EDGE_M`] are densified.
pub fn parse_route(text: &str) -> Result<Vec<RoutePolyline>, RouteError> {
    let mut by_dir: BTreeMap<Direction, Vec<LatLon>> = BTreeMap::new();
    let mut seen_data = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if !seen_data && fields.first().is_some_and(|f| f.eq_ignore_ascii_case("direction")) {
            seen_data = true;
            continue;
        }
        seen_data = true;
        let parse_err = |reason: String| RouteError::Parse {
            line: line_no,
            reason,
        };
        if fields.len() != 3 {
            return Err(parse_err(format!("expected 3 fields, found {}", fields.len())));
        }
        let direction: Direction = fields[0].parse().map_err(parse_err)?;
        let lat: f64 = fields[1]
            .parse()
            .map_err(|_| parse_err(format!("invalid latitude '{}'", fields[1])))?;
        let lon: f64 = fields[2]
            .parse()
            .map_err(|_| parse_err(format!("invalid longitude '{}'", fields[2])))?;
        let p = LatLon::new(lat, lon);
        if !p.is_valid() {
            return Err(parse_err(format!("coordinate ({lat}, {lon}) out of range")));
        }
        by_dir.entry(direction).or_default().push(p);
    }
    if by_dir.is_empty() {
        return Err(RouteError::Empty);
    }
    by_dir
        .into_iter()
        .map(|(dir, verts)| RoutePolyline::new(verts, dir)?.densified(MAX_EDGE_M))
        .collect()
}

/// Writes polylines in the route table format, full float precision.
pub fn format_route(polylines: &[RoutePolyline]) -> String {
    let mut out = String::from("direction,lat,lon\n");
    for p in polylines {
        for v in p.vertices() {
            out.push_str(&format!("{},{},{}\n", p.direction(), v.lat, v.lon));
        }
    }
    out
}
