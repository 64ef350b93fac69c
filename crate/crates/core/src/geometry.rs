//! Convex prism rooms, device placement and per-wall regression targets.
//!
//! Coordinates are meters. The room frame has its origin at the first floor
//! vertex; the device frame is the room frame translated so the device
//! center (the loudspeaker) sits at the origin. Axes are never rotated.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::record::{self, Record};

pub type Point2 = [f64; 2];
pub type Point3 = [f64; 3];

pub(crate) fn sub2(a: Point2, b: Point2) -> Point2 {
    [a[0] - b[0], a[1] - b[1]]
}

pub(crate) fn dot2(a: Point2, b: Point2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub(crate) fn cross2(a: Point2, b: Point2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

pub(crate) fn norm2(a: Point2) -> f64 {
    a[0].hypot(a[1])
}

pub(crate) fn dist3(a: Point3, b: Point3) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Signed cross products of consecutive edge pairs, one per vertex.
fn turn_products(p: &[Point2; 4]) -> [f64; 4] {
    std::array::from_fn(|i| {
        let a = p[i];
        let b = p[(i + 1) % 4];
        let c = p[(i + 2) % 4];
        cross2(sub2(b, a), sub2(c, b))
    })
}

/// True iff every turn of the closed quadrilateral has the same nonzero sign.
pub fn is_convex(polygon: &[Point2; 4]) -> bool {
    let turns = turn_products(polygon);
    turns.iter().all(|&t| t > 0.0) || turns.iter().all(|&t| t < 0.0)
}

/// A strictly convex, counter-clockwise floor quadrilateral.
#[derive(Clone, Debug, PartialEq)]
pub struct FloorPolygon {
    vertices: [Point2; 4],
}

impl FloorPolygon {
    pub fn new(vertices: [Point2; 4]) -> Result<Self> {
        for i in 0..4 {
            for j in i + 1..4 {
                if vertices[i] == vertices[j] {
                    return Err(Error::Config(format!("repeated floor vertex {:?}", vertices[i])));
                }
            }
        }
        if !turn_products(&vertices).iter().all(|&t| t > 0.0) {
            return Err(Error::Config(
                "floor polygon must be strictly convex and counter-clockwise".into(),
            ));
        }
        Ok(Self { vertices })
    }

    /// Axis-aligned `width × depth` rectangle with a corner at the origin.
    pub fn rectangle(width: f64, depth: f64) -> Result<Self> {
        Self::new([[0.0, 0.0], [width, 0.0], [width, depth], [0.0, depth]])
    }

    pub fn vertices(&self) -> &[Point2; 4] {
        &self.vertices
    }

    /// Sidewall `i` runs from vertex `i` to vertex `i + 1`.
    pub fn edge(&self, i: usize) -> (Point2, Point2) {
        (self.vertices[i % 4], self.vertices[(i + 1) % 4])
    }

    /// Unit normal of sidewall `i` pointing out of the room.
    pub fn outward_normal(&self, i: usize) -> Point2 {
        let (a, b) = self.edge(i);
        let e = sub2(b, a);
        let len = norm2(e);
        [e[1] / len, -e[0] / len]
    }

    /// Signed distance from `p` to the supporting line of sidewall `i`,
    /// positive on the interior side.
    pub fn wall_distance(&self, i: usize, p: Point2) -> f64 {
        let (a, _) = self.edge(i);
        dot2(sub2(a, p), self.outward_normal(i))
    }

    /// Strictly inside with at least `margin` to every wall line.
    pub fn contains_with_margin(&self, p: Point2, margin: f64) -> bool {
        (0..4).all(|i| self.wall_distance(i, p) > margin)
    }

    pub fn contains(&self, p: Point2) -> bool {
        self.contains_with_margin(p, 0.0)
    }

    pub fn bounding_box(&self) -> (Point2, Point2) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in &self.vertices {
            for k in 0..2 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }
}

/// Index into [`RoomSpec::absorption`] for the floor.
pub const FLOOR: usize = 4;
/// Index into [`RoomSpec::absorption`] for the ceiling.
pub const CEILING: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct RoomSpec {
    pub floor: FloorPolygon,
    pub height_m: f64,
    /// Energy absorption of the four sidewalls (edge order), floor, ceiling.
    pub absorption: [f64; 6],
    pub device_center: Point3,
    pub array_radius_m: f64,
    pub n_mics: usize,
}

impl RoomSpec {
    pub fn device_2d(&self) -> Point2 {
        [self.device_center[0], self.device_center[1]]
    }

    /// Strictly inside the prism.
    pub fn contains(&self, p: Point3) -> bool {
        p[2] > 0.0 && p[2] < self.height_m && self.floor.contains([p[0], p[1]])
    }

    /// Microphone positions in room coordinates, at device height.
    pub fn mic_positions_3d(&self) -> Vec<Point3> {
        let c = self.device_center;
        mic_positions(self.n_mics, self.array_radius_m)
            .into_iter()
            .map(|p| [c[0] + p[0], c[1] + p[1], c[2]])
            .collect()
    }

    /// Checks the structural invariants that hold for any simulated room.
    pub fn validate(&self) -> Result<()> {
        if !(self.height_m > 0.0 && self.height_m.is_finite()) {
            return Err(Error::Config(format!("bad room height {}", self.height_m)));
        }
        if let Some(a) = self.absorption.iter().find(|a| !(0.0..1.0).contains(*a)) {
            return Err(Error::Config(format!("absorption {a} outside [0, 1)")));
        }
        if self.n_mics == 0 || !(self.array_radius_m > 0.0) {
            return Err(Error::Config("array needs at least one mic and r > 0".into()));
        }
        if !self.floor.contains_with_margin(self.device_2d(), self.array_radius_m)
            || !(self.device_center[2] > 0.0 && self.device_center[2] < self.height_m)
        {
            return Err(Error::OutsideRoom(self.device_center));
        }
        Ok(())
    }

    pub fn to_record(&self) -> Record {
        let mut r = Record::new();
        let floor: Vec<String> = self
            .floor
            .vertices()
            .iter()
            .map(|v| format!("{},{}", v[0], v[1]))
            .collect();
        r.push("floor", floor.join(";"));
        r.push("height_m", self.height_m);
        r.push("absorption", record::join(&self.absorption));
        r.push("device_center", record::join(&self.device_center));
        r.push("array_radius_m", self.array_radius_m);
        r.push("n_mics", self.n_mics);
        r
    }

    pub fn from_record(rec: &Record) -> Result<Self> {
        let raw = rec.require("floor")?;
        let verts: Vec<Point2> = raw
            .split(';')
            .map(|pair| {
                let xy: Vec<f64> = record::parse_list(pair)
                    .filter(|v: &Vec<f64>| v.len() == 2)
                    .ok_or_else(|| Error::Config(format!("bad floor vertex {pair:?}")))?;
                Ok([xy[0], xy[1]])
            })
            .collect::<Result<_>>()?;
        let vertices: [Point2; 4] = verts
            .try_into()
            .map_err(|_| Error::Config("floor needs exactly 4 vertices".into()))?;
        let absorption: [f64; 6] = rec
            .parse_list::<f64>("absorption")?
            .try_into()
            .map_err(|_| Error::Config("absorption needs 6 values".into()))?;
        let device_center: Point3 = rec
            .parse_list::<f64>("device_center")?
            .try_into()
            .map_err(|_| Error::Config("device_center needs 3 values".into()))?;
        Ok(RoomSpec {
            floor: FloorPolygon::new(vertices)?,
            height_m: rec.parse("height_m")?,
            absorption,
            device_center,
            array_radius_m: rec.parse("array_radius_m")?,
            n_mics: rec.parse("n_mics")?,
        })
    }
}

/// Ranges for randomized room generation. Defaults follow the published
/// data recipe.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingConfig {
    /// Base rectangle side lengths, meters.
    pub side_range: (f64, f64),
    /// Sidewall tilt about the wall midpoint, degrees.
    pub tilt_range_deg: (f64, f64),
    pub height_range: (f64, f64),
    pub device_z_range: (f64, f64),
    /// Minimum device-center to wall-line distance on top of the array radius.
    pub wall_clearance_m: f64,
    /// Device z is also kept this far below the ceiling.
    pub ceiling_clearance_m: f64,
    pub absorption_range: (f64, f64),
    pub array_radius_m: f64,
    pub n_mics: usize,
    pub max_attempts: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            side_range: (3.0, 8.0),
            tilt_range_deg: (-20.0, 20.0),
            height_range: (2.0, 5.0),
            device_z_range: (0.5, 4.5),
            wall_clearance_m: 0.10,
            ceiling_clearance_m: 0.10,
            absorption_range: (0.0, 1.0),
            array_radius_m: 0.05,
            n_mics: 8,
            max_attempts: 1000,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("side_range", self.side_range),
            ("tilt_range_deg", self.tilt_range_deg),
            ("height_range", self.height_range),
            ("device_z_range", self.device_z_range),
            ("absorption_range", self.absorption_range),
        ];
        for (name, (lo, hi)) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Config(format!("{name} must satisfy lo <= hi, got ({lo}, {hi})")));
            }
        }
        if self.side_range.0 <= 0.0 || self.height_range.0 <= 0.0 {
            return Err(Error::Config("room dimensions must be positive".into()));
        }
        if self.tilt_range_deg.0 <= -45.0 || self.tilt_range_deg.1 >= 45.0 {
            return Err(Error::Config("tilt must stay inside (-45, 45) degrees".into()));
        }
        if self.absorption_range.0 < 0.0 || self.absorption_range.1 > 1.0 {
            return Err(Error::Config("absorption range must lie in [0, 1)".into()));
        }
        if self.n_mics == 0 || !(self.array_radius_m > 0.0) || self.max_attempts == 0 {
            return Err(Error::Config("need n_mics >= 1, r > 0, max_attempts >= 1".into()));
        }
        Ok(())
    }
}

/// A sampled room plus the draws that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledRoom {
    pub room: RoomSpec,
    /// Base rectangle (width along x, depth along y) before tilting.
    pub base_size: (f64, f64),
    /// Tilt applied to each sidewall, radians, edge order.
    pub tilts_rad: [f64; 4],
    /// Rejected attempts before this one was accepted.
    pub rejections: usize,
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

fn intersect_lines(p: Point2, d: Point2, q: Point2, e: Point2) -> Option<Point2> {
    let denom = cross2(d, e);
    if denom.abs() < 1e-12 {
        return None;
    }
    let t = cross2(sub2(q, p), e) / denom;
    Some([p[0] + t * d[0], p[1] + t * d[1]])
}

/// Rotates each rectangle side about its midpoint and re-intersects
/// consecutive lines.
fn tilted_quad(width: f64, depth: f64, tilts: [f64; 4]) -> Option<[Point2; 4]> {
    let rect = [[0.0, 0.0], [width, 0.0], [width, depth], [0.0, depth]];
    let lines: Vec<(Point2, Point2)> = (0..4)
        .map(|i| {
            let a = rect[i];
            let b = rect[(i + 1) % 4];
            let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
            let dir = sub2(b, a);
            let (s, c) = tilts[i].sin_cos();
            (mid, [c * dir[0] - s * dir[1], s * dir[0] + c * dir[1]])
        })
        .collect();
    let mut out = [[0.0; 2]; 4];
    for (j, v) in out.iter_mut().enumerate() {
        let (p, d) = lines[(j + 3) % 4];
        let (q, e) = lines[j];
        *v = intersect_lines(p, d, q, e)?;
    }
    Some(out)
}

/// Draws a random convex room and device pose, deterministically from `seed`.
///
/// Whole-room rejection sampling: any attempt that is non-convex or leaves no
/// valid device position is redrawn from scratch.
pub fn sample_room(seed: u64, config: &SamplingConfig) -> Result<RoomSpec> {
    sample_room_detailed(seed, config).map(|s| s.room)
}

pub fn sample_room_detailed(seed: u64, config: &SamplingConfig) -> Result<SampledRoom> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 0..config.max_attempts {
        let width = uniform(&mut rng, config.side_range);
        let depth = uniform(&mut rng, config.side_range);
        let tilt_rad = (
            config.tilt_range_deg.0.to_radians(),
            config.tilt_range_deg.1.to_radians(),
        );
        let tilts: [f64; 4] = std::array::from_fn(|_| uniform(&mut rng, tilt_rad));
        let height = uniform(&mut rng, config.height_range);
        let absorption: [f64; 6] = std::array::from_fn(|_| uniform(&mut rng, config.absorption_range));
        let xy_u = [rng.random::<f64>(), rng.random::<f64>()];
        let z_u = rng.random::<f64>();

        let Some(quad) = tilted_quad(width, depth, tilts) else {
            continue;
        };
        if !turn_products(&quad).iter().all(|&t| t > 0.0) {
            continue;
        }
        let floor = FloorPolygon { vertices: quad };

        let (lo, hi) = floor.bounding_box();
        let p = [lo[0] + xy_u[0] * (hi[0] - lo[0]), lo[1] + xy_u[1] * (hi[1] - lo[1])];
        if !floor.contains_with_margin(p, config.wall_clearance_m + config.array_radius_m) {
            continue;
        }
        let z_hi = config.device_z_range.1.min(height - config.ceiling_clearance_m);
        if z_hi < config.device_z_range.0 {
            continue;
        }
        let z = config.device_z_range.0 + z_u * (z_hi - config.device_z_range.0);

        let room = RoomSpec {
            floor,
            height_m: height,
            absorption,
            device_center: [p[0], p[1], z],
            array_radius_m: config.array_radius_m,
            n_mics: config.n_mics,
        };
        return Ok(SampledRoom {
            room,
            base_size: (width, depth),
            tilts_rad: tilts,
            rejections: attempt,
        });
    }
    Err(Error::SamplingExhausted {
        attempts: config.max_attempts,
    })
}

/// Positions of a uniform circular array in the device frame.
pub fn mic_positions(n_mics: usize, radius: f64) -> Vec<Point2> {
    (0..n_mics)
        .map(|m| {
            let a = TAU * m as f64 / n_mics as f64;
            [radius * a.cos(), radius * a.sin()]
        })
        .collect()
}

/// Ground truth for one sidewall in the device frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WallLabel {
    /// 1-based sidewall index (edge `i` of the floor polygon is wall `i + 1`).
    pub wall_index: usize,
    pub distance: f64,
    /// Direction of the wall normal pointing away from the device, in [0, 2π).
    pub angle: f64,
    /// `distance · (cos angle, sin angle)`.
    pub normal_xy: [f64; 2],
}

impl WallLabel {
    pub fn unit_normal(&self) -> [f64; 2] {
        [self.angle.cos(), self.angle.sin()]
    }
}

/// Device-centric wall labels, sorted by angle ascending.
pub fn wall_labels(room: &RoomSpec) -> Result<[WallLabel; 4]> {
    let p = room.device_2d();
    if !room.floor.contains(p) {
        return Err(Error::OutsideRoom(room.device_center));
    }
    let mut labels: [WallLabel; 4] = std::array::from_fn(|i| {
        let n = room.floor.outward_normal(i);
        let distance = room.floor.wall_distance(i, p);
        let angle = wrap_angle(n[1].atan2(n[0]));
        WallLabel {
            wall_index: i + 1,
            distance,
            angle,
            normal_xy: encode_normal(distance, angle),
        }
    });
    labels.sort_by(|a, b| a.angle.total_cmp(&b.angle));
    Ok(labels)
}

fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// `(d cos φ, d sin φ)`.
pub fn encode_normal(distance: f64, angle: f64) -> [f64; 2] {
    [distance * angle.cos(), distance * angle.sin()]
}

/// Inverse of [`encode_normal`]: returns `(d, φ)` with φ in [0, 2π).
pub fn decode_normal(xy: [f64; 2]) -> Result<(f64, f64)> {
    let d = norm2(xy);
    if d == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((d, wrap_angle(xy[1].atan2(xy[0]))))
}

/// Degrees to radians helper used by fixtures.
pub fn deg(x: f64) -> f64 {
    x * PI / 180.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn shoebox_433() -> RoomSpec {
        RoomSpec {
            floor: FloorPolygon::rectangle(4.0, 3.0).unwrap(),
            height_m: 3.0,
            absorption: [0.0; 6],
            device_center: [2.25, 1.5, 0.5],
            array_radius_m: 0.05,
            n_mics: 8,
        }
    }

    #[test]
    fn convexity_fixtures() {
        assert!(is_convex(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]));
        // reflex vertex at (1, 0.2)
        assert!(!is_convex(&[[0.0, 0.0], [2.0, 0.0], [1.0, 0.2], [0.0, 2.0]]));
        // (0,0), (1,0), (2,0) collinear
        assert!(!is_convex(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [0.0, 1.0]]));
    }

    #[test]
    fn sampling_is_deterministic() {
        let cfg = SamplingConfig::default();
        let a = sample_room(7, &cfg).unwrap();
        let b = sample_room(7, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_record().to_text(), b.to_record().to_text());
        assert_ne!(a, sample_room(8, &cfg).unwrap());
    }

    #[test]
    fn base_sides_within_range() {
        let cfg = SamplingConfig::default();
        for seed in 0..300 {
            let s = sample_room_detailed(seed, &cfg).unwrap();
            for side in [s.base_size.0, s.base_size.1] {
                assert!((3.0..=8.0).contains(&side), "seed {seed}: side {side}");
            }
            for t in s.tilts_rad {
                assert!(t.abs() <= 20f64.to_radians());
            }
        }
    }

    #[test]
    fn zero_tilt_gives_axis_aligned_rectangle() {
        let cfg = SamplingConfig {
            tilt_range_deg: (0.0, 0.0),
            ..SamplingConfig::default()
        };
        let s = sample_room_detailed(3, &cfg).unwrap();
        let v = s.room.floor.vertices();
        let (w, d) = s.base_size;
        let expect = [[0.0, 0.0], [w, 0.0], [w, d], [0.0, d]];
        for (got, want) in v.iter().zip(expect) {
            assert!((got[0] - want[0]).abs() < 1e-12 && (got[1] - want[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn sampled_rooms_satisfy_invariants() {
        let cfg = SamplingConfig::default();
        for seed in 0..500 {
            let room = sample_room(seed, &cfg).unwrap();
            assert!(is_convex(room.floor.vertices()));
            assert!((2.0..=5.0).contains(&room.height_m));
            let z = room.device_center[2];
            assert!(z >= 0.5 && z <= 4.5 && z < room.height_m);
            for i in 0..4 {
                assert!(room.floor.wall_distance(i, room.device_2d()) >= 0.10 + 0.05);
            }
            assert!(room.absorption.iter().all(|a| (0.0..1.0).contains(a)));
            room.validate().unwrap();
        }
    }

    #[test]
    fn infeasible_config_exhausts() {
        let cfg = SamplingConfig {
            side_range: (0.2, 0.2),
            max_attempts: 50,
            ..SamplingConfig::default()
        };
        assert!(matches!(
            sample_room(1, &cfg),
            Err(Error::SamplingExhausted { attempts: 50 })
        ));
    }

    #[test]
    fn degenerate_config_rejected() {
        let cfg = SamplingConfig {
            side_range: (8.0, 3.0),
            ..SamplingConfig::default()
        };
        assert!(matches!(sample_room(1, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn mic_positions_formula() {
        let p = mic_positions(8, 0.05);
        assert_eq!(p.len(), 8);
        assert_eq!(p[0], [0.05, 0.0]);
        assert!(p[2][0].abs() < 1e-12 && (p[2][1] - 0.05).abs() < 1e-12);
        let sx: f64 = p.iter().map(|q| q[0]).sum();
        let sy: f64 = p.iter().map(|q| q[1]).sum();
        assert!(sx.abs() < 1e-12 && sy.abs() < 1e-12);
    }

    #[test]
    fn shoebox_labels() {
        let labels = wall_labels(&shoebox_433()).unwrap();
        let d: Vec<f64> = labels.iter().map(|l| l.distance).collect();
        let a: Vec<f64> = labels.iter().map(|l| l.angle.to_degrees()).collect();
        let expect_d = [1.75, 1.5, 2.25, 1.5];
        let expect_a = [0.0, 90.0, 180.0, 270.0];
        for k in 0..4 {
            assert!((d[k] - expect_d[k]).abs() < 1e-12);
            assert!((a[k] - expect_a[k]).abs() < 1e-9);
        }
        // east wall is edge 1
        assert_eq!(labels[0].wall_index, 2);
    }

    #[test]
    fn label_outside_room_errors() {
        let mut room = shoebox_433();
        room.device_center = [5.0, 1.0, 1.0];
        assert!(matches!(wall_labels(&room), Err(Error::OutsideRoom(_))));
    }

    /// Minimum distance over 10,000 points sampled along each wall's line.
    #[test]
    fn label_distance_matches_dense_sampling() {
        let cfg = SamplingConfig::default();
        for seed in [11, 12, 13] {
            let room = sample_room(seed, &cfg).unwrap();
            let p = room.device_2d();
            let labels = wall_labels(&room).unwrap();
            for l in &labels {
                let (a, b) = room.floor.edge(l.wall_index - 1);
                let dir = sub2(b, a);
                let foot_t = dot2(sub2(p, a), dir) / dot2(dir, dir);
                // span the line segment around the perpendicular foot
                let n = 10_000;
                let best = (0..=n)
                    .map(|k| {
                        let t = foot_t - 0.5 + k as f64 / n as f64;
                        norm2(sub2([a[0] + t * dir[0], a[1] + t * dir[1]], p))
                    })
                    .fold(f64::INFINITY, f64::min);
                assert!((best - l.distance).abs() < 1e-6, "seed {seed}");
            }
        }
    }

    #[test]
    fn labels_sorted_and_distinct() {
        let cfg = SamplingConfig::default();
        for seed in 0..200 {
            let labels = wall_labels(&sample_room(seed, &cfg).unwrap()).unwrap();
            for w in labels.windows(2) {
                assert!(w[1].angle - w[0].angle > 1e-9);
            }
            for l in &labels {
                let [x, y] = l.normal_xy;
                assert_eq!([x, y], encode_normal(l.distance, l.angle));
                assert!((x.hypot(y) - l.distance).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normal_codec_examples() {
        assert_eq!(encode_normal(1.0, 0.0), [1.0, 0.0]);
        let v = encode_normal(2.0, PI / 2.0);
        assert!(v[0].abs() < 1e-12 && (v[1] - 2.0).abs() < 1e-12);
        let (d, phi) = decode_normal([1.0, 1.0]).unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
        assert!((phi - PI / 4.0).abs() < 1e-15);
        assert!(matches!(decode_normal([0.0, 0.0]), Err(Error::ZeroVector)));
    }

    #[test]
    fn room_record_round_trip() {
        let room = sample_room(99, &SamplingConfig::default()).unwrap();
        let back = RoomSpec::from_record(&Record::from_text(&room.to_record().to_text()).unwrap()).unwrap();
        assert_eq!(room, back);
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(d in 1e-3f64..20.0, phi in 0.0f64..TAU) {
            let (d2, phi2) = decode_normal(encode_normal(d, phi)).unwrap();
            prop_assert!((d2 - d).abs() < 1e-12);
            let diff = (phi2 - phi).abs();
            prop_assert!(diff < 1e-12 || (TAU - diff) < 1e-12);
        }
    }
}
