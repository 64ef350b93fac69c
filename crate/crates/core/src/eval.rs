//! Error metrics, thresholded detection, partitioned reports, the
//! absorption sweep and floor-map drawings.
//!
//! Walls are always matched slot by slot: slot `w` of a prediction refers to
//! the `w`-th label in canonical (angle-sorted) order.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::dataset::{sample_from_room, DatasetConfig, Sample};
use crate::error::{Error, Result};
use crate::geometry::{FloorPolygon, Point2, RoomSpec, WallLabel};
use crate::nnet::{predict, ModelOutput, Network};
use crate::par::Execution;

/// `| d - ||est|| |` in meters.
pub fn distance_error(label: &WallLabel, estimate: [f64; 2]) -> Result<f64> {
    let d = estimate[0].hypot(estimate[1]);
    if d == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((label.distance - d).abs())
}

/// Angle between the true and estimated normal directions, radians.
pub fn orientation_error(label: &WallLabel, estimate: [f64; 2]) -> Result<f64> {
    let d = estimate[0].hypot(estimate[1]);
    if d == 0.0 {
        return Err(Error::ZeroVector);
    }
    let v = label.unit_normal();
    let cos = (v[0] * estimate[0] + v[1] * estimate[1]) / d;
    Ok(cos.clamp(-1.0, 1.0).acos())
}

/// Wall `w` is detected iff its score is strictly above `gamma`.
pub fn detect(scores: &[f64; 4], gamma: f64) -> [bool; 4] {
    scores.map(|s| s > gamma)
}

/// Mean and population standard deviation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stats {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

impl Stats {
    /// `None` for an empty slice. Two passes, summed in slice order.
    pub fn of(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Stats {
            count: values.len(),
            mean,
            std: var.sqrt(),
        })
    }
}

/// Distance error in centimeters and orientation error in degrees over one
/// partition of walls.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PartitionStats {
    pub distance_cm: Stats,
    pub orientation_deg: Stats,
}

impl PartitionStats {
    fn of(errors: &[WallError]) -> Option<Self> {
        let d: Vec<f64> = errors.iter().map(|e| e.distance_m * 100.0).collect();
        let o: Vec<f64> = errors.iter().map(|e| e.orientation_rad.to_degrees()).collect();
        Some(PartitionStats {
            distance_cm: Stats::of(&d)?,
            orientation_deg: Stats::of(&o)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WallError {
    pub distance_m: f64,
    pub orientation_rad: f64,
}

impl WallError {
    pub fn new(label: &WallLabel, estimate: [f64; 2]) -> Result<Self> {
        Ok(WallError {
            distance_m: distance_error(label, estimate)?,
            orientation_rad: orientation_error(label, estimate)?,
        })
    }
}

/// Joint model errors on the walls it detected, and localization-only model
/// errors on the same walls (`lo_detected`) and on the rest
/// (`lo_undetected`). Empty partitions are `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub rooms: usize,
    pub detected_walls: usize,
    pub undetected_walls: usize,
    pub gamma: f64,
    pub jdl: Option<PartitionStats>,
    pub lo_detected: Option<PartitionStats>,
    pub lo_undetected: Option<PartitionStats>,
}

impl EvalReport {
    pub fn walls(&self) -> usize {
        self.detected_walls + self.undetected_walls
    }

    /// Detected walls over all walls, percent.
    pub fn detection_rate(&self) -> f64 {
        if self.walls() == 0 {
            0.0
        } else {
            100.0 * self.detected_walls as f64 / self.walls() as f64
        }
    }

    pub fn mean_detected_per_room(&self) -> f64 {
        if self.rooms == 0 {
            0.0
        } else {
            self.detected_walls as f64 / self.rooms as f64
        }
    }

    fn partitions(&self) -> [(&'static str, Option<PartitionStats>, usize); 3] {
        [
            ("JDL", self.jdl, self.detected_walls),
            ("LO(D)", self.lo_detected, self.detected_walls),
            ("LO(U)", self.lo_undetected, self.undetected_walls),
        ]
    }

    /// Aligned text table: detection rate, then distance (cm) and
    /// orientation (deg) as mean±std for each partition.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "rooms {}  walls {}  gamma {}  detection rate {:.2}%",
            self.rooms,
            self.walls(),
            self.gamma,
            self.detection_rate()
        );
        let _ = writeln!(out, "{:<8}{:>7}  {:>20}  {:>20}", "", "walls", "distance [cm]", "orientation [deg]");
        for (name, stats, n) in self.partitions() {
            let cell = |s: Option<Stats>| match s {
                Some(s) => format!("{:.2} ± {:.2}", s.mean, s.std),
                None => "-".to_string(),
            };
            let _ = writeln!(
                out,
                "{:<8}{:>7}  {:>20}  {:>20}",
                name,
                n,
                cell(stats.map(|p| p.distance_cm)),
                cell(stats.map(|p| p.orientation_deg))
            );
        }
        out
    }

    /// One header line and one data row. Absent partitions leave their
    /// cells empty.
    pub fn to_csv(&self) -> String {
        let mut header = ["rooms", "walls", "detected", "gamma", "detection_rate"].join(",");
        let mut row = format!(
            "{},{},{},{},{}",
            self.rooms,
            self.walls(),
            self.detected_walls,
            self.gamma,
            self.detection_rate()
        );
        for (key, stats) in [("jdl", self.jdl), ("lo_d", self.lo_detected), ("lo_u", self.lo_undetected)] {
            for metric in ["dist_cm", "orient_deg"] {
                let _ = write!(header, ",{key}_{metric}_mean,{key}_{metric}_std");
                let s = stats.map(|p| if metric == "dist_cm" { p.distance_cm } else { p.orientation_deg });
                match s {
                    Some(s) => {
                        let _ = write!(row, ",{},{}", s.mean, s.std);
                    }
                    None => row.push_str(",,"),
                }
            }
        }
        format!("{header}\n{row}\n")
    }
}

/// Builds a report from per-room predictions of both models. Walls are
/// gathered in room order, then slot order.
pub fn evaluate_predictions(
    labels: &[[WallLabel; 4]],
    jdl: &[ModelOutput],
    lo: &[ModelOutput],
    gamma: f64,
) -> Result<EvalReport> {
    if jdl.len() != labels.len() || lo.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} rooms but {} joint and {} localization-only predictions",
            labels.len(),
            jdl.len(),
            lo.len()
        )));
    }
    let (mut j, mut ld, mut lu) = (Vec::new(), Vec::new(), Vec::new());
    for ((lab, pj), pl) in labels.iter().zip(jdl).zip(lo) {
        let hit = detect(&pj.detection, gamma);
        for w in 0..4 {
            let lo_err = WallError::new(&lab[w], pl.normals[w])?;
            if hit[w] {
                j.push(WallError::new(&lab[w], pj.normals[w])?);
                ld.push(lo_err);
            } else {
                lu.push(lo_err);
            }
        }
    }
    Ok(EvalReport {
        rooms: labels.len(),
        detected_walls: j.len(),
        undetected_walls: lu.len(),
        gamma,
        jdl: PartitionStats::of(&j),
        lo_detected: PartitionStats::of(&ld),
        lo_undetected: PartitionStats::of(&lu),
    })
}

/// Runs both models over `samples` and reports.
pub fn evaluate(
    jdl: (&Network, &[f64]),
    lo: (&Network, &[f64]),
    samples: &[Sample],
    gamma: f64,
    exec: Execution,
) -> Result<EvalReport> {
    let (a, b) = (jdl.0.config(), lo.0.config());
    if (a.theta_count, a.map_len) != (b.theta_count, b.map_len) {
        return Err(Error::Config(format!(
            "models expect different inputs: {}x{} vs {}x{}",
            a.theta_count, a.map_len, b.theta_count, b.map_len
        )));
    }
    let maps: Vec<&[f64]> = samples.iter().map(|s| s.map.values.as_slice()).collect();
    let pj = predict(jdl.0, jdl.1, &maps, exec)?;
    let pl = predict(lo.0, lo.1, &maps, exec)?;
    let labels: Vec<[WallLabel; 4]> = samples.iter().map(|s| s.labels).collect();
    evaluate_predictions(&labels, &pj, &pl, gamma)
}

/// Fixed scene of the sweep: 4 × 3 × 3 m shoebox, device at
/// (2.25, 1.5, 0.5), every other surface at `base_absorption`.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepScene {
    pub dims: [f64; 3],
    pub device: [f64; 3],
    pub base_absorption: f64,
    /// Edge index of the swept wall; edge 1 is the east wall (x = width).
    pub wall: usize,
}

impl Default for SweepScene {
    fn default() -> Self {
        SweepScene {
            dims: [4.0, 3.0, 3.0],
            device: [2.25, 1.5, 0.5],
            base_absorption: 0.1,
            wall: 1,
        }
    }
}

impl SweepScene {
    pub fn room(&self, alpha: f64, data: &DatasetConfig) -> Result<RoomSpec> {
        let mut absorption = [self.base_absorption; 6];
        *absorption
            .get_mut(self.wall)
            .filter(|_| self.wall < 4)
            .ok_or_else(|| Error::Config(format!("sweep wall must be a sidewall edge 0..3, got {}", self.wall)))? = alpha;
        let room = RoomSpec {
            floor: FloorPolygon::rectangle(self.dims[0], self.dims[1])?,
            height_m: self.dims[2],
            absorption,
            device_center: self.device,
            array_radius_m: data.sampling.array_radius_m,
            n_mics: data.sampling.n_mics,
        };
        room.validate()?;
        Ok(room)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    pub alpha: f64,
    pub score: f64,
    pub detected: bool,
}

/// Detection score of the swept wall for each absorption value, with noise
/// disabled.
pub fn absorption_sweep(
    net: &Network,
    params: &[f64],
    data: &DatasetConfig,
    scene: &SweepScene,
    alphas: &[f64],
    gamma: f64,
    exec: Execution,
) -> Result<Vec<SweepPoint>> {
    let data = DatasetConfig {
        add_noise: false,
        ..data.clone()
    };
    let mut maps = Vec::with_capacity(alphas.len());
    let mut slot = None;
    for &a in alphas {
        let s = sample_from_room(&data, scene.room(a, &data)?, 0)?;
        slot = s.labels.iter().position(|l| l.wall_index == scene.wall + 1);
        maps.push(s.map.values);
    }
    let Some(slot) = slot else {
        return Ok(Vec::new());
    };
    let refs: Vec<&[f64]> = maps.iter().map(|m| m.as_slice()).collect();
    let out = predict(net, params, &refs, exec)?;
    Ok(alphas
        .iter()
        .zip(out)
        .map(|(&alpha, o)| SweepPoint {
            alpha,
            score: o.detection[slot],
            detected: o.detection[slot] > gamma,
        })
        .collect())
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut s = String::from("alpha,score,detected\n");
    for p in points {
        let _ = writeln!(s, "{},{},{}", p.alpha, p.score, p.detected as u8);
    }
    s
}

/// One model's walls for a floor-map drawing, in the device frame.
#[derive(Clone, Debug, PartialEq)]
pub struct MapLayer {
    pub name: String,
    pub normals: [[f64; 2]; 4],
    pub detected: [bool; 4],
}

impl MapLayer {
    pub fn from_output(name: impl Into<String>, out: &ModelOutput, gamma: f64) -> Self {
        MapLayer {
            name: name.into(),
            normals: out.normals,
            detected: detect(&out.detection, gamma),
        }
    }

    /// Every wall counts as detected.
    pub fn all(name: impl Into<String>, normals: [[f64; 2]; 4]) -> Self {
        MapLayer {
            name: name.into(),
            normals,
            detected: [true; 4],
        }
    }
}

/// How walls a model did not detect are drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Undetected {
    #[default]
    Omit,
    Dashed,
}

/// A drawn estimate in room coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WallSegment {
    pub layer: usize,
    pub slot: usize,
    pub detected: bool,
    pub from: Point2,
    pub to: Point2,
}

/// Clips the line `{p : <p - origin, n> = d}` to the box `lo..hi`.
/// Returns `None` when the line misses the box or `n` is zero.
fn clip_line(origin: Point2, normal: [f64; 2], lo: Point2, hi: Point2) -> Option<(Point2, Point2)> {
    let d = normal[0].hypot(normal[1]);
    if d == 0.0 {
        return None;
    }
    let u = [normal[0] / d, normal[1] / d];
    let foot = [origin[0] + d * u[0], origin[1] + d * u[1]];
    let dir = [-u[1], u[0]];
    // Liang-Barsky on an unbounded parameter
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in 0..2 {
        if dir[k].abs() < 1e-15 {
            if foot[k] < lo[k] || foot[k] > hi[k] {
                return None;
            }
            continue;
        }
        let a = (lo[k] - foot[k]) / dir[k];
        let b = (hi[k] - foot[k]) / dir[k];
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
    }
    if t0 > t1 {
        return None;
    }
    let at = |t: f64| [foot[0] + t * dir[0], foot[1] + t * dir[1]];
    Some((at(t0), at(t1)))
}

/// Drawing window: the room's bounding box grown by `margin` meters.
pub fn view_box(room: &RoomSpec, margin: f64) -> (Point2, Point2) {
    let (lo, hi) = room.floor.bounding_box();
    ([lo[0] - margin, lo[1] - margin], [hi[0] + margin, hi[1] + margin])
}

/// The segments a drawing of `layers` contains.
pub fn wall_segments(room: &RoomSpec, layers: &[MapLayer], window: (Point2, Point2), undetected: Undetected) -> Vec<WallSegment> {
    let origin = room.device_2d();
    let mut out = Vec::new();
    for (li, layer) in layers.iter().enumerate() {
        for slot in 0..4 {
            let detected = layer.detected[slot];
            if !detected && undetected == Undetected::Omit {
                continue;
            }
            if let Some((from, to)) = clip_line(origin, layer.normals[slot], window.0, window.1) {
                out.push(WallSegment {
                    layer: li,
                    slot,
                    detected,
                    from,
                    to,
                });
            }
        }
    }
    out
}

const PALETTE: [&str; 6] = ["#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
const PX_PER_M: f64 = 100.0;

/// SVG floor map: ground-truth polygon, device marker, and each layer's
/// estimated walls clipped to the room's bounding box plus a 1 m margin.
pub fn render_floor_map(room: &RoomSpec, layers: &[MapLayer], undetected: Undetected) -> String {
    let (lo, hi) = view_box(room, 1.0);
    let legend_h = 18.0 * layers.len() as f64 + 8.0;
    let w = (hi[0] - lo[0]) * PX_PER_M;
    let h = (hi[1] - lo[1]) * PX_PER_M;
    // y up in meters, y down in pixels
    let px = |p: Point2| ((p[0] - lo[0]) * PX_PER_M, (hi[1] - p[1]) * PX_PER_M);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.1}" height="{:.1}" viewBox="0 0 {w:.1} {:.1}">"#,
        h + legend_h,
        h + legend_h
    );
    let _ = writeln!(s, r##"<rect x="0" y="0" width="{w:.1}" height="{h:.1}" fill="white" stroke="#ccc"/>"##);
    let pts: Vec<String> = room
        .floor
        .vertices()
        .iter()
        .map(|&v| {
            let (x, y) = px(v);
            format!("{x:.3},{y:.3}")
        })
        .collect();
    let _ = writeln!(
        s,
        r##"<polygon class="room" points="{}" fill="#f4f4f4" stroke="black" stroke-width="3"/>"##,
        pts.join(" ")
    );
    for seg in wall_segments(room, layers, (lo, hi), undetected) {
        let (x1, y1) = px(seg.from);
        let (x2, y2) = px(seg.to);
        let dash = if seg.detected { "" } else { r#" stroke-dasharray="6,4""# };
        let _ = writeln!(
            s,
            r#"<line class="wall-estimate" data-layer="{}" data-slot="{}" x1="{x1:.3}" y1="{y1:.3}" x2="{x2:.3}" y2="{y2:.3}" stroke="{}" stroke-width="2"{dash}/>"#,
            seg.layer,
            seg.slot,
            PALETTE[seg.layer % PALETTE.len()]
        );
    }
    let (dx, dy) = px(room.device_2d());
    let _ = writeln!(s, r#"<circle class="device" cx="{dx:.3}" cy="{dy:.3}" r="6" fill="black"/>"#);
    for (i, layer) in layers.iter().enumerate() {
        let y = h + 16.0 + 18.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="8" y1="{:.1}" x2="32" y2="{:.1}" stroke="{}" stroke-width="2"/><text x="38" y="{:.1}" font-family="sans-serif" font-size="13">{}</text>"#,
            y - 4.0,
            y - 4.0,
            PALETTE[i % PALETTE.len()],
            y,
            xml_escape(&layer.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
