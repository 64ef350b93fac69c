//! Image-source enumeration and specular-path visibility for convex prisms.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::{dot2, sub2, Point2, Point3, RoomSpec, CEILING, FLOOR};

/// A boundary plane `normal · x = offset` with `normal` pointing out of the room.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Plane {
    pub normal: Point3,
    pub offset: f64,
}

impl Plane {
    fn eval(&self, p: Point3) -> f64 {
        self.normal[0] * p[0] + self.normal[1] * p[1] + self.normal[2] * p[2] - self.offset
    }

    pub fn mirror(&self, p: Point3) -> Point3 {
        let s = 2.0 * self.eval(p);
        [
            p[0] - s * self.normal[0],
            p[1] - s * self.normal[1],
            p[2] - s * self.normal[2],
        ]
    }
}

/// Planes 0..4 are the sidewalls in edge order, then floor and ceiling.
pub fn room_planes(room: &RoomSpec) -> [Plane; 6] {
    std::array::from_fn(|i| match i {
        FLOOR => Plane {
            normal: [0.0, 0.0, -1.0],
            offset: 0.0,
        },
        CEILING => Plane {
            normal: [0.0, 0.0, 1.0],
            offset: room.height_m,
        },
        w => {
            let n = room.floor.outward_normal(w);
            let (a, _) = room.floor.edge(w);
            Plane {
                normal: [n[0], n[1], 0.0],
                offset: n[0] * a[0] + n[1] * a[1],
            }
        }
    })
}

/// Amplitude reflection coefficient for energy absorption `alpha`.
pub fn reflection_coefficient(alpha: f64) -> f64 {
    (1.0 - alpha).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageSource {
    pub position: Point3,
    /// Product of the reflection coefficients along the sequence.
    pub gain: f64,
    pub order: usize,
    /// Plane ids in the order the sound hits them, source side first.
    pub reflection_sequence: Vec<u8>,
    /// Every distinct sidewall-only ordering that reaches this position with
    /// `order` reflections. Reflections that commute (floor or ceiling with
    /// any sidewall, perpendicular sidewalls) produce the same image, and the
    /// physically realized ordering depends on the receiver.
    pub wall_orderings: Vec<Vec<u8>>,
}

const DEDUP_TOL: f64 = 1e-9;

fn dedup_key(p: Point3) -> [i64; 3] {
    p.map(|v| (v / DEDUP_TOL).round() as i64)
}

fn is_sidewall(pid: usize) -> bool {
    pid != FLOOR && pid != CEILING
}

/// All image sources up to `max_order`, breadth first.
///
/// Immediate back-reflections across the same plane are skipped, zero-gain
/// images are pruned, and images landing on an already-seen position are
/// merged into the lowest-order representative.
pub fn enumerate_images(room: &RoomSpec, source: Point3, max_order: usize) -> Result<Vec<ImageSource>> {
    if !room.contains(source) {
        return Err(Error::OutsideRoom(source));
    }
    let planes = room_planes(room);
    let betas = room.absorption.map(reflection_coefficient);

    let root = ImageSource {
        position: source,
        gain: 1.0,
        order: 0,
        reflection_sequence: Vec::new(),
        wall_orderings: vec![Vec::new()],
    };
    let mut seen = HashMap::new();
    seen.insert(dedup_key(source), 0usize);
    let mut all = vec![root];
    let mut frontier = 0..1;
    for order in 1..=max_order {
        let start = all.len();
        for parent_idx in frontier.clone() {
            for (pid, plane) in planes.iter().enumerate() {
                if all[parent_idx].reflection_sequence.last() == Some(&(pid as u8)) {
                    continue;
                }
                let gain = all[parent_idx].gain * betas[pid];
                if gain == 0.0 {
                    continue;
                }
                let position = plane.mirror(all[parent_idx].position);
                let orderings: Vec<Vec<u8>> = all[parent_idx]
                    .wall_orderings
                    .iter()
                    .map(|w| {
                        let mut w = w.clone();
                        if is_sidewall(pid) {
                            w.push(pid as u8);
                        }
                        w
                    })
                    .collect();
                match seen.get(&dedup_key(position)) {
                    Some(&idx) => {
                        let existing = &mut all[idx];
                        if existing.order == order {
                            for w in orderings {
                                if !existing.wall_orderings.contains(&w) {
                                    existing.wall_orderings.push(w);
                                }
                            }
                        }
                    }
                    None => {
                        let mut reflection_sequence = all[parent_idx].reflection_sequence.clone();
                        reflection_sequence.push(pid as u8);
                        seen.insert(dedup_key(position), all.len());
                        all.push(ImageSource {
                            position,
                            gain,
                            order,
                            reflection_sequence,
                            wall_orderings: orderings,
                        });
                    }
                }
            }
        }
        frontier = start..all.len();
    }
    Ok(all)
}

const FACE_TOL: f64 = 1e-9;

/// Unfolds a sidewall-only path in the floor plane.
fn wall_path_visible(image_xy: Point2, walls: &[u8], mic_xy: Point2, room: &RoomSpec) -> bool {
    let mut cur = mic_xy;
    let mut target = image_xy;
    for &w in walls.iter().rev() {
        let w = w as usize;
        let n = room.floor.outward_normal(w);
        let (a, b) = room.floor.edge(w);
        let offset = dot2(n, a);
        let d = sub2(target, cur);
        let denom = dot2(n, d);
        if denom.abs() < 1e-15 {
            return false;
        }
        let t = (offset - dot2(n, cur)) / denom;
        if !(t > 1e-12 && t < 1.0 - 1e-12) {
            return false;
        }
        let hit = [cur[0] + t * d[0], cur[1] + t * d[1]];
        let e = sub2(b, a);
        let s = dot2(sub2(hit, a), e) / dot2(e, e);
        if !(-FACE_TOL..=1.0 + FACE_TOL).contains(&s) {
            return false;
        }
        cur = hit;
        let k = 2.0 * (dot2(n, target) - offset);
        target = [target[0] - k * n[0], target[1] - k * n[1]];
    }
    true
}

/// Whether a specular path from `image` to `mic` actually exists.
///
/// In a vertical prism the floor and ceiling only fold the z coordinate, so
/// the path exists exactly when its projection onto the floor plane is a
/// valid specular path for the sidewall reflections. That projection is
/// checked by walking back from the microphone: the segment towards the
/// current image must cross the last wall's line inside the wall segment;
/// the crossing becomes the new start and the image is unmirrored.
pub fn is_visible(image: &ImageSource, mic: Point3, room: &RoomSpec) -> bool {
    let image_xy = [image.position[0], image.position[1]];
    let mic_xy = [mic[0], mic[1]];
    image
        .wall_orderings
        .iter()
        .any(|walls| wall_path_visible(image_xy, walls, mic_xy, room))
}
