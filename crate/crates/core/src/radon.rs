//! Time-domain delay-and-sum beamforming over polar grid points.
//!
//! Cell `(θ, n)` looks at the point `q = r_n (cos θ, sin θ)` with
//! `r_n = (n + n_offset) c / (2 fs)`, the range of a reflector whose
//! round-trip echo from the colocated loudspeaker lands on truncated sample
//! `n`. Each microphone contributes its clipped response read (with linear
//! interpolation) at the arrival index of the path loudspeaker → q → mic,
//! weighted by the q-to-mic distance.

use std::f64::consts::TAU;
use std::path::Path;

use crate::acoustics::rir::{read_f32_le, write_f32_le};
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::par::Execution;
use crate::record::Record;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormInfo {
    pub min: f64,
    pub max: f64,
    /// The map was constant; every value was set to -1.
    pub degenerate: bool,
}

/// A Θ × L beamforming image, stored row-major with one row per look angle.
#[derive(Clone, Debug, PartialEq)]
pub struct RadonMap {
    pub values: Vec<f64>,
    pub theta_grid: Vec<f64>,
    pub range_grid: Vec<f64>,
    pub norm_info: Option<NormInfo>,
}

impl RadonMap {
    pub fn theta_count(&self) -> usize {
        self.theta_grid.len()
    }

    pub fn range_count(&self) -> usize {
        self.range_grid.len()
    }

    pub fn at(&self, theta_idx: usize, n: usize) -> f64 {
        self.values[theta_idx * self.range_count() + n]
    }

    /// `(theta_idx, n)` of the largest value.
    pub fn argmax(&self) -> (usize, usize) {
        let i = (0..self.values.len())
            .max_by(|&a, &b| self.values[a].total_cmp(&self.values[b]))
            .unwrap_or(0);
        (i / self.range_count(), i % self.range_count())
    }

    /// Writes `<stem>.f32` (Θ × L) and a `<stem>.txt` sidecar.
    pub fn write(&self, stem: &Path, geometry: &RadonGeometry) -> Result<()> {
        write_f32_le(&stem.with_extension("f32"), &self.values)?;
        let mut meta = Record::new();
        meta.push("theta_count", self.theta_count());
        meta.push("range_count", self.range_count());
        meta.push("fs", geometry.fs);
        meta.push("c", geometry.c);
        meta.push("n_offset", geometry.n_offset);
        if let Some(info) = self.norm_info {
            meta.push("norm_min", info.min);
            meta.push("norm_max", info.max);
            meta.push("degenerate", info.degenerate);
        }
        meta.write(&stem.with_extension("txt"))
    }

    /// Reads a map's values back from a raw `.f32` file.
    pub fn read_values(path: &Path, geometry: &RadonGeometry, theta_count: usize, range_count: usize) -> Result<Self> {
        let values = read_f32_le(path, theta_count * range_count)?;
        Ok(RadonMap {
            values,
            theta_grid: theta_grid(theta_count),
            range_grid: geometry.range_grid(range_count),
            norm_info: None,
        })
    }
}

/// Sampling constants shared by every map of a dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadonGeometry {
    pub fs: f64,
    pub c: f64,
    /// Samples removed before the truncated response starts.
    pub n_offset: usize,
}

impl RadonGeometry {
    pub fn range(&self, n: usize) -> f64 {
        (n + self.n_offset) as f64 * self.c / (2.0 * self.fs)
    }

    pub fn range_grid(&self, len: usize) -> Vec<f64> {
        (0..len).map(|n| self.range(n)).collect()
    }
}

/// Uniform look directions over [0, 2π).
pub fn theta_grid(theta_count: usize) -> Vec<f64> {
    (0..theta_count)
        .map(|k| TAU * k as f64 / theta_count as f64)
        .collect()
}

/// Linear interpolation; indices outside `[0, len - 1]` read as zero.
#[inline]
pub(crate) fn lerp_read(h: &[f64], idx: f64) -> f64 {
    let last = h.len() as f64 - 1.0;
    if !(idx >= 0.0 && idx <= last) {
        return 0.0;
    }
    let i0 = idx.floor() as usize;
    let frac = idx - i0 as f64;
    if frac == 0.0 {
        h[i0]
    } else {
        (1.0 - frac) * h[i0] + frac * h[i0 + 1]
    }
}

/// Unnormalized beamforming map of truncated, zero-clipped responses.
pub fn radon_map(clipped: &[Vec<f64>], mics: &[Point2], geometry: &RadonGeometry, theta_count: usize) -> Result<RadonMap> {
    radon_map_with(Execution::default(), clipped, mics, geometry, theta_count)
}

pub fn radon_map_with(
    exec: Execution,
    clipped: &[Vec<f64>],
    mics: &[Point2],
    geometry: &RadonGeometry,
    theta_count: usize,
) -> Result<RadonMap> {
    if clipped.len() != mics.len() {
        return Err(Error::Shape(format!(
            "{} responses but {} microphone positions",
            clipped.len(),
            mics.len()
        )));
    }
    if theta_count == 0 {
        return Err(Error::Shape("need at least one look direction".into()));
    }
    let len = clipped.first().map_or(0, Vec::len);
    if len == 0 || clipped.iter().any(|h| h.len() != len) {
        return Err(Error::Shape("responses must be non-empty and equally long".into()));
    }

    let thetas = theta_grid(theta_count);
    let ranges = geometry.range_grid(len);
    let spm = geometry.fs / geometry.c;
    let mut values = vec![0.0; theta_count * len];
    exec.for_each_row(&mut values, len, |t, row| {
        let (s, c) = thetas[t].sin_cos();
        for (m, h) in clipped.iter().enumerate() {
            let p = mics[m];
            for (n, out) in row.iter_mut().enumerate() {
                let r = ranges[n];
                let rho = (r * c - p[0]).hypot(r * s - p[1]);
                let idx = n as f64 - spm * (r - rho);
                *out += rho * lerp_read(h, idx);
            }
        }
    });
    Ok(RadonMap {
        values,
        theta_grid: thetas,
        range_grid: ranges,
        norm_info: None,
    })
}

/// Affine rescale of a map to [-1, 1]; a constant map becomes all -1.
pub fn normalize_map(map: &RadonMap) -> Result<RadonMap> {
    if map.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("radon map".into()));
    }
    let min = map.values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = map.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let degenerate = !(max > min);
    let values = if degenerate {
        vec![-1.0; map.values.len()]
    } else {
        let span = max - min;
        map.values
            .iter()
            .map(|&v| (2.0 * (v - min) / span - 1.0).clamp(-1.0, 1.0))
            .collect()
    };
    Ok(RadonMap {
        values,
        theta_grid: map.theta_grid.clone(),
        range_grid: map.range_grid.clone(),
        norm_info: Some(NormInfo { min, max, degenerate }),
    })
}
