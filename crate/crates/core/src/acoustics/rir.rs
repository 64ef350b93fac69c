//! Impulse response rendering and the preprocessing chain.

use std::f64::consts::PI;
use std::path::Path;

use crate::acoustics::image::{enumerate_images, is_visible, ImageSource};
use crate::error::{Error, Result};
use crate::geometry::{dist3, mic_positions, Point2, Point3, RoomSpec};
use crate::par::Execution;
use crate::record::Record;

/// Half-width of the fractional-delay kernel, in samples.
pub const KERNEL_HALF_WIDTH: f64 = 8.0;

/// Hann-windowed sinc tap at offset `x` samples from the delay.
pub fn kernel_tap(x: f64) -> f64 {
    if x.abs() >= KERNEL_HALF_WIDTH {
        return 0.0;
    }
    let window = 0.5 * (1.0 + (PI * x / KERNEL_HALF_WIDTH).cos());
    let sinc = if x == 0.0 { 1.0 } else { (PI * x).sin() / (PI * x) };
    window * sinc
}

/// Adds `amplitude · kernel(n - delay)` to `signal`; taps beyond the ends are dropped.
pub fn add_fractional_impulse(signal: &mut [f64], delay: f64, amplitude: f64) {
    let lo = ((delay - KERNEL_HALF_WIDTH).ceil() as i64).max(0);
    let hi = ((delay + KERNEL_HALF_WIDTH).floor() as i64).min(signal.len() as i64 - 1);
    for n in lo..=hi {
        signal[n as usize] += amplitude * kernel_tap(n as f64 - delay);
    }
}

/// Sampling and simulation constants for impulse responses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AcousticConfig {
    pub fs: f64,
    pub c: f64,
    pub max_order: usize,
    /// Raw impulse response length in samples.
    pub rir_len: usize,
}

impl AcousticConfig {
    pub fn samples_per_meter(&self) -> f64 {
        self.fs / self.c
    }
}

/// Renders the visible images into a signal of length `len` for one mic.
pub fn render_images(images: &[ImageSource], mic: Point3, room: &RoomSpec, fs: f64, c: f64, len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    let horizon = len as f64 + KERNEL_HALF_WIDTH;
    for img in images {
        let dist = dist3(img.position, mic);
        let delay = dist * fs / c;
        if delay >= horizon || !is_visible(img, mic, room) {
            continue;
        }
        add_fractional_impulse(&mut out, delay, img.gain / dist);
    }
    out
}

fn check_direct_fits(room: &RoomSpec, mic: Point3, fs: f64, c: f64, len: usize) -> Result<()> {
    let needed = (dist3(room.device_center, mic) * fs / c + KERNEL_HALF_WIDTH).ceil() as usize + 1;
    if len < needed {
        return Err(Error::SignalTooShort { needed, available: len });
    }
    Ok(())
}

/// Impulse response from the device loudspeaker to `mic`.
pub fn synthesize_rir(room: &RoomSpec, mic: Point3, max_order: usize, fs: f64, c: f64, len: usize) -> Result<Vec<f64>> {
    if !room.contains(mic) {
        return Err(Error::OutsideRoom(mic));
    }
    check_direct_fits(room, mic, fs, c, len)?;
    let images = enumerate_images(room, room.device_center, max_order)?;
    Ok(render_images(&images, mic, room, fs, c, len))
}

/// Time-synchronized responses for the whole array.
#[derive(Clone, Debug, PartialEq)]
pub struct RirSet {
    pub signals: Vec<Vec<f64>>,
    pub fs: f64,
    pub c: f64,
    pub array_radius_m: f64,
    /// Device-frame microphone positions.
    pub mic_positions: Vec<Point2>,
}

impl RirSet {
    pub fn len(&self) -> usize {
        self.signals.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes `<stem>.f32` (M × len, little-endian, row-major) and `<stem>.txt`.
    pub fn write(&self, stem: &Path, room: &RoomSpec) -> Result<()> {
        let data: Vec<f64> = self.signals.iter().flatten().copied().collect();
        write_f32_le(&stem.with_extension("f32"), &data)?;
        let mut meta = Record::new();
        meta.push("fs", self.fs);
        meta.push("c", self.c);
        meta.push("n_mics", self.signals.len());
        meta.push("array_radius_m", self.array_radius_m);
        meta.push("rir_len", self.len());
        meta.extend_prefixed("room", &room.to_record());
        meta.write(&stem.with_extension("txt"))
    }
}

/// Simulates every microphone of the device array with a shared image set.
pub fn simulate_setup(room: &RoomSpec, cfg: &AcousticConfig, exec: Execution) -> Result<RirSet> {
    room.validate()?;
    let mics = room.mic_positions_3d();
    for &m in &mics {
        check_direct_fits(room, m, cfg.fs, cfg.c, cfg.rir_len)?;
    }
    let images = enumerate_images(room, room.device_center, cfg.max_order)?;
    // anything farther than the horizon from the device cannot reach any mic in time
    let reach = (cfg.rir_len as f64 + KERNEL_HALF_WIDTH) / cfg.samples_per_meter() + room.array_radius_m;
    let images: Vec<ImageSource> = images
        .into_iter()
        .filter(|img| dist3(img.position, room.device_center) < reach)
        .collect();
    let signals = exec.map(&mics, |&m| render_images(&images, m, room, cfg.fs, cfg.c, cfg.rir_len));
    Ok(RirSet {
        signals,
        fs: cfg.fs,
        c: cfg.c,
        array_radius_m: room.array_radius_m,
        mic_positions: mic_positions(room.n_mics, room.array_radius_m),
    })
}

/// Default samples kept clear after the direct path's arrival: the full
/// kernel half-width, so none of the direct path's ringing survives the cut.
pub const DEFAULT_DIRECT_MARGIN: usize = KERNEL_HALF_WIDTH as usize;

/// Number of leading samples removed by [`truncate_direct`].
pub fn direct_cut_index(array_radius: f64, fs: f64, c: f64, margin: usize) -> usize {
    (array_radius * fs / c).ceil() as usize + margin
}

/// Drops everything up to and including the direct path, keeps `len` samples.
pub fn truncate_direct(rir: &[f64], array_radius: f64, fs: f64, c: f64, len: usize, margin: usize) -> Result<Vec<f64>> {
    let cut = direct_cut_index(array_radius, fs, c, margin);
    if rir.len() < cut + len {
        return Err(Error::SignalTooShort {
            needed: cut + len,
            available: rir.len(),
        });
    }
    Ok(rir[cut..cut + len].to_vec())
}

pub fn zero_clip(rir: &[f64]) -> Vec<f64> {
    rir.iter().map(|&v| v.max(0.0)).collect()
}

pub(crate) fn write_f32_le(path: &Path, data: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for &v in data {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_f32_le(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected * 4 {
        return Err(Error::format(
            path,
            format!("expected {} bytes ({expected} floats), found {}", expected * 4, bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect())
}
