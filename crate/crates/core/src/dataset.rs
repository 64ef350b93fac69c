//! End-to-end sample generation and on-disk splits.
//!
//! Layout of a split directory:
//!
//! ```text
//! <out>/manifest.txt        written last; its presence marks a complete split
//! <out>/maps/<seed>.f32     Θ × L little-endian f32, row-major
//! <out>/meta/<seed>.txt     room, labels, SNR and normalization record
//! ```

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::acoustics::{
    add_noise, direct_cut_index, simulate_setup, truncate_direct, zero_clip, AcousticConfig,
    DEFAULT_DIRECT_MARGIN,
};
use crate::error::{Error, Result};
use crate::geometry::{mic_positions, sample_room, wall_labels, RoomSpec, SamplingConfig, WallLabel};
use crate::par::Execution;
use crate::radon::{normalize_map, radon_map_with, NormInfo, RadonGeometry, RadonMap};
use crate::record::{self, Record};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetConfig {
    pub sampling: SamplingConfig,
    pub fs: f64,
    pub c: f64,
    pub max_order: usize,
    pub theta_count: usize,
    /// Samples kept per response after direct-path removal (map width L).
    pub map_len: usize,
    pub direct_margin: usize,
    pub snr_db_range: (f64, f64),
    pub add_noise: bool,
}

impl DatasetConfig {
    /// Full published scale: 360 look directions, 1000 samples, 7th-order images.
    pub fn full() -> Self {
        Self {
            sampling: SamplingConfig::default(),
            fs: 16000.0,
            c: 343.0,
            max_order: 7,
            theta_count: 360,
            map_len: 1000,
            direct_margin: DEFAULT_DIRECT_MARGIN,
            snr_db_range: (20.0, 50.0),
            add_noise: true,
        }
    }

    /// Laptop scale: 4° look directions, 250 samples (~2.8 m of range), 3rd-order images.
    pub fn desk() -> Self {
        Self {
            max_order: 3,
            theta_count: 90,
            map_len: 250,
            ..Self::full()
        }
    }

    pub fn direct_cut(&self) -> usize {
        direct_cut_index(self.sampling.array_radius_m, self.fs, self.c, self.direct_margin)
    }

    pub fn acoustic(&self) -> AcousticConfig {
        AcousticConfig {
            fs: self.fs,
            c: self.c,
            max_order: self.max_order,
            rir_len: self.direct_cut() + self.map_len,
        }
    }

    pub fn radon_geometry(&self) -> RadonGeometry {
        RadonGeometry {
            fs: self.fs,
            c: self.c,
            n_offset: self.direct_cut(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sampling.validate()?;
        if !(self.fs > 0.0 && self.c > 0.0) || self.theta_count == 0 || self.map_len == 0 {
            return Err(Error::Config("fs, c, theta_count and map_len must be positive".into()));
        }
        let (lo, hi) = self.snr_db_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::Config(format!("bad SNR range ({lo}, {hi})")));
        }
        Ok(())
    }

    pub fn to_record(&self) -> Record {
        let s = &self.sampling;
        let mut r = Record::new();
        r.push("fs", self.fs);
        r.push("c", self.c);
        r.push("max_order", self.max_order);
        r.push("theta_count", self.theta_count);
        r.push("map_len", self.map_len);
        r.push("direct_margin", self.direct_margin);
        r.push("snr_db_range", record::join(&[self.snr_db_range.0, self.snr_db_range.1]));
        r.push("add_noise", self.add_noise);
        r.push("side_range", record::join(&[s.side_range.0, s.side_range.1]));
        r.push("tilt_range_deg", record::join(&[s.tilt_range_deg.0, s.tilt_range_deg.1]));
        r.push("height_range", record::join(&[s.height_range.0, s.height_range.1]));
        r.push("device_z_range", record::join(&[s.device_z_range.0, s.device_z_range.1]));
        r.push("wall_clearance_m", s.wall_clearance_m);
        r.push("ceiling_clearance_m", s.ceiling_clearance_m);
        r.push("absorption_range", record::join(&[s.absorption_range.0, s.absorption_range.1]));
        r.push("array_radius_m", s.array_radius_m);
        r.push("n_mics", s.n_mics);
        r.push("max_attempts", s.max_attempts);
        r
    }

    pub fn from_record(rec: &Record) -> Result<Self> {
        let pair = |key: &str| -> Result<(f64, f64)> {
            match rec.parse_list::<f64>(key)?.as_slice() {
                [a, b] => Ok((*a, *b)),
                _ => Err(Error::Config(format!("`{key}` needs two values"))),
            }
        };
        Ok(Self {
            sampling: SamplingConfig {
                side_range: pair("side_range")?,
                tilt_range_deg: pair("tilt_range_deg")?,
                height_range: pair("height_range")?,
                device_z_range: pair("device_z_range")?,
                wall_clearance_m: rec.parse("wall_clearance_m")?,
                ceiling_clearance_m: rec.parse("ceiling_clearance_m")?,
                absorption_range: pair("absorption_range")?,
                array_radius_m: rec.parse("array_radius_m")?,
                n_mics: rec.parse("n_mics")?,
                max_attempts: rec.parse("max_attempts")?,
            },
            fs: rec.parse("fs")?,
            c: rec.parse("c")?,
            max_order: rec.parse("max_order")?,
            theta_count: rec.parse("theta_count")?,
            map_len: rec.parse("map_len")?,
            direct_margin: rec.parse("direct_margin")?,
            snr_db_range: pair("snr_db_range")?,
            add_noise: rec.parse("add_noise")?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// Normalized map, values already rounded to f32 precision.
    pub map: RadonMap,
    /// Canonical (angle-sorted) wall labels.
    pub labels: [WallLabel; 4],
    pub room: RoomSpec,
    pub seed: u64,
    pub snr_db: f64,
}

impl Sample {
    /// Regression targets `(x_w, y_w)` in canonical wall order.
    pub fn targets(&self) -> [[f64; 2]; 4] {
        self.labels.map(|l| l.normal_xy)
    }

    fn meta_record(&self) -> Record {
        let mut r = Record::new();
        r.push("seed", self.seed);
        r.push("snr_db", self.snr_db);
        r.extend_prefixed("room", &self.room.to_record());
        for (k, l) in self.labels.iter().enumerate() {
            r.push(
                format!("label.{k}"),
                record::join(&[l.wall_index as f64, l.distance, l.angle, l.normal_xy[0], l.normal_xy[1]]),
            );
        }
        r.push("map.theta_count", self.map.theta_count());
        r.push("map.range_count", self.map.range_count());
        if let Some(info) = self.map.norm_info {
            r.push("map.norm_min", info.min);
            r.push("map.norm_max", info.max);
            r.push("map.degenerate", info.degenerate);
        }
        r
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3))
}

/// Per-sample seed; distinct split names give independent streams.
pub fn sample_seed(base_seed: u64, split: &str, index: usize) -> u64 {
    splitmix64(splitmix64(base_seed ^ fnv1a(split)).wrapping_add(index as u64))
}

/// Room → array responses → noise → truncation → clipping → map → labels.
pub fn generate_sample(config: &DatasetConfig, seed: u64) -> Result<Sample> {
    sample_from_room(config, sample_room(seed, &config.sampling)?, seed)
}

/// Everything after room sampling, for a given room. `seed` drives the SNR
/// draw and the noise.
pub fn sample_from_room(config: &DatasetConfig, room: RoomSpec, seed: u64) -> Result<Sample> {
    room.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x006e_6f69_7365));
    let snr_db = if config.add_noise {
        let (lo, hi) = config.snr_db_range;
        if lo == hi {
            lo
        } else {
            rng.random_range(lo..hi)
        }
    } else {
        f64::INFINITY
    };

    let rirs = simulate_setup(&room, &config.acoustic(), Execution::Sequential)?;
    let clipped = rirs
        .signals
        .iter()
        .map(|sig| {
            let noisy = add_noise(sig, snr_db, rng.random())?;
            let cut = truncate_direct(&noisy, room.array_radius_m, config.fs, config.c, config.map_len, config.direct_margin)?;
            Ok(zero_clip(&cut))
        })
        .collect::<Result<Vec<_>>>()?;

    let mics = mic_positions(room.n_mics, room.array_radius_m);
    let raw = radon_map_with(Execution::Sequential, &clipped, &mics, &config.radon_geometry(), config.theta_count)?;
    let mut map = normalize_map(&raw)?;
    // the stored format is f32; keep in-memory samples identical to reloaded ones
    map.values.iter_mut().for_each(|v| *v = *v as f32 as f64);

    Ok(Sample {
        map,
        labels: wall_labels(&room)?,
        room,
        seed,
        snr_db,
    })
}

/// Generates samples in memory, in seed order.
pub fn generate_samples(config: &DatasetConfig, seeds: &[u64], exec: Execution) -> Result<Vec<Sample>> {
    config.validate()?;
    exec.try_map_range(seeds.len(), |i| generate_sample(config, seeds[i]))
}

pub fn split_seeds(base_seed: u64, split: &str, n_rooms: usize) -> Vec<u64> {
    (0..n_rooms).map(|i| sample_seed(base_seed, split, i)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub format_version: u32,
    pub split: String,
    pub config: DatasetConfig,
    pub seeds: Vec<u64>,
}

impl Manifest {
    pub const FILE: &'static str = "manifest.txt";

    pub fn map_path(dir: &Path, seed: u64) -> PathBuf {
        dir.join("maps").join(format!("{seed}.f32"))
    }

    pub fn meta_path(dir: &Path, seed: u64) -> PathBuf {
        dir.join("meta").join(format!("{seed}.txt"))
    }

    pub fn count(&self) -> usize {
        self.seeds.len()
    }

    pub fn to_record(&self) -> Record {
        let mut r = Record::new();
        r.push("format_version", self.format_version);
        r.push("split", &self.split);
        r.push("count", self.seeds.len());
        r.extend_prefixed("config", &self.config.to_record());
        for s in &self.seeds {
            r.push("sample", format!("{s},maps/{s}.f32,meta/{s}.txt"));
        }
        r
    }

    pub fn read(path: &Path) -> Result<Self> {
        let rec = Record::read(path)?;
        let bad = |msg: String| Error::format(path, msg);
        let format_version: u32 = rec.parse("format_version").map_err(|e| bad(e.to_string()))?;
        if format_version != FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {format_version}")));
        }
        let seeds = rec
            .get_all("sample")
            .map(|line| {
                line.split(',')
                    .next()
                    .and_then(|s| s.trim().parse::<u64>().ok())
                    .ok_or_else(|| bad(format!("bad sample line {line:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let count: usize = rec.parse("count").map_err(|e| bad(e.to_string()))?;
        if count != seeds.len() {
            return Err(bad(format!("count={count} but {} sample lines", seeds.len())));
        }
        Ok(Manifest {
            format_version,
            split: rec.require("split").map_err(|e| bad(e.to_string()))?.to_string(),
            config: DatasetConfig::from_record(&rec.sub("config")).map_err(|e| bad(e.to_string()))?,
            seeds,
        })
    }
}

fn write_sample(dir: &Path, sample: &Sample) -> Result<()> {
    crate::acoustics::rir::write_f32_le(&Manifest::map_path(dir, sample.seed), &sample.map.values)?;
    sample.meta_record().write(&Manifest::meta_path(dir, sample.seed))
}

/// Generates `n_rooms` samples into `out_dir` and writes the manifest last.
pub fn generate_split(
    config: &DatasetConfig,
    split: &str,
    n_rooms: usize,
    base_seed: u64,
    out_dir: &Path,
    exec: Execution,
) -> Result<Manifest> {
    config.validate()?;
    for sub in ["maps", "meta"] {
        let d = out_dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let seeds = split_seeds(base_seed, split, n_rooms);
    let mut sorted = seeds.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() {
        return Err(Error::Config("seed collision inside split".into()));
    }
    exec.try_map_range(seeds.len(), |i| {
        let sample = generate_sample(config, seeds[i])?;
        write_sample(out_dir, &sample)
    })?;

    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        split: split.to_string(),
        config: config.clone(),
        seeds,
    };
    let tmp = out_dir.join("manifest.txt.tmp");
    manifest.to_record().write(&tmp)?;
    let dst = out_dir.join(Manifest::FILE);
    std::fs::rename(&tmp, &dst).map_err(|e| Error::io(&dst, e))?;
    Ok(manifest)
}

fn read_sample(dir: &Path, config: &DatasetConfig, seed: u64) -> Result<Sample> {
    let meta_path = Manifest::meta_path(dir, seed);
    let rec = Record::read(&meta_path)?;
    let bad = |e: Error| Error::format(&meta_path, e.to_string());
    let theta_count: usize = rec.parse("map.theta_count").map_err(bad)?;
    let range_count: usize = rec.parse("map.range_count").map_err(bad)?;
    if (theta_count, range_count) != (config.theta_count, config.map_len) {
        return Err(Error::format(
            &meta_path,
            format!(
                "map shape {theta_count}x{range_count} does not match manifest {}x{}",
                config.theta_count, config.map_len
            ),
        ));
    }
    let stored_seed: u64 = rec.parse("seed").map_err(bad)?;
    if stored_seed != seed {
        return Err(Error::format(&meta_path, format!("seed {stored_seed} != {seed}")));
    }
    let mut labels = Vec::with_capacity(4);
    for k in 0..4 {
        let v: Vec<f64> = rec.parse_list(&format!("label.{k}")).map_err(bad)?;
        if v.len() != 5 {
            return Err(Error::format(&meta_path, format!("label.{k} needs 5 values")));
        }
        labels.push(WallLabel {
            wall_index: v[0] as usize,
            distance: v[1],
            angle: v[2],
            normal_xy: [v[3], v[4]],
        });
    }
    let norm_info = match rec.get("map.norm_min") {
        Some(_) => Some(NormInfo {
            min: rec.parse("map.norm_min").map_err(bad)?,
            max: rec.parse("map.norm_max").map_err(bad)?,
            degenerate: rec.parse("map.degenerate").map_err(bad)?,
        }),
        None => None,
    };
    let mut map = RadonMap::read_values(&Manifest::map_path(dir, seed), &config.radon_geometry(), theta_count, range_count)?;
    map.norm_info = norm_info;
    Ok(Sample {
        map,
        labels: labels.try_into().expect("four labels"),
        room: RoomSpec::from_record(&rec.sub("room")).map_err(bad)?,
        seed,
        snr_db: rec.parse("snr_db").map_err(bad)?,
    })
}

/// Streams the samples of a split in manifest order.
pub struct SplitReader {
    dir: PathBuf,
    manifest: Manifest,
    next: usize,
}

impl SplitReader {
    pub fn open(manifest_path: &Path) -> Result<Self> {
        let manifest = Manifest::read(manifest_path)?;
        let dir = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok(Self { dir, manifest, next: 0 })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }
}

impl Iterator for SplitReader {
    type Item = Result<Sample>;

    fn next(&mut self) -> Option<Self::Item> {
        let seed = *self.manifest.seeds.get(self.next)?;
        self.next += 1;
        Some(read_sample(&self.dir, &self.manifest.config, seed))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.manifest.seeds.len() - self.next;
        (left, Some(left))
    }
}

/// Loads a whole split. Accepts the manifest path or its directory.
pub fn load_split(path: &Path) -> Result<(Manifest, Vec<Sample>)> {
    let manifest_path = if path.is_dir() {
        path.join(Manifest::FILE)
    } else {
        path.to_path_buf()
    };
    let reader = SplitReader::open(&manifest_path)?;
    let manifest = reader.manifest().clone();
    let samples = reader.collect::<Result<Vec<_>>>()?;
    Ok((manifest, samples))
}

/// Mini-batches of size `batch_size`; the last one may be short.
pub fn batches<T>(items: &[T], batch_size: usize) -> std::slice::Chunks<'_, T> {
    items.chunks(batch_size.max(1))
}
