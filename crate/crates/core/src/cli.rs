//! Command-line front end.
//!
//! Every subcommand resolves one flat `key=value` configuration: preset
//! defaults, then the `--config` file, then `--set` overrides, then the
//! dedicated flags. Only keys that exist in the defaults are accepted. The
//! resolved configuration is written to `<out>/config.txt`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::dataset::{generate_split, load_split, DatasetConfig, Sample};
use crate::error::{Error, Result};
use crate::eval::{self, MapLayer, SweepScene, Undetected};
use crate::losses::{LossKind, DEFAULT_EPS_GUARD};
use crate::nnet::{
    read_checkpoint_header, read_checkpoint_values, train, write_checkpoint, history_csv, AdamWConfig, Example,
    ModelConfig, Network, TrainConfig,
};
use crate::par::Execution;
use crate::record::Record;

/// Resolved settings for every subcommand.
#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub preset: String,
    pub seed: u64,
    pub data: DatasetConfig,
    pub model: ModelConfig,
    pub loss: String,
    pub lambda: f64,
    pub w_max: f64,
    pub eps_guard: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub optimizer: AdamWConfig,
    pub gamma: f64,
}

impl Settings {
    /// `full`: 360 × 1000 maps, the large model and batch 50 for up to 200
    /// epochs. `desk`: the single-CPU scale, with a smaller batch and a
    /// larger step so a few tens of epochs suffice.
    pub fn preset(name: &str) -> Result<Self> {
        let base = Settings {
            preset: name.to_string(),
            seed: 0,
            data: DatasetConfig::full(),
            model: ModelConfig::full(),
            loss: "rajdl".into(),
            lambda: 0.05,
            w_max: 4.0,
            eps_guard: DEFAULT_EPS_GUARD,
            batch_size: 50,
            epochs: 200,
            patience: 20,
            optimizer: AdamWConfig::default(),
            gamma: 0.5,
        };
        match name {
            "full" => Ok(base),
            "desk" => Ok(Settings {
                data: DatasetConfig::desk(),
                model: ModelConfig::desk(),
                batch_size: 10,
                epochs: 30,
                optimizer: AdamWConfig {
                    lr: 2e-3,
                    ..AdamWConfig::default()
                },
                ..base
            }),
            other => Err(Error::Config(format!("unknown preset '{other}' (expected full or desk)"))),
        }
    }

    pub fn to_record(&self) -> Record {
        let mut r = Record::new();
        r.push("preset", &self.preset);
        r.push("seed", self.seed);
        r.extend_prefixed("data", &self.data.to_record());
        let model: Record = {
            let mut m = Record::new();
            for (k, v) in self.model.to_record().entries() {
                if k != "theta_count" && k != "map_len" {
                    m.push(k.clone(), v);
                }
            }
            m
        };
        r.extend_prefixed("model", &model);
        r.push("train.loss", &self.loss);
        r.push("train.lambda", self.lambda);
        r.push("train.w_max", self.w_max);
        r.push("train.eps_guard", self.eps_guard);
        r.push("train.batch_size", self.batch_size);
        r.push("train.epochs", self.epochs);
        r.push("train.patience", self.patience);
        r.push("train.lr", self.optimizer.lr);
        r.push("train.weight_decay", self.optimizer.weight_decay);
        r.push("train.beta1", self.optimizer.beta1);
        r.push("train.beta2", self.optimizer.beta2);
        r.push("train.adam_eps", self.optimizer.eps);
        r.push("eval.gamma", self.gamma);
        r
    }

    pub fn from_record(rec: &Record) -> Result<Self> {
        let data = DatasetConfig::from_record(&rec.sub("data"))?;
        data.validate()?;
        let mut m = rec.sub("model");
        m.push("theta_count", data.theta_count);
        m.push("map_len", data.map_len);
        let s = Settings {
            preset: rec.require("preset")?.to_string(),
            seed: rec.parse("seed")?,
            model: ModelConfig::from_record(&m)?,
            data,
            loss: rec.require("train.loss")?.to_string(),
            lambda: rec.parse("train.lambda")?,
            w_max: rec.parse("train.w_max")?,
            eps_guard: rec.parse("train.eps_guard")?,
            batch_size: rec.parse("train.batch_size")?,
            epochs: rec.parse("train.epochs")?,
            patience: rec.parse("train.patience")?,
            optimizer: AdamWConfig {
                lr: rec.parse("train.lr")?,
                weight_decay: rec.parse("train.weight_decay")?,
                beta1: rec.parse("train.beta1")?,
                beta2: rec.parse("train.beta2")?,
                eps: rec.parse("train.adam_eps")?,
            },
            gamma: rec.parse("eval.gamma")?,
        };
        s.loss_kind()?;
        if s.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be positive".into()));
        }
        Ok(s)
    }

    pub fn loss_kind(&self) -> Result<LossKind> {
        match self.loss.as_str() {
            "lo" => Ok(LossKind::LocalizationOnly),
            "ajdl" => Ok(LossKind::Attention {
                eps_guard: self.eps_guard,
            }),
            "rajdl" => Ok(LossKind::RegularizedAttention {
                lambda: self.lambda,
                w_max: self.w_max,
                eps_guard: self.eps_guard,
            }),
            other => Err(Error::Config(format!("unknown loss '{other}' (expected lo, ajdl or rajdl)"))),
        }
    }

    /// Preset, then file, then `k=v` overrides, in order. Keys outside the
    /// preset's key set are rejected.
    pub fn resolve(preset: Option<&str>, file: Option<&Record>, overrides: &[(String, String)]) -> Result<Self> {
        let chosen = preset
            .map(str::to_string)
            .or_else(|| overrides.iter().rev().find(|(k, _)| k == "preset").map(|(_, v)| v.clone()))
            .or_else(|| file.and_then(|f| f.get("preset")).map(str::to_string))
            .unwrap_or_else(|| "full".into());
        let defaults = Settings::preset(&chosen)?.to_record();
        let mut entries: Vec<(String, String)> = defaults.entries().to_vec();
        let file_entries = file.map(|f| f.entries().to_vec()).unwrap_or_default();
        for (k, v) in file_entries.iter().chain(overrides) {
            if k == "preset" {
                continue;
            }
            match entries.iter_mut().find(|(key, _)| key == k) {
                Some(slot) => slot.1 = v.clone(),
                None => return Err(Error::Config(format!("unknown config key '{k}'"))),
            }
        }
        let mut rec = Record::new();
        for (k, v) in entries {
            rec.push(k, v);
        }
        Settings::from_record(&rec)
    }
}

fn parse_kv(s: &str) -> std::result::Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .filter(|(k, _)| !k.is_empty())
        .ok_or_else(|| format!("expected key=value, got '{s}'"))
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// key=value file; `#` starts a comment.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set train.lr=0.002`. Repeatable.
    #[arg(long = "set", value_parser = parse_kv)]
    overrides: Vec<(String, String)>,
    /// Default set of constants: full or desk.
    #[arg(long)]
    preset: Option<String>,
    /// Seeds every random choice of the subcommand [default: 0].
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate rooms and write one dataset split.
    Gen {
        #[command(flatten)]
        common: Common,
        /// Number of rooms.
        #[arg(long)]
        rooms: usize,
        /// Split name; distinct names give independent rooms for the same seed.
        #[arg(long, default_value = "train")]
        split: String,
    },
    /// Train a model on a split, early-stopping on a validation split.
    Train {
        #[command(flatten)]
        common: Common,
        /// Training split directory written by `gen`.
        #[arg(long)]
        train: PathBuf,
        /// Validation split; must share the training split's data settings.
        #[arg(long)]
        val: PathBuf,
        /// lo, ajdl or rajdl [default: rajdl].
        #[arg(long)]
        loss: Option<String>,
        /// Detection-mass regularization weight of rajdl [default: 0.05].
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Score a joint model against a localization-only model on a split.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Joint model checkpoint stem (`<stem>.idx` / `<stem>.bin`).
        #[arg(long)]
        jdl: PathBuf,
        /// Localization-only model checkpoint stem.
        #[arg(long)]
        lo: PathBuf,
        /// Split to score.
        #[arg(long)]
        test: PathBuf,
        /// Detection threshold; a wall counts when its score is above it [default: 0.5].
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Detection score of one wall of a fixed shoebox while its absorption varies.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Checkpoint stem of the model to probe.
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated absorption values in [0, 1).
        #[arg(long, value_delimiter = ',', default_values_t = default_alphas())]
        alphas: Vec<f64>,
        /// Swept sidewall as a floor edge index; 1 is the east wall.
        #[arg(long, default_value_t = 1)]
        wall: usize,
        /// Absorption of every other surface.
        #[arg(long, default_value_t = 0.1)]
        base_absorption: f64,
        /// Detection threshold [default: eval.gamma].
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Draw ground truth and model estimates for one room of a split as SVG.
    Render {
        #[command(flatten)]
        common: Common,
        /// Split directory holding the room.
        #[arg(long)]
        split: PathBuf,
        /// Position of the room in the split's manifest.
        #[arg(long, default_value_t = 0)]
        index: usize,
        /// `NAME=STEM` per model. Localization-only models draw every wall.
        #[arg(long = "model", value_parser = parse_kv)]
        models: Vec<(String, String)>,
        /// Draw undetected walls dashed instead of omitting them.
        #[arg(long)]
        dashed: bool,
        /// Detection threshold [default: eval.gamma].
        #[arg(long)]
        gamma: Option<f64>,
    },
}

fn default_alphas() -> Vec<f64> {
    (0..20).map(|i| i as f64 * 0.05).chain([0.99]).collect()
}

#[derive(Parser, Debug)]
#[command(name = "echomap", version, about = "Simulate rooms, train wall detectors and score them")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn keys_help() -> String {
    let mut s = String::from("Config keys (full preset defaults):\n");
    if let Ok(p) = Settings::preset("full") {
        for (k, v) in p.to_record().entries() {
            let _ = writeln!(s, "  {k}={v}");
        }
    }
    s.push_str("\nECHOMAP_THREADS caps the worker threads.\n");
    s
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

fn log(msg: impl AsRef<str>) {
    eprintln!("[echomap] {}", msg.as_ref());
}

/// Runs the command line and returns the process exit code: 0 on success,
/// 2 for unusable flags or configuration, 1 for failures while running.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cmd = Cli::command().after_long_help(keys_help());
    let cli = match cmd.try_get_matches_from(args).and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    init_threads();
    match run(cli.command) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn init_threads() {
    #[cfg(feature = "parallel")]
    if let Some(n) = std::env::var("ECHOMAP_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn settings(common: &Common, extra: &[(&str, Option<String>)]) -> std::result::Result<Settings, Failure> {
    let file = match &common.config {
        Some(p) => Some(Record::read(p).map_err(|e| Failure::Usage(e.to_string()))?),
        None => None,
    };
    let mut overrides = common.overrides.clone();
    if let Some(seed) = common.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    for (k, v) in extra {
        if let Some(v) = v {
            overrides.push((k.to_string(), v.clone()));
        }
    }
    Settings::resolve(common.preset.as_deref(), file.as_ref(), &overrides).map_err(|e| Failure::Usage(e.to_string()))
}

fn prepare_out(dir: &Path, s: &Settings) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    s.to_record().write(&dir.join("config.txt"))
}

fn run(command: Command) -> std::result::Result<(), Failure> {
    match command {
        Command::Gen { common, rooms, split } => {
            let s = settings(&common, &[])?;
            prepare_out(&common.out, &s)?;
            let t = Instant::now();
            let m = generate_split(&s.data, &split, rooms, s.seed, &common.out, Execution::Parallel)?;
            log(format!(
                "wrote {} rooms of split '{split}' to {} in {:.1}s",
                m.count(),
                common.out.display(),
                t.elapsed().as_secs_f64()
            ));
        }
        Command::Train {
            common,
            train: train_dir,
            val,
            loss,
            lambda,
        } => {
            let mut s = settings(&common, &[("train.loss", loss), ("train.lambda", lambda.map(|l| l.to_string()))])?;
            let (tm, train_set) = load_split(&train_dir)?;
            let (vm, val_set) = load_split(&val)?;
            if tm.config != vm.config {
                return Err(Failure::Usage("training and validation splits were generated with different settings".into()));
            }
            // the data settings come from the splits themselves
            s.data = tm.config.clone();
            s.model.theta_count = s.data.theta_count;
            s.model.map_len = s.data.map_len;
            prepare_out(&common.out, &s)?;
            run_train(&s, &train_set, &val_set, &common.out)?;
        }
        Command::Eval {
            common,
            jdl,
            lo,
            test,
            gamma,
        } => {
            let s = settings(&common, &[("eval.gamma", gamma.map(|g| g.to_string()))])?;
            prepare_out(&common.out, &s)?;
            let (j_net, j_params, _) = load_model(&jdl)?;
            let (l_net, l_params, _) = load_model(&lo)?;
            let (_, samples) = load_split(&test)?;
            let report = eval::evaluate((&j_net, &j_params), (&l_net, &l_params), &samples, s.gamma, Execution::Parallel)?;
            let table = report.to_table();
            eval::write_text(&common.out.join("report.txt"), &table)?;
            eval::write_text(&common.out.join("report.csv"), &report.to_csv())?;
            for line in table.lines() {
                log(line);
            }
        }
        Command::Sweep {
            common,
            model,
            alphas,
            wall,
            base_absorption,
            gamma,
        } => {
            let s = settings(&common, &[("eval.gamma", gamma.map(|g| g.to_string()))])?;
            if let Some(a) = alphas.iter().find(|a| !(0.0..1.0).contains(*a)) {
                return Err(Failure::Usage(format!("absorption {a} outside [0, 1)")));
            }
            prepare_out(&common.out, &s)?;
            let (net, params, header) = load_model(&model)?;
            let scene = SweepScene {
                wall,
                base_absorption,
                ..SweepScene::default()
            };
            let points = eval::absorption_sweep(&net, &params, &header.data, &scene, &alphas, s.gamma, Execution::Parallel)?;
            eval::write_text(&common.out.join("sweep.csv"), &eval::sweep_csv(&points))?;
            log(format!("{} sweep points written", points.len()));
        }
        Command::Render {
            common,
            split,
            index,
            models,
            dashed,
            gamma,
        } => {
            let s = settings(&common, &[("eval.gamma", gamma.map(|g| g.to_string()))])?;
            prepare_out(&common.out, &s)?;
            let (_, samples) = load_split(&split)?;
            let sample: &Sample = samples
                .get(index)
                .ok_or_else(|| Failure::Usage(format!("split has {} rooms, index {index} is out of range", samples.len())))?;
            let mut layers = Vec::with_capacity(models.len());
            for (name, stem) in &models {
                let (net, params, header) = load_model(Path::new(stem))?;
                let out = net.forward(&params, &sample.map.values)?;
                layers.push(if header.loss == "lo" {
                    MapLayer::all(name.clone(), out.normals)
                } else {
                    MapLayer::from_output(name.clone(), &out, s.gamma)
                });
            }
            let mode = if dashed { Undetected::Dashed } else { Undetected::Omit };
            let path = common.out.join(format!("floor_map_{}.svg", sample.seed));
            eval::write_text(&path, &eval::render_floor_map(&sample.room, &layers, mode))?;
            log(format!("wrote {}", path.display()));
        }
    }
    Ok(())
}

fn run_train(s: &Settings, train_set: &[Sample], val_set: &[Sample], out: &Path) -> Result<()> {
    let net = Network::new(s.model.clone())?;
    let cfg = TrainConfig {
        loss: s.loss_kind()?,
        epochs: s.epochs,
        patience: s.patience,
        batch_size: s.batch_size,
        optimizer: s.optimizer,
        seed: s.seed ^ 0x5eed_5eed,
        gamma: s.gamma,
        exec: Execution::Parallel,
    };
    let tr: Vec<Example> = train_set.iter().map(Example::from_sample).collect();
    let va: Vec<Example> = val_set.iter().map(Example::from_sample).collect();
    log(format!(
        "training {} ({} parameters) on {} rooms, validating on {}",
        cfg.loss.name(),
        net.param_count(),
        tr.len(),
        va.len()
    ));
    let t = Instant::now();
    let result = train(&net, net.init_params(s.seed), &tr, &va, &cfg, |e| {
        log(format!(
            "epoch {:>3}  train {:.5}  val {:.5}  detected {:.2}%  ({:.0}s)",
            e.epoch,
            e.train_loss,
            e.val_loss,
            e.detection_rate,
            t.elapsed().as_secs_f64()
        ))
    })?;
    let mut header = s.to_record();
    header.push("best_epoch", result.best_epoch);
    write_checkpoint(&out.join("model"), &header, net.layout(), &result.params)?;
    eval::write_text(&out.join("history.csv"), &history_csv(&result.history))?;
    log(format!("best epoch {}; wrote {}", result.best_epoch, out.join("model.idx").display()));
    Ok(())
}

/// Network, weights and the settings the checkpoint was trained with.
pub fn load_model(stem: &Path) -> Result<(Network, Vec<f64>, Settings)> {
    let stem = stem.with_extension("");
    let idx = stem.with_extension("idx");
    let header = read_checkpoint_header(&stem)?;
    let settings = Settings::from_record(&header).map_err(|e| Error::format(&idx, e.to_string()))?;
    let net = Network::new(settings.model.clone())?;
    let params = read_checkpoint_values(&stem, net.layout())?;
    Ok((net, params, settings))
}
