use crate::error::{Error, Result};
use crate::record::{self, Record};

/// Architecture hyperparameters.
///
/// Every conv block is "same" convolution (odd square kernel, circular
/// padding on the angle axis, zero padding on the time axis), a rectifier,
/// and floor max-pooling by `pool` on both axes.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub theta_count: usize,
    pub map_len: usize,
    pub filters: Vec<usize>,
    pub kernels: Vec<usize>,
    pub pool: usize,
    pub gru_layers: usize,
    pub gru_hidden: usize,
    pub head_hidden: usize,
}

/// Shape of one conv block: `(channels, angle bins, time bins)` before and
/// after pooling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockShape {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub height: usize,
    pub width: usize,
    pub pooled_height: usize,
    pub pooled_width: usize,
}

impl ModelConfig {
    pub fn full() -> Self {
        ModelConfig {
            theta_count: 360,
            map_len: 1000,
            filters: vec![16, 32, 64, 64, 64],
            kernels: vec![7, 5, 3, 3, 3],
            pool: 2,
            gru_layers: 2,
            gru_hidden: 64,
            head_hidden: 128,
        }
    }

    /// Small enough to train thousands of rooms for tens of epochs on one
    /// CPU core: 90 × 250 input, sequence of 7 steps with 16 features.
    pub fn desk() -> Self {
        ModelConfig {
            theta_count: 90,
            map_len: 250,
            filters: vec![4, 4, 8, 8, 8],
            kernels: vec![3, 3, 3, 3, 3],
            pool: 2,
            gru_layers: 1,
            gru_hidden: 32,
            head_hidden: 64,
        }
    }

    /// Gradient-check scale.
    pub fn tiny() -> Self {
        ModelConfig {
            theta_count: 12,
            map_len: 32,
            filters: vec![2, 2],
            kernels: vec![3, 3],
            pool: 2,
            gru_layers: 1,
            gru_hidden: 4,
            head_hidden: 5,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "full" => Ok(Self::full()),
            "desk" => Ok(Self::desk()),
            "tiny" => Ok(Self::tiny()),
            other => Err(Error::Config(format!("unknown model preset '{other}'"))),
        }
    }

    pub fn blocks(&self) -> Vec<BlockShape> {
        let mut out = Vec::with_capacity(self.filters.len());
        let (mut c, mut h, mut w) = (1, self.theta_count, self.map_len);
        for (&f, &k) in self.filters.iter().zip(&self.kernels) {
            let b = BlockShape {
                in_channels: c,
                out_channels: f,
                kernel: k,
                height: h,
                width: w,
                pooled_height: h / self.pool,
                pooled_width: w / self.pool,
            };
            (c, h, w) = (f, b.pooled_height, b.pooled_width);
            out.push(b);
        }
        out
    }

    /// `(steps, features)` of the sequence fed to the recurrent stack.
    pub fn sequence_shape(&self) -> (usize, usize) {
        match self.blocks().last() {
            Some(b) => (b.pooled_width, b.out_channels * b.pooled_height),
            None => (self.map_len, self.theta_count),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.filters.is_empty() || self.filters.len() != self.kernels.len() {
            return bad(format!(
                "need one kernel size per conv block ({} filters, {} kernels)",
                self.filters.len(),
                self.kernels.len()
            ));
        }
        if self.pool < 1 {
            return bad("pool size must be at least 1".into());
        }
        if self.filters.contains(&0) || self.gru_layers == 0 || self.gru_hidden == 0 || self.head_hidden == 0 {
            return bad("layer widths must be positive".into());
        }
        for (i, b) in self.blocks().iter().enumerate() {
            if b.kernel % 2 == 0 {
                return bad(format!("conv block {} has even kernel {}", i + 1, b.kernel));
            }
            if b.kernel / 2 >= b.height {
                return bad(format!(
                    "conv block {}: angular padding {} needs at least {} angle bins, got {}",
                    i + 1,
                    b.kernel / 2,
                    b.kernel / 2 + 1,
                    b.height
                ));
            }
            if b.pooled_height == 0 || b.pooled_width == 0 {
                return bad(format!("input {}x{} is too small for {} blocks", self.theta_count, self.map_len, self.filters.len()));
            }
        }
        Ok(())
    }

    pub fn to_record(&self) -> Record {
        let mut r = Record::new();
        r.push("theta_count", self.theta_count);
        r.push("map_len", self.map_len);
        r.push("filters", record::join(&self.filters));
        r.push("kernels", record::join(&self.kernels));
        r.push("pool", self.pool);
        r.push("gru_layers", self.gru_layers);
        r.push("gru_hidden", self.gru_hidden);
        r.push("head_hidden", self.head_hidden);
        r
    }

    pub fn from_record(rec: &Record) -> Result<Self> {
        let cfg = ModelConfig {
            theta_count: rec.parse("theta_count")?,
            map_len: rec.parse("map_len")?,
            filters: rec.parse_list("filters")?,
            kernels: rec.parse_list("kernels")?,
            pool: rec.parse("pool")?,
            gru_layers: rec.parse("gru_layers")?,
            gru_hidden: rec.parse("gru_hidden")?,
            head_hidden: rec.parse("head_hidden")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
