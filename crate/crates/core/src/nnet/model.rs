use crate::error::{Error, Result};

use super::config::{BlockShape, ModelConfig};
use super::layers::{
    conv_block_backward, conv_block_forward, conv_same, dense, gru_backward, gru_forward, matvec_t_acc, outer_acc,
    sigmoid, ConvCache, GruGrads, GruStep, GruWeights,
};
use super::params::ParamLayout;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelOutput {
    /// Sigmoid detection scores, one per wall.
    pub detection: [f64; 4],
    /// Predicted `(x̂_w, ŷ_w)` in meters.
    pub normals: [[f64; 2]; 4],
}

#[derive(Clone, Copy, Debug)]
struct ConvSlots {
    weight: usize,
    bias: usize,
}

/// Offsets of one recurrent direction; the four tensors are contiguous.
#[derive(Clone, Copy, Debug)]
struct GruSlots {
    w_ih: usize,
    w_hh: usize,
    b_ih: usize,
    b_hh: usize,
    in_dim: usize,
}

#[derive(Clone, Copy, Debug)]
struct HeadSlots {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    out: usize,
}

/// Architecture bound to a parameter layout. Parameters themselves live in a
/// flat `&[f64]` so optimizers and gradient sums work on plain vectors.
#[derive(Clone, Debug)]
pub struct Network {
    config: ModelConfig,
    blocks: Vec<BlockShape>,
    layout: ParamLayout,
    conv: Vec<ConvSlots>,
    gru: Vec<[GruSlots; 2]>,
    detection_head: HeadSlots,
    regression_head: HeadSlots,
}

struct LayerCache {
    inputs: Vec<Vec<f64>>,
    steps: [Vec<GruStep>; 2],
}

/// Activations kept by [`Network::forward_train`] for the backward pass.
pub struct ForwardCache {
    conv: Vec<ConvCache>,
    layers: Vec<LayerCache>,
    features: Vec<f64>,
    det_hidden: Vec<f64>,
    reg_hidden: Vec<f64>,
    output: ModelOutput,
}

/// Uniform bound `sqrt(6 / fan_in)` keeps activation variance roughly
/// constant through rectifier layers.
const RELU_GAIN: f64 = 2.449_489_742_783_178;

fn ensure_finite(what: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

fn relu_in_place(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

impl Network {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let blocks = config.blocks();
        let mut layout = ParamLayout::default();
        let mut conv = Vec::new();
        for (i, b) in blocks.iter().enumerate() {
            let fan_in = b.in_channels * b.kernel * b.kernel;
            conv.push(ConvSlots {
                weight: layout.push_scaled(
                    format!("conv{}.weight", i + 1),
                    &[b.out_channels, b.in_channels, b.kernel, b.kernel],
                    fan_in,
                    RELU_GAIN,
                ),
                bias: layout.push(format!("conv{}.bias", i + 1), &[b.out_channels], fan_in),
            });
        }
        let (_, features) = config.sequence_shape();
        let h = config.gru_hidden;
        let mut gru = Vec::new();
        for l in 0..config.gru_layers {
            let in_dim = if l == 0 { features } else { 2 * h };
            let slots = ["fwd", "bwd"].map(|dir| {
                let p = format!("gru{}.{dir}", l + 1);
                GruSlots {
                    w_ih: layout.push(format!("{p}.w_ih"), &[3 * h, in_dim], h),
                    w_hh: layout.push(format!("{p}.w_hh"), &[3 * h, h], h),
                    b_ih: layout.push(format!("{p}.b_ih"), &[3 * h], h),
                    b_hh: layout.push(format!("{p}.b_hh"), &[3 * h], h),
                    in_dim,
                }
            });
            gru.push(slots);
        }
        let mut head = |name: &str, out: usize| {
            let hid = config.head_hidden;
            HeadSlots {
                w1: layout.push_scaled(format!("{name}.hidden.weight"), &[hid, 2 * h], 2 * h, RELU_GAIN),
                b1: layout.push(format!("{name}.hidden.bias"), &[hid], 2 * h),
                w2: layout.push(format!("{name}.out.weight"), &[out, hid], hid),
                b2: layout.push(format!("{name}.out.bias"), &[out], hid),
                out,
            }
        };
        let detection_head = head("detection", 4);
        let regression_head = head("regression", 8);
        Ok(Network {
            config,
            blocks,
            layout,
            conv,
            gru,
            detection_head,
            regression_head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn param_count(&self) -> usize {
        self.layout.len()
    }

    /// Seeded init. Conv kernels are shifted to zero sum per output channel
    /// so the flat background of a map does not swamp the echo ridges.
    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        let mut p = self.layout.init(seed);
        for (b, s) in self.blocks.iter().zip(&self.conv) {
            let per = b.in_channels * b.kernel * b.kernel;
            for o in 0..b.out_channels {
                let k = &mut p[s.weight + o * per..s.weight + (o + 1) * per];
                let mean = k.iter().sum::<f64>() / per as f64;
                k.iter_mut().for_each(|v| *v -= mean);
            }
        }
        p
    }

    fn check_input(&self, params: &[f64], map: &[f64]) -> Result<()> {
        if params.len() != self.layout.len() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.layout.len(),
                params.len()
            )));
        }
        let want = self.config.theta_count * self.config.map_len;
        if map.len() != want {
            return Err(Error::Shape(format!(
                "input has {} values, model expects {}x{} = {want}",
                map.len(),
                self.config.theta_count,
                self.config.map_len
            )));
        }
        ensure_finite("input map", map)
    }

    fn slice<'a>(&self, params: &'a [f64], offset: usize, len: usize) -> &'a [f64] {
        &params[offset..offset + len]
    }

    fn gru_weights<'a>(&self, params: &'a [f64], s: &GruSlots) -> GruWeights<'a> {
        let h = self.config.gru_hidden;
        GruWeights {
            w_ih: self.slice(params, s.w_ih, 3 * h * s.in_dim),
            w_hh: self.slice(params, s.w_hh, 3 * h * h),
            b_ih: self.slice(params, s.b_ih, 3 * h),
            b_hh: self.slice(params, s.b_hh, 3 * h),
        }
    }

    /// Pre-activation of the first conv layer, `C×Θ×L`.
    pub fn first_layer_response(&self, params: &[f64], map: &[f64]) -> Result<Vec<f64>> {
        self.check_input(params, map)?;
        let b = &self.blocks[0];
        let s = self.conv[0];
        let w = self.slice(params, s.weight, b.out_channels * b.in_channels * b.kernel * b.kernel);
        let bias = self.slice(params, s.bias, b.out_channels);
        Ok(conv_same(b, w, bias, map).0)
    }

    pub fn forward(&self, params: &[f64], map: &[f64]) -> Result<ModelOutput> {
        Ok(self.forward_train(params, map)?.output)
    }

    pub fn forward_train(&self, params: &[f64], map: &[f64]) -> Result<ForwardCache> {
        self.check_input(params, map)?;
        let mut x = map.to_vec();
        let mut conv_caches = Vec::with_capacity(self.blocks.len());
        for (i, (b, s)) in self.blocks.iter().zip(&self.conv).enumerate() {
            let w = self.slice(params, s.weight, b.out_channels * b.in_channels * b.kernel * b.kernel);
            let bias = self.slice(params, s.bias, b.out_channels);
            let (out, cache) = conv_block_forward(b, w, bias, &x, self.config.pool);
            ensure_finite(&format!("conv{} activations", i + 1), &out)?;
            conv_caches.push(cache);
            x = out;
        }

        // channel-major features per time step
        let (steps, feat) = self.config.sequence_shape();
        let mut seq: Vec<Vec<f64>> = (0..steps)
            .map(|t| (0..feat).map(|f| x[f * steps + t]).collect())
            .collect();

        let h = self.config.gru_hidden;
        let mut layers = Vec::with_capacity(self.gru.len());
        let mut last = (Vec::new(), Vec::new());
        for (l, slots) in self.gru.iter().enumerate() {
            let fwd_in: Vec<&[f64]> = seq.iter().map(|v| v.as_slice()).collect();
            let bwd_in: Vec<&[f64]> = seq.iter().rev().map(|v| v.as_slice()).collect();
            let (hf, sf) = gru_forward(&self.gru_weights(params, &slots[0]), h, &fwd_in);
            let (hb, sb) = gru_forward(&self.gru_weights(params, &slots[1]), h, &bwd_in);
            let out: Vec<Vec<f64>> = (0..steps)
                .map(|t| {
                    let mut y = hf[t].clone();
                    y.extend_from_slice(&hb[steps - 1 - t]);
                    y
                })
                .collect();
            ensure_finite(&format!("gru{} states", l + 1), &out.concat())?;
            last = (hf[steps - 1].clone(), hb[steps - 1].clone());
            layers.push(LayerCache {
                inputs: std::mem::replace(&mut seq, out),
                steps: [sf, sb],
            });
        }
        let mut features = last.0;
        features.extend_from_slice(&last.1);

        let (det_hidden, logits) = self.head_forward(params, &self.detection_head, &features);
        let (reg_hidden, reg) = self.head_forward(params, &self.regression_head, &features);
        ensure_finite("detection logits", &logits)?;
        ensure_finite("regression output", &reg)?;
        let output = ModelOutput {
            detection: std::array::from_fn(|w| sigmoid(logits[w])),
            normals: std::array::from_fn(|w| [reg[2 * w], reg[2 * w + 1]]),
        };
        Ok(ForwardCache {
            conv: conv_caches,
            layers,
            features,
            det_hidden,
            reg_hidden,
            output,
        })
    }

    fn head_forward(&self, params: &[f64], s: &HeadSlots, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let hid = self.config.head_hidden;
        let mut hidden = dense(self.slice(params, s.w1, hid * x.len()), self.slice(params, s.b1, hid), x);
        relu_in_place(&mut hidden);
        let out = dense(self.slice(params, s.w2, s.out * hid), self.slice(params, s.b2, s.out), &hidden);
        (hidden, out)
    }

    /// Accumulates `d_out` through one head; returns the feature gradient.
    fn head_backward(&self, params: &[f64], grads: &mut [f64], s: &HeadSlots, x: &[f64], hidden: &[f64], d_out: &[f64]) -> Vec<f64> {
        let hid = self.config.head_hidden;
        let n_in = x.len();
        outer_acc(&mut grads[s.w2..s.w2 + s.out * hid], d_out, hidden);
        for (g, d) in grads[s.b2..s.b2 + s.out].iter_mut().zip(d_out) {
            *g += d;
        }
        let mut d_hidden = vec![0.0; hid];
        matvec_t_acc(self.slice(params, s.w2, s.out * hid), d_out, &mut d_hidden);
        for (d, &a) in d_hidden.iter_mut().zip(hidden) {
            if a <= 0.0 {
                *d = 0.0;
            }
        }
        outer_acc(&mut grads[s.w1..s.w1 + hid * n_in], &d_hidden, x);
        for (g, d) in grads[s.b1..s.b1 + hid].iter_mut().zip(&d_hidden) {
            *g += d;
        }
        let mut d_x = vec![0.0; n_in];
        matvec_t_acc(self.slice(params, s.w1, hid * n_in), &d_hidden, &mut d_x);
        d_x
    }

    /// Exact gradient of a loss whose derivatives with respect to the
    /// detection scores and the normals are `d_detection` and `d_normals`.
    /// A head whose output gradient is all zero contributes exactly zero.
    pub fn backward(
        &self,
        params: &[f64],
        cache: &ForwardCache,
        d_detection: &[f64; 4],
        d_normals: &[[f64; 2]; 4],
    ) -> Result<Vec<f64>> {
        let mut grads = vec![0.0; self.layout.len()];
        let h = self.config.gru_hidden;
        let mut d_features = vec![0.0; 2 * h];

        if d_detection.iter().any(|&d| d != 0.0) {
            let d_logits: Vec<f64> = (0..4)
                .map(|w| {
                    let s = cache.output.detection[w];
                    d_detection[w] * s * (1.0 - s)
                })
                .collect();
            let d = self.head_backward(params, &mut grads, &self.detection_head, &cache.features, &cache.det_hidden, &d_logits);
            d_features.iter_mut().zip(&d).for_each(|(a, b)| *a += b);
        }
        let d_reg: Vec<f64> = d_normals.iter().flatten().copied().collect();
        if d_reg.iter().any(|&d| d != 0.0) {
            let d = self.head_backward(params, &mut grads, &self.regression_head, &cache.features, &cache.reg_hidden, &d_reg);
            d_features.iter_mut().zip(&d).for_each(|(a, b)| *a += b);
        }

        let (steps, feat) = self.config.sequence_shape();
        // gradient w.r.t. each layer's output sequence, [fwd | bwd] per step
        let mut d_seq = vec![vec![0.0; 2 * h]; steps];
        d_seq[steps - 1][..h].copy_from_slice(&d_features[..h]);
        d_seq[0][h..].copy_from_slice(&d_features[h..]);

        for (slots, lc) in self.gru.iter().zip(&cache.layers).rev() {
            let d_f: Vec<Vec<f64>> = d_seq.iter().map(|d| d[..h].to_vec()).collect();
            let d_b: Vec<Vec<f64>> = d_seq.iter().rev().map(|d| d[h..].to_vec()).collect();
            let in_dim = slots[0].in_dim;
            let mut d_in = vec![vec![0.0; in_dim]; steps];
            for (dir, d_hs) in [(0usize, d_f), (1, d_b)] {
                let s = &slots[dir];
                let xs: Vec<&[f64]> = if dir == 0 {
                    lc.inputs.iter().map(|v| v.as_slice()).collect()
                } else {
                    lc.inputs.iter().rev().map(|v| v.as_slice()).collect()
                };
                let block = &mut grads[s.w_ih..s.b_hh + 3 * h];
                let (w_ih, rest) = block.split_at_mut(3 * h * in_dim);
                let (w_hh, rest) = rest.split_at_mut(3 * h * h);
                let (b_ih, b_hh) = rest.split_at_mut(3 * h);
                let mut g = GruGrads { w_ih, w_hh, b_ih, b_hh };
                let dxs = gru_backward(&self.gru_weights(params, s), &mut g, h, &xs, &lc.steps[dir], &d_hs);
                for (k, dx) in dxs.iter().enumerate() {
                    let t = if dir == 0 { k } else { steps - 1 - k };
                    d_in[t].iter_mut().zip(dx).for_each(|(a, b)| *a += b);
                }
            }
            d_seq = d_in;
        }

        let mut d_x = vec![0.0; feat * steps];
        for (t, d) in d_seq.iter().enumerate() {
            for f in 0..feat {
                d_x[f * steps + t] = d[f];
            }
        }
        for (i, (b, s)) in self.blocks.iter().zip(&self.conv).enumerate().rev() {
            let wlen = b.out_channels * b.in_channels * b.kernel * b.kernel;
            let (gw, gb) = grads[s.weight..s.bias + b.out_channels].split_at_mut(wlen);
            let dx = conv_block_backward(b, self.slice(params, s.weight, wlen), &cache.conv[i], &d_x, gw, gb, i > 0);
            if let Some(dx) = dx {
                d_x = dx;
            }
        }

        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            let name = self.layout.owner(i).map(|t| t.name.clone()).unwrap_or_default();
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
        Ok(grads)
    }
}

impl ForwardCache {
    pub fn output(&self) -> &ModelOutput {
        &self.output
    }
}
