//! Training objectives for wall-normal regression with optional detection.
//!
//! All three losses share the per-wall Euclidean error
//! `ℓ_w = ||(x_w, y_w) - (x̂_w, ŷ_w)||₂`:
//!
//! * localization only: mean of `ℓ` over the batch and the four walls;
//! * attention-weighted: per sample, the detection-weighted mean
//!   `Σ δ̂_w ℓ_w / (Σ δ̂_w + ε)`, averaged over the batch;
//! * regularized attention-weighted: the above plus
//!   `λ · sqrt(mean_b (W_max - Σ_w δ̂_w)²)` (one root over the whole batch).
//!
//! Gradients are returned with respect to the predicted normals and the
//! detection scores (post-sigmoid).

pub type Normals = [[f64; 2]; 4];

/// Denominator guard of the attention-weighted loss.
pub const DEFAULT_EPS_GUARD: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LossKind {
    LocalizationOnly,
    Attention {
        eps_guard: f64,
    },
    RegularizedAttention {
        lambda: f64,
        w_max: f64,
        eps_guard: f64,
    },
}

impl LossKind {
    pub fn attention() -> Self {
        LossKind::Attention {
            eps_guard: DEFAULT_EPS_GUARD,
        }
    }

    pub fn regularized(lambda: f64) -> Self {
        LossKind::RegularizedAttention {
            lambda,
            w_max: 4.0,
            eps_guard: DEFAULT_EPS_GUARD,
        }
    }

    /// Whether the detection scores influence the loss.
    pub fn uses_detection(&self) -> bool {
        !matches!(self, LossKind::LocalizationOnly)
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::LocalizationOnly => "lo",
            LossKind::Attention { .. } => "ajdl",
            LossKind::RegularizedAttention { .. } => "rajdl",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossValue {
    pub value: f64,
    /// `ℓ_w` per sample.
    pub per_wall: Vec<[f64; 4]>,
    /// `Σ_w δ̂_w` per sample (empty for the localization-only loss).
    pub detection_mass: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossGrad {
    pub d_normals: Vec<Normals>,
    pub d_detection: Vec<[f64; 4]>,
}

fn wall_errors(pred: &Normals, target: &Normals) -> [f64; 4] {
    std::array::from_fn(|w| (target[w][0] - pred[w][0]).hypot(target[w][1] - pred[w][1]))
}

/// `∂ℓ_w/∂pred_w`, zero where the prediction is exact.
fn error_grad(pred: &[f64; 2], target: &[f64; 2], ell: f64) -> [f64; 2] {
    if ell == 0.0 {
        [0.0, 0.0]
    } else {
        [(pred[0] - target[0]) / ell, (pred[1] - target[1]) / ell]
    }
}

fn check_batch(pred: &[Normals], target: &[Normals]) {
    assert_eq!(pred.len(), target.len(), "prediction/target batch sizes differ");
}

pub fn loss_lo(pred: &[Normals], target: &[Normals]) -> LossValue {
    check_batch(pred, target);
    let per_wall: Vec<[f64; 4]> = pred.iter().zip(target).map(|(p, t)| wall_errors(p, t)).collect();
    let total: f64 = per_wall.iter().map(|e| e.iter().sum::<f64>()).sum();
    LossValue {
        value: total / (4.0 * pred.len().max(1) as f64),
        per_wall,
        detection_mass: Vec::new(),
    }
}

pub fn loss_ajdl(pred: &[Normals], detection: &[[f64; 4]], target: &[Normals], eps_guard: f64) -> LossValue {
    check_batch(pred, target);
    assert_eq!(pred.len(), detection.len());
    let per_wall: Vec<[f64; 4]> = pred.iter().zip(target).map(|(p, t)| wall_errors(p, t)).collect();
    let mut sum = 0.0;
    let mut detection_mass = Vec::with_capacity(pred.len());
    for (ell, det) in per_wall.iter().zip(detection) {
        let mass: f64 = det.iter().sum();
        let weighted: f64 = det.iter().zip(ell).map(|(d, l)| d * l).sum();
        sum += weighted / (mass + eps_guard);
        detection_mass.push(mass);
    }
    LossValue {
        value: sum / pred.len().max(1) as f64,
        per_wall,
        detection_mass,
    }
}

/// The regularization term alone: `λ · sqrt(mean_b (W_max - Σ_w δ̂_w)²)`.
pub fn detection_penalty(detection: &[[f64; 4]], lambda: f64, w_max: f64) -> f64 {
    let b = detection.len().max(1) as f64;
    let ms: f64 = detection
        .iter()
        .map(|d| (w_max - d.iter().sum::<f64>()).powi(2))
        .sum::<f64>()
        / b;
    lambda * ms.sqrt()
}

pub fn loss_rajdl(
    pred: &[Normals],
    detection: &[[f64; 4]],
    target: &[Normals],
    lambda: f64,
    w_max: f64,
    eps_guard: f64,
) -> LossValue {
    let mut v = loss_ajdl(pred, detection, target, eps_guard);
    v.value += detection_penalty(detection, lambda, w_max);
    v
}

/// Loss value and its gradient for a whole batch.
pub fn loss_with_grad(kind: &LossKind, pred: &[Normals], detection: &[[f64; 4]], target: &[Normals]) -> (LossValue, LossGrad) {
    check_batch(pred, target);
    let b = pred.len().max(1) as f64;
    let mut d_normals = vec![[[0.0; 2]; 4]; pred.len()];
    let mut d_detection = vec![[0.0; 4]; pred.len()];
    let value = match *kind {
        LossKind::LocalizationOnly => {
            let v = loss_lo(pred, target);
            for (i, ell) in v.per_wall.iter().enumerate() {
                for w in 0..4 {
                    let g = error_grad(&pred[i][w], &target[i][w], ell[w]);
                    d_normals[i][w] = [g[0] / (4.0 * b), g[1] / (4.0 * b)];
                }
            }
            v
        }
        LossKind::Attention { eps_guard } | LossKind::RegularizedAttention { eps_guard, .. } => {
            let mut v = loss_ajdl(pred, detection, target, eps_guard);
            for i in 0..pred.len() {
                let ell = v.per_wall[i];
                let det = detection[i];
                let s = v.detection_mass[i] + eps_guard;
                let mean = det.iter().zip(&ell).map(|(d, l)| d * l).sum::<f64>() / s;
                for w in 0..4 {
                    d_detection[i][w] = (ell[w] - mean) / (s * b);
                    let g = error_grad(&pred[i][w], &target[i][w], ell[w]);
                    let scale = det[w] / (s * b);
                    d_normals[i][w] = [g[0] * scale, g[1] * scale];
                }
            }
            if let LossKind::RegularizedAttention { lambda, w_max, .. } = *kind {
                let penalty = detection_penalty(detection, lambda, w_max);
                v.value += penalty;
                let rms = if lambda == 0.0 { 0.0 } else { penalty / lambda };
                if rms > 0.0 {
                    for i in 0..pred.len() {
                        let g = -lambda * (w_max - v.detection_mass[i]) / (b * rms);
                        d_detection[i].iter_mut().for_each(|d| *d += g);
                    }
                }
            }
            v
        }
    };
    (value, LossGrad { d_normals, d_detection })
}
