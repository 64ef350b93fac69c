//! End-to-end acceptance checks, one line per criterion.
//!
//! Runs without the libtest harness so every criterion reports even when an
//! earlier one fails. Exit status is nonzero if any criterion fails.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use echomap::acoustics::{add_noise, enumerate_images, pink_noise, render_images, KERNEL_HALF_WIDTH};
use echomap::cli::Settings;
use echomap::dataset::{generate_samples, split_seeds, DatasetConfig, Sample};
use echomap::eval::{
    absorption_sweep, detect, distance_error, evaluate, evaluate_predictions, orientation_error, EvalReport, SweepScene,
};
use echomap::geometry::{encode_normal, FloorPolygon, Point2, Point3, RoomSpec, WallLabel};
use echomap::losses::{detection_penalty, loss_ajdl, loss_lo, loss_rajdl, LossKind, Normals};
use echomap::nnet::{batch_gradient, predict, train, Example, ModelConfig, ModelOutput, Network, TrainConfig};
use echomap::radon::{radon_map_with, RadonGeometry};
use echomap::Execution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- 1

/// Literal transcription: for every angle, range bin and mic, read the
/// response at `n - (fs/c)(r_n - rho)` with linear interpolation.
fn radon_oracle(h: &[Vec<f64>], mics: &[Point2], fs: f64, c: f64, n_offset: usize, theta_count: usize) -> Vec<f64> {
    let len = h[0].len();
    let mut out = vec![0.0; theta_count * len];
    for t in 0..theta_count {
        let theta = 2.0 * PI * t as f64 / theta_count as f64;
        for n in 0..len {
            let r = (n + n_offset) as f64 * c / (2.0 * fs);
            let q = [r * theta.cos(), r * theta.sin()];
            let mut acc = 0.0;
            for m in 0..mics.len() {
                let rho = ((q[0] - mics[m][0]).powi(2) + (q[1] - mics[m][1]).powi(2)).sqrt();
                let x = n as f64 - fs / c * (r - rho);
                let v = if x < 0.0 || x > (len - 1) as f64 {
                    0.0
                } else {
                    let i = x.floor() as usize;
                    let f = x - i as f64;
                    let next = if i + 1 < len { h[m][i + 1] } else { 0.0 };
                    (1.0 - f) * h[m][i] + f * next
                };
                acc += rho * v;
            }
            out[t * len + n] = acc;
        }
    }
    out
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for inst in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + inst);
        let mics: Vec<Point2> = (0..4)
            .map(|k| {
                let a = TAU * k as f64 / 4.0 + rng.random_range(-0.3..0.3);
                let r = rng.random_range(0.02..0.08);
                [r * a.cos(), r * a.sin()]
            })
            .collect();
        let h: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..100).map(|_| rng.random_range(-1.0f64..1.0).max(0.0)).collect())
            .collect();
        let n_offset = rng.random_range(0..20);
        let geom = RadonGeometry {
            fs: 16000.0,
            c: 343.0,
            n_offset,
        };
        for exec in [Execution::Sequential, Execution::Parallel] {
            let map = radon_map_with(exec, &h, &mics, &geom, 36).map_err(|e| e.to_string())?;
            let want = radon_oracle(&h, &mics, 16000.0, 343.0, n_offset, 36);
            for (a, b) in map.values.iter().zip(&want) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(worst <= 1e-6, || format!("max abs difference {worst:e} > 1e-6"))?;
    check(secs < 10.0, || format!("took {secs:.1}s"))?;
    Ok(format!("20 instances, max abs diff {worst:.2e}, {secs:.2}s"))
}

// ---------------------------------------------------------------- 2

/// Shoebox images from the lattice formula: per axis, coordinate
/// `(1 - 2q) s + 2 n L` hits the low wall `|n - q|` and the high wall `|n|`
/// times.
fn lattice_images(dims: [f64; 3], src: Point3, beta: [f64; 6], max_order: usize) -> Vec<(Point3, f64)> {
    // (low wall, high wall) plane ids per axis: west/east, south/north, floor/ceiling
    let walls = [(3usize, 1usize), (0, 2), (4, 5)];
    let mut per_axis: Vec<Vec<(f64, usize, f64)>> = Vec::new();
    for ax in 0..3 {
        let mut v = Vec::new();
        for n in -(max_order as i64)..=(max_order as i64) {
            for q in 0..2i64 {
                let lo = (n - q).unsigned_abs() as usize;
                let hi = n.unsigned_abs() as usize;
                if lo + hi > max_order {
                    continue;
                }
                let x = (1 - 2 * q) as f64 * src[ax] + 2.0 * n as f64 * dims[ax];
                let g = beta[walls[ax].0].powi(lo as i32) * beta[walls[ax].1].powi(hi as i32);
                v.push((x, lo + hi, g));
            }
        }
        per_axis.push(v);
    }
    let mut out = Vec::new();
    for &(x, ox, gx) in &per_axis[0] {
        for &(y, oy, gy) in &per_axis[1] {
            for &(z, oz, gz) in &per_axis[2] {
                if ox + oy + oz <= max_order {
                    out.push(([x, y, z], gx * gy * gz));
                }
            }
        }
    }
    out
}

fn dist(a: Point3, b: Point3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let (fs, c, len) = (16000.0, 343.0, 2400);
    let (mut echoes, mut worst_delay, mut worst_amp) = (0usize, 0.0f64, 0.0f64);
    for k in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + k);
        let dims = [rng.random_range(3.0..8.0), rng.random_range(3.0..8.0), rng.random_range(2.0..5.0)];
        let dev = [
            rng.random_range(0.5..dims[0] - 0.5),
            rng.random_range(0.5..dims[1] - 0.5),
            rng.random_range(0.5..dims[2] - 0.5),
        ];
        let absorption: [f64; 6] = std::array::from_fn(|_| rng.random_range(0.0..0.9));
        let room = RoomSpec {
            floor: FloorPolygon::rectangle(dims[0], dims[1]).unwrap(),
            height_m: dims[2],
            absorption,
            device_center: dev,
            array_radius_m: 0.05,
            n_mics: 8,
        };
        let order = 1 + (k as usize % 2);
        let images = enumerate_images(&room, dev, order).map_err(|e| e.to_string())?;
        let beta = absorption.map(|a| (1.0 - a).sqrt());
        let lattice = lattice_images(dims, dev, beta, order);
        check(images.len() == lattice.len(), || {
            format!("room {k}: {} images vs {} from the lattice formula", images.len(), lattice.len())
        })?;
        for mic in room.mic_positions_3d() {
            let full = render_images(&images, mic, &room, fs, c, len);
            let mut sum = vec![0.0; len];
            for (pos, gain) in &lattice {
                let img = images
                    .iter()
                    .find(|i| dist(i.position, *pos) < 1e-9)
                    .ok_or_else(|| format!("room {k}: lattice image {pos:?} missing"))?;
                check((img.gain - gain).abs() < 1e-12, || format!("room {k}: gain {} vs {gain}", img.gain))?;
                let d = dist(*pos, mic);
                let delay = d * fs / c;
                let amp = gain / d;
                let sig = render_images(std::slice::from_ref(img), mic, &room, fs, c, len);
                sum.iter_mut().zip(&sig).for_each(|(a, b)| *a += b);
                // echoes whose kernel is cut by either end of the buffer are only summed
                if delay < KERNEL_HALF_WIDTH || delay + KERNEL_HALF_WIDTH >= len as f64 || *gain == 0.0 {
                    continue;
                }
                let peak = (0..len).max_by(|&a, &b| sig[a].abs().total_cmp(&sig[b].abs())).unwrap();
                let lo = (delay - KERNEL_HALF_WIDTH).ceil() as usize;
                let hi = (delay + KERNEL_HALF_WIDTH).floor() as usize;
                let area: f64 = sig[lo..=hi].iter().sum();
                worst_delay = worst_delay.max((peak as f64 - delay).abs());
                worst_amp = worst_amp.max((area - amp).abs() / amp);
                echoes += 1;
            }
            let gap = full.iter().zip(&sum).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            check(gap < 1e-12, || format!("room {k}: response is not the sum of its echoes ({gap:e})"))?;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(worst_delay <= 0.5, || format!("peak off by {worst_delay:.3} samples"))?;
    check(worst_amp <= 0.01, || format!("amplitude off by {:.3}%", 100.0 * worst_amp))?;
    check(secs < 30.0, || format!("took {secs:.1}s"))?;
    Ok(format!(
        "{echoes} echoes in 50 rooms: worst peak offset {worst_delay:.3} samples, worst amplitude error {:.3}%, {secs:.2}s",
        100.0 * worst_amp
    ))
}

// ---------------------------------------------------------------- 3

fn batch_loss(net: &Network, params: &[f64], maps: &[Vec<f64>], targets: &[Normals], loss: &LossKind) -> f64 {
    let outs: Vec<ModelOutput> = maps.iter().map(|m| net.forward(params, m).unwrap()).collect();
    let pred: Vec<Normals> = outs.iter().map(|o| o.normals).collect();
    let det: Vec<[f64; 4]> = outs.iter().map(|o| o.detection).collect();
    match *loss {
        LossKind::LocalizationOnly => loss_lo(&pred, targets).value,
        LossKind::Attention { eps_guard } => loss_ajdl(&pred, &det, targets, eps_guard).value,
        LossKind::RegularizedAttention {
            lambda,
            w_max,
            eps_guard,
        } => loss_rajdl(&pred, &det, targets, lambda, w_max, eps_guard).value,
    }
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let net = Network::new(ModelConfig::tiny()).map_err(|e| e.to_string())?;
    let n = net.config().theta_count * net.config().map_len;
    let mut summary = Vec::new();
    for (seed, loss) in [(21u64, LossKind::LocalizationOnly), (22, LossKind::attention()), (23, LossKind::regularized(0.05))] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let maps: Vec<Vec<f64>> = (0..3).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let targets: Vec<Normals> = (0..3)
            .map(|_| std::array::from_fn(|_| [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]))
            .collect();
        let batch: Vec<Example> = maps.iter().zip(&targets).map(|(m, &t)| Example { map: m, targets: t }).collect();
        let params = net.init_params(seed);
        let (_, grad) = batch_gradient(&net, &params, &batch, &loss, Execution::Parallel).map_err(|e| e.to_string())?;
        let eps = 1e-4;
        let mut worst = (0.0f64, String::new());
        for i in 0..params.len() {
            let mut p = params.clone();
            p[i] = params[i] + eps;
            let up = batch_loss(&net, &p, &maps, &targets, &loss);
            p[i] = params[i] - eps;
            let down = batch_loss(&net, &p, &maps, &targets, &loss);
            let fd = (up - down) / (2.0 * eps);
            let diff = (fd - grad[i]).abs();
            // differences at the level of the FD truncation error count as agreement
            let rel = if diff <= 1e-9 { 0.0 } else { diff / fd.abs().max(grad[i].abs()) };
            if rel > worst.0 {
                worst = (rel, net.layout().owner(i).map(|t| t.name.clone()).unwrap_or_default());
            }
        }
        check(worst.0 <= 1e-4, || format!("{}: relative error {:.2e} in {}", loss.name(), worst.0, worst.1))?;
        summary.push(format!("{} {:.1e}", loss.name(), worst.0));
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 120.0, || format!("took {secs:.1}s"))?;
    Ok(format!("{} parameters, worst rel err: {}, {secs:.1}s", net.param_count(), summary.join(", ")))
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let b = rng.random_range(1..6);
        let pred: Vec<Normals> = (0..b)
            .map(|_| std::array::from_fn(|_| [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)]))
            .collect();
        let target: Vec<Normals> = (0..b)
            .map(|_| std::array::from_fn(|_| [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)]))
            .collect();
        let det: Vec<[f64; 4]> = (0..b).map(|_| std::array::from_fn(|_| rng.random_range(0.0..1.0))).collect();
        let eps = 1e-8;

        let a = loss_ajdl(&pred, &det, &target, eps).value;
        let r0 = loss_rajdl(&pred, &det, &target, 0.0, 4.0, eps).value;
        worst = worst.max((a - r0).abs());

        // per-sample mean of the wall errors, computed here from scratch
        let ell = |p: &Normals, t: &Normals, w: usize| ((p[w][0] - t[w][0]).powi(2) + (p[w][1] - t[w][1]).powi(2)).sqrt();
        let ones = vec![[1.0; 4]; b];
        let mean_ell = (0..b).map(|i| (0..4).map(|w| ell(&pred[i], &target[i], w)).sum::<f64>() / 4.0).sum::<f64>() / b as f64;
        let a1 = loss_ajdl(&pred, &ones, &target, 0.0).value;
        check((a1 - mean_ell).abs() <= 1e-12, || format!("all-ones attention {a1} vs mean {mean_ell}"))?;
        let pen = detection_penalty(&ones, 0.05, 4.0);
        check(pen == 0.0, || format!("penalty at full detection is {pen}"))?;
        // eps_guard is relative to sum(det) = 4: within 1e-12 only with the guard disabled
        let r1 = loss_rajdl(&pred, &ones, &target, 0.05, 4.0, 0.0).value;
        check((r1 - mean_ell).abs() <= 1e-12, || format!("rajdl at full detection {r1} vs {mean_ell}"))?;

        let w = rng.random_range(0..4);
        let mut onehot = vec![[0.0; 4]; b];
        onehot.iter_mut().for_each(|d| d[w] = 1.0);
        let sel = (0..b).map(|i| ell(&pred[i], &target[i], w)).sum::<f64>() / b as f64;
        let a2 = loss_ajdl(&pred, &onehot, &target, 0.0).value;
        check((a2 - sel).abs() <= 1e-12, || format!("one-hot attention {a2} vs selected {sel}"))?;
    }
    check(worst <= 1e-12, || format!("lambda=0 gap {worst:e}"))?;
    Ok(format!("50 random batches: lambda=0 gap {worst:.1e}; all-ones and one-hot reductions exact"))
}

// ---------------------------------------------------------------- 5, 6

struct Trained {
    net: Network,
    test: Vec<Sample>,
    lo: Vec<f64>,
    ajdl: Vec<f64>,
    rajdl: Vec<(f64, Vec<f64>)>,
    epochs: usize,
    train_rooms: usize,
}

fn trained() -> &'static Trained {
    static CELL: OnceLock<Trained> = OnceLock::new();
    CELL.get_or_init(|| {
        let t0 = Instant::now();
        let data = DatasetConfig::desk();
        let gen = |split: &str, n: usize| generate_samples(&data, &split_seeds(2024, split, n), Execution::Parallel).unwrap();
        let (train_s, val_s, test) = (gen("train", 2000), gen("val", 500), gen("test", 500));
        eprintln!("[setup] generated 3000 desk rooms in {:.0}s", t0.elapsed().as_secs_f64());
        let desk = Settings::preset("desk").unwrap();
        let net = Network::new(desk.model.clone()).unwrap();
        let tr: Vec<Example> = train_s.iter().map(Example::from_sample).collect();
        let va: Vec<Example> = val_s.iter().map(Example::from_sample).collect();
        let run = |loss: LossKind| {
            let t = Instant::now();
            let cfg = TrainConfig {
                loss,
                epochs: desk.epochs,
                // every run sees the full epoch budget; the best epoch is kept
                patience: desk.epochs,
                batch_size: desk.batch_size,
                optimizer: desk.optimizer,
                seed: 1,
                gamma: 0.5,
                exec: Execution::Parallel,
            };
            let r = train(&net, net.init_params(1), &tr, &va, &cfg, |_| {}).unwrap();
            let best = r.best();
            eprintln!(
                "[setup] {:<6} {} epochs, best {} (val {:.4}, detected {:.1}%) in {:.0}s",
                loss.name(),
                r.history.len(),
                r.best_epoch,
                best.val_loss,
                best.detection_rate,
                t.elapsed().as_secs_f64()
            );
            assert_eq!(r.history.len(), desk.epochs);
            r.params
        };
        let lo = run(LossKind::LocalizationOnly);
        let ajdl = run(LossKind::attention());
        let rajdl = [0.01, 0.05, 0.10].into_iter().map(|l| (l, run(LossKind::regularized(l)))).collect();
        Trained {
            net,
            test,
            lo,
            ajdl,
            rajdl,
            epochs: desk.epochs,
            train_rooms: tr.len(),
        }
    })
}

fn report(t: &Trained, jdl: &[f64]) -> EvalReport {
    evaluate((&t.net, jdl), (&t.net, &t.lo), &t.test, 0.5, Execution::Parallel).unwrap()
}

fn criterion_5() -> Outcome {
    let t = trained();
    let a = report(t, &t.ajdl);
    let rates: Vec<(f64, f64)> = t.rajdl.iter().map(|(l, p)| (*l, report(t, p).detection_rate())).collect();
    let per_room = a.mean_detected_per_room();
    let rates_txt: Vec<String> = rates.iter().map(|(l, r)| format!("{l}: {r:.2}%")).collect();
    let detail = format!(
        "{} rooms x {} epochs; A-JDL {per_room:.3} detected walls/room; RA-JDL detection rate {}",
        t.train_rooms,
        t.epochs,
        rates_txt.join(", ")
    );
    check(per_room <= 1.5, || format!("A-JDL detects {per_room:.3} walls per room; {detail}"))?;
    check(rates.windows(2).all(|w| w[1].1 >= w[0].1), || format!("detection rate not monotone in lambda; {detail}"))?;
    Ok(detail)
}

fn criterion_6() -> Outcome {
    let t = trained();
    let (_, params) = t.rajdl.iter().find(|(l, _)| *l == 0.05).unwrap();
    let r = report(t, params);
    let (Some(j), Some(u), Some(d)) = (r.jdl, r.lo_undetected, r.lo_detected) else {
        return Err(format!("empty partition: {} detected, {} undetected", r.detected_walls, r.undetected_walls));
    };
    let detail = format!(
        "RA-JDL(0.05) on detected walls {:.1} cm vs LO on undetected {:.1} cm (LO on detected {:.1} cm; {:.1}% detected)",
        j.distance_cm.mean,
        u.distance_cm.mean,
        d.distance_cm.mean,
        r.detection_rate()
    );
    check(j.distance_cm.mean < u.distance_cm.mean, || detail.clone())?;

    // sweep trend for the most permissive model, reported only
    let (_, p10) = t.rajdl.iter().find(|(l, _)| *l == 0.10).unwrap();
    let sweep = absorption_sweep(&t.net, p10, &DatasetConfig::desk(), &SweepScene::default(), &[0.01, 0.99], 0.5, Execution::Parallel)
        .map_err(|e| e.to_string())?;
    eprintln!(
        "[info] east-wall score under RA-JDL(0.10): alpha 0.01 -> {:.3}, alpha 0.99 -> {:.3}",
        sweep[0].score, sweep[1].score
    );
    Ok(detail)
}

// ---------------------------------------------------------------- 7

fn criterion_7() -> Outcome {
    let (len, fs) = (16384usize, 16000.0);
    let mut avg = vec![0.0; len / 2 + 1];
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(len);
    for seed in 0..20 {
        let x = pink_noise(len, seed);
        let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
        fft.process(&mut buf);
        for k in 0..avg.len() {
            avg[k] += buf[k].norm_sqr() / 20.0;
        }
    }
    // least squares of dB against log10(f) over the band
    let pts: Vec<(f64, f64)> = (1..avg.len())
        .map(|k| (k as f64 * fs / len as f64, avg[k]))
        .filter(|(f, _)| (50.0..=6400.0).contains(f))
        .map(|(f, p)| (f.log10(), 10.0 * p.log10()))
        .collect();
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    check((-11.5..=-8.5).contains(&slope), || format!("slope {slope:.2} dB/decade"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let sig: Vec<f64> = (0..4000).map(|i| if i % 97 == 0 { rng.random_range(-1.0..1.0) } else { 0.0 }).collect();
        for snr in [20.0, 35.0, 50.0] {
            let noisy = add_noise(&sig, snr, seed).map_err(|e| e.to_string())?;
            let ps: f64 = sig.iter().map(|v| v * v).sum();
            let pn: f64 = noisy.iter().zip(&sig).map(|(a, b)| (a - b).powi(2)).sum();
            worst = worst.max((10.0 * (ps / pn).log10() - snr).abs());
        }
    }
    check(worst <= 0.01, || format!("realized SNR off by {worst:.4} dB"))?;
    Ok(format!("slope {slope:.3} dB/decade over 50 Hz..6.4 kHz (20 seeds); SNR error {worst:.1e} dB"))
}

// ---------------------------------------------------------------- 8

fn label(d: f64, a: f64) -> WallLabel {
    WallLabel {
        wall_index: 1,
        distance: d,
        angle: a,
        normal_xy: encode_normal(d, a),
    }
}

fn criterion_8() -> Outcome {
    let tol = 1e-9;
    let l = label(1.0, 0.0);
    let e90 = orientation_error(&l, [0.0, 1.0]).unwrap();
    check((e90 - FRAC_PI_2).abs() <= tol, || format!("90 degree case gave {e90}"))?;
    let l = label(2.0, 0.0);
    let d = distance_error(&l, [1.9, 0.0]).unwrap();
    check((d - 0.1).abs() <= tol, || format!("distance fixture gave {d}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..1000 {
        let l = label(rng.random_range(0.3..8.0), rng.random_range(0.0..TAU));
        let e = encode_normal(rng.random_range(0.1..8.0), rng.random_range(0.0..TAU));
        let k = rng.random_range(0.01..100.0);
        let o1 = orientation_error(&l, e).unwrap();
        let o2 = orientation_error(&l, [k * e[0], k * e[1]]).unwrap();
        check((o1 - o2).abs() <= tol, || format!("orientation not scale invariant: {o1} vs {o2}"))?;
        let d1 = distance_error(&l, e).unwrap();
        let d2 = distance_error(&l, [k * e[0], k * e[1]]).unwrap();
        let n = e[0].hypot(e[1]);
        check((d2 - (l.distance - k * n).abs()).abs() <= tol && (d1 - (l.distance - n).abs()).abs() <= tol, || {
            "distance error does not scale with the estimate".into()
        })?;
        // collinear: cosine may round above 1 without the clamp
        let c = orientation_error(&l, [l.normal_xy[0] * k, l.normal_xy[1] * k]).unwrap();
        check(c.is_finite() && c <= 1e-7, || format!("collinear estimate gave {c}"))?;
        let anti = orientation_error(&l, [-l.normal_xy[0] * k, -l.normal_xy[1] * k]).unwrap();
        check((anti - PI).abs() <= 1e-7, || format!("anti-collinear estimate gave {anti}"))?;
    }
    check(distance_error(&l, [0.0, 0.0]).is_err() && orientation_error(&l, [0.0, 0.0]).is_err(), || {
        "zero estimate accepted".into()
    })?;
    check(detect(&[0.6, 0.4, 0.7, 0.5], 0.5) == [true, false, true, false], || "threshold is not strict".into())?;
    Ok("90 degree, scale invariance (1000 draws), collinear clamping and zero-vector fixtures hold to 1e-9".into())
}

// ---------------------------------------------------------------- 9

fn run_cli(args: &[String]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_echomap"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn criterion_9() -> Outcome {
    const SMALL: &[&str] = &[
        "--preset", "desk", "--set", "data.max_order=2", "--set", "train.epochs=3", "--set", "model.gru_hidden=8",
        "--set", "model.head_hidden=16",
    ];
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    for run in ["a", "b"] {
        let d = |x: &str| root.path().join(run).join(x).display().to_string();
        let with = |args: &[&str]| -> Vec<String> { args.iter().chain(SMALL).map(|a| a.to_string()).collect() };
        for (split, n) in [("train", "40"), ("val", "12"), ("test", "12")] {
            run_cli(&with(&["gen", "--split", split, "--rooms", n, "--seed", "9", "--out", &d(split)]))?;
        }
        for (loss, out) in [("lo", "lo"), ("rajdl", "ra")] {
            run_cli(&with(&["train", "--loss", loss, "--train", &d("train"), "--val", &d("val"), "--seed", "5", "--out", &d(out)]))?;
        }
        run_cli(&with(&["eval", "--jdl", &d("ra/model"), "--lo", &d("lo/model"), "--test", &d("test"), "--out", &d("eval")]))?;
    }
    let (a, b) = (tree(&root.path().join("a")), tree(&root.path().join("b")));
    check(a.len() == b.len(), || format!("{} vs {} files", a.len(), b.len()))?;
    for ((na, ba), (nb, bb)) in a.iter().zip(&b) {
        check(na == nb && ba == bb, || format!("{na} differs between runs"))?;
    }
    Ok(format!("gen x3, train x2, eval: {} files byte-identical across two runs", a.len()))
}

// ---------------------------------------------------------------- 10

fn naive_mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mut s = 0.0;
    for x in v {
        s += x;
    }
    let m = s / n;
    let mut q = 0.0;
    for x in v {
        q += (x - m) * (x - m);
    }
    (m, (q / n).sqrt())
}

fn criterion_10() -> Outcome {
    let data = DatasetConfig::desk();
    let samples = generate_samples(&data, &split_seeds(77, "accounting", 100), Execution::Parallel).map_err(|e| e.to_string())?;
    let net = Network::new(ModelConfig::desk()).map_err(|e| e.to_string())?;
    let (pj, pl) = (net.init_params(31), net.init_params(32));
    let maps: Vec<&[f64]> = samples.iter().map(|s| s.map.values.as_slice()).collect();
    let jdl = predict(&net, &pj, &maps, Execution::Parallel).map_err(|e| e.to_string())?;
    let lo = predict(&net, &pl, &maps, Execution::Parallel).map_err(|e| e.to_string())?;
    // threshold at the median score so both partitions are populated
    let mut scores: Vec<f64> = jdl.iter().flat_map(|o| o.detection).collect();
    scores.sort_by(f64::total_cmp);
    let gamma = scores[scores.len() / 2];

    let labels: Vec<[WallLabel; 4]> = samples.iter().map(|s| s.labels).collect();
    let r = evaluate_predictions(&labels, &jdl, &lo, gamma).map_err(|e| e.to_string())?;
    let via_models = evaluate((&net, &pj), (&net, &pl), &samples, gamma, Execution::Sequential).map_err(|e| e.to_string())?;
    check(r == via_models, || "report differs between prediction and model entry points".into())?;

    // naive recomputation
    let (mut jd, mut jo, mut dd, mut dor, mut ud, mut uo) = (vec![], vec![], vec![], vec![], vec![], vec![]);
    for i in 0..100 {
        for w in 0..4 {
            let l = labels[i][w];
            // per-wall metrics are covered by criterion 8; this checks the bookkeeping
            let errs = |e: [f64; 2]| {
                let d = distance_error(&l, e).unwrap();
                let o = orientation_error(&l, e).unwrap();
                (d * 100.0, o.to_degrees())
            };
            let (ld, lor) = errs(lo[i].normals[w]);
            if jdl[i].detection[w] > gamma {
                let (a, b) = errs(jdl[i].normals[w]);
                jd.push(a);
                jo.push(b);
                dd.push(ld);
                dor.push(lor);
            } else {
                ud.push(ld);
                uo.push(lor);
            }
        }
    }
    check(dd.len() + ud.len() == 400, || "partitions do not cover every wall".into())?;
    check(r.detected_walls == dd.len() && r.undetected_walls == ud.len() && r.rooms == 100, || {
        format!("counts {} / {} vs {} / {}", r.detected_walls, r.undetected_walls, dd.len(), ud.len())
    })?;
    let parts = [(r.jdl, &jd, &jo), (r.lo_detected, &dd, &dor), (r.lo_undetected, &ud, &uo)];
    for (i, (stats, d, o)) in parts.into_iter().enumerate() {
        let s = stats.ok_or_else(|| format!("partition {i} unexpectedly empty"))?;
        let (dm, ds) = naive_mean_std(d);
        let (om, os) = naive_mean_std(o);
        check(
            s.distance_cm.mean == dm && s.distance_cm.std == ds && s.orientation_deg.mean == om && s.orientation_deg.std == os,
            || format!("partition {i} differs from the naive recomputation"),
        )?;
    }
    let rate = 100.0 * dd.len() as f64 / 400.0;
    check(r.detection_rate() == rate, || format!("detection rate {} vs {rate}", r.detection_rate()))?;
    Ok(format!("100 rooms: {} + {} = 400 walls, statistics bit-identical to the naive oracle", dd.len(), ud.len()))
}

fn main() {
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, fn() -> Outcome); 10] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let mut failed = 0;
    for (n, f) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("[criterion {n}] PASS ({secs:.1}s) {detail}"),
            Err(why) => {
                failed += 1;
                println!("[criterion {n}] FAIL ({secs:.1}s) {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
}
