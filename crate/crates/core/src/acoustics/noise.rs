//! Pink (1/f) noise and SNR-controlled mixing.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Unit-RMS pink noise of `len` samples.
///
/// White Gaussian noise is shaped in the frequency domain by `1/sqrt(k)` per
/// bin, which gives a power spectral density falling at exactly 10 dB per
/// decade. The DC bin is zeroed.
pub fn pink_noise(len: usize, seed: u64) -> Vec<f64> {
    if len == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf: Vec<Complex<f64>> = (0..len)
        .map(|_| Complex::new(StandardNormal.sample(&mut rng), 0.0))
        .collect();

    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    buf[0] = Complex::new(0.0, 0.0);
    for k in 1..len {
        // bin k and len - k share |f|
        let f = k.min(len - k) as f64;
        buf[k] /= f.sqrt();
    }
    planner.plan_fft_inverse(len).process(&mut buf);

    let mut out: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
    if rms > 0.0 {
        out.iter_mut().for_each(|v| *v /= rms);
    }
    out
}

fn mean_power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// Adds pink noise scaled so that the mixture has exactly `snr_db` SNR,
/// with powers measured over the full length of `rir`.
///
/// `f64::INFINITY` disables noise and returns the input unchanged.
pub fn add_noise(rir: &[f64], snr_db: f64, seed: u64) -> Result<Vec<f64>> {
    if snr_db == f64::INFINITY {
        return Ok(rir.to_vec());
    }
    if !snr_db.is_finite() {
        return Err(Error::Config(format!("SNR must be finite or +inf, got {snr_db}")));
    }
    if rir.is_empty() {
        return Err(Error::ZeroEnergy);
    }
    let p_signal = mean_power(rir);
    if p_signal == 0.0 {
        return Err(Error::ZeroEnergy);
    }
    let noise = pink_noise(rir.len(), seed);
    let p_noise = mean_power(&noise);
    let scale = (p_signal / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt();
    Ok(rir.iter().zip(&noise).map(|(s, n)| s + scale * n).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_rms_and_deterministic() {
        let a = pink_noise(4096, 3);
        let b = pink_noise(4096, 3);
        assert_eq!(a, b);
        assert!((mean_power(&a) - 1.0).abs() < 1e-12);
        assert_ne!(a, pink_noise(4096, 4));
        assert!(pink_noise(0, 1).is_empty());
    }

    #[test]
    fn realized_snr_matches_request() {
        let rir: Vec<f64> = (0..2000).map(|i| ((i as f64) * 0.37).sin() / (1.0 + i as f64 * 0.01)).collect();
        for snr in [20.0, 33.3, 50.0] {
            let mixed = add_noise(&rir, snr, 11).unwrap();
            let noise: Vec<f64> = mixed.iter().zip(&rir).map(|(m, s)| m - s).collect();
            let realized = 10.0 * (mean_power(&rir) / mean_power(&noise)).log10();
            assert!((realized - snr).abs() < 0.01, "{realized} vs {snr}");
        }
    }

    #[test]
    fn infinite_snr_is_identity() {
        let rir = vec![0.5, -0.25, 1.0];
        assert_eq!(add_noise(&rir, f64::INFINITY, 0).unwrap(), rir);
    }

    #[test]
    fn rejects_silent_or_bad_input() {
        assert!(matches!(add_noise(&[0.0; 8], 30.0, 0), Err(Error::ZeroEnergy)));
        assert!(add_noise(&[1.0; 8], f64::NAN, 0).is_err());
        assert!(add_noise(&[1.0; 8], f64::NEG_INFINITY, 0).is_err());
    }
}
