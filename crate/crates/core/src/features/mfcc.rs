//! 13-coefficient MFCCs at 100 Hz from 16 kHz mono audio.
//!
//! pre-emphasis -> Hann window -> zero-padded FFT power spectrum -> triangular
//! mel filterbank (HTK mel scale) -> floored natural log -> orthonormal DCT-II.

use std::f64::consts::PI;

use rustfft::{num_complex::Complex64, FftPlanner};

use super::{FeatureSequence, Modality, FEATURE_RATE_HZ};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::signal::SignalRecord;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MfccConfig {
    pub sample_rate_hz: f64,
    pub pre_emphasis: f64,
    pub frame_length: usize,
    pub hop_length: usize,
    pub n_fft: usize,
    pub n_mels: usize,
    pub n_ceps: usize,
    pub log_floor: f64,
    /// Samples skipped before the first window. The default (75 ms) makes
    /// frame `t` end where the 100 ms EEG window `t` ends, so equal-length
    /// recordings give equal frame counts.
    pub start_offset: usize,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 16_000.0,
            pre_emphasis: 0.97,
            frame_length: 400,
            hop_length: 160,
            n_fft: 512,
            n_mels: 26,
            n_ceps: 13,
            log_floor: 1e-10,
            start_offset: 1200,
        }
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

#[derive(Clone, Debug)]
pub struct MelFilterbank {
    n_fft: usize,
    sample_rate_hz: f64,
    /// `n_filters x (n_fft / 2 + 1)`
    weights: Matrix,
}

impl MelFilterbank {
    /// Triangles with edges equally spaced on the mel scale from 0 Hz to
    /// Nyquist, evaluated at the FFT bin centre frequencies.
    pub fn new(n_filters: usize, n_fft: usize, sample_rate_hz: f64) -> Result<Self> {
        let n_bins = n_fft / 2 + 1;
        let mel_max = hz_to_mel(sample_rate_hz / 2.0);
        let edges: Vec<f64> = (0..n_filters + 2)
            .map(|i| mel_to_hz(mel_max * i as f64 / (n_filters + 1) as f64))
            .collect();
        let weights = Matrix::from_fn(n_filters, n_bins, |m, k| {
            let f = k as f64 * sample_rate_hz / n_fft as f64;
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            if f <= lo || f >= hi {
                0.0
            } else if f <= mid {
                (f - lo) / (mid - lo)
            } else {
                (hi - f) / (hi - mid)
            }
        });
        for m in 0..n_filters {
            if weights.row(m).iter().sum::<f64>() <= 0.0 {
                return Err(Error::Config(format!(
                    "mel filter {m} covers no FFT bin; use fewer filters or a larger FFT"
                )));
            }
        }
        Ok(Self {
            n_fft,
            sample_rate_hz,
            weights,
        })
    }

    pub fn n_filters(&self) -> usize {
        self.weights.rows()
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        (0..self.n_filters())
            .map(|m| crate::matrix::dot(self.weights.row(m), power))
            .collect()
    }
}

/// Orthonormal DCT-II basis, `n_out x n_in`.
fn dct_matrix(n_out: usize, n_in: usize) -> Matrix {
    Matrix::from_fn(n_out, n_in, |k, n| {
        let s = if k == 0 { (1.0 / n_in as f64).sqrt() } else { (2.0 / n_in as f64).sqrt() };
        s * (PI * k as f64 * (2 * n + 1) as f64 / (2 * n_in) as f64).cos()
    })
}

pub fn extract_mfcc(audio: &SignalRecord, config: &MfccConfig, utterance_id: &str) -> Result<FeatureSequence> {
    if audio.sample_rate() != config.sample_rate_hz {
        return Err(Error::Rate {
            expected: config.sample_rate_hz,
            actual: audio.sample_rate(),
        });
    }
    if audio.channels() != 1 {
        return Err(Error::input(format!("MFCC extraction needs mono audio, got {} channels", audio.channels())));
    }
    if config.n_ceps != Modality::Mfcc13.dim() {
        return Err(Error::dimension("MFCC coefficients", Modality::Mfcc13.dim(), config.n_ceps));
    }
    if config.frame_length > config.n_fft || config.hop_length == 0 {
        return Err(Error::Config("MFCC frame must fit in the FFT and hop must be positive".into()));
    }
    let rate = config.sample_rate_hz / config.hop_length as f64;
    if rate != FEATURE_RATE_HZ {
        return Err(Error::Config(format!("MFCC hop gives {rate} Hz frames, need {FEATURE_RATE_HZ} Hz")));
    }
    let x = audio.channel(0);
    if x.len() < config.start_offset + config.frame_length {
        return Err(Error::input(format!(
            "audio of {} samples is shorter than one analysis window",
            x.len()
        )));
    }
    let mut emphasized = Vec::with_capacity(x.len());
    emphasized.push(x[0]);
    for i in 1..x.len() {
        emphasized.push(x[i] - config.pre_emphasis * x[i - 1]);
    }
    let body = &emphasized[config.start_offset..];
    let n_frames = 1 + (body.len() - config.frame_length) / config.hop_length;

    let window: Vec<f64> = (0..config.frame_length)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / config.frame_length as f64).cos())
        .collect();
    let bank = MelFilterbank::new(config.n_mels, config.n_fft, config.sample_rate_hz)?;
    let dct = dct_matrix(config.n_ceps, config.n_mels);
    let fft = FftPlanner::new().plan_fft_forward(config.n_fft);
    let mut buf = vec![Complex64::new(0.0, 0.0); config.n_fft];
    let mut power = vec![0.0; config.n_fft / 2 + 1];
    let mut out = Matrix::zeros(n_frames, config.n_ceps);
    for t in 0..n_frames {
        let frame = &body[t * config.hop_length..t * config.hop_length + config.frame_length];
        for (i, b) in buf.iter_mut().enumerate() {
            *b = if i < frame.len() {
                Complex64::new(frame[i] * window[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
        fft.process(&mut buf);
        for (p, c) in power.iter_mut().zip(&buf) {
            *p = c.norm_sqr() / config.n_fft as f64;
        }
        let log_mel: Vec<f64> = bank.apply(&power).into_iter().map(|e| e.max(config.log_floor).ln()).collect();
        for k in 0..config.n_ceps {
            out.set(t, k, crate::matrix::dot(dct.row(k), &log_mel));
        }
    }
    FeatureSequence::new(out, rate, Modality::Mfcc13, utterance_id)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, n: usize) -> SignalRecord {
        let x = (0..n).map(|i| 0.5 * (2.0 * PI * freq * i as f64 / 16_000.0).sin()).collect();
        SignalRecord::mono(16_000.0, x).unwrap()
    }

    #[test]
    fn thirteen_coefficients_at_100hz() {
        let f = extract_mfcc(&tone(440.0, 16_000), &MfccConfig::default(), "u").unwrap();
        assert_eq!(f.dim(), 13);
        assert_eq!(f.rate_hz(), 100.0);
        // aligned with the 91 EEG frames of a 1 s recording
        assert_eq!(f.len(), 91);
        let two = extract_mfcc(&tone(440.0, 32_000), &MfccConfig::default(), "u").unwrap();
        assert_eq!(two.len(), 191);
    }

    #[test]
    fn silence_concentrates_in_c0() {
        let silent = SignalRecord::mono(16_000.0, vec![0.0; 8000]).unwrap();
        let cfg = MfccConfig::default();
        let f = extract_mfcc(&silent, &cfg, "s").unwrap();
        let c0 = (cfg.n_mels as f64).sqrt() * cfg.log_floor.ln();
        for t in 0..f.len() {
            let row = f.frames().row(t);
            assert!((row[0] - c0).abs() < 1e-9);
            assert!(row[1..].iter().all(|v| v.abs() < 1e-9));
            assert_eq!(row, f.frames().row(0));
        }
    }

    #[test]
    fn tones_differ() {
        let cfg = MfccConfig::default();
        let a = extract_mfcc(&tone(1000.0, 8000), &cfg, "a").unwrap();
        let b = extract_mfcc(&tone(4000.0, 8000), &cfg, "b").unwrap();
        let d: f64 = a.frames().row(5).iter().zip(b.frames().row(5)).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        assert!(d > 1.0, "distance {d}");
    }

    #[test]
    fn wrong_rate_rejected() {
        let a = SignalRecord::mono(8000.0, vec![0.0; 8000]).unwrap();
        assert!(matches!(extract_mfcc(&a, &MfccConfig::default(), "x"), Err(Error::Rate { .. })));
    }

    #[test]
    fn filterbank_covers_spectrum() {
        let bank = MelFilterbank::new(26, 512, 16_000.0).unwrap();
        assert_eq!(bank.weights().cols(), 257);
        for m in 0..26 {
            assert!(bank.weights().row(m).iter().sum::<f64>() > 0.0);
        }
        // every bin strictly inside (0, Nyquist) is weighted by some filter
        for k in 1..256 {
            assert!((0..26).any(|m| bank.weights().get(m, k) > 0.0), "bin {k}");
        }
    }
}
