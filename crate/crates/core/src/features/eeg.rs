//! Five per-channel statistics per EEG frame: root-mean-square,
//! zero-crossing rate, moving-window average, excess kurtosis, and normalized
//! power spectral entropy.

use std::sync::Arc;

use rustfft::{num_complex::Complex64, Fft, FftPlanner};

use super::{FeatureSequence, Modality, FEATURE_RATE_HZ};
use crate::dsp::FrameSpec;
use crate::error::{Error, Result};
use crate::ica::excess_kurtosis;
use crate::matrix::Matrix;
use crate::signal::SignalRecord;

pub const EEG_CHANNELS: usize = 31;
pub const FEATURES_PER_CHANNEL: usize = 5;
pub const EEG_RATE_HZ: f64 = 1000.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EegFeatureConfig {
    pub frame: FrameSpec,
    /// Window of the moving average, in samples.
    pub mwa_window: usize,
}

impl Default for EegFeatureConfig {
    fn default() -> Self {
        Self {
            frame: FrameSpec::eeg_default(),
            mwa_window: 10,
        }
    }
}

/// Reusable FFT plan and scratch for one frame length.
pub struct FrameAnalyzer {
    len: usize,
    mwa_window: usize,
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
}

impl FrameAnalyzer {
    pub fn new(frame_length: usize, mwa_window: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(frame_length);
        Self {
            len: frame_length,
            mwa_window: mwa_window.max(1),
            fft,
            buf: vec![Complex64::new(0.0, 0.0); frame_length],
        }
    }

    pub fn features(&mut self, frame: &[f64]) -> [f64; FEATURES_PER_CHANNEL] {
        assert_eq!(frame.len(), self.len, "frame length differs from analyzer plan");
        let n = frame.len() as f64;
        let rms = (frame.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
        [
            rms,
            zero_crossing_rate(frame),
            moving_window_average(frame, self.mwa_window),
            excess_kurtosis(frame),
            self.spectral_entropy(frame),
        ]
    }

    fn spectral_entropy(&mut self, frame: &[f64]) -> f64 {
        let m = crate::matrix::mean(frame);
        let scale = frame.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let var = frame.iter().map(|v| (v - m).powi(2)).sum::<f64>() / frame.len() as f64;
        if var <= (f64::EPSILON * scale).powi(2) || var == 0.0 {
            return 0.0;
        }
        for (b, &v) in self.buf.iter_mut().zip(frame) {
            *b = Complex64::new(v - m, 0.0);
        }
        self.fft.process(&mut self.buf);
        let bins = &self.buf[1..=self.len / 2];
        if bins.len() < 2 {
            return 0.0;
        }
        let total: f64 = bins.iter().map(|c| c.norm_sqr()).sum();
        if total <= 0.0 {
            return 0.0;
        }
        let h: f64 = bins
            .iter()
            .map(|c| c.norm_sqr() / total)
            .filter(|&p| p > 0.0)
            .map(|p| -p * p.ln())
            .sum();
        h / (bins.len() as f64).ln()
    }
}

/// Sign changes between successive nonzero samples, per sample.
fn zero_crossing_rate(frame: &[f64]) -> f64 {
    let mut last = 0.0f64;
    let mut crossings = 0usize;
    for &v in frame {
        if v != 0.0 {
            if last != 0.0 && (v > 0.0) != (last > 0.0) {
                crossings += 1;
            }
            last = v;
        }
    }
    crossings as f64 / frame.len() as f64
}

/// Mean of the sliding `window`-sample means.
fn moving_window_average(frame: &[f64], window: usize) -> f64 {
    let w = window.min(frame.len());
    let n_windows = frame.len() - w + 1;
    let mut acc = 0.0;
    let mut run: f64 = frame[..w].iter().sum();
    acc += run;
    for i in 1..n_windows {
        run += frame[i + w - 1] - frame[i - 1];
        acc += run;
    }
    acc / (n_windows * w) as f64
}

/// Five features of a single frame (length at least 2).
pub fn eeg_frame_features(frame: &[f64]) -> Result<[f64; FEATURES_PER_CHANNEL]> {
    if frame.len() < 2 {
        return Err(Error::input(format!("frame of {} samples is too short", frame.len())));
    }
    Ok(FrameAnalyzer::new(frame.len(), 10).features(frame))
}

/// 155-dimensional frames: for each channel in order, its five features.
pub fn extract_eeg_features(
    clean_eeg: &SignalRecord,
    config: &EegFeatureConfig,
    utterance_id: &str,
) -> Result<FeatureSequence> {
    if clean_eeg.channels() != EEG_CHANNELS {
        return Err(Error::dimension("EEG channel count", EEG_CHANNELS, clean_eeg.channels()));
    }
    if clean_eeg.sample_rate() != EEG_RATE_HZ {
        return Err(Error::Rate {
            expected: EEG_RATE_HZ,
            actual: clean_eeg.sample_rate(),
        });
    }
    let frames = crate::dsp::frame_signal(clean_eeg, &config.frame)?;
    let t = frames[0].len();
    let mut analyzer = FrameAnalyzer::new(config.frame.frame_length(), config.mwa_window);
    let mut out = Matrix::zeros(t, EEG_CHANNELS * FEATURES_PER_CHANNEL);
    for (c, channel_frames) in frames.iter().enumerate() {
        for (i, frame) in channel_frames.iter().enumerate() {
            let f = analyzer.features(frame);
            out.row_mut(i)[c * FEATURES_PER_CHANNEL..(c + 1) * FEATURES_PER_CHANNEL].copy_from_slice(&f);
        }
    }
    let rate = clean_eeg.sample_rate() / config.frame.hop_length() as f64;
    if rate != FEATURE_RATE_HZ {
        return Err(Error::Config(format!(
            "EEG hop of {} samples gives {rate} Hz frames, need {FEATURE_RATE_HZ} Hz",
            config.frame.hop_length()
        )));
    }
    FeatureSequence::new(out, rate, Modality::Eeg155, utterance_id)
}
