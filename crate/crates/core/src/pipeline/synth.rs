//! Paired synthetic audio/EEG corpus with a tunable speaker signature.
//!
//! Each speaker has an offset from a shared base parameter set scaled by
//! `separability`; at 0 every speaker draws from the same distribution.
//! Audio: glottal pulse train plus breath noise through formant resonators.
//! EEG: band-limited sources mixed onto 31 channels, plus 60 Hz mains,
//! pink noise and blink transients.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::features::{EEG_CHANNELS, EEG_RATE_HZ};
use crate::matrix::Matrix;
use crate::rng::Rng;
use crate::signal::SignalRecord;

pub const AUDIO_RATE_HZ: f64 = 16_000.0;
const TARGET_RMS: f64 = 0.1;
const N_SOURCES: usize = 6;
const BASE_FORMANTS: [f64; 3] = [600.0, 1400.0, 2600.0];
const FORMANT_SPREAD: [f64; 3] = [120.0, 250.0, 300.0];
const FORMANT_BANDWIDTHS: [f64; 3] = [90.0, 110.0, 150.0];
const BASE_SOURCE_HZ: [f64; N_SOURCES] = [6.0, 10.0, 14.0, 18.0, 22.0, 26.0];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthSpec {
    pub n_speakers: usize,
    pub utterances_per_speaker: usize,
    pub duration_s: f64,
    pub separability: f64,
    /// Audio noise power relative to the clean signal, in dB.
    pub noise_db: f64,
    /// Expected blinks per second in the EEG.
    pub blink_rate_hz: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_speakers: 4,
            utterances_per_speaker: 50,
            duration_s: 2.0,
            separability: 1.0,
            noise_db: -30.0,
            blink_rate_hz: 0.3,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_speakers < 2 {
            return Err(Error::Config(format!("need at least 2 speakers, got {}", self.n_speakers)));
        }
        if self.utterances_per_speaker == 0 {
            return Err(Error::Config("utterances_per_speaker must be positive".into()));
        }
        // at least one 100 ms EEG window and one MFCC window
        if !self.duration_s.is_finite() || self.duration_s < 0.1 {
            return Err(Error::Config(format!("duration {} s is too short", self.duration_s)));
        }
        if !self.separability.is_finite() || self.separability < 0.0 {
            return Err(Error::Config(format!("separability must be >= 0, got {}", self.separability)));
        }
        if !self.noise_db.is_finite() {
            return Err(Error::Config("noise_db must be finite".into()));
        }
        if self.blink_rate_hz.is_nan() || self.blink_rate_hz < 0.0 {
            return Err(Error::Config("blink rate must be >= 0".into()));
        }
        Ok(())
    }

    pub fn audio_samples(&self) -> usize {
        (self.duration_s * AUDIO_RATE_HZ).round() as usize
    }

    pub fn eeg_samples(&self) -> usize {
        (self.duration_s * EEG_RATE_HZ).round() as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawUtterance {
    pub utterance_id: String,
    pub speaker_label: String,
    pub audio: SignalRecord,
    pub eeg: SignalRecord,
}

struct Speaker {
    formants: [f64; 3],
    f0: f64,
    source_hz: [f64; N_SOURCES],
    source_gain: [f64; N_SOURCES],
    mixing: Matrix,
}

fn speaker(root: &Rng, s: usize, sep: f64) -> Speaker {
    let mut r = root.derive(&format!("speaker/{s}"));
    let mut formants = BASE_FORMANTS;
    for (f, spread) in formants.iter_mut().zip(FORMANT_SPREAD) {
        *f += sep * spread * r.normal();
    }
    let f0 = 140.0 + sep * 25.0 * r.normal();
    let mut source_hz = BASE_SOURCE_HZ;
    for f in &mut source_hz {
        *f = (*f + sep * 2.0 * r.normal()).clamp(5.0, 30.0);
    }
    let mut source_gain = [1.0; N_SOURCES];
    for g in &mut source_gain {
        *g = (sep * 0.4 * r.normal()).exp();
    }
    let mut base = root.derive("eeg/mixing");
    let mixing = Matrix::from_fn(EEG_CHANNELS, N_SOURCES, |_, _| base.normal() + sep * 0.5 * r.normal());
    Speaker {
        formants: formants.map(|f| f.clamp(200.0, 7000.0)),
        f0: f0.clamp(60.0, 400.0),
        source_hz,
        source_gain,
        mixing,
    }
}

/// Two-pole resonator at `freq` with 3 dB bandwidth `bw`.
fn resonate(x: &[f64], freq: f64, bw: f64, fs: f64) -> Vec<f64> {
    let r = (-PI * bw / fs).exp();
    let a1 = 2.0 * r * (2.0 * PI * freq / fs).cos();
    let a2 = -r * r;
    let mut y = vec![0.0; x.len()];
    let (mut y1, mut y2) = (0.0, 0.0);
    for (o, &v) in y.iter_mut().zip(x) {
        let n = (1.0 - r) * v + a1 * y1 + a2 * y2;
        y2 = y1;
        y1 = n;
        *o = n;
    }
    y
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt()
}

fn scale_to_rms(x: &mut [f64], target: f64) {
    let r = rms(x);
    if r > 0.0 {
        for v in x {
            *v *= target / r;
        }
    }
}

fn synth_audio(sp: &Speaker, n: usize, noise_db: f64, r: &mut Rng) -> Vec<f64> {
    let f0 = sp.f0 * (1.0 + 0.04 * r.normal());
    let vibrato_hz = r.uniform_range(4.0, 6.0);
    let mut excitation = vec![0.0; n];
    let mut phase = r.uniform();
    for (i, e) in excitation.iter_mut().enumerate() {
        let f = f0 * (1.0 + 0.02 * (2.0 * PI * vibrato_hz * i as f64 / AUDIO_RATE_HZ).sin());
        phase += f / AUDIO_RATE_HZ;
        if phase >= 1.0 {
            phase -= 1.0;
            *e += 1.0;
        }
        *e += 0.05 * r.normal();
    }
    let mut y = excitation;
    for k in 0..3 {
        let f = sp.formants[k] * (1.0 + 0.03 * r.normal());
        y = resonate(&y, f, FORMANT_BANDWIDTHS[k], AUDIO_RATE_HZ);
    }
    let rate = r.uniform_range(3.0, 5.0);
    let ph = r.uniform_range(0.0, 2.0 * PI);
    for (i, v) in y.iter_mut().enumerate() {
        *v *= 0.6 + 0.4 * (2.0 * PI * rate * i as f64 / AUDIO_RATE_HZ + ph).sin();
    }
    scale_to_rms(&mut y, TARGET_RMS);
    let noise_rms = TARGET_RMS * 10f64.powf(noise_db / 20.0);
    for v in &mut y {
        *v += noise_rms * r.normal();
    }
    scale_to_rms(&mut y, TARGET_RMS);
    y
}

fn pink_noise(n: usize, r: &mut Rng) -> Vec<f64> {
    let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let w = r.normal();
        b0 = 0.99765 * b0 + w * 0.099_046_0;
        b1 = 0.96300 * b1 + w * 0.296_516_4;
        b2 = 0.57000 * b2 + w * 1.052_691_3;
        out.push(b0 + b1 + b2 + w * 0.1848);
    }
    out
}

fn synth_eeg(sp: &Speaker, n: usize, blink_rate: f64, r: &mut Rng) -> Matrix {
    let fs = EEG_RATE_HZ;
    let warmup = 500;
    let mut sources = Matrix::zeros(N_SOURCES, n);
    for k in 0..N_SOURCES {
        let w: Vec<f64> = (0..n + warmup).map(|_| r.normal()).collect();
        let mut s = resonate(&w, sp.source_hz[k], 4.0, fs)[warmup..].to_vec();
        scale_to_rms(&mut s, sp.source_gain[k] * (1.0 + 0.1 * r.normal()).abs());
        sources.row_mut(k).copy_from_slice(&s);
    }
    let mut x = sp.mixing.matmul(&sources).unwrap();
    let blinks: Vec<(f64, f64)> = {
        let expected = blink_rate * n as f64 / fs;
        let count = if expected > 0.0 {
            // Poisson draw by inversion
            let (mut k, mut p, l) = (0usize, 1.0, (-expected).exp());
            loop {
                p *= r.uniform();
                if p <= l {
                    break k;
                }
                k += 1;
            }
        } else {
            0
        };
        (0..count).map(|_| (r.uniform() * n as f64, r.uniform_range(6.0, 10.0))).collect()
    };
    for c in 0..EEG_CHANNELS {
        let mains = r.uniform_range(0.5, 1.5);
        let phase = r.uniform_range(0.0, 2.0 * PI);
        let mut pink = pink_noise(n, r);
        scale_to_rms(&mut pink, 0.3);
        // blinks are strongest on the first (frontal) channels
        let frontal = (-(c as f64) / 3.0).exp();
        let row = x.row_mut(c);
        for (i, v) in row.iter_mut().enumerate() {
            *v += mains * (2.0 * PI * 60.0 * i as f64 / fs + phase).sin() + pink[i];
            for &(at, amp) in &blinks {
                let d = (i as f64 - at) / 50.0;
                *v += frontal * amp * (-0.5 * d * d).exp();
            }
        }
    }
    x
}

/// Generates `n_speakers * utterances_per_speaker` utterances ordered by
/// speaker then utterance index.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<Vec<RawUtterance>> {
    spec.validate()?;
    let root = Rng::new(spec.seed);
    let mut out = Vec::with_capacity(spec.n_speakers * spec.utterances_per_speaker);
    for s in 0..spec.n_speakers {
        let sp = speaker(&root, s, spec.separability);
        for u in 0..spec.utterances_per_speaker {
            let id = format!("spk{s:02}_utt{u:03}");
            let mut r = root.derive(&format!("utterance/{id}"));
            let audio = synth_audio(&sp, spec.audio_samples(), spec.noise_db, &mut r);
            let eeg = synth_eeg(&sp, spec.eeg_samples(), spec.blink_rate_hz, &mut r);
            out.push(RawUtterance {
                utterance_id: id,
                speaker_label: format!("spk{s:02}"),
                audio: SignalRecord::mono(AUDIO_RATE_HZ, audio)?,
                eeg: SignalRecord::with_default_labels(EEG_RATE_HZ, eeg)?,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthSpec {
        SynthSpec {
            utterances_per_speaker: 2,
            duration_s: 1.0,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn sizes_follow_spec() {
        let spec = SynthSpec {
            utterances_per_speaker: 1,
            ..SynthSpec::default()
        };
        let c = generate_synthetic(&spec).unwrap();
        assert_eq!(c.len(), 4);
        assert_eq!(c[0].audio.len(), 32_000);
        assert_eq!(c[0].eeg.channels(), 31);
        assert_eq!(c[0].eeg.len(), 2000);
        assert!(c.iter().all(|u| u.eeg.samples().is_finite() && u.audio.samples().is_finite()));
    }

    #[test]
    fn same_seed_same_corpus() {
        assert_eq!(generate_synthetic(&small()).unwrap(), generate_synthetic(&small()).unwrap());
        let other = SynthSpec { seed: 1, ..small() };
        assert_ne!(generate_synthetic(&small()).unwrap(), generate_synthetic(&other).unwrap());
    }

    #[test]
    fn zero_separability_makes_speakers_identical() {
        let root = Rng::new(3);
        let a = speaker(&root, 0, 0.0);
        let b = speaker(&root, 1, 0.0);
        assert_eq!(a.formants, b.formants);
        assert_eq!(a.source_hz, b.source_hz);
        assert_eq!(a.mixing, b.mixing);
        let c = speaker(&root, 1, 1.0);
        assert_ne!(a.formants, c.formants);
    }

    #[test]
    fn audio_rms_normalized() {
        let c = generate_synthetic(&small()).unwrap();
        let r = rms(c[0].audio.channel(0));
        assert!((r - TARGET_RMS).abs() < 1e-9);
    }

    #[test]
    fn mains_visible_in_raw_eeg() {
        let c = generate_synthetic(&small()).unwrap();
        let x = c[0].eeg.channel(10);
        let power_at = |f: f64| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, v) in x.iter().enumerate() {
                let w = 2.0 * PI * f * i as f64 / EEG_RATE_HZ;
                re += v * w.cos();
                im += v * w.sin();
            }
            re * re + im * im
        };
        assert!(power_at(60.0) > 20.0 * power_at(45.0));
    }

    #[test]
    fn invalid_spec_rejected() {
        assert!(generate_synthetic(&SynthSpec { n_speakers: 1, ..small() }).is_err());
        assert!(generate_synthetic(&SynthSpec { separability: -1.0, ..small() }).is_err());
        assert!(generate_synthetic(&SynthSpec { duration_s: 0.01, ..small() }).is_err());
    }
}
