//! IIR filter design (Butterworth band-pass, notch) as cascaded second-order
//! sections, causal filtering, and overlapping frames.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::matrix::Matrix;
use crate::signal::SignalRecord;

/// One normalized second-order section:
/// `y[n] = b0 x[n] + b1 x[n-1] + b2 x[n-2] - a1 y[n-1] - a2 y[n-2]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    /// `H(e^{jw})` at normalized angular frequency `w` (radians/sample).
    pub fn response(&self, w: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        (self.b0 + self.b1 * z1 + self.b2 * z2) / (1.0 + self.a1 * z1 + self.a2 * z2)
    }

    /// Roots of `z^2 + a1 z + a2`.
    pub fn poles(&self) -> [Complex64; 2] {
        let disc = Complex64::new(self.a1 * self.a1 - 4.0 * self.a2, 0.0).sqrt();
        [(-self.a1 + disc) / 2.0, (-self.a1 - disc) / 2.0]
    }

    pub fn is_stable(&self) -> bool {
        self.poles().iter().all(|p| p.norm() < 1.0)
    }

    fn scale_numerator(&mut self, k: f64) {
        self.b0 *= k;
        self.b1 *= k;
        self.b2 *= k;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiquadCascade {
    sections: Vec<Biquad>,
    label: String,
}

impl BiquadCascade {
    pub fn new(sections: Vec<Biquad>, label: impl Into<String>) -> Result<Self> {
        if let Some(i) = sections.iter().position(|s| !s.is_stable()) {
            return Err(Error::Design(format!("section {i} has a pole on or outside the unit circle")));
        }
        Ok(Self {
            sections,
            label: label.into(),
        })
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn response(&self, freq_hz: f64, sample_rate_hz: f64) -> Complex64 {
        let w = 2.0 * PI * freq_hz / sample_rate_hz;
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(w))
    }

    pub fn gain_db(&self, freq_hz: f64, sample_rate_hz: f64) -> f64 {
        20.0 * self.response(freq_hz, sample_rate_hz).norm().max(1e-300).log10()
    }

    /// Causal filtering from zero initial state (transposed direct form II).
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for s in &self.sections {
            let (mut z1, mut z2) = (0.0, 0.0);
            for v in y.iter_mut() {
                let input = *v;
                let out = s.b0 * input + z1;
                z1 = s.b1 * input - s.a1 * out + z2;
                z2 = s.b2 * input - s.a2 * out;
                *v = out;
            }
        }
        y
    }

    /// `self` followed by `other`.
    pub fn then(&self, other: &BiquadCascade) -> BiquadCascade {
        let mut sections = self.sections.clone();
        sections.extend_from_slice(&other.sections);
        BiquadCascade {
            sections,
            label: format!("{} + {}", self.label, other.label),
        }
    }
}

fn check_band_edge(name: &str, f: f64, sample_rate_hz: f64) -> Result<()> {
    if sample_rate_hz.is_nan() || sample_rate_hz <= 0.0 {
        return Err(Error::Design(format!("sample rate must be positive, got {sample_rate_hz}")));
    }
    if !(f > 0.0 && f < sample_rate_hz / 2.0) {
        return Err(Error::Design(format!(
            "{name} {f} Hz must lie strictly between 0 and Nyquist ({} Hz)",
            sample_rate_hz / 2.0
        )));
    }
    Ok(())
}

/// Butterworth band-pass from an `order`-pole low-pass prototype: the
/// band-pass transform doubles the pole count, giving `order` sections. Band
/// edges are pre-warped so the -3 dB points land on `low_hz` and `high_hz`.
pub fn design_bandpass(order: usize, low_hz: f64, high_hz: f64, sample_rate_hz: f64) -> Result<BiquadCascade> {
    if order == 0 {
        return Err(Error::Design("filter order must be at least 1".into()));
    }
    check_band_edge("low cutoff", low_hz, sample_rate_hz)?;
    check_band_edge("high cutoff", high_hz, sample_rate_hz)?;
    if low_hz >= high_hz {
        return Err(Error::Design(format!("low cutoff {low_hz} Hz must be below high cutoff {high_hz} Hz")));
    }
    let fs2 = 2.0 * sample_rate_hz;
    let w_lo = fs2 * (PI * low_hz / sample_rate_hz).tan();
    let w_hi = fs2 * (PI * high_hz / sample_rate_hz).tan();
    let bw = w_hi - w_lo;
    let w0_sq = w_lo * w_hi;

    let bilinear = |s: Complex64| (fs2 + s) / (fs2 - s);
    let section_from_poles = |p1: Complex64, p2: Complex64| Biquad {
        b0: 1.0,
        b1: 0.0,
        b2: -1.0,
        a1: -(p1 + p2).re,
        a2: (p1 * p2).re,
    };

    let mut sections = Vec::with_capacity(order);
    for k in 0..order {
        let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
        let proto = Complex64::from_polar(1.0, theta);
        if proto.im < -1e-12 {
            continue; // handled with its conjugate
        }
        // s^2 - p*bw*s + w0^2 = 0
        let half = proto * bw / 2.0;
        let disc = (half * half - w0_sq).sqrt();
        let (s1, s2) = (half + disc, half - disc);
        if proto.im.abs() <= 1e-12 {
            // real prototype pole: its two band-pass poles form one section
            sections.push(section_from_poles(bilinear(s1), bilinear(s2)));
        } else {
            for s in [s1, s2] {
                let z = bilinear(s);
                sections.push(section_from_poles(z, z.conj()));
            }
        }
    }

    // unit gain at the digital center frequency, section by section
    let w_center = 2.0 * (w0_sq.sqrt() / fs2).atan();
    for s in sections.iter_mut() {
        let g = s.response(w_center).norm();
        s.scale_numerator(1.0 / g);
    }
    sections.sort_by(|a, b| a.a2.abs().partial_cmp(&b.a2.abs()).unwrap());
    BiquadCascade::new(
        sections,
        format!("butterworth band-pass order {order}, {low_hz}-{high_hz} Hz @ {sample_rate_hz} Hz"),
    )
}

/// Second-order IIR notch with zeros on the unit circle at `center_hz`;
/// the -3 dB bandwidth is `center_hz / quality`.
pub fn design_notch(center_hz: f64, quality: f64, sample_rate_hz: f64) -> Result<BiquadCascade> {
    check_band_edge("notch center", center_hz, sample_rate_hz)?;
    if !(quality > 0.0 && quality.is_finite()) {
        return Err(Error::Design(format!("notch Q must be positive, got {quality}")));
    }
    let w0 = 2.0 * PI * center_hz / sample_rate_hz;
    let alpha = w0.sin() / (2.0 * quality);
    let a0 = 1.0 + alpha;
    let section = Biquad {
        b0: 1.0 / a0,
        b1: -2.0 * w0.cos() / a0,
        b2: 1.0 / a0,
        a1: -2.0 * w0.cos() / a0,
        a2: (1.0 - alpha) / a0,
    };
    BiquadCascade::new(
        vec![section],
        format!("notch {center_hz} Hz Q {quality} @ {sample_rate_hz} Hz"),
    )
}

/// Filters each channel independently.
pub fn apply_filter(cascade: &BiquadCascade, signal: &SignalRecord, exec: Execution) -> Result<SignalRecord> {
    if signal.is_empty() {
        return Err(Error::input("cannot filter an empty signal"));
    }
    let rows = exec.map_range(signal.channels(), |c| cascade.filter(signal.channel(c)));
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::numeric("apply_filter", "filter output is not finite"));
    }
    Ok(signal.with_samples(Matrix::from_rows(&rows)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrameSpec {
    frame_length: usize,
    hop_length: usize,
}

impl FrameSpec {
    pub fn new(frame_length: usize, hop_length: usize) -> Result<Self> {
        if hop_length == 0 || hop_length > frame_length {
            return Err(Error::input(format!(
                "frame spec needs 0 < hop ({hop_length}) <= frame length ({frame_length})"
            )));
        }
        Ok(Self {
            frame_length,
            hop_length,
        })
    }

    /// 100 ms windows every 10 ms at 1000 Hz.
    pub fn eeg_default() -> Self {
        Self {
            frame_length: 100,
            hop_length: 10,
        }
    }

    pub fn frame_length(&self) -> usize {
        self.frame_length
    }

    pub fn hop_length(&self) -> usize {
        self.hop_length
    }

    /// `1 + floor((len - frame_length) / hop)`, or 0 if `len` is shorter than
    /// one frame.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.frame_length {
            0
        } else {
            1 + (len - self.frame_length) / self.hop_length
        }
    }

    pub fn frames<'a>(&self, x: &'a [f64]) -> impl Iterator<Item = &'a [f64]> + 'a {
        let (fl, hop) = (self.frame_length, self.hop_length);
        (0..self.frame_count(x.len())).map(move |i| &x[i * hop..i * hop + fl])
    }
}

/// Borrowed frames, `[channel][frame]`.
pub fn frame_signal<'a>(signal: &'a SignalRecord, spec: &FrameSpec) -> Result<Vec<Vec<&'a [f64]>>> {
    if signal.len() < spec.frame_length {
        return Err(Error::input(format!(
            "signal of {} samples is shorter than one {}-sample frame",
            signal.len(),
            spec.frame_length
        )));
    }
    Ok((0..signal.channels())
        .map(|c| spec.frames(signal.channel(c)).collect())
        .collect())
}
