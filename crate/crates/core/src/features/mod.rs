//! Frame-level features at 100 Hz: EEG statistics, MFCCs, their fusion, and
//! train-set z-scoring.

mod eeg;
mod io;
mod mfcc;

pub use eeg::{eeg_frame_features, extract_eeg_features, EegFeatureConfig, FrameAnalyzer, EEG_CHANNELS, EEG_RATE_HZ, FEATURES_PER_CHANNEL};
pub use io::{decode_fseq, encode_fseq, read_fseq, to_csv, write_fseq};
pub use mfcc::{extract_mfcc, MelFilterbank, MfccConfig};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Frame rate shared by every modality.
pub const FEATURE_RATE_HZ: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Modality {
    Mfcc13,
    Eeg155,
    Eeg30,
    Fused43,
}

impl Modality {
    pub fn dim(self) -> usize {
        match self {
            Modality::Mfcc13 => 13,
            Modality::Eeg155 => 155,
            Modality::Eeg30 => 30,
            Modality::Fused43 => 43,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Modality::Mfcc13 => 0,
            Modality::Eeg155 => 1,
            Modality::Eeg30 => 2,
            Modality::Fused43 => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Modality::Mfcc13),
            1 => Some(Modality::Eeg155),
            2 => Some(Modality::Eeg30),
            3 => Some(Modality::Fused43),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Mfcc13 => "mfcc13",
            Modality::Eeg155 => "eeg155",
            Modality::Eeg30 => "eeg30",
            Modality::Fused43 => "fused43",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mfcc13" | "mfcc" => Some(Modality::Mfcc13),
            "eeg155" => Some(Modality::Eeg155),
            "eeg30" | "eeg" => Some(Modality::Eeg30),
            "fused43" | "fused" | "mfcc+eeg" => Some(Modality::Fused43),
            _ => None,
        }
    }
}

/// Time-major `T x D` feature matrix for one utterance.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    frames: Matrix,
    rate_hz: f64,
    modality: Modality,
    utterance_id: String,
}

impl FeatureSequence {
    pub fn new(frames: Matrix, rate_hz: f64, modality: Modality, utterance_id: impl Into<String>) -> Result<Self> {
        if frames.cols() != modality.dim() {
            return Err(Error::dimension(
                format!("{} feature width", modality.name()),
                modality.dim(),
                frames.cols(),
            ));
        }
        if !frames.is_finite() {
            return Err(Error::numeric("feature sequence", "non-finite feature value"));
        }
        Ok(Self {
            frames,
            rate_hz,
            modality,
            utterance_id: utterance_id.into(),
        })
    }

    pub fn frames(&self) -> &Matrix {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.frames.cols()
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn utterance_id(&self) -> &str {
        &self.utterance_id
    }

    pub fn with_frames(&self, frames: Matrix, modality: Modality) -> Result<Self> {
        Self::new(frames, self.rate_hz, modality, self.utterance_id.clone())
    }
}

/// Frame-aligned `[MFCC13 | EEG30]`, truncated to the shorter sequence.
pub fn fuse(mfcc: &FeatureSequence, eeg_reduced: &FeatureSequence) -> Result<FeatureSequence> {
    if mfcc.modality() != Modality::Mfcc13 || eeg_reduced.modality() != Modality::Eeg30 {
        return Err(Error::Alignment(format!(
            "fusion expects mfcc13 + eeg30, got {} + {}",
            mfcc.modality().name(),
            eeg_reduced.modality().name()
        )));
    }
    if mfcc.utterance_id() != eeg_reduced.utterance_id() {
        return Err(Error::Alignment(format!(
            "utterance ids differ: {} vs {}",
            mfcc.utterance_id(),
            eeg_reduced.utterance_id()
        )));
    }
    if mfcc.rate_hz() != eeg_reduced.rate_hz() {
        return Err(Error::Alignment(format!(
            "frame rates differ: {} Hz vs {} Hz",
            mfcc.rate_hz(),
            eeg_reduced.rate_hz()
        )));
    }
    let t = mfcc.len().min(eeg_reduced.len());
    let frames = Matrix::from_fn(t, Modality::Fused43.dim(), |r, c| {
        if c < 13 {
            mfcc.frames().get(r, c)
        } else {
            eeg_reduced.frames().get(r, c - 13)
        }
    });
    FeatureSequence::new(frames, mfcc.rate_hz(), Modality::Fused43, mfcc.utterance_id())
}

const STD_FLOOR: f64 = 1e-8;

/// Per-dimension mean and standard deviation pooled over frames.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    pub fn fit<'a>(sequences: impl IntoIterator<Item = &'a FeatureSequence>) -> Result<Self> {
        let mut sum: Vec<f64> = Vec::new();
        let mut n = 0usize;
        let seqs: Vec<&FeatureSequence> = sequences.into_iter().collect();
        for s in &seqs {
            if sum.is_empty() {
                sum = vec![0.0; s.dim()];
            } else if sum.len() != s.dim() {
                return Err(Error::dimension("feature stats", sum.len(), s.dim()));
            }
            for r in 0..s.len() {
                for (acc, v) in sum.iter_mut().zip(s.frames().row(r)) {
                    *acc += v;
                }
            }
            n += s.len();
        }
        if n == 0 {
            return Err(Error::input("no frames to compute feature statistics from"));
        }
        let mean: Vec<f64> = sum.iter().map(|v| v / n as f64).collect();
        let mut var = vec![0.0; mean.len()];
        for s in &seqs {
            for r in 0..s.len() {
                for ((acc, v), m) in var.iter_mut().zip(s.frames().row(r)).zip(&mean) {
                    *acc += (v - m) * (v - m);
                }
            }
        }
        let std = var.iter().map(|v| (v / n as f64).sqrt()).collect();
        Ok(Self { mean, std })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `(x - mean) / max(std, 1e-8)` per dimension.
    pub fn normalize_row(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = (*v - m) / s.max(STD_FLOOR);
        }
    }
}

pub fn normalize_features(stats: &FeatureStats, seq: &FeatureSequence) -> Result<FeatureSequence> {
    if stats.dim() != seq.dim() {
        return Err(Error::dimension("normalize_features", stats.dim(), seq.dim()));
    }
    let mut frames = seq.frames().clone();
    for r in 0..frames.rows() {
        stats.normalize_row(frames.row_mut(r));
    }
    seq.with_frames(frames, seq.modality())
}
