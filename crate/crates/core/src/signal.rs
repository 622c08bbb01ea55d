use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// A multichannel time series: `samples` is channels x time.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalRecord {
    sample_rate: f64,
    samples: Matrix,
    channel_labels: Vec<String>,
}

impl SignalRecord {
    pub fn new(sample_rate: f64, samples: Matrix, channel_labels: Vec<String>) -> Result<Self> {
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::input(format!("sample rate must be positive, got {sample_rate}")));
        }
        if channel_labels.len() != samples.rows() {
            return Err(Error::input(format!(
                "{} channel labels for {} channels",
                channel_labels.len(),
                samples.rows()
            )));
        }
        Ok(Self {
            sample_rate,
            samples,
            channel_labels,
        })
    }

    /// Labels channels `Ch01`, `Ch02`, ...
    pub fn with_default_labels(sample_rate: f64, samples: Matrix) -> Result<Self> {
        let labels = default_labels(samples.rows());
        Self::new(sample_rate, samples, labels)
    }

    pub fn mono(sample_rate: f64, samples: Vec<f64>) -> Result<Self> {
        let n = samples.len();
        Self::new(sample_rate, Matrix::new(1, n, samples)?, vec!["mono".into()])
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn channels(&self) -> usize {
        self.samples.rows()
    }

    pub fn len(&self) -> usize {
        self.samples.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.cols() == 0 || self.samples.rows() == 0
    }

    pub fn samples(&self) -> &Matrix {
        &self.samples
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        self.samples.row(c)
    }

    pub fn channel_labels(&self) -> &[String] {
        &self.channel_labels
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate
    }

    pub(crate) fn with_samples(&self, samples: Matrix) -> SignalRecord {
        debug_assert_eq!(samples.rows(), self.channels());
        SignalRecord {
            sample_rate: self.sample_rate,
            samples,
            channel_labels: self.channel_labels.clone(),
        }
    }
}

pub fn default_labels(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("Ch{i:02}")).collect()
}
