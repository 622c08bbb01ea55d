use std::fmt::Write as _;

use crate::dataset::{LabeledDataset, Partition};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::matrix::Matrix;
use crate::nn::{argmax, predict, Params};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalReport {
    pub n_speakers: usize,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<usize>>,
}

impl EvalReport {
    pub fn from_predictions(n_speakers: usize, truth: &[usize], predicted: &[usize]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::input("prediction and label counts differ"));
        }
        if truth.is_empty() {
            return Err(Error::input("test set is empty"));
        }
        let mut confusion = vec![vec![0; n_speakers]; n_speakers];
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= n_speakers || p >= n_speakers {
                return Err(Error::input(format!("class index out of range for {n_speakers} speakers")));
            }
            confusion[t][p] += 1;
        }
        Ok(Self { n_speakers, confusion })
    }

    pub fn correct(&self) -> usize {
        (0..self.n_speakers).map(|i| self.confusion[i][i]).sum()
    }

    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.correct() as f64 / self.total() as f64
    }

    pub fn percent(&self) -> String {
        format_percent(self.correct(), self.total())
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("test accuracy: {}% ({}/{})\nconfusion (rows true, columns predicted):\n", self.percent(), self.correct(), self.total());
        for row in &self.confusion {
            let cells: Vec<String> = row.iter().map(|c| format!("{c:>5}")).collect();
            let _ = writeln!(out, "{}", cells.join(""));
        }
        out
    }
}

/// `100 * correct / total` with two decimals.
pub fn format_percent(correct: usize, total: usize) -> String {
    format!("{:.2}", 100.0 * correct as f64 / total as f64)
}

/// Sequence-level argmax predictions on the test partition.
pub fn evaluate(params: &Params<f32>, data: &LabeledDataset, exec: Execution) -> Result<EvalReport> {
    let items = super::train::single_precision(data, Partition::Test);
    if items.is_empty() {
        return Err(Error::input("test partition is empty"));
    }
    if params.config.n_speakers != data.n_speakers() {
        return Err(Error::dimension("dense units", data.n_speakers(), params.config.n_speakers));
    }
    let seqs: Vec<&Matrix<f32>> = items.iter().map(|i| &i.0).collect();
    let predicted: Vec<usize> = predict(params, &seqs, exec)?.iter().map(|p| argmax(p)).collect();
    let truth: Vec<usize> = items.iter().map(|i| i.1).collect();
    EvalReport::from_predictions(data.n_speakers(), &truth, &predicted)
}
