//! Artifact removal by independent component analysis.
//!
//! The EEG is centered and PCA-whitened, unmixed with symmetric FastICA
//! (log-cosh contrast), each component is scored for artifact signatures, and
//! the signal is rebuilt with the flagged components zeroed.

use std::fmt::Write as _;

use rustfft::{num_complex::Complex64, FftPlanner};

use crate::error::{Error, Result};
use crate::matrix::{correlation, gemm, symmetric_eigen, Matrix};
use crate::rng::Rng;
use crate::signal::SignalRecord;

/// Relative eigenvalue below which the channel covariance counts as singular.
const RANK_TOL: f64 = 1e-10;

/// Centering and whitening transform plus the whitened data.
#[derive(Clone, Debug)]
pub struct Whitened {
    pub mean: Vec<f64>,
    /// `n_components x channels`
    pub whitening: Matrix,
    /// `channels x n_components`, the inverse map
    pub dewhitening: Matrix,
    /// `n_components x time`
    pub data: Matrix,
}

#[derive(Clone, Debug)]
pub struct IcaModel {
    pub mean: Vec<f64>,
    pub whitening: Matrix,
    pub dewhitening: Matrix,
    /// Orthonormal rows, in whitened space.
    pub unmixing: Matrix,
    pub n_components: usize,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FastIcaOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for FastIcaOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-5,
        }
    }
}

fn channel_means(x: &Matrix) -> Vec<f64> {
    (0..x.rows()).map(|r| crate::matrix::mean(x.row(r))).collect()
}

fn most_correlated_pair(x: &Matrix) -> (usize, usize, f64) {
    let mut best = (0, 1.min(x.rows().saturating_sub(1)), 0.0f64);
    for i in 0..x.rows() {
        for j in i + 1..x.rows() {
            let r = correlation(x.row(i), x.row(j)).abs();
            if r > best.2 {
                best = (i, j, r);
            }
        }
    }
    best
}

/// Whitens `n_components` directions (all channels when `None`).
pub fn whiten_components(eeg: &SignalRecord, n_components: Option<usize>) -> Result<Whitened> {
    let c = eeg.channels();
    let t = eeg.len();
    if c < 2 {
        return Err(Error::input(format!("whitening needs at least 2 channels, got {c}")));
    }
    if t <= c {
        return Err(Error::input(format!("whitening needs more samples ({t}) than channels ({c})")));
    }
    let n = n_components.unwrap_or(c);
    if n == 0 || n > c {
        return Err(Error::input(format!("{n} components requested from {c} channels")));
    }
    let x = eeg.samples();
    let mean = channel_means(x);
    let mut centered = x.clone();
    for r in 0..c {
        let m = mean[r];
        centered.row_mut(r).iter_mut().for_each(|v| *v -= m);
    }
    let mut cov = Matrix::zeros(c, c);
    gemm(1.0 / t as f64, centered.view(), centered.view().t(), 0.0, cov.data_mut(), c);
    let (vals, vecs) = symmetric_eigen(&cov)?;
    let top = vals[0].max(0.0);
    if top <= 0.0 || vals[c - 1] <= RANK_TOL * top {
        // a constant channel has no correlation to report; pair it with a neighbour
        if let Some(z) = (0..c).find(|&r| centered.row(r).iter().all(|&v| v == 0.0)) {
            let other = if z + 1 < c { z + 1 } else { z - 1 };
            return Err(Error::Degenerate {
                channels: (z.min(other), z.max(other)),
                corr: 0.0,
            });
        }
        let (i, j, r) = most_correlated_pair(&centered);
        return Err(Error::Degenerate { channels: (i, j), corr: r });
    }
    let whitening = Matrix::from_fn(n, c, |k, ch| vecs.get(ch, k) / vals[k].sqrt());
    let dewhitening = Matrix::from_fn(c, n, |ch, k| vecs.get(ch, k) * vals[k].sqrt());
    let data = whitening.matmul(&centered)?;
    Ok(Whitened {
        mean,
        whitening,
        dewhitening,
        data,
    })
}

pub fn whiten(eeg: &SignalRecord) -> Result<Whitened> {
    whiten_components(eeg, None)
}

/// `(W W^T)^{-1/2} W`
fn symmetric_decorrelation(w: &Matrix) -> Result<Matrix> {
    let n = w.rows();
    let mut wwt = Matrix::zeros(n, n);
    gemm(1.0, w.view(), w.view().t(), 0.0, wwt.data_mut(), n);
    let (vals, vecs) = symmetric_eigen(&wwt)?;
    if vals[n - 1] <= 0.0 {
        return Err(Error::numeric("fastica", "unmixing matrix became singular"));
    }
    let inv_sqrt = Matrix::from_fn(n, n, |i, j| {
        (0..n).map(|k| vecs.get(i, k) * vecs.get(j, k) / vals[k].sqrt()).sum()
    });
    inv_sqrt.matmul(w)
}

#[inline]
fn fast_tanh(x: f64) -> f64 {
    1.0 - 2.0 / ((2.0 * x).exp() + 1.0)
}

/// Symmetric fixed-point FastICA with `g(u) = tanh(u)`.
///
/// Convergence is declared when `max_i | |<w_i_new, w_i_old>| - 1 | < tol`;
/// running out of iterations is reported through [`IcaModel::converged`].
pub fn fit_fastica(
    whitened: &Whitened,
    n_components: usize,
    options: &FastIcaOptions,
    rng: &mut Rng,
) -> Result<IcaModel> {
    let z = &whitened.data;
    let n = z.rows();
    if n_components != n {
        return Err(Error::input(format!(
            "FastICA on {n} whitened rows cannot yield {n_components} components; whiten to {n_components} first"
        )));
    }
    let t = z.cols();
    let mut w = symmetric_decorrelation(&Matrix::from_fn(n, n, |_, _| rng.normal()))?;
    let mut y = Matrix::zeros(n, t);
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..options.max_iter {
        iterations = it + 1;
        gemm(1.0, w.view(), z.view(), 0.0, y.data_mut(), t);
        let mut gp_mean = vec![0.0; n];
        for r in 0..n {
            let mut acc = 0.0;
            for v in y.row_mut(r) {
                let g = fast_tanh(*v);
                acc += 1.0 - g * g;
                *v = g;
            }
            gp_mean[r] = acc / t as f64;
        }
        let mut w_new = Matrix::zeros(n, n);
        gemm(1.0 / t as f64, y.view(), z.view().t(), 0.0, w_new.data_mut(), n);
        for r in 0..n {
            for c in 0..n {
                let v = w_new.get(r, c) - gp_mean[r] * w.get(r, c);
                w_new.set(r, c, v);
            }
        }
        if !w_new.is_finite() {
            return Err(Error::numeric("fastica", format!("non-finite unmixing update at iteration {iterations}")));
        }
        let w_new = symmetric_decorrelation(&w_new)?;
        let lim = (0..n)
            .map(|r| (crate::matrix::dot(w_new.row(r), w.row(r)).abs() - 1.0).abs())
            .fold(0.0, f64::max);
        w = w_new;
        if lim < options.tol {
            converged = true;
            break;
        }
    }
    Ok(IcaModel {
        mean: whitened.mean.clone(),
        whitening: whitened.whitening.clone(),
        dewhitening: whitened.dewhitening.clone(),
        unmixing: w,
        n_components: n,
        converged,
        iterations,
    })
}

impl IcaModel {
    /// Component activations `n_components x time` for `eeg`.
    pub fn sources(&self, eeg: &SignalRecord) -> Result<Matrix> {
        let x = eeg.samples();
        if x.rows() != self.mean.len() {
            return Err(Error::dimension("ica sources", self.mean.len(), x.rows()));
        }
        let mut centered = x.clone();
        for r in 0..x.rows() {
            let m = self.mean[r];
            centered.row_mut(r).iter_mut().for_each(|v| *v -= m);
        }
        self.unmixing.matmul(&self.whitening.matmul(&centered)?)
    }

    /// `channels x n_components`: column `k` is the scalp projection of
    /// component `k`.
    pub fn mixing(&self) -> Result<Matrix> {
        self.dewhitening.matmul(&self.unmixing.transpose())
    }

    /// `W W^T` in whitened space.
    pub fn unmixing_gram(&self) -> Matrix {
        let n = self.n_components;
        let mut g = Matrix::zeros(n, n);
        gemm(1.0, self.unmixing.view(), self.unmixing.view().t(), 0.0, g.data_mut(), n);
        g
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RejectionThresholds {
    /// Absolute excess kurtosis above which a component is blink/spike-like.
    pub kurtosis: f64,
    /// Fraction of power below `low_freq_cutoff_hz` above which a component
    /// is drift/ocular.
    pub low_freq_ratio: f64,
    pub low_freq_cutoff_hz: f64,
    /// Peak `|x - mean| / std` above which a component is burst-like.
    pub max_zscore: f64,
}

impl Default for RejectionThresholds {
    fn default() -> Self {
        Self {
            kurtosis: 15.0,
            low_freq_ratio: 0.7,
            low_freq_cutoff_hz: 3.0,
            max_zscore: 8.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComponentScore {
    pub kurtosis: f64,
    pub low_freq_ratio: f64,
    pub max_zscore: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArtifactReport {
    pub scores: Vec<ComponentScore>,
    /// Ascending component indices.
    pub rejected: Vec<usize>,
}

/// Excess (Fisher) kurtosis with biased moments; 0 for a constant input.
pub fn excess_kurtosis(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = crate::matrix::mean(x);
    let (mut m2, mut m4) = (0.0, 0.0);
    for v in x {
        let d = v - m;
        let d2 = d * d;
        m2 += d2;
        m4 += d2 * d2;
    }
    m2 /= n;
    m4 /= n;
    let scale = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if m2 <= (f64::EPSILON * scale).powi(2) || m2 == 0.0 {
        return 0.0;
    }
    m4 / (m2 * m2) - 3.0
}

/// Share of one-sided spectral power (DC excluded) at frequencies strictly
/// between 0 and `cutoff_hz`.
pub fn low_frequency_ratio(x: &[f64], sample_rate_hz: f64, cutoff_hz: f64) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let m = crate::matrix::mean(x);
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v - m, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let (mut low, mut total) = (0.0, 0.0);
    for (k, c) in buf.iter().enumerate().take(n / 2 + 1).skip(1) {
        let p = c.norm_sqr();
        total += p;
        if (k as f64) * sample_rate_hz / (n as f64) < cutoff_hz {
            low += p;
        }
    }
    if total <= 0.0 {
        0.0
    } else {
        low / total
    }
}

pub fn max_abs_zscore(x: &[f64]) -> f64 {
    let m = crate::matrix::mean(x);
    let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64;
    if var <= 0.0 {
        return 0.0;
    }
    let sd = var.sqrt();
    x.iter().map(|v| (v - m).abs() / sd).fold(0.0, f64::max)
}

pub fn score_components(components: &Matrix, sample_rate_hz: f64, cutoff_hz: f64) -> Vec<ComponentScore> {
    (0..components.rows())
        .map(|k| {
            let s = components.row(k);
            ComponentScore {
                kurtosis: excess_kurtosis(s),
                low_freq_ratio: low_frequency_ratio(s, sample_rate_hz, cutoff_hz),
                max_zscore: max_abs_zscore(s),
            }
        })
        .collect()
}

pub fn score_and_reject(components: &Matrix, sample_rate_hz: f64, thresholds: &RejectionThresholds) -> ArtifactReport {
    let scores = score_components(components, sample_rate_hz, thresholds.low_freq_cutoff_hz);
    let rejected = scores
        .iter()
        .enumerate()
        .filter(|(_, s)| {
            s.kurtosis.abs() > thresholds.kurtosis
                || s.low_freq_ratio > thresholds.low_freq_ratio
                || s.max_zscore > thresholds.max_zscore
        })
        .map(|(k, _)| k)
        .collect();
    ArtifactReport { scores, rejected }
}

/// Back-projects `components` with the rejected ones zeroed. `template`
/// supplies the sample rate and channel labels.
pub fn reconstruct_clean(
    model: &IcaModel,
    components: &Matrix,
    report: &ArtifactReport,
    template: &SignalRecord,
) -> Result<SignalRecord> {
    if components.rows() != model.n_components {
        return Err(Error::dimension("reconstruct_clean", model.n_components, components.rows()));
    }
    let mut kept = components.clone();
    for &k in &report.rejected {
        if k >= model.n_components {
            return Err(Error::input(format!("rejected component {k} out of range")));
        }
        kept.row_mut(k).iter_mut().for_each(|v| *v = 0.0);
    }
    let mut x = model.mixing()?.matmul(&kept)?;
    for r in 0..x.rows() {
        let m = model.mean[r];
        x.row_mut(r).iter_mut().for_each(|v| *v += m);
    }
    SignalRecord::new(template.sample_rate(), x, template.channel_labels().to_vec())
}

impl ArtifactReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("component,kurtosis,low_freq_ratio,max_zscore,rejected\n");
        for (k, s) in self.scores.iter().enumerate() {
            let _ = writeln!(
                out,
                "{k},{:.6},{:.6},{:.6},{}",
                s.kurtosis,
                s.low_freq_ratio,
                s.max_zscore,
                u8::from(self.rejected.contains(&k))
            );
        }
        out
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IcaCleaner {
    pub options: FastIcaOptions,
    pub thresholds: RejectionThresholds,
}

impl IcaCleaner {
    /// Whiten, unmix, score, and rebuild in one pass over a recording.
    pub fn clean(&self, eeg: &SignalRecord, rng: &mut Rng) -> Result<(SignalRecord, ArtifactReport, IcaModel)> {
        let white = whiten(eeg)?;
        let model = fit_fastica(&white, white.data.rows(), &self.options, rng)?;
        let sources = model.unmixing.matmul(&white.data)?;
        let report = score_and_reject(&sources, eeg.sample_rate(), &self.thresholds);
        let clean = reconstruct_clean(&model, &sources, &report, eeg)?;
        Ok((clean, report, model))
    }
}
