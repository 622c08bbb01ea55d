//! Kernel PCA for reducing the 155-dim EEG features to 30 dims.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::features::{FeatureSequence, Modality};
use crate::matrix::{dot, gemm, symmetric_eigen, Matrix, View};
use crate::rng::Rng;

/// Eigenvalues below this fraction of the largest are treated as zero.
const RANK_TOL: f64 = 1e-10;
const BLOCK_ROWS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelSpec {
    Linear,
    Polynomial { degree: u32, coef0: f64 },
    Rbf { gamma: f64 },
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::Polynomial { degree: 3, coef0: 1.0 }
    }
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Polynomial { degree, coef0 } if degree == 0 || !coef0.is_finite() => {
                Err(Error::Config(format!("polynomial kernel needs degree >= 1, got {degree}")))
            }
            KernelSpec::Rbf { gamma } if !(gamma > 0.0 && gamma.is_finite()) => {
                Err(Error::Config(format!("rbf kernel needs gamma > 0, got {gamma}")))
            }
            _ => Ok(()),
        }
    }

    /// `linear`, `poly:3:1`, `rbf:0.01`
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |i: usize| -> Result<f64> {
            parts
                .get(i)
                .and_then(|p| p.parse::<f64>().ok())
                .ok_or_else(|| Error::Config(format!("bad kernel spec '{s}'")))
        };
        let spec = match parts[0] {
            "linear" if parts.len() == 1 => KernelSpec::Linear,
            "poly" | "polynomial" if parts.len() == 3 => {
                let degree = num(1)?;
                if degree.fract() != 0.0 || degree < 0.0 {
                    return Err(Error::Config(format!("bad kernel spec '{s}'")));
                }
                KernelSpec::Polynomial { degree: degree as u32, coef0: num(2)? }
            }
            "rbf" if parts.len() == 2 => KernelSpec::Rbf { gamma: num(1)? },
            _ => return Err(Error::Config(format!("bad kernel spec '{s}', expected linear, poly:D:C or rbf:G"))),
        };
        spec.validate()?;
        Ok(spec)
    }

    fn of_dot(&self, xy: f64, xx: f64, yy: f64) -> f64 {
        match *self {
            KernelSpec::Linear => xy,
            KernelSpec::Polynomial { degree, coef0 } => (xy + coef0).powi(degree as i32),
            KernelSpec::Rbf { gamma } => (-gamma * (xx + yy - 2.0 * xy).max(0.0)).exp(),
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.of_dot(dot(x, y), dot(x, x), dot(y, y))
    }

    /// `K[i][j] = k(a_i, b_j)`, computed in row blocks.
    pub fn matrix(&self, a: &Matrix, b: &Matrix, exec: Execution) -> Matrix {
        assert_eq!(a.cols(), b.cols());
        let (m, n) = (a.rows(), b.rows());
        let sq_b: Vec<f64> = (0..n).map(|j| dot(b.row(j), b.row(j))).collect();
        let mut out = vec![0.0; m * n];
        if n == 0 {
            return Matrix::new(m, 0, out).unwrap();
        }
        exec.for_each_chunk_mut(&mut out, BLOCK_ROWS * n, |blk, chunk| {
            let r0 = blk * BLOCK_ROWS;
            let rows = chunk.len() / n;
            let av = View::block(&a.data()[r0 * a.cols()..(r0 + rows) * a.cols()], rows, a.cols(), a.cols());
            gemm(1.0, av, b.view().t(), 0.0, chunk, n);
            for i in 0..rows {
                let xx = dot(a.row(r0 + i), a.row(r0 + i));
                for (j, v) in chunk[i * n..(i + 1) * n].iter_mut().enumerate() {
                    *v = self.of_dot(*v, xx, sq_b[j]);
                }
            }
        });
        Matrix::new(m, n, out).unwrap()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KpcaModel {
    pub support_vectors: Matrix,
    pub kernel: KernelSpec,
    /// `n x n_components`; column `k` is the eigenvector divided by the square
    /// root of its kernel-matrix eigenvalue.
    pub alphas: Matrix,
    /// Variance of the training projections per retained component.
    pub eigenvalues: Vec<f64>,
    /// Sum of all positive eigenvalues (same scale as `eigenvalues`).
    pub total_variance: f64,
    pub row_means: Vec<f64>,
    pub total_mean: f64,
}

pub fn fit_kpca(x: &Matrix, kernel: KernelSpec, n_components: usize, exec: Execution) -> Result<KpcaModel> {
    kernel.validate()?;
    let n = x.rows();
    if n_components == 0 {
        return Err(Error::Config("n_components must be positive".into()));
    }
    if n <= n_components {
        return Err(Error::input(format!("KPCA needs more than {n_components} samples, got {n}")));
    }
    if !x.is_finite() {
        return Err(Error::input("KPCA input contains non-finite values"));
    }
    let mut k = kernel.matrix(x, x, exec);
    let row_means: Vec<f64> = (0..n).map(|i| k.row(i).iter().sum::<f64>() / n as f64).collect();
    let total_mean = row_means.iter().sum::<f64>() / n as f64;
    for i in 0..n {
        let ri = row_means[i];
        for (j, v) in k.row_mut(i).iter_mut().enumerate() {
            *v += total_mean - ri - row_means[j];
        }
    }
    let (values, vectors) = symmetric_eigen(&k)?;
    let top = values.first().copied().unwrap_or(0.0);
    let usable = values.iter().take_while(|&&v| v > RANK_TOL * top.max(f64::MIN_POSITIVE)).count();
    if usable < n_components {
        return Err(Error::ReducedRank { usable, requested: n_components });
    }
    let total: f64 = values[..usable].iter().sum();
    let mut alphas = Matrix::zeros(n, n_components);
    for c in 0..n_components {
        let s = 1.0 / values[c].sqrt();
        for r in 0..n {
            alphas.set(r, c, vectors.get(r, c) * s);
        }
    }
    Ok(KpcaModel {
        support_vectors: x.clone(),
        kernel,
        alphas,
        eigenvalues: values[..n_components].iter().map(|v| v / n as f64).collect(),
        total_variance: total / n as f64,
        row_means,
        total_mean,
    })
}

impl KpcaModel {
    pub fn n_components(&self) -> usize {
        self.alphas.cols()
    }

    pub fn input_dim(&self) -> usize {
        self.support_vectors.cols()
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::dimension("KPCA input", self.input_dim(), x.len()));
        }
        let xm = Matrix::new(1, x.len(), x.to_vec())?;
        Ok(self.transform_rows(&xm, Execution::Sequential).into_data())
    }

    /// Projects every row of `x` (`m x input_dim`).
    pub fn transform_rows(&self, x: &Matrix, exec: Execution) -> Matrix {
        let n = self.support_vectors.rows();
        let mut k = self.kernel.matrix(x, &self.support_vectors, exec);
        for i in 0..k.rows() {
            let row = k.row_mut(i);
            let m = row.iter().sum::<f64>() / n as f64;
            for (j, v) in row.iter_mut().enumerate() {
                *v += self.total_mean - m - self.row_means[j];
            }
        }
        k.matmul(&self.alphas).unwrap()
    }

    pub fn transform_sequence(&self, seq: &FeatureSequence, exec: Execution) -> Result<FeatureSequence> {
        if seq.dim() != self.input_dim() {
            return Err(Error::dimension("KPCA input", self.input_dim(), seq.dim()));
        }
        if self.n_components() != Modality::Eeg30.dim() {
            return Err(Error::dimension("KPCA output", Modality::Eeg30.dim(), self.n_components()));
        }
        seq.with_frames(self.transform_rows(seq.frames(), exec), Modality::Eeg30)
    }
}

pub fn cumulative_explained_variance(model: &KpcaModel) -> Vec<f64> {
    let mut acc = 0.0;
    model
        .eigenvalues
        .iter()
        .map(|v| {
            acc += v;
            (acc / model.total_variance).min(1.0)
        })
        .collect()
}

/// `component_index,cumulative_fraction` with 1-based component indices.
pub fn explained_variance_csv(model: &KpcaModel) -> String {
    let mut out = String::from("component_index,cumulative_fraction\n");
    for (i, f) in cumulative_explained_variance(model).iter().enumerate() {
        let _ = writeln!(out, "{},{f:.6}", i + 1);
    }
    out
}

/// Stacks the frames of `sequences` and keeps a uniform random subset of at
/// most `max_frames` rows (in their original order).
pub fn subsample_frames<'a>(
    sequences: impl IntoIterator<Item = &'a FeatureSequence>,
    max_frames: usize,
    rng: &mut Rng,
) -> Result<Matrix> {
    let seqs: Vec<&FeatureSequence> = sequences.into_iter().collect();
    let dim = seqs.first().map(|s| s.dim()).ok_or_else(|| Error::input("no sequences to fit KPCA on"))?;
    let mut index = Vec::new();
    for (s, seq) in seqs.iter().enumerate() {
        if seq.dim() != dim {
            return Err(Error::dimension("KPCA training frames", dim, seq.dim()));
        }
        index.extend((0..seq.len()).map(|t| (s, t)));
    }
    let keep: Vec<usize> = if index.len() > max_frames {
        rng.sample_indices(index.len(), max_frames)
    } else {
        (0..index.len()).collect()
    };
    let mut data = Vec::with_capacity(keep.len() * dim);
    for &i in &keep {
        let (s, t) = index[i];
        data.extend_from_slice(seqs[s].frames().row(t));
    }
    Matrix::new(keep.len(), dim, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn random(n: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = Rng::new(seed);
        Matrix::from_fn(n, d, |_, _| rng.normal())
    }

    fn projections(model: &KpcaModel) -> Matrix {
        model.transform_rows(&model.support_vectors, Execution::Sequential)
    }

    #[test]
    fn transform_matches_training_projection() {
        let x = random(60, 8, 1);
        let m = fit_kpca(&x, KernelSpec::default(), 5, Execution::Sequential).unwrap();
        let p = projections(&m);
        for i in [0, 17, 59] {
            let t = m.transform(x.row(i)).unwrap();
            for c in 0..5 {
                assert_abs_diff_eq!(t[c], p.get(i, c), epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn projections_centered_with_eigenvalue_variance() {
        let x = random(80, 6, 2);
        for kernel in [KernelSpec::Linear, KernelSpec::default(), KernelSpec::Rbf { gamma: 0.2 }] {
            let m = fit_kpca(&x, kernel, 4, Execution::Sequential).unwrap();
            let p = projections(&m);
            for c in 0..4 {
                let col = p.column(c);
                let mean = crate::matrix::mean(&col);
                let var = col.iter().map(|v| v * v).sum::<f64>() / col.len() as f64;
                assert!(mean.abs() < 1e-8 * (1.0 + m.eigenvalues[0].sqrt()), "{kernel:?} mean {mean}");
                assert_abs_diff_eq!(var, m.eigenvalues[c], epsilon = 1e-8 * m.eigenvalues[0]);
            }
            assert!(m.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn training_mean_maps_to_origin() {
        let x = random(50, 10, 3);
        let m = fit_kpca(&x, KernelSpec::Linear, 5, Execution::Sequential).unwrap();
        let mean: Vec<f64> = (0..10).map(|c| crate::matrix::mean(&x.column(c))).collect();
        for v in m.transform(&mean).unwrap() {
            assert!(v.abs() < 1e-6);
        }
    }

    #[test]
    fn few_distinct_rows_is_reduced_rank() {
        let base = random(5, 155, 4);
        let x = Matrix::from_fn(200, 155, |r, c| base.get(r % 5, c));
        match fit_kpca(&x, KernelSpec::default(), 30, Execution::Sequential) {
            Err(Error::ReducedRank { usable, requested }) => {
                assert!(usable <= 5);
                assert_eq!(requested, 30);
            }
            other => panic!("expected reduced rank, got {other:?}"),
        }
    }

    #[test]
    fn duplicated_rows_keep_directions() {
        let x = random(40, 6, 5);
        let doubled = Matrix::from_fn(80, 6, |r, c| x.get(r % 40, c));
        for kernel in [KernelSpec::Linear, KernelSpec::default()] {
            let a = fit_kpca(&x, kernel, 4, Execution::Sequential).unwrap();
            let b = fit_kpca(&doubled, kernel, 4, Execution::Sequential).unwrap();
            let pa = a.transform_rows(&x, Execution::Sequential);
            let pb = b.transform_rows(&x, Execution::Sequential);
            for c in 0..4 {
                let sign = if pa.get(0, c) * pb.get(0, c) < 0.0 { -1.0 } else { 1.0 };
                let scale = pa.column(c).iter().fold(1.0f64, |m, v| m.max(v.abs()));
                for r in 0..40 {
                    assert!((pa.get(r, c) - sign * pb.get(r, c)).abs() < 1e-6 * scale);
                }
            }
        }
    }

    #[test]
    fn rank_one_curve_starts_at_one() {
        let mut rng = Rng::new(6);
        let dir: Vec<f64> = (0..10).map(|_| rng.normal()).collect();
        let x = Matrix::from_fn(30, 10, |r, c| (r as f64 - 14.5) * dir[c]);
        // rank one still needs one usable component
        let m = fit_kpca(&x, KernelSpec::Linear, 1, Execution::Sequential).unwrap();
        assert_abs_diff_eq!(cumulative_explained_variance(&m)[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn curve_monotone_and_csv_rows() {
        let x = random(120, 155, 7);
        let m = fit_kpca(&x, KernelSpec::default(), 30, Execution::Sequential).unwrap();
        let curve = cumulative_explained_variance(&m);
        assert_eq!(curve.len(), 30);
        assert!(curve.windows(2).all(|w| w[0] <= w[1]));
        assert!(*curve.last().unwrap() <= 1.0);
        let csv = explained_variance_csv(&m);
        assert_eq!(csv.lines().count(), 31);
    }

    #[test]
    fn parallel_kernel_matrix_identical() {
        let a = random(150, 20, 8);
        let b = random(90, 20, 9);
        let k = KernelSpec::default();
        assert_eq!(k.matrix(&a, &b, Execution::Sequential), k.matrix(&a, &b, Execution::Parallel));
        assert_abs_diff_eq!(k.matrix(&a, &b, Execution::Sequential).get(3, 7), k.eval(a.row(3), b.row(7)), epsilon = 1e-9);
    }

    #[test]
    fn kernel_parse() {
        assert_eq!(KernelSpec::parse("linear").unwrap(), KernelSpec::Linear);
        assert_eq!(KernelSpec::parse("poly:3:1").unwrap(), KernelSpec::default());
        assert_eq!(KernelSpec::parse("rbf:0.5").unwrap(), KernelSpec::Rbf { gamma: 0.5 });
        assert!(KernelSpec::parse("rbf:-1").is_err());
        assert!(KernelSpec::parse("poly:0:1").is_err());
        assert!(KernelSpec::parse("cubic").is_err());
    }

    #[test]
    fn subsample_caps_rows() {
        let s: Vec<FeatureSequence> = (0..3)
            .map(|i| FeatureSequence::new(random(50, 155, i), 100.0, Modality::Eeg155, format!("u{i}")).unwrap())
            .collect();
        let m = subsample_frames(&s, 100, &mut Rng::new(1)).unwrap();
        assert_eq!(m.shape(), (100, 155));
        let all = subsample_frames(&s, 1000, &mut Rng::new(1)).unwrap();
        assert_eq!(all.rows(), 150);
    }
}
