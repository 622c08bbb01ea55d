//! Reference implementations used only by tests. They share no code with the
//! library routines they check.
#![allow(dead_code)]

pub mod gradient;

/// Cyclic Jacobi eigendecomposition of a symmetric `n x n` row-major matrix.
/// Returns eigenvalues descending and eigenvectors as columns (row-major).
pub fn jacobi_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut m = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| m[b * n + b].partial_cmp(&m[a * n + a]).unwrap());
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let mut vecs = vec![0.0; n * n];
    for (new, &old) in order.iter().enumerate() {
        for r in 0..n {
            vecs[r * n + new] = v[r * n + old];
        }
    }
    (values, vecs)
}

/// Classical PCA scores via the covariance eigendecomposition.
/// `x` is `n x d` row-major; returns `n x k` scores row-major.
pub fn pca_scores(x: &[f64], n: usize, d: usize, k: usize) -> Vec<f64> {
    let mut mean = vec![0.0; d];
    for r in 0..n {
        for c in 0..d {
            mean[c] += x[r * d + c] / n as f64;
        }
    }
    let mut cov = vec![0.0; d * d];
    for r in 0..n {
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] += (x[r * d + i] - mean[i]) * (x[r * d + j] - mean[j]) / n as f64;
            }
        }
    }
    let (_, vecs) = jacobi_eigen(&cov, d);
    let mut out = vec![0.0; n * k];
    for r in 0..n {
        for c in 0..k {
            out[r * k + c] = (0..d).map(|i| (x[r * d + i] - mean[i]) * vecs[i * d + c]).sum();
        }
    }
    out
}

/// Pearson correlation.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Best one-to-one assignment maximizing the total |correlation| by brute
/// force over permutations (small `n` only). Returns the per-source value.
pub fn best_assignment(corr: &[Vec<f64>]) -> Vec<f64> {
    let n = corr.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = (f64::MIN, vec![]);
    permute(&mut perm, 0, &mut |p| {
        let total: f64 = (0..n).map(|i| corr[i][p[i]].abs()).sum();
        if total > best.0 {
            best = (total, (0..n).map(|i| corr[i][p[i]].abs()).collect());
        }
    });
    best.1
}

fn permute(p: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == p.len() {
        f(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, f);
        p.swap(k, i);
    }
}

/// |H(e^{jw})| of a rational transfer function given by polynomial
/// coefficients in z^-1, evaluated by Horner's rule on complex numbers.
pub fn poly_gain(num: &[f64], den: &[f64], w: f64) -> f64 {
    let eval = |c: &[f64]| {
        // z^-1 = e^{-jw}
        let (zr, zi) = (w.cos(), -w.sin());
        let (mut re, mut im) = (0.0, 0.0);
        for &a in c.iter().rev() {
            let nr = re * zr - im * zi + a;
            let ni = re * zi + im * zr;
            re = nr;
            im = ni;
        }
        (re * re + im * im).sqrt()
    };
    eval(num) / eval(den)
}

pub fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Central finite difference of `f` at `x` along coordinate `i`.
pub fn central_difference(f: &mut impl FnMut(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    xp[i] += h;
    let fp = f(&xp);
    xp[i] -= 2.0 * h;
    let fm = f(&xp);
    (fp - fm) / (2.0 * h)
}
