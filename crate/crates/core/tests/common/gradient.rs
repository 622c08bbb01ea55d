//! Finite-difference checks of the classifier's analytic gradient.

use spkid_core::exec::Execution;
use spkid_core::matrix::Matrix;
use spkid_core::nn::{batch_gradient, cross_entropy, predict, ModelConfig, Params, PARAM_NAMES};
use spkid_core::rng::Rng;

pub struct Instance {
    pub params: Params,
    pub seqs: Vec<Matrix>,
    pub labels: Vec<usize>,
}

pub fn instance(seed: u64, config: ModelConfig, lengths: &[usize]) -> Instance {
    let rng = Rng::new(seed);
    let mut params = Params::init(config, &rng.derive("params")).unwrap();
    // nonzero biases so every bias gradient is exercised
    let mut b = rng.derive("bias");
    for v in params.tcn_bias.iter_mut().chain(&mut params.gru_bias).chain(&mut params.dense_bias) {
        *v = 0.3 * b.normal();
    }
    let mut x = rng.derive("data");
    let seqs = lengths
        .iter()
        .map(|&t| Matrix::from_fn(t, config.input_dim, |_, _| x.normal()))
        .collect();
    let labels = (0..lengths.len()).map(|_| x.below(config.n_speakers)).collect();
    Instance { params, seqs, labels }
}

fn mean_loss(inst: &Instance, flat: &[f64]) -> f64 {
    let mut p = inst.params.clone();
    p.set_flat(flat);
    let refs: Vec<&Matrix> = inst.seqs.iter().collect();
    let probs = predict(&p, &refs, Execution::Sequential).unwrap();
    probs.iter().zip(&inst.labels).map(|(p, &y)| cross_entropy(p, y)).sum::<f64>() / probs.len() as f64
}

/// Largest relative error over the checked coordinates.
pub fn check(inst: &Instance, coords: impl Iterator<Item = usize>) -> (f64, String) {
    let refs: Vec<&Matrix> = inst.seqs.iter().collect();
    let analytic = batch_gradient(&inst.params, &refs, &inst.labels, Execution::Sequential)
        .unwrap()
        .grads
        .flatten();
    let x0 = inst.params.flatten();
    let sizes: Vec<usize> = inst.params.slices().iter().map(|s| s.len()).collect();
    let mut worst = (0.0, String::new());
    let mut f = |x: &[f64]| mean_loss(inst, x);
    for i in coords {
        let fd = super::central_difference(&mut f, &x0, i, 1e-4);
        let err = (analytic[i] - fd).abs() / analytic[i].abs().max(1.0);
        if err > worst.0 {
            let (mut k, mut off) = (0, i);
            while off >= sizes[k] {
                off -= sizes[k];
                k += 1;
            }
            worst = (err, format!("{}[{off}]", PARAM_NAMES[k]));
        }
    }
    worst
}

pub fn reduced(seed: u64) -> ModelConfig {
    ModelConfig {
        tcn_filters: 8,
        gru_hidden: 6,
        tcn_dilation: 1 + (seed % 2) as usize,
        ..ModelConfig::new(5, 3)
    }
}
