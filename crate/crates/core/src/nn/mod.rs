//! Sequence classifier: one causal TCN layer (ReLU), one GRU layer, a dense
//! layer and softmax, trained with cross-entropy and Adam.

mod adam;
mod model;

use std::path::Path;

pub use adam::{AdamConfig, AdamState};
pub use model::{Batch, BatchOutput, SHARD_SIZE};

use crate::checkpoint::{Container, Tensor};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::matrix::{Matrix, Scalar};
use crate::rng::Rng;

pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub n_speakers: usize,
    pub tcn_filters: usize,
    pub tcn_width: usize,
    pub tcn_dilation: usize,
    pub gru_hidden: usize,
}

impl ModelConfig {
    pub fn new(input_dim: usize, n_speakers: usize) -> Self {
        Self {
            input_dim,
            n_speakers,
            tcn_filters: 128,
            tcn_width: 3,
            tcn_dilation: 1,
            gru_hidden: 128,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("input_dim", self.input_dim),
            ("tcn_filters", self.tcn_filters),
            ("tcn_width", self.tcn_width),
            ("tcn_dilation", self.tcn_dilation),
            ("gru_hidden", self.gru_hidden),
        ];
        if let Some((name, _)) = named.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("model {name} must be positive")));
        }
        if self.n_speakers < 2 {
            return Err(Error::Config(format!("need at least 2 speakers, got {}", self.n_speakers)));
        }
        Ok(())
    }

    fn to_block(self) -> Vec<u32> {
        [
            self.input_dim,
            self.n_speakers,
            self.tcn_width,
            self.tcn_dilation,
            self.tcn_filters,
            self.gru_hidden,
        ]
        .iter()
        .map(|&v| v as u32)
        .collect()
    }

    fn from_block(block: &[u32], origin: &Path) -> Result<Self> {
        if block.len() != 6 {
            return Err(Error::format(origin, format!("config block has {} values, expected 6", block.len())));
        }
        let v: Vec<usize> = block.iter().map(|&x| x as usize).collect();
        let config = Self {
            input_dim: v[0],
            n_speakers: v[1],
            tcn_width: v[2],
            tcn_dilation: v[3],
            tcn_filters: v[4],
            gru_hidden: v[5],
        };
        config.validate().map_err(|e| Error::format(origin, e.to_string()))?;
        Ok(config)
    }
}

pub const PARAM_NAMES: [&str; 7] = [
    "tcn.weight",
    "tcn.bias",
    "gru.input_weight",
    "gru.recurrent_weight",
    "gru.bias",
    "dense.weight",
    "dense.bias",
];

/// Classifier parameters. Gradients use the same type.
///
/// GRU gate blocks are packed column-wise as `[update | reset | candidate]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Params<T = f64> {
    pub config: ModelConfig,
    /// `(tcn_width * input_dim) x tcn_filters`; row block `k` multiplies the
    /// input `(tcn_width - 1 - k) * tcn_dilation` steps in the past.
    pub tcn_weight: Matrix<T>,
    pub tcn_bias: Vec<T>,
    /// `tcn_filters x 3 * gru_hidden`
    pub gru_input_weight: Matrix<T>,
    /// `gru_hidden x 3 * gru_hidden`
    pub gru_recurrent_weight: Matrix<T>,
    pub gru_bias: Vec<T>,
    /// `n_speakers x gru_hidden`
    pub dense_weight: Matrix<T>,
    pub dense_bias: Vec<T>,
}

impl<T: Scalar> Params<T> {
    pub fn shapes(config: &ModelConfig) -> [Vec<usize>; 7] {
        let c = config;
        let h3 = 3 * c.gru_hidden;
        [
            vec![c.tcn_width * c.input_dim, c.tcn_filters],
            vec![c.tcn_filters],
            vec![c.tcn_filters, h3],
            vec![c.gru_hidden, h3],
            vec![h3],
            vec![c.n_speakers, c.gru_hidden],
            vec![c.n_speakers],
        ]
    }

    pub fn zeros(config: ModelConfig) -> Self {
        let s = Self::shapes(&config);
        Self {
            config,
            tcn_weight: Matrix::zeros(s[0][0], s[0][1]),
            tcn_bias: vec![T::zero(); s[1][0]],
            gru_input_weight: Matrix::zeros(s[2][0], s[2][1]),
            gru_recurrent_weight: Matrix::zeros(s[3][0], s[3][1]),
            gru_bias: vec![T::zero(); s[4][0]],
            dense_weight: Matrix::zeros(s[5][0], s[5][1]),
            dense_bias: vec![T::zero(); s[6][0]],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(config: ModelConfig, rng: &Rng) -> Result<Self> {
        config.validate()?;
        let mut p = Self::zeros(config);
        let h3 = 3 * config.gru_hidden;
        let fans = [
            (config.tcn_width * config.input_dim, config.tcn_filters),
            (config.tcn_filters, h3),
            (config.gru_hidden, h3),
            (config.gru_hidden, config.n_speakers),
        ];
        let mats = [
            (&mut p.tcn_weight, "tcn.weight"),
            (&mut p.gru_input_weight, "gru.input_weight"),
            (&mut p.gru_recurrent_weight, "gru.recurrent_weight"),
            (&mut p.dense_weight, "dense.weight"),
        ];
        for ((m, name), (fan_in, fan_out)) in mats.into_iter().zip(fans) {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut r = rng.derive(name);
            for v in m.data_mut() {
                *v = T::of(r.uniform_range(-limit, limit));
            }
        }
        Ok(p)
    }

    pub fn slices(&self) -> [&[T]; 7] {
        [
            self.tcn_weight.data(),
            &self.tcn_bias,
            self.gru_input_weight.data(),
            self.gru_recurrent_weight.data(),
            &self.gru_bias,
            self.dense_weight.data(),
            &self.dense_bias,
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut [T]; 7] {
        [
            self.tcn_weight.data_mut(),
            &mut self.tcn_bias,
            self.gru_input_weight.data_mut(),
            self.gru_recurrent_weight.data_mut(),
            &mut self.gru_bias,
            self.dense_weight.data_mut(),
            &mut self.dense_bias,
        ]
    }

    pub fn n_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    /// All parameters concatenated in [`PARAM_NAMES`] order.
    pub fn flatten(&self) -> Vec<T> {
        self.slices().concat()
    }

    pub fn set_flat(&mut self, flat: &[T]) {
        assert_eq!(flat.len(), self.n_params());
        let mut off = 0;
        for s in self.slices_mut() {
            s.copy_from_slice(&flat[off..off + s.len()]);
            off += s.len();
        }
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        Params {
            config: self.config,
            tcn_weight: self.tcn_weight.cast(),
            tcn_bias: cast_vec(&self.tcn_bias),
            gru_input_weight: self.gru_input_weight.cast(),
            gru_recurrent_weight: self.gru_recurrent_weight.cast(),
            gru_bias: cast_vec(&self.gru_bias),
            dense_weight: self.dense_weight.cast(),
            dense_bias: cast_vec(&self.dense_bias),
        }
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        for (name, s) in PARAM_NAMES.iter().zip(self.slices()) {
            if let Some(i) = s.iter().position(|v| !v.is_finite()) {
                return Err(Error::numeric(format!("{what} of {name}"), format!("non-finite value at index {i}")));
            }
        }
        Ok(())
    }

    pub fn tensors(&self) -> Vec<Tensor> {
        let shapes = Self::shapes(&self.config);
        PARAM_NAMES
            .iter()
            .zip(self.slices())
            .zip(shapes)
            .map(|((name, data), dims)| {
                let wide: Vec<f64> = data.iter().map(|v| v.to_f64().unwrap()).collect();
                Tensor::from_f64(*name, dims, &wide)
            })
            .collect()
    }

    fn from_container(config: ModelConfig, c: &Container, prefix: &str, origin: &Path) -> Result<Self> {
        let mut p = Self::zeros(config);
        let shapes = Self::shapes(&config);
        for ((name, dims), dst) in PARAM_NAMES.iter().zip(shapes).zip(p.slices_mut()) {
            let src = c.expect(&format!("{prefix}{name}"), &dims, origin)?;
            for (d, s) in dst.iter_mut().zip(src) {
                *d = T::of(s);
            }
        }
        Ok(p)
    }
}

/// What a training run saves: weights, the feature normalization applied to
/// inputs, and optionally the optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: Params<f32>,
    pub norm_mean: Vec<f64>,
    pub norm_std: Vec<f64>,
    pub adam: Option<AdamState<f32>>,
}

impl Checkpoint {
    pub fn to_container(&self) -> Container {
        let mut tensors = self.params.tensors();
        tensors.push(Tensor::vector("norm.mean", &self.norm_mean));
        tensors.push(Tensor::vector("norm.std", &self.norm_std));
        if let Some(a) = &self.adam {
            for (prefix, src) in [("adam.m.", &a.m), ("adam.v.", &a.v)] {
                for t in src.tensors() {
                    tensors.push(Tensor { name: format!("{prefix}{}", t.name), ..t });
                }
            }
            let c = &a.config;
            tensors.push(Tensor::vector("adam.state", &[a.step as f64, c.lr, c.beta1, c.beta2, c.epsilon]));
        }
        Container {
            config: self.params.config.to_block(),
            tensors,
        }
    }

    pub fn from_container(c: &Container, origin: &Path) -> Result<Self> {
        let config = ModelConfig::from_block(&c.config, origin)?;
        let params = Params::from_container(config, c, "", origin)?;
        let d = config.input_dim;
        let norm_mean = c.expect("norm.mean", &[d], origin)?;
        let norm_std = c.expect("norm.std", &[d], origin)?;
        let adam = match c.get("adam.state") {
            None => None,
            Some(_) => {
                let s = c.expect("adam.state", &[5], origin)?;
                Some(AdamState {
                    config: AdamConfig {
                        lr: s[1],
                        beta1: s[2],
                        beta2: s[3],
                        epsilon: s[4],
                    },
                    step: s[0] as u64,
                    m: Params::from_container(config, c, "adam.m.", origin)?,
                    v: Params::from_container(config, c, "adam.v.", origin)?,
                })
            }
        };
        Ok(Self {
            params,
            norm_mean,
            norm_std,
            adam,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::read(path)?, path)
    }
}

fn cast_vec<T: Scalar, U: Scalar>(v: &[T]) -> Vec<U> {
    v.iter().map(|x| U::of(x.to_f64().unwrap())).collect()
}

/// Numerically stable softmax.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let m = logits.iter().cloned().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s: T = e.iter().cloned().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn cross_entropy<T: Scalar>(probs: &[T], label: usize) -> T {
    let p = probs[label];
    let floor = T::of(PROB_FLOOR);
    if p < floor {
        -floor.ln()
    } else {
        -p.ln()
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: Scalar>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Causal convolution plus ReLU over one sequence (`T x input_dim`).
pub fn tcn_forward<T: Scalar>(x: &Matrix<T>, params: &Params<T>) -> Result<Matrix<T>> {
    let batch = Batch::new(&[x], params.config.input_dim)?;
    let acts = model::tcn(params, &batch);
    Ok(Matrix::new(x.rows(), params.config.tcn_filters, acts.1).unwrap())
}

/// Final GRU state for one sequence of TCN outputs (`T x tcn_filters`).
pub fn gru_forward<T: Scalar>(h_seq: &Matrix<T>, params: &Params<T>) -> Result<Vec<T>> {
    let c = &params.config;
    if h_seq.cols() != c.tcn_filters {
        return Err(Error::Shape(format!(
            "GRU input has {} columns, expected {}",
            h_seq.cols(),
            c.tcn_filters
        )));
    }
    Ok(model::gru(params, h_seq.data(), &[h_seq.rows()], h_seq.rows()).last_state)
}

pub fn dense_softmax<T: Scalar>(state: &[T], params: &Params<T>) -> Vec<T> {
    let logits: Vec<T> = (0..params.config.n_speakers)
        .map(|k| {
            let row = params.dense_weight.row(k);
            row.iter().zip(state).map(|(&w, &h)| w * h).sum::<T>() + params.dense_bias[k]
        })
        .collect();
    softmax(&logits)
}

/// Class probabilities for each sequence, processed in fixed-size shards.
pub fn predict<T: Scalar>(params: &Params<T>, sequences: &[&Matrix<T>], exec: Execution) -> Result<Vec<Vec<f64>>> {
    let shards: Vec<&[&Matrix<T>]> = sequences.chunks(SHARD_SIZE).collect();
    let out = exec.map(&shards, |s| -> Result<Vec<Vec<f64>>> {
        let batch = Batch::new(s, params.config.input_dim)?;
        Ok(model::forward(params, &batch).probs_rows())
    });
    let mut all = Vec::with_capacity(sequences.len());
    for r in out {
        all.extend(r?);
    }
    Ok(all)
}

/// Mean loss and gradient over `sequences`. Shard results are summed in
/// shard order so the value does not depend on `exec`.
pub fn batch_gradient<T: Scalar>(
    params: &Params<T>,
    sequences: &[&Matrix<T>],
    labels: &[usize],
    exec: Execution,
) -> Result<BatchOutput<T>> {
    if sequences.is_empty() || sequences.len() != labels.len() {
        return Err(Error::input(format!(
            "batch of {} sequences with {} labels",
            sequences.len(),
            labels.len()
        )));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= params.config.n_speakers) {
        return Err(Error::input(format!("label {l} out of range for {} speakers", params.config.n_speakers)));
    }
    let shards: Vec<(usize, usize)> = (0..sequences.len())
        .step_by(SHARD_SIZE)
        .map(|s| (s, (s + SHARD_SIZE).min(sequences.len())))
        .collect();
    let parts = exec.map(&shards, |&(a, b)| -> Result<BatchOutput<T>> {
        let batch = Batch::new(&sequences[a..b], params.config.input_dim)?;
        Ok(model::backward(params, &batch, &labels[a..b]))
    });
    let mut total: Option<BatchOutput<T>> = None;
    for p in parts {
        let p = p?;
        match &mut total {
            None => total = Some(p),
            Some(t) => t.accumulate(&p),
        }
    }
    let mut total = total.unwrap();
    total.scale(1.0 / sequences.len() as f64);
    total.grads.check_finite("gradient")?;
    Ok(total)
}
