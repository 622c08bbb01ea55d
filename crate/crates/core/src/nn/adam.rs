use super::Params;
use crate::matrix::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T = f64> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Params<T>,
    pub v: Params<T>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig, params: &Params<T>) -> Self {
        Self {
            config,
            step: 0,
            m: Params::zeros(params.config),
            v: Params::zeros(params.config),
        }
    }

    /// One bias-corrected update of `params` against `grads`.
    pub fn step(&mut self, params: &mut Params<T>, grads: &Params<T>) {
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, epsilon } = self.config;
        let c1 = T::of(1.0 - beta1.powi(self.step as i32));
        let c2 = T::of(1.0 - beta2.powi(self.step as i32));
        let (lr, epsilon) = (T::of(lr), T::of(epsilon));
        let (b1, nb1) = (T::of(beta1), T::of(1.0 - beta1));
        let (b2, nb2) = (T::of(beta2), T::of(1.0 - beta2));
        let g_all = grads.slices();
        for (((p, m), v), g) in params
            .slices_mut()
            .into_iter()
            .zip(self.m.slices_mut())
            .zip(self.v.slices_mut())
            .zip(g_all)
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + nb1 * g[i];
                v[i] = b2 * v[i] + nb2 * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= lr * mh / (vh.sqrt() + epsilon);
            }
        }
    }
}
