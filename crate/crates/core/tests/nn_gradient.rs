mod common;

use common::gradient::{check, instance, reduced};
use spkid_core::nn::ModelConfig;
use spkid_core::rng::Rng;

#[test]
fn every_parameter_matches_finite_difference() {
    for seed in 0..5 {
        let inst = instance(seed, reduced(seed), &[7, 7, 7]);
        let n = inst.params.n_params();
        let (err, at) = check(&inst, 0..n);
        assert!(err < 1e-4, "seed {seed}: relative error {err} at {at}");
    }
}

#[test]
fn masked_batch_matches_finite_difference() {
    let inst = instance(42, reduced(0), &[7, 3, 5, 1]);
    let n = inst.params.n_params();
    let (err, at) = check(&inst, 0..n);
    assert!(err < 1e-4, "relative error {err} at {at}");
}

#[test]
fn full_width_sampled_parameters() {
    let inst = instance(7, ModelConfig::new(5, 3), &[7, 7]);
    let n = inst.params.n_params();
    let mut pick = Rng::new(99);
    let coords: Vec<usize> = (0..300).map(|_| pick.below(n)).collect();
    let (err, at) = check(&inst, coords.into_iter());
    assert!(err < 1e-4, "relative error {err} at {at}");
}
