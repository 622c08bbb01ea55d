#![allow(clippy::needless_range_loop)]

pub mod checkpoint;
pub mod dataset;
pub mod dsp;
pub mod error;
pub mod exec;
pub mod features;
pub mod ica;
pub mod kpca;
pub mod matrix;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod signal;
