//! Post-layer-norm transformer encoder shared by the teacher and the
//! students, with pooling, a linear classification head and the
//! teacher-to-student downsampling projection.

mod config;
mod heads;
mod model;
mod store;

pub use config::{count_params, implied_vocab_size, EncoderConfig};
pub use heads::{classify_logits, pool, project_down, ClassifierHead, DownsampleProjection, PoolingMode};
pub use model::{EncoderModel, LAYER_NORM_EPS};
pub use store::{ModelBundle, ModelPaths};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::numcore::{Scalar, Tensor};

pub const INIT_STD: f64 = 0.02;

/// Normal(0, σ) truncated to ±2σ by resampling.
pub(crate) fn truncated_normal<T: Scalar, R: Rng + ?Sized>(shape: &[usize], std: f64, rng: &mut R) -> Tensor<T> {
    let dist = Normal::new(0.0, std).expect("positive std");
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| loop {
            let x: f64 = dist.sample(rng);
            if x.abs() <= 2.0 * std {
                break T::lit(x);
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches")
}
