//! Crisis-text classification toolkit.
//!
//! Builds labelled datasets from multi-annotator agreement, trains compact
//! transformer encoders by knowledge distillation from a larger teacher,
//! fine-tunes and evaluates them, and benchmarks inference throughput.

pub mod analytics;
pub mod bench;
pub mod corpus;
pub mod dataset_builder;
pub mod distill;
pub mod encoder;
pub mod error;
pub mod finetune;
pub mod numcore;
pub mod rng;

pub use error::{Error, Result};
