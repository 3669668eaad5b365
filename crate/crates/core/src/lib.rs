//! Desk-scale machine-unlearning laboratory for text-conditioned
//! autoregressive token generation.
//!
//! The pipeline: a synthetic (genre, mood) → token-sequence world
//! ([`dataset`]), a small causal transformer trained on it ([`model`]),
//! Gradient Ascent and Random Labeling unlearning of a forget set
//! ([`unlearn`]), and Fréchet / classifier-KL / contrastive-alignment
//! evaluation ([`metrics`]), orchestrated by a CLI ([`harness`]).
//!
//! The numeric kernels in [`numerics`] are generic over the float type; the
//! rest of the crate runs in `f64` through the aliases below.

pub mod dataset;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod seed;
pub mod unlearn;

/// Float type used by the experiment pipeline.
pub type Real = f64;
pub type Tensor = numerics::Tensor<Real>;
pub type Graph = numerics::Graph<Real>;
pub type AdamState = numerics::AdamState<Real>;
pub type Tensor32 = numerics::Tensor<f32>;
pub type Graph32 = numerics::Graph<f32>;
