//! Probabilistic spatio-temporal forecasting on site graphs with a
//! convolutional graph auto-encoder.
//!
//! Measurement sites form an undirected weighted graph; each node carries a
//! history of 30-minute observations. The model learns the conditional
//! distribution of a future value at every node given lagged histories
//! across the whole graph, then answers queries by sampling: feed fresh
//! standard-normal latent vectors through the trained decoder and read off
//! an ensemble per node.
//!
//! The pieces, bottom to top:
//!
//! * [`tensor`] / [`autodiff`] — dense 64-bit tensors and a reverse-mode
//!   tape, enough to express and train the model. [`rng`] supplies seeded
//!   uniform/normal streams so runs are bit-reproducible.
//! * [`graph`] / [`spectral`] — correlation- or distance-built site graphs;
//!   normalized Laplacian with a Jacobi eigensolver, Chebyshev filters and
//!   the renormalized propagation matrix.
//! * [`features`] — mutual-information lag selection and windowed example
//!   assembly.
//! * [`model`] — the auto-encoder itself: graph feature extraction,
//!   encoder, reparameterized latent, decoder, KL + reconstruction loss,
//!   SGD training, checkpointing.
//! * [`forecast`] — test-time ensembles, empirical quantiles and the
//!   persistence baseline.
//! * [`metrics`] — reliability bias, interval width, CRPS and predictive
//!   entropy.
//! * [`data`] / [`config`] / [`pipeline`] — CSV ingest, synthetic data,
//!   run configuration and the stages behind the `cgae` binary.
//!
//! See the crate `examples/` directory for one runnable walk-through per
//! capability; `examples/full_pipeline.rs` strings them all together.

pub mod autodiff;
pub mod config;
pub mod data;
pub mod error;
pub mod features;
pub mod forecast;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod spectral;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
