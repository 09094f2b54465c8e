//! Hierarchical domain-unsupervised variational autoencoder (HDUVA) toolkit.
//!
//! * [`distributions`]: Gaussian and Dirichlet sampling and KL primitives.
//! * [`mmd`]: composite-kernel maximum mean discrepancy estimators.
//! * [`model`]: encoders, conditional priors, decoder, ELBO assembly.
//! * [`weak_supervision`]: topic aggregation and the MMD Lagrangian.
//! * [`training`]: warm-up, stratified batching, model selection, baselines.
//! * [`scenarios`]: deterministic benchmark generators and evaluation harness.

pub mod distributions;
pub mod error;
pub mod mmd;
pub mod model;
pub mod parallel;
pub mod scenarios;
pub mod special;
pub mod training;
pub mod weak_supervision;

pub use error::{Error, Result};
pub use parallel::Execution;
