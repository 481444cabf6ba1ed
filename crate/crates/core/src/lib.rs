//! Noisy low-rank matrix completion under non-uniform entry sampling.
//!
//! The crate implements the nuclear-norm penalized trace-regression
//! estimator on the matrix-completion basis, incoherence and distortion
//! diagnostics for the sampling distribution, matrix-Bernstein deviation
//! bounds for the stochastic error terms, a Varshamov-Gilbert packing that
//! exhibits the minimax spectral-norm rate, and a Monte Carlo harness that
//! verifies the rate empirically.
//!
//! Modules:
//! - [`model`]: sampling distributions, ground truths, noise, data generation
//! - [`estimator`]: the penalized solver, closed forms, lambda rules
//! - [`diagnostics`]: incoherence constants, projector/cone algebra, bounds
//! - [`lowerbound`]: packing construction and lower-bound conditions
//! - [`experiments`]: trials, sweeps, slope fits, calibration
//! - [`io`]: text and JSON file formats

// `!(x > 0.0)` is the NaN-rejecting form of the scale validations here.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod io;
pub mod linalg;
pub mod lowerbound;
pub mod model;
pub mod rng;

pub use error::{Error, Result};
pub use estimator::{
    closed_form_uniform, empirical_moment, fit, objective, resolve_lambda, smooth_gradient,
    svt_prox, FitResult, LambdaRule, RegularizationSpec, SolverConfig,
};
pub use model::{
    generate_dataset, Dataset, Dimensions, GroundTruth, NoiseKind, NoiseModel, Observation,
    SamplingDistribution, TruthKind,
};
