//! Communication-constrained distributed nonparametric function estimation.
//!
//! `m` terminals each hold `n` i.i.d. samples drawn from a distribution
//! parameterised by an unknown function `f` on `[0,1]`, and each may send
//! exactly `l` bits to a central decoder. This crate provides:
//!
//! * [`wavelet`]: Haar father/mother functions, projection and exact L² errors.
//! * [`models`]: the five sample-generating models, the sieve truth family,
//!   sample-wise wavelet-coefficient estimators and log-likelihood ratios.
//! * [`regimes`]: effective sample size, regime classification and the
//!   protocol's resolution / truncation parameters.
//! * [`inner`]: finite-alphabet distribution estimation under an `l`-bit budget.
//! * [`protocol`]: the outer quantizer and linear decoder, end to end.
//! * [`harness`]: sweeps, rate fitting, balls-and-bins and tail verifiers.
//!
//! Core numerics are generic over [`Scalar`] (`f32`/`f64`); the aliases below
//! fix the scalar to `f64`, which is what the Monte-Carlo layers use.

// `!(x > 0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod inner;
pub mod models;
pub mod protocol;
pub mod regimes;
pub mod rng;
pub mod scalar;
pub mod wavelet;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type CoeffVec = wavelet::CoeffVector<f64>;
pub type Sieve = models::SieveFunction<f64>;
pub type Params = regimes::RegimeParams<f64>;
pub type Plan = regimes::RegimePlan<f64>;
pub type PlanOpts = regimes::PlanOptions<f64>;
