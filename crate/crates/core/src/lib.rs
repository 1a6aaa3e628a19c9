//! Conformal prediction regions for a stochastic nonholonomic unicycle on
//! SE(2): dynamics, simulation, Gaussian predictors, split-conformal
//! calibration and region geometry.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod se2;
pub mod dynamics;
pub mod grid;
pub mod bench;
pub mod simulate;
pub mod fingerprint;
pub mod estimate;
pub mod conformal;
pub mod regions;
pub mod cli;
