//! Two-timescale SGD laboratory.
//!
//! Simulates stochastic gradient descent on losses of the form
//! `F(z) = f(x, εy)`, where `x` is fast and `y` is slow. Alongside the
//! simulator it provides the limiting ODE and SDE dynamics, regime
//! segmentation, phenomenon detection and a coordinate-dominance estimator.

// `!(v > 0.0)` is how validators reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dominance;
pub mod flow;
pub mod inner;
pub mod io;
pub mod model;
pub mod regime;
pub mod rng;
pub mod sgd;
pub mod stats;
