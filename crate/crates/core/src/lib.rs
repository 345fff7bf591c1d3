//! Generative spatial-correlation modeling for fluid antenna systems (FAS).
//!
//! The port-indexed channel of an `N`-port linear aperture is modeled two ways:
//!
//! * exactly, as a circularly-symmetric complex Gaussian vector with Clarke's
//!   sinc-shaped Toeplitz covariance ([`correlation`]);
//! * generatively, as a finite-order complex AR(p) Gauss-Markov recursion fitted
//!   by Yule-Walker correlation matching ([`arfit`], [`generator`]).
//!
//! On top of the AR(p) surrogate the crate evaluates the distribution of the
//! selection gain `max_k |g_k|^2` by a particle flow ([`selection_gain`]) and
//! reconstructs the full channel from sparse noisy port observations, either by
//! dense Gaussian conditioning or by a Kalman filter / RTS smoother that runs in
//! time linear in `N` ([`interpolation`]).

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arfit;
pub mod correlation;
mod error;
pub mod generator;
pub mod interpolation;
pub mod rng;
pub mod selection_gain;
pub mod stats;

pub use error::{Error, Result};

pub use num_complex::Complex64;
