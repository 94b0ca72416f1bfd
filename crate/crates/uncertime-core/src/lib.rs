//! Core engine for uncertainty-aware remaining-time prediction on event logs.
//!
//! Everything in this crate is pure, seeded computation over `f64` buffers:
//! a small reverse-mode autodiff engine, neural layers with weight-space
//! dropout (fixed and concrete), heteroscedastic losses, Adam training,
//! Monte-Carlo dropout inference with an epistemic/aleatoric decomposition,
//! empirical interval calibration, a transition-system baseline and the
//! evaluation utilities built on top.
//!
//! The crate is `no_std` (with `alloc`); all file formats, CSV parsing and
//! the command-line surface live in the companion `uncertime` crate.
//! Transcendental functions go through [`libm`] so results are bit-identical
//! across platforms for a given seed.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod ats;
pub mod autodiff;
pub mod calibrate;
pub mod eval;
pub mod eventlog;
pub mod infer;
pub mod layers;
pub mod loss;
pub mod optim;
pub mod rng;
pub mod stats;
pub mod synth;
pub mod tensor;
pub mod train;

mod fmath;

pub use tensor::Tensor;
