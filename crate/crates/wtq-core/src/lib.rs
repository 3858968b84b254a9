//! Scalar post-training quantization of weight tensors, with the measurement
//! and analysis machinery needed to study it: four quantizer families
//! (equal-mass transport, uniform, piecewise-linear, log-base-2), exact 1-D
//! Wasserstein-2 distances, image fidelity metrics, closed-form distortion
//! bounds, and a toy linear flow-ODE simulator that checks Grönwall-type
//! trajectory-error envelopes empirically.
//!
//! The crate is `no_std` (with `alloc`); all file formats and the CLI live in
//! the companion `wtq-tools` crate.

#![no_std]
#![deny(unsafe_code)]
// Validations are written as `!(x > 0.0)` so NaN lands on the error path;
// the suggested `x <= 0.0` would wave NaN through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod bounds;
pub mod flow;
pub mod metrics;
pub mod quant;
pub mod sum;
pub mod tensor;

pub use quant::{Codebook, QuantMethodSpec, RangeRule};
pub use tensor::{Dtype, QuantArtifact, QuantMethod, TensorContainer, TensorData};
