//! Core algorithms for certainty-gated semi-supervised segmentation training.
//!
//! Everything in this crate is pure math over heap-allocated arrays: the
//! synthetic scene generator, the weak/strong augmentation pipeline, a small
//! encoder-decoder with hand-written backprop, the uncertainty-weighted loss
//! family, and the brute-force oracles used to verify the vectorized paths.
//! No IO lives here; the `uccl` companion crate owns files, formats, and the
//! CLI. The crate is `no_std` (with `alloc`) outside of its test builds.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod data;
pub mod losses;
pub mod mathf;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod trainer;
pub mod verification;
