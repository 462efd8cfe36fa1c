//! Dense arrays, transforms, random numbers and descriptive statistics shared by
//! the rest of the crate.

mod dct;
mod fft;
mod matrix;
mod rng;
mod stats;

pub use dct::{dct2, idct2, Dct2};
pub use fft::{fft_real, ifft_real, FftPlan};
pub use matrix::{Matrix, Tensor3};
pub use num_complex::Complex64;
pub use rng::{derive_seed, Rng};
pub use stats::{mean, moments, Moments};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("invalid length {len}: {reason}")]
    InvalidLength { len: usize, reason: &'static str },
    #[error("empty input")]
    EmptyInput,
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },
}
