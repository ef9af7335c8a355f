//! Video salient object ranking.
//!
//! A small reverse-mode tensor engine, the intra-frame adaptive relation
//! ([`iar`]) and inter-frame dynamic relation ([`idr`]) modules built on it, a
//! pairwise ranking objective, SA-SOR / MAE metrics, rank annotations with
//! dataset statistics, a synthetic moving-rectangle sequence generator and a
//! desk-scale training loop.
//!
//! The crate is `no_std` and only needs `alloc`; enable the `std` feature to
//! get wall-clock timing in training reports.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod annotation;
pub mod error;
pub mod gradcheck;
pub mod iar;
pub mod idr;
pub mod loss;
pub mod maps;
pub mod metrics;
pub mod params;
pub mod ranking;
pub mod synth;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
