//! Principal eigenvalues, dynamics and critical speeds for a road–field
//! reaction-diffusion system with a niche moving at constant speed.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod config;
pub mod discretization;
pub mod dynamics;
pub mod eigen;
pub mod error;
pub mod linalg;
pub mod model;
pub mod verify;

pub use error::{Error, Result};
