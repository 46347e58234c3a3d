//! Traffic simulation of compromised adaptive cruise control, with the
//! detectors and impact metrics used to study it.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod attack;
pub mod canbus;
pub mod cli;
pub mod config;
pub mod detect;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod models;
pub mod network;
pub mod observe;
pub mod rng;

pub use error::{Error, Result};
