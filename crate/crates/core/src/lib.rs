//! Position-bias-aware CTR prediction with teacher–student distillation.
//!
//! A position-aware teacher tower and a position-free student tower share
//! one base module; the student learns from clicks and from the teacher's
//! outputs and is the only tower served.

pub mod baselines;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod distill;
pub mod error;
pub mod eval;
pub mod method;
pub mod model;
pub mod nn;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use method::{Method, ModelName};
