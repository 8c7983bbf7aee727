//! Zero-shot diffusion image morphing: cached-inversion feature injection,
//! anchor-prompt cross-attention, and morphing-oriented evaluation metrics.

pub mod analysis;
pub mod cache;
pub mod config;
pub mod denoiser;
pub mod engine;
pub mod error;
pub mod io;
pub mod math;
pub mod metrics;
pub mod pipeline;
pub mod prompting;
pub mod rng;
pub mod schedule;

pub use error::{Error, Result};
