//! Decomposed multiplicative error models for realized volatility: AMEM,
//! Component-MEM and MEM-MIDAS, their estimation and inference, GARCH-type
//! and HAR benchmarks, and forecast evaluation.

pub mod benchmarks;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod inference;
pub mod mem;
pub mod midas;
pub mod optim;
pub mod timeseries;

pub use error::{Error, Result};
