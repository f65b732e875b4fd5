//! Multi-system scalar scientists.
//!
//! Each physical system gets its own scalar network `S(x, y)`; a shared
//! linear layer over a fixed bank of 172 derivative terms of `S` predicts the
//! dynamics. The crate holds the derivative engine, the analytic systems, the
//! curriculum trainer, the interpretability analyses, an RK4 rollout and a
//! portable run store.

pub mod analysis;
pub mod autodiff;
pub mod error;
pub mod model;
pub mod physics;
pub mod plot;
pub mod seed;
pub mod sim;
pub mod store;
pub mod train;

pub use error::{MassError, Result};

/// Version string recorded in every run manifest.
pub const CODE_VERSION: &str = concat!("mass-core ", env!("CARGO_PKG_VERSION"));
