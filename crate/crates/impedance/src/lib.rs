//! Helmholtz impedance-to-impedance maps on rectangular cells.
//!
//! The crate is organised bottom-up:
//!
//! - [`solver`]: finite-difference Helmholtz solves with impedance and PML edges.
//! - [`maps`]: assembled impedance maps, weighted operator norms, composites,
//!   the frequency projection and coherent-state data.
//! - [`oracle`]: the high-frequency ray predictor (weighted Diracs on interface
//!   phase space) and an independent event-driven tracer.
//! - [`schwarz`]: the parallel overlapping Schwarz method on strips and its
//!   error-propagation operator.
//! - [`io`]: binary and CSV export formats.
//!
//! Internally everything is semiclassical: the operator is −ħ²Δ − 1 with
//! ħ = 1/k, and impedance data are written with ħD = (ħ/i)∂.

pub mod error;
pub mod io;
pub mod linalg;
pub mod maps;
pub mod oracle;
pub mod schwarz;
pub mod solver;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

/// Crate version embedded in experiment outputs.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
