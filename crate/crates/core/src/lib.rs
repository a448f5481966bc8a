//! Time-varying phase synchronization between time series.
//!
//! Band-pass filtering and Hilbert phases ([`signals`]), windowed and
//! instantaneous synchronization metrics ([`psmetrics`]), cyclic phase
//! permutation surrogates ([`surrogates`]), the Monte-Carlo simulation
//! harness ([`simharness`]) and k-means connectivity states ([`states`]).

pub mod circular;
pub mod error;
pub mod io;
pub mod oracle;
pub mod psmetrics;
pub mod signals;
pub mod simharness;
pub mod states;
pub mod surrogates;

pub use error::{Error, Result};
pub use psmetrics::{Metric, PsTensor, WindowSpec};
pub use signals::{BandSpec, PhaseMatrix, RoiDataset};
