//! Heterogeneous recurrent spiking networks: construction, Lyapunov spectra,
//! task-agnostic pruning, and chaotic time-series evaluation.

pub mod data;
pub mod dynamics;
pub mod error;
pub mod eval;
pub mod lyapunov;
pub mod network;
pub mod pruning;
pub mod seed;
pub mod tsopt;

pub use error::{Error, Result};
