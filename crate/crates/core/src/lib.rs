//! Timing side-channel analysis for photon-counting QKD receivers.
//!
//! Detectors in a QKD receiver do not all respond with the same delay. When
//! click times are announced publicly, those delays tell an eavesdropper
//! which detector fired, and hence part of the secret bit. This crate:
//!
//! - models each detector's timing response ([`timing_model`]),
//! - fits that model to measured histograms ([`estimation`]),
//! - computes the mutual information between secret bit and timestamp, with
//!   and without timestamp coarsening or offset compensation ([`leakage`]),
//! - simulates detection sessions and an eavesdropper's MAP attack on the
//!   public record ([`simulation`]).
//!
//! The density, quadrature and channel code is generic over [`Real`]
//! (`f32`/`f64`); the aliases below fix the scalar to `f64`, which is what
//! the receiver-level analyses, fitting and simulation use.
//!
//! ```
//! use timeleak::{leakage, ReceiverModel};
//!
//! let report = leakage::average_leakage(&ReceiverModel::table1());
//! assert!(report.mi_continuous_bits > 0.03);
//! ```

pub mod error;
pub mod estimation;
pub mod format;
pub mod leakage;
pub mod quadrature;
pub mod scalar;
pub mod simulation;
pub mod timing_model;

pub use error::{Error, Result};
pub use scalar::Real;

pub use leakage::{Basis, Bit, Grouping, LeakageReport, ReceiverModel, SweepResult};

/// Detector timing response in double precision.
pub type DetectorResponse = timing_model::Response<f64>;
/// Detector timing response in single precision.
pub type DetectorResponseF32 = timing_model::Response<f32>;
/// Binary secret channel in double precision.
pub type BitChannel = leakage::Channel<f64>;
/// Binary secret channel in single precision.
pub type BitChannelF32 = leakage::Channel<f32>;
pub type TimeGrid = timing_model::TimeGrid<f64>;
