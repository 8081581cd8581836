//! Simulation and verification of three-party sequential unambiguous state
//! discrimination on polarization qubits.
//!
//! Alice sends one of `a|h> ± b|v>`; Bob performs a non-optimal unambiguous
//! measurement and forwards `|φ±>`; Charlie performs the optimal one. The
//! crate builds both measurements, simulates the chain trial by trial,
//! models the Sagnac-interferometer optics in Jones calculus, and produces
//! error envelopes and photon-counting statistics for the detector table.

pub mod bundle;
pub mod config;
pub mod counting;
pub mod error;
pub mod imperfection;
pub mod optics;
pub mod protocol;
pub mod qstate;
pub mod streams;
pub mod usd;
pub mod validate;

pub use error::{Result, SusdError};
pub use protocol::{Detector, DetectorTable, PortMapping};
pub use qstate::{Operator2, PolarizationState, Sign};
pub use usd::{KrausSet, OutcomeLabel};
