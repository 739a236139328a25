//! Exact Fock-space simulation of a linear-optical heralded amplifier for
//! single-photon entanglement of time-bin qubits.
//!
//! The crate is organized bottom-up:
//!
//! * [`fock`]: sparse multi-photon states over labelled modes.
//! * [`elements`]: beam splitters, variable splitters, polarizing splitters
//!   and phase flips as substitutions on creation operators.
//! * [`protocol`]: the two-party circuit, heralding and correction.
//! * [`analysis`]: closed-form expressions, sweeps and cross-validation.
//! * [`checks`]: the self-verification suite.

pub mod analysis;
pub mod checks;
pub mod elements;
pub mod error;
pub mod fock;
pub mod protocol;

pub use num_complex::Complex64;

pub use analysis::{Source, SweepRow, VerificationReport};
pub use elements::{Component, LinearModeMap};
pub use error::{Error, Result};
pub use fock::{FockBasis, MixedState, ModeId, Polarization, PureState, Spatial, TimeBin};
pub use protocol::{
    DetectionPattern, Detector, DetectorModel, DetectorPair, ProtocolConfig, ProtocolResult, Side,
    Simulator,
};
