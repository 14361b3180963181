//! Simulation and statistical discrimination of two ensemble hypotheses for
//! two-mode squeezed light: every wavepacket sharing one fixed phase
//! (van Enk-Fuchs) versus an independent uniform phase per wavepacket
//! (Rudolph-Sanders).
//!
//! Two squeezed wavepackets with exchanged polarization assignments are
//! combined, post-selected on one photon per spatial mode, and analyzed with
//! rotated polarizers. The coincidence statistics at 45 degrees separate the
//! hypotheses; a retardance sweep recovers the relative phase of two fixed
//! sources.
//!
//! The state algebra ([`fock`], [`optics`], [`analysis::predict`]) is generic
//! over [`Real`]; the aliases below pin the common `f64` instantiations.

pub mod analysis;
pub mod error;
pub mod fock;
pub mod io;
pub mod optics;
pub mod oracle;
pub mod protocol;
pub mod rng;
pub mod scalar;
pub mod sources;

pub use error::{Error, Result};
pub use scalar::Real;

pub type State = fock::PureState<f64>;
pub type State32 = fock::PureState<f32>;
pub type Squeeze = fock::SqueezeParams<f64>;
pub type Squeeze32 = fock::SqueezeParams<f32>;
pub type Analyzer = optics::AnalyzerSetting<f64>;
pub type OutcomeDistribution = optics::OutcomeDistribution<f64>;
pub type Prediction = analysis::predict::SectorPrediction<f64>;
