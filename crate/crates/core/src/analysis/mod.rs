//! Closed-form predictions, source discrimination and phase estimation.

pub mod discriminate;
pub mod phase;
pub mod predict;
pub mod stats;

pub use discriminate::{discriminate, DiscriminationResult, Verdict, DEFAULT_THRESHOLD_NATS, LLR_EPSILON};
pub use phase::{
    cosine_to_fraction, estimate_phase_difference, fraction_to_cosine, EstimationMethod, FringePoint, PhaseEstimate,
};
pub use predict::{
    contamination_ratio, predict_conditional_coincidence, predict_good_event_rate, predict_sector,
    rotation_scan, Hypothesis, SectorPrediction,
};
