//! Log-likelihood ratio test between the fixed-phase and random-phase
//! hypotheses from the good events of a run.

use serde::{Deserialize, Serialize};

use super::predict::{predict_conditional_coincidence, Hypothesis};
use crate::protocol::{DetectionEvent, GoodClass};

/// Floor and ceiling applied to model probabilities so a deterministic
/// prediction never yields an infinite log-ratio.
pub const LLR_EPSILON: f64 = 1e-9;

/// ln(1000): posterior odds of 1000:1 from even priors.
pub const DEFAULT_THRESHOLD_NATS: f64 = 6.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    VanEnkFuchs,
    RudolphSanders,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminationResult {
    /// Log-likelihood ratio, van Enk-Fuchs over Rudolph-Sanders, in nats.
    pub llr: f64,
    pub verdict: Verdict,
    pub n_good_used: u64,
    pub n_coincidence: u64,
    pub threshold: f64,
    /// `exp(-|llr|)` capped at 1.
    pub error_bound: f64,
}

/// Sums per-event log-likelihood ratios over the good events, each scored
/// with the predictions at that event's own analyzer setting. Events that
/// are not good are skipped.
pub fn discriminate(events: &[DetectionEvent], threshold: f64) -> DiscriminationResult {
    let clamp = |p: f64| p.clamp(LLR_EPSILON, 1.0 - LLR_EPSILON);
    let mut llr = 0.0;
    let mut used = 0;
    let mut coincidences = 0;
    for event in events.iter().filter(|e| e.good) {
        let vef = clamp(predict_conditional_coincidence(Hypothesis::VanEnkFuchs, event.beta, event.delta));
        let rs = clamp(predict_conditional_coincidence(Hypothesis::RudolphSanders, event.beta, event.delta));
        llr += if event.good_class == GoodClass::Coincidence11 {
            coincidences += 1;
            (vef / rs).ln()
        } else {
            ((1.0 - vef) / (1.0 - rs)).ln()
        };
        used += 1;
    }
    let verdict = if used == 0 || llr.abs() < threshold {
        Verdict::Inconclusive
    } else if llr > 0.0 {
        Verdict::VanEnkFuchs
    } else {
        Verdict::RudolphSanders
    };
    DiscriminationResult {
        llr,
        verdict,
        n_good_used: used,
        n_coincidence: coincidences,
        threshold,
        error_bound: (-llr.abs()).exp().min(1.0),
    }
}
