//! Closed-form outcome probabilities in the one-photon sector and the
//! small-squeezing rate formulas.
//!
//! With `c = cos β`, `s = sin β` and effective phase `θ = Δ + δ` the
//! one-photon sector `|HV> + e^{iΔ}|VH>` analyzed at both ports gives
//!
//! ```text
//! P11    = c²s²(1 + cos θ)
//! P00    = c²s²(1 + cos θ)
//! P_diff = c⁴ + s⁴ − 2c²s² cos θ
//! ```
//!
//! Averaging over a uniform `Δ` removes the `cos θ` terms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::SqueezeParams;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hypothesis {
    VanEnkFuchs,
    RudolphSanders,
    TwoSource { phase_difference_rad: f64 },
}

impl Hypothesis {
    pub fn label(&self) -> String {
        match self {
            Hypothesis::VanEnkFuchs => "vef".to_string(),
            Hypothesis::RudolphSanders => "rs".to_string(),
            Hypothesis::TwoSource { phase_difference_rad } => format!("two_source({phase_difference_rad})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectorPrediction<T> {
    /// One photon at each pass port.
    pub p11: T,
    /// Exactly one pass port fires.
    pub p_diff: T,
    /// Neither pass port fires.
    pub p00: T,
    /// `p11 / (p11 + p_diff)`.
    pub conditional: T,
}

pub fn predict_sector<T: Real>(hypothesis: Hypothesis, beta: T, delta: T) -> SectorPrediction<T> {
    let (s, c) = beta.sin_cos();
    let c2s2 = c * c * s * s;
    let quartic = c * c * c * c + s * s * s * s;
    let cos_theta = match hypothesis {
        Hypothesis::VanEnkFuchs => Some(delta.cos()),
        Hypothesis::TwoSource { phase_difference_rad } => Some((T::lit(phase_difference_rad) + delta).cos()),
        Hypothesis::RudolphSanders => None,
    };
    let (p11, p_diff) = match cos_theta {
        Some(ct) => (c2s2 * (T::one() + ct), quartic - (c2s2 + c2s2) * ct),
        None => (c2s2, quartic),
    };
    SectorPrediction {
        p11,
        p_diff,
        p00: p11,
        conditional: p11 / (p11 + p_diff),
    }
}

/// Probability of a coincidence given a good event, one-photon sector,
/// absorbing polarizers.
pub fn predict_conditional_coincidence<T: Real>(hypothesis: Hypothesis, beta: T, delta: T) -> T {
    predict_sector(hypothesis, beta, delta).conditional
}

/// Probability that a shot lands in the one-photon sector:
/// `2λ²(1 − λ²)²`.
pub fn predict_good_event_rate<T: Real>(params: &SqueezeParams<T>) -> T {
    let x = params.lambda() * params.lambda();
    let one_minus = T::one() - x;
    (x + x) * one_minus * one_minus
}

/// `P(n = 1) / P(n ≥ 2)` for the untruncated joint state, using
/// `Σ_{n≥2} (n+1) x^n = x²(3 − 2x)/(1 − x)²` with `x = λ²`.
pub fn contamination_ratio<T: Real>(params: &SqueezeParams<T>) -> Result<T> {
    if params.r() <= T::zero() {
        return Err(Error::UndefinedRatio);
    }
    let x = params.lambda() * params.lambda();
    let one_minus = T::one() - x;
    let two = T::lit(2.0);
    Ok(two * one_minus * one_minus / (x * (T::lit(3.0) - two * x)))
}

/// Scans pure rotations (no retardance) for the largest conditional
/// coincidence a two-source state with phase difference `phase_difference`
/// reaches. Returns `(beta, conditional)` at the best grid point.
pub fn rotation_scan<T: Real>(phase_difference: f64, betas: &[T]) -> Option<(T, T)> {
    betas
        .iter()
        .map(|&b| {
            (
                b,
                predict_conditional_coincidence(
                    Hypothesis::TwoSource {
                        phase_difference_rad: phase_difference,
                    },
                    b,
                    T::zero(),
                ),
            )
        })
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_4, FRAC_PI_8, PI};

    #[test]
    fn endpoints() {
        assert!((predict_conditional_coincidence(Hypothesis::VanEnkFuchs, FRAC_PI_4, 0.0) - 1.0).abs() < 1e-15);
        assert_eq!(predict_conditional_coincidence(Hypothesis::VanEnkFuchs, 0.0, 0.0), 0.0);
        assert!((predict_conditional_coincidence(Hypothesis::RudolphSanders, FRAC_PI_4, 0.0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((predict_conditional_coincidence(Hypothesis::RudolphSanders, FRAC_PI_8, 0.0) - 1.0 / 7.0).abs() < 1e-15);
        assert!((predict_conditional_coincidence(Hypothesis::VanEnkFuchs, FRAC_PI_8, 0.0) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rudolph_sanders_ignores_retardance() {
        let a = predict_sector(Hypothesis::RudolphSanders, 0.3, 0.0);
        let b = predict_sector(Hypothesis::RudolphSanders, 0.3, 1.9);
        assert_eq!(a, b);
    }

    #[test]
    fn compensated_fringe_is_total() {
        let d = 1.0;
        let p = predict_sector(Hypothesis::TwoSource { phase_difference_rad: d }, FRAC_PI_4, -d);
        assert!((p.conditional - 1.0).abs() < 1e-15);
        assert!(p.p_diff.abs() < 1e-15);
    }

    #[test]
    fn probabilities_sum_to_one() {
        for i in 0..50 {
            let beta = i as f64 * 0.0617;
            let delta = i as f64 * 0.131;
            for h in [
                Hypothesis::VanEnkFuchs,
                Hypothesis::RudolphSanders,
                Hypothesis::TwoSource { phase_difference_rad: 2.2 },
            ] {
                let p = predict_sector(h, beta, delta);
                assert!((p.p11 + p.p_diff + p.p00 - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rotation_alone_cannot_reach_total_correlation() {
        let grid: Vec<f64> = (0..180).map(|i| i as f64 * PI / 180.0).collect();
        let (beta, best) = rotation_scan(1.0, &grid).unwrap();
        // β and π/2 − β give the same curve
        assert!((beta - FRAC_PI_4).abs() < 1e-12 || (beta - 3.0 * FRAC_PI_4).abs() < 1e-12);
        // P11 = (1 + cos Δ)/4 and P_diff = (1 − cos Δ)/2 at β = π/4
        let expected = (1.0 + 1.0f64.cos()) / (3.0 - 1.0f64.cos());
        assert!((best - expected).abs() < 1e-12);
        assert!(best < 1.0);
    }

    #[test]
    fn good_event_rate_values() {
        let p = |r: f64| predict_good_event_rate(&SqueezeParams::new(r, 0.0).unwrap());
        assert_eq!(p(0.0), 0.0);
        // mpmath reference values
        assert!((p(0.01) - 1.999466747546363e-4).abs() < 1e-16);
        assert!((p(0.1) - 1.947466448358730e-2).abs() < 1e-15);
    }

    #[test]
    fn contamination_values() {
        let c = |r: f64| contamination_ratio(&SqueezeParams::new(r, 0.0).unwrap());
        assert!(matches!(c(0.0), Err(Error::UndefinedRatio)));
        // mpmath series sums
        assert!((c(0.01).unwrap() - 6666.222234074004).abs() < 1e-8);
        assert!((c(0.1).unwrap() - 66.22340669799600).abs() < 1e-10);
    }

    #[test]
    fn contamination_monotone_decreasing() {
        let mut last = f64::INFINITY;
        for i in 1..=1000 {
            let r = i as f64 / 1000.0;
            let v = contamination_ratio(&SqueezeParams::new(r, 0.0).unwrap()).unwrap();
            assert!(v < last, "r = {r}");
            last = v;
        }
    }

    #[test]
    fn single_precision_predictions() {
        let p = predict_sector::<f32>(Hypothesis::RudolphSanders, std::f32::consts::FRAC_PI_4, 0.0);
        assert!((p.conditional - 1.0 / 3.0).abs() < 1e-6);
    }
}
