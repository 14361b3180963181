//! Relative phase of two fixed-phase sources from a retardance sweep at
//! β = π/4. There the conditional coincidence is
//! `g(θ) = (1 + cos θ) / (3 − cos θ)` with `θ = Δ + δ`, which inverts to
//! `cos θ = (3g − 1) / (1 + g)`.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::stats::Z_95;
use crate::error::{Error, Result};
use crate::protocol::{DetectionEvent, GoodClass};
use crate::scalar::{reduce_angle, wrap_pi};

/// Grid points closer than this (radians) are treated as one setting.
const GRID_TOLERANCE: f64 = 1e-9;

const MIN_GRID_POINTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimationMethod {
    FringeFit,
    TwoQuadrature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseEstimate {
    /// Estimated `φ₂ − φ₁` in `(−π, π]`.
    pub delta_hat: f64,
    pub ci_halfwidth: f64,
    pub n_good_used: u64,
    pub method: EstimationMethod,
    /// Fringe amplitude indistinguishable from zero; the interval is widened
    /// to π.
    pub degenerate: bool,
}

/// Good-event counts at one retardance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringePoint {
    pub delta: f64,
    pub n_good: u64,
    pub n_coincidence: u64,
}

impl FringePoint {
    pub fn fraction(&self) -> f64 {
        self.n_coincidence as f64 / self.n_good as f64
    }

    /// Observed `cos(Δ + δ)`.
    pub fn cosine(&self) -> f64 {
        fraction_to_cosine(self.fraction())
    }
}

pub fn cosine_to_fraction(cos_theta: f64) -> f64 {
    (1.0 + cos_theta) / (3.0 - cos_theta)
}

pub fn fraction_to_cosine(g: f64) -> f64 {
    (3.0 * g - 1.0) / (1.0 + g)
}

/// Binomial variance of the linearized cosine at true cosine `cos_theta`.
fn cosine_variance(cos_theta: f64, n: f64) -> f64 {
    let g = cosine_to_fraction(cos_theta.clamp(-1.0, 1.0));
    let slope = 4.0 / ((1.0 + g) * (1.0 + g));
    slope * slope * g * (1.0 - g) / n
}

/// Groups good events by retardance, in increasing δ.
pub fn fringe_points(events: &[DetectionEvent]) -> Vec<FringePoint> {
    let mut groups: BTreeMap<u64, FringePoint> = BTreeMap::new();
    for e in events.iter().filter(|e| e.good) {
        let delta = reduce_angle(e.delta, TAU);
        // bucket on a fixed lattice so equal settings from CSV collapse
        let key = (delta / GRID_TOLERANCE).round() as u64;
        let p = groups.entry(key).or_insert(FringePoint {
            delta,
            n_good: 0,
            n_coincidence: 0,
        });
        p.n_good += 1;
        if e.good_class == GoodClass::Coincidence11 {
            p.n_coincidence += 1;
        }
    }
    groups.into_values().collect()
}

pub fn estimate_phase_difference(events: &[DetectionEvent], method: EstimationMethod) -> Result<PhaseEstimate> {
    let points = fringe_points(events);
    match method {
        EstimationMethod::FringeFit => fit_fringe(&points),
        EstimationMethod::TwoQuadrature => two_quadrature(&points),
    }
}

/// Weighted least squares of the linearized cosine `a + b cos δ + c sin δ`,
/// weights equal to the good-event count at each point. Then `b = cos Δ`
/// and `c = −sin Δ`, so the fringe maximum sits at `δ* = −Δ`.
pub fn fit_fringe(points: &[FringePoint]) -> Result<PhaseEstimate> {
    let used: Vec<&FringePoint> = points.iter().filter(|p| p.n_good > 0).collect();
    if used.len() < MIN_GRID_POINTS {
        return Err(Error::Estimation(format!(
            "fringe fit needs at least {MIN_GRID_POINTS} retardance points with good events, got {}",
            used.len()
        )));
    }
    let basis = |d: f64| Vector3::new(1.0, d.cos(), d.sin());
    let mut normal = Matrix3::zeros();
    let mut rhs = Vector3::zeros();
    for p in &used {
        let x = basis(p.delta);
        let w = p.n_good as f64;
        normal += w * x * x.transpose();
        rhs += w * p.cosine() * x;
    }
    let inverse = normal
        .try_inverse()
        .ok_or_else(|| Error::Estimation("retardance grid does not span the fringe basis".into()))?;
    let coef = inverse * rhs;

    // sandwich covariance with binomial variance at the fitted cosine
    let mut meat = Matrix3::zeros();
    for p in &used {
        let x = basis(p.delta);
        let w = p.n_good as f64;
        let var = cosine_variance(coef.dot(&x), w);
        meat += (w * w * var) * x * x.transpose();
    }
    let cov = inverse * meat * inverse.transpose();

    let (b, c) = (coef[1], coef[2]);
    let delta_hat = wrap_pi((-c).atan2(b));
    let amp2 = b * b + c * c;
    let grad = Vector3::new(0.0, c / amp2, -b / amp2);
    let var_delta = (grad.transpose() * cov * grad)[0].max(0.0);

    let amplitude = amp2.sqrt();
    let grad_amp = Vector3::new(0.0, b / amplitude, c / amplitude);
    let sd_amp = (grad_amp.transpose() * cov * grad_amp)[0].max(0.0).sqrt();
    let degenerate = !(amplitude > 3.0 * sd_amp) || !amplitude.is_finite();

    Ok(PhaseEstimate {
        delta_hat: if delta_hat.is_finite() { delta_hat } else { 0.0 },
        ci_halfwidth: if degenerate {
            PI
        } else {
            (Z_95 * var_delta.sqrt()).max(f64::EPSILON)
        },
        n_good_used: used.iter().map(|p| p.n_good).sum(),
        method: EstimationMethod::FringeFit,
        degenerate,
    })
}

/// `cos Δ` from the δ = 0 setting and `−sin Δ` from δ = π/2; using both
/// settings fixes the sign that a single setting leaves open.
pub fn two_quadrature(points: &[FringePoint]) -> Result<PhaseEstimate> {
    let find = |target: f64| {
        points
            .iter()
            .find(|p| p.n_good > 0 && wrap_pi(p.delta - target).abs() < 1e-6)
            .copied()
    };
    let (Some(p0), Some(p1)) = (find(0.0), find(FRAC_PI_2)) else {
        return Err(Error::Estimation(
            "two-quadrature estimate needs good events at δ = 0 and δ = π/2".into(),
        ));
    };
    let cos_d = p0.cosine();
    let sin_d = -p1.cosine();
    let var_cos = cosine_variance(cos_d, p0.n_good as f64);
    let var_sin = cosine_variance(-sin_d, p1.n_good as f64);
    let r2 = cos_d * cos_d + sin_d * sin_d;
    let var_delta = (cos_d * cos_d * var_sin + sin_d * sin_d * var_cos) / (r2 * r2);
    let degenerate = r2.sqrt() <= 3.0 * (var_cos + var_sin).sqrt() || r2 == 0.0;
    Ok(PhaseEstimate {
        delta_hat: wrap_pi(sin_d.atan2(cos_d)),
        ci_halfwidth: if degenerate {
            PI
        } else {
            (Z_95 * var_delta.sqrt()).max(f64::EPSILON)
        },
        n_good_used: p0.n_good + p1.n_good,
        method: EstimationMethod::TwoQuadrature,
        degenerate,
    })
}
