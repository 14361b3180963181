//! Ensemble hypotheses for the phase carried by each emitted wavepacket.

use std::f64::consts::TAU;

use num_complex::Complex;
use rand::Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{make_squeezed_wavepacket, FockKet4, ModeAssignment, PureState, SqueezeParams};
use crate::scalar::{reduce_angle, Real};

/// Phase law for [`SourceModel::CustomPhase`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhaseDistribution {
    Uniform,
    /// Normal distribution wrapped onto the circle.
    WrappedNormal { mean_rad: f64, std_dev_rad: f64 },
    /// Finite set of phases; weights are normalized on validation.
    Discrete { phases_rad: Vec<f64>, weights: Vec<f64> },
}

impl PhaseDistribution {
    fn validate(&self) -> Result<Self> {
        match self {
            PhaseDistribution::Uniform => Ok(self.clone()),
            PhaseDistribution::WrappedNormal { mean_rad, std_dev_rad } => {
                if !mean_rad.is_finite() || !std_dev_rad.is_finite() || *std_dev_rad < 0.0 {
                    return Err(Error::InvalidSource(format!(
                        "wrapped normal needs finite mean and std_dev >= 0, got {mean_rad}, {std_dev_rad}"
                    )));
                }
                Ok(PhaseDistribution::WrappedNormal {
                    mean_rad: reduce_angle(*mean_rad, TAU),
                    std_dev_rad: *std_dev_rad,
                })
            }
            PhaseDistribution::Discrete { phases_rad, weights } => {
                if phases_rad.is_empty() || phases_rad.len() != weights.len() {
                    return Err(Error::InvalidSource(
                        "discrete phases and weights must be non-empty and of equal length".into(),
                    ));
                }
                if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return Err(Error::InvalidSource("weights must be finite and >= 0".into()));
                }
                let total: f64 = weights.iter().sum();
                if total <= 0.0 {
                    return Err(Error::InvalidSource("weights sum to zero".into()));
                }
                Ok(PhaseDistribution::Discrete {
                    phases_rad: phases_rad.iter().map(|p| reduce_angle(*p, TAU)).collect(),
                    weights: weights.iter().map(|w| w / total).collect(),
                })
            }
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            PhaseDistribution::Uniform => rng.random::<f64>() * TAU,
            PhaseDistribution::WrappedNormal { mean_rad, std_dev_rad } => {
                let normal = Normal::new(*mean_rad, *std_dev_rad).expect("validated std_dev");
                reduce_angle(normal.sample(rng), TAU)
            }
            PhaseDistribution::Discrete { phases_rad, weights } => {
                let index = WeightedIndex::new(weights).expect("validated weights");
                phases_rad[index.sample(rng)]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceModel {
    /// Every wavepacket carries the same fixed phase.
    VanEnkFuchs { phi_rad: f64 },
    /// Each wavepacket carries an independent uniform phase.
    RudolphSanders,
    /// Two fixed-phase sources; the first wavepacket of a shot comes from
    /// the first source.
    TwoSource { phi1_rad: f64, phi2_rad: f64 },
    /// Phases drawn from `distribution`, once per shot if `shared`,
    /// otherwise once per wavepacket.
    CustomPhase {
        distribution: PhaseDistribution,
        shared: bool,
    },
}

impl SourceModel {
    /// Checks the model and canonicalizes its phases to `[0, 2π)`.
    pub fn validated(&self) -> Result<Self> {
        let finite = |x: f64, name: &str| {
            if x.is_finite() {
                Ok(reduce_angle(x, TAU))
            } else {
                Err(Error::InvalidSource(format!("{name} = {x} is not finite")))
            }
        };
        Ok(match self {
            SourceModel::VanEnkFuchs { phi_rad } => SourceModel::VanEnkFuchs {
                phi_rad: finite(*phi_rad, "phi_rad")?,
            },
            SourceModel::RudolphSanders => SourceModel::RudolphSanders,
            SourceModel::TwoSource { phi1_rad, phi2_rad } => SourceModel::TwoSource {
                phi1_rad: finite(*phi1_rad, "phi1_rad")?,
                phi2_rad: finite(*phi2_rad, "phi2_rad")?,
            },
            SourceModel::CustomPhase { distribution, shared } => SourceModel::CustomPhase {
                distribution: distribution.validate()?,
                shared: *shared,
            },
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            SourceModel::VanEnkFuchs { .. } => "van_enk_fuchs",
            SourceModel::RudolphSanders => "rudolph_sanders",
            SourceModel::TwoSource { .. } => "two_source",
            SourceModel::CustomPhase { .. } => "custom_phase",
        }
    }
}

/// Phases given to the two wavepackets of one shot.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhasePair {
    pub phi1: f64,
    pub phi2: f64,
}

impl PhasePair {
    /// `φ₂ − φ₁` reduced to `[0, 2π)`.
    pub fn difference(&self) -> f64 {
        reduce_angle(self.phi2 - self.phi1, TAU)
    }
}

pub fn draw_phases<R: Rng + ?Sized>(model: &SourceModel, rng: &mut R) -> PhasePair {
    match model {
        SourceModel::VanEnkFuchs { phi_rad } => PhasePair {
            phi1: *phi_rad,
            phi2: *phi_rad,
        },
        SourceModel::RudolphSanders => {
            let phi1 = rng.random::<f64>() * TAU;
            let phi2 = rng.random::<f64>() * TAU;
            PhasePair { phi1, phi2 }
        }
        SourceModel::TwoSource { phi1_rad, phi2_rad } => PhasePair {
            phi1: *phi1_rad,
            phi2: *phi2_rad,
        },
        SourceModel::CustomPhase { distribution, shared } => {
            let phi1 = distribution.sample(rng);
            let phi2 = if *shared { phi1 } else { distribution.sample(rng) };
            PhasePair { phi1, phi2 }
        }
    }
}

#[derive(Debug, Clone)]
pub struct WavepacketPair<T> {
    /// On `(aH, bV)`.
    pub psi1: PureState<T>,
    /// On `(aV, bH)`.
    pub psi2: PureState<T>,
    pub phases: PhasePair,
}

pub fn build_wavepacket_pair<T: Real>(
    params: &SqueezeParams<T>,
    cutoff: u32,
    phases: PhasePair,
) -> Result<WavepacketPair<T>> {
    let psi1 = make_squeezed_wavepacket(&params.with_phase(T::lit(phases.phi1)), ModeAssignment::AhWithBv, cutoff)?;
    let psi2 = make_squeezed_wavepacket(&params.with_phase(T::lit(phases.phi2)), ModeAssignment::AvWithBh, cutoff)?;
    Ok(WavepacketPair { psi1, psi2, phases })
}

pub fn draw_wavepacket_pair<T: Real, R: Rng + ?Sized>(
    model: &SourceModel,
    params: &SqueezeParams<T>,
    cutoff: u32,
    rng: &mut R,
) -> Result<WavepacketPair<T>> {
    build_wavepacket_pair(params, cutoff, draw_phases(model, rng))
}

/// Monte Carlo average of the single-wavepacket density matrix
/// `|ψ₁><ψ₁|` in the `|k,k>` basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DensitySummary {
    pub samples: usize,
    /// `ρ_{kk}` for `k = 0..=cutoff`.
    pub diagonal: Vec<f64>,
    /// `<k+1|ρ|k>` for `k = 0..cutoff`.
    pub coherences: Vec<Complex<f64>>,
}

pub fn ensemble_density_check<R: Rng + ?Sized>(
    model: &SourceModel,
    params: &SqueezeParams<f64>,
    cutoff: u32,
    samples: usize,
    rng: &mut R,
) -> Result<DensitySummary> {
    if samples == 0 {
        return Err(Error::InvalidSource("samples must be >= 1".into()));
    }
    let k_max = cutoff as usize;
    let mut diagonal = vec![0.0; k_max + 1];
    let mut coherences = vec![Complex::new(0.0, 0.0); k_max];
    for _ in 0..samples {
        let phases = draw_phases(model, rng);
        let psi = make_squeezed_wavepacket(&params.with_phase(phases.phi1), ModeAssignment::AhWithBv, cutoff)?;
        let c = |k: usize| psi.amplitude(&FockKet4::new(k as u32, 0, k as u32, 0));
        for k in 0..=k_max {
            diagonal[k] += c(k).norm_sqr();
            if k < k_max {
                coherences[k] += c(k + 1) * c(k).conj();
            }
        }
    }
    let scale = 1.0 / samples as f64;
    diagonal.iter_mut().for_each(|d| *d *= scale);
    coherences.iter_mut().for_each(|c| *c *= scale);
    Ok(DensitySummary {
        samples,
        diagonal,
        coherences,
    })
}
