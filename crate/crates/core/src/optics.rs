//! Polarization analyzers and photon detection.
//!
//! The analyzer on a port maps the mode operators as
//!
//! ```text
//! a_H† -> cos β a_H'† + e^{iδ} sin β a_V'†
//! a_V† -> -e^{-iδ} sin β a_H'† + cos β a_V'†
//! ```
//!
//! and `H'` is the pass mode. Port A uses modes `(aH, aV)`, port B `(bH, bV)`.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::fock::{FockKet4, PureState};
use crate::scalar::{reduce_angle, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyzerSetting<T> {
    beta: T,
    delta: T,
}

impl<T: Real> AnalyzerSetting<T> {
    /// `beta` is reduced to `[0, π)`, `delta` to `[0, 2π)`.
    pub fn new(beta: T, delta: T) -> Self {
        Self {
            beta: reduce_angle(beta, T::PI()),
            delta: reduce_angle(delta, T::TAU()),
        }
    }

    pub fn rotation(beta: T) -> Self {
        Self::new(beta, T::zero())
    }

    pub fn identity() -> Self {
        Self::new(T::zero(), T::zero())
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn delta(&self) -> T {
        self.delta
    }
}

/// Analyzer settings for both ports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortSettings<T> {
    pub a: AnalyzerSetting<T>,
    pub b: AnalyzerSetting<T>,
}

impl<T: Real> PortSettings<T> {
    pub fn same(setting: AnalyzerSetting<T>) -> Self {
        Self {
            a: setting,
            b: setting,
        }
    }

    /// Rotation `beta` at both ports with the retardance inserted in port B
    /// only. A retardance common to both ports cancels in the one-photon
    /// sector; placing it on one arm shifts the fringe by `Δ + δ`.
    pub fn experiment(beta: T, delta: T) -> Self {
        Self {
            a: AnalyzerSetting::new(beta, T::zero()),
            b: AnalyzerSetting::new(beta, delta),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Port {
    A,
    B,
}

/// Sign convention of the analyzer transform. `CorruptedFixture` flips the
/// sign of the `V -> H'` coefficient, which breaks unitarity; it exists as a
/// negative control for the oracle checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalyzerConvention {
    #[default]
    Standard,
    #[serde(alias = "corrupted")]
    CorruptedFixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    /// One detector behind a polarizer; the orthogonal mode is absorbed.
    #[default]
    AbsorbingPolarizer,
    /// Both outputs of a polarizing beam splitter are detected.
    PolarizingBeamSplitter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolving {
    #[default]
    PhotonNumberResolving,
    /// Click / no-click; any nonzero photon number reads as 1.
    Threshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct DetectorModel {
    pub topology: Topology,
    pub resolving: Resolving,
}

/// Detected counts. `count_a`/`count_b` are the pass-mode counts; the
/// beam-splitter topology also reports the reflected (V') counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct PortOutcome {
    pub count_a: u32,
    pub count_b: u32,
    pub reflect: Option<(u32, u32)>,
}

impl PortOutcome {
    pub const fn counts(count_a: u32, count_b: u32) -> Self {
        Self {
            count_a,
            count_b,
            reflect: None,
        }
    }

    pub fn no_photons(model: &DetectorModel) -> Self {
        Self {
            count_a: 0,
            count_b: 0,
            reflect: match model.topology {
                Topology::AbsorbingPolarizer => None,
                Topology::PolarizingBeamSplitter => Some((0, 0)),
            },
        }
    }
}

impl fmt::Display for PortOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}_A,{}_B)", self.count_a, self.count_b)?;
        if let Some((ra, rb)) = self.reflect {
            write!(f, "[reflect {}_A,{}_B]", ra, rb)?;
        }
        Ok(())
    }
}

pub type OutcomeDistribution<T> = BTreeMap<PortOutcome, T>;

pub fn apply_analyzer<T: Real>(state: &PureState<T>, port: Port, setting: &AnalyzerSetting<T>) -> PureState<T> {
    apply_analyzer_with(state, port, setting, AnalyzerConvention::Standard)
}

pub fn apply_analyzer_with<T: Real>(
    state: &PureState<T>,
    port: Port,
    setting: &AnalyzerSetting<T>,
    convention: AnalyzerConvention,
) -> PureState<T> {
    let (c, s) = (setting.beta.cos(), setting.beta.sin());
    let h_to_h = Complex::new(c, T::zero());
    let h_to_v = Complex::from_polar(s, setting.delta);
    let v_to_h = match convention {
        AnalyzerConvention::Standard => -Complex::from_polar(s, -setting.delta),
        AnalyzerConvention::CorruptedFixture => Complex::from_polar(s, -setting.delta),
    };
    let v_to_v = Complex::new(c, T::zero());

    let max_port = 2 * state.cutoff() as usize;
    let factorial = factorials(max_port);
    let binomial = binomials(max_port);

    let mut out: BTreeMap<FockKet4, Complex<T>> = BTreeMap::new();
    for (ket, amp) in state.iter() {
        let (p, q) = port_modes(ket, port);
        let (p, q) = (p as usize, q as usize);
        let total = p + q;
        for i in 0..=p {
            // i of the p H photons go to H', p - i to V'
            let h_part = h_to_h.powi(i as i32) * h_to_v.powi((p - i) as i32);
            for j in 0..=q {
                let v_part = v_to_h.powi(j as i32) * v_to_v.powi((q - j) as i32);
                let n_h = i + j;
                let n_v = total - n_h;
                let weight = binomial[p][i]
                    * binomial[q][j]
                    * ((factorial[n_h] / factorial[p]) * (factorial[n_v] / factorial[q])).sqrt();
                let coeff = h_part * v_part * T::lit(weight);
                let target = with_port_modes(ket, port, n_h as u32, n_v as u32);
                *out.entry(target).or_insert_with(Complex::default) += amp * coeff;
            }
        }
    }
    PureState::from_map(out, state.cutoff())
}

fn port_modes(ket: &FockKet4, port: Port) -> (u32, u32) {
    match port {
        Port::A => (ket.n_ah, ket.n_av),
        Port::B => (ket.n_bh, ket.n_bv),
    }
}

fn with_port_modes(ket: &FockKet4, port: Port, h: u32, v: u32) -> FockKet4 {
    match port {
        Port::A => FockKet4::new(h, v, ket.n_bv, ket.n_bh),
        Port::B => FockKet4::new(ket.n_ah, ket.n_av, v, h),
    }
}

fn factorials(n: usize) -> Vec<f64> {
    let mut f = vec![1.0; n + 1];
    for k in 1..=n {
        f[k] = f[k - 1] * k as f64;
    }
    f
}

fn binomials(n: usize) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    for m in 0..=n {
        let mut row = vec![1.0; m + 1];
        for k in 1..m {
            row[k] = rows[m - 1][k - 1] + rows[m - 1][k];
        }
        rows.push(row);
    }
    rows
}

/// Exact probability of every detector outcome after both analyzers.
pub fn exact_outcome_distribution<T: Real>(
    state: &PureState<T>,
    model: &DetectorModel,
    settings: &PortSettings<T>,
) -> OutcomeDistribution<T> {
    exact_outcome_distribution_with(state, model, settings, AnalyzerConvention::Standard)
}

pub fn exact_outcome_distribution_with<T: Real>(
    state: &PureState<T>,
    model: &DetectorModel,
    settings: &PortSettings<T>,
    convention: AnalyzerConvention,
) -> OutcomeDistribution<T> {
    let analyzed = apply_analyzer_with(state, Port::A, &settings.a, convention);
    let analyzed = apply_analyzer_with(&analyzed, Port::B, &settings.b, convention);
    let mut dist = BTreeMap::new();
    for (ket, amp) in analyzed.iter() {
        let outcome = detect(ket, model);
        *dist.entry(outcome).or_insert_with(T::zero) += amp.norm_sqr();
    }
    dist
}

fn detect(ket: &FockKet4, model: &DetectorModel) -> PortOutcome {
    let read = |n: u32| match model.resolving {
        Resolving::PhotonNumberResolving => n,
        Resolving::Threshold => n.min(1),
    };
    PortOutcome {
        count_a: read(ket.n_ah),
        count_b: read(ket.n_bh),
        reflect: match model.topology {
            Topology::AbsorbingPolarizer => None,
            Topology::PolarizingBeamSplitter => Some((read(ket.n_av), read(ket.n_bv))),
        },
    }
}

/// Draws one outcome by inverse transform over the canonical outcome order.
pub fn sample_from_distribution<T: Real, R: Rng + ?Sized>(dist: &OutcomeDistribution<T>, rng: &mut R) -> PortOutcome {
    let total: f64 = dist.values().map(|p| p.as_f64()).sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = PortOutcome::default();
    for (outcome, p) in dist {
        acc += p.as_f64();
        last = *outcome;
        if u < acc {
            return *outcome;
        }
    }
    last
}

pub fn sample_counts<T: Real, R: Rng + ?Sized>(
    state: &PureState<T>,
    model: &DetectorModel,
    settings: &PortSettings<T>,
    rng: &mut R,
) -> PortOutcome {
    sample_from_distribution(&exact_outcome_distribution(state, model, settings), rng)
}
