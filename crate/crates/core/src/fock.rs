//! Truncated four-mode Fock space.
//!
//! Mode order is fixed as `(a,H) (a,V) (b,V) (b,H)`; kets compare
//! lexicographically in that order, which fixes iteration and serialization
//! order for every state.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{reduce_angle, Real};

/// Amplitudes below this magnitude are dropped.
pub const PRUNE_THRESHOLD: f64 = 1e-15;

/// Largest discarded norm a wavepacket truncation may leave behind.
pub const TAIL_NORM_BOUND: f64 = 1e-9;

/// Upper limit on the per-wavepacket cutoff; the joint state holds
/// `(cutoff + 1)^2` kets.
pub const MAX_CUTOFF: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqueezeParams<T> {
    r: T,
    phi: T,
    lambda: T,
}

impl<T: Real> SqueezeParams<T> {
    pub fn new(r: T, phi: T) -> Result<Self> {
        if !r.is_finite() || r < T::zero() {
            return Err(Error::InvalidSqueeze(format!("r = {r} must be finite and >= 0")));
        }
        if !phi.is_finite() {
            return Err(Error::InvalidSqueeze(format!("phi = {phi} is not finite")));
        }
        Ok(Self {
            r,
            phi: reduce_angle(phi, T::TAU()),
            lambda: r.tanh(),
        })
    }

    pub fn r(&self) -> T {
        self.r
    }

    pub fn phi(&self) -> T {
        self.phi
    }

    /// Amplitude ratio `tanh r`.
    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn with_phase(&self, phi: T) -> Self {
        Self {
            phi: reduce_angle(phi, T::TAU()),
            ..*self
        }
    }

    /// Norm discarded by truncating a single wavepacket at `cutoff` photons
    /// per mode: `λ^(2(cutoff+1))`.
    pub fn tail_norm(&self, cutoff: u32) -> T {
        self.lambda.powi(2 * (cutoff as i32 + 1))
    }

    /// Smallest cutoff (at least 1) whose tail norm is below [`TAIL_NORM_BOUND`].
    pub fn default_cutoff(&self) -> u32 {
        self.cutoff_for_tail(TAIL_NORM_BOUND)
    }

    /// Smallest cutoff (at least 1) whose tail norm is below `bound`;
    /// `MAX_CUTOFF + 1` if none is.
    pub fn cutoff_for_tail(&self, bound: f64) -> u32 {
        let bound = T::lit(bound);
        (1..=MAX_CUTOFF)
            .find(|&k| self.tail_norm(k) < bound)
            .unwrap_or(MAX_CUTOFF + 1)
    }
}

/// Photon occupations of the four (spatial, polarization) modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct FockKet4 {
    pub n_ah: u32,
    pub n_av: u32,
    pub n_bv: u32,
    pub n_bh: u32,
}

impl FockKet4 {
    pub const VACUUM: Self = Self::new(0, 0, 0, 0);

    pub const fn new(n_ah: u32, n_av: u32, n_bv: u32, n_bh: u32) -> Self {
        Self { n_ah, n_av, n_bv, n_bh }
    }

    pub fn as_array(&self) -> [u32; 4] {
        [self.n_ah, self.n_av, self.n_bv, self.n_bh]
    }

    pub fn from_array(n: [u32; 4]) -> Self {
        Self::new(n[0], n[1], n[2], n[3])
    }

    pub fn port_a_total(&self) -> u32 {
        self.n_ah + self.n_av
    }

    pub fn port_b_total(&self) -> u32 {
        self.n_bv + self.n_bh
    }

    fn mode_mask(&self) -> u8 {
        self.as_array()
            .iter()
            .enumerate()
            .filter(|(_, &n)| n > 0)
            .fold(0, |m, (i, _)| m | (1 << i))
    }

    fn add(&self, other: &Self) -> Self {
        Self::new(
            self.n_ah + other.n_ah,
            self.n_av + other.n_av,
            self.n_bv + other.n_bv,
            self.n_bh + other.n_bh,
        )
    }
}

impl fmt::Display for FockKet4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|{},{},{},{}>", self.n_ah, self.n_av, self.n_bv, self.n_bh)
    }
}

/// Which pair of modes a squeezed wavepacket occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModeAssignment {
    /// `|k>_{aH} |k>_{bV}`
    AhWithBv,
    /// `|k>_{aV} |k>_{bH}`
    AvWithBh,
}

impl ModeAssignment {
    fn ket(self, k: u32) -> FockKet4 {
        match self {
            ModeAssignment::AhWithBv => FockKet4::new(k, 0, k, 0),
            ModeAssignment::AvWithBh => FockKet4::new(0, k, 0, k),
        }
    }

    fn mask(self) -> u8 {
        match self {
            ModeAssignment::AhWithBv => 0b0101,
            ModeAssignment::AvWithBh => 0b1010,
        }
    }
}

/// Sparse pure state over [`FockKet4`].
///
/// `cutoff` is the per-wavepacket photon bound; the analyzers can move all
/// photons of a port into one polarization, so a port may hold up to
/// `2 * cutoff` photons.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState<T> {
    amplitudes: BTreeMap<FockKet4, Complex<T>>,
    cutoff: u32,
    modes: u8,
}

impl<T: Real> PureState<T> {
    pub fn vacuum(cutoff: u32) -> Self {
        let mut amplitudes = BTreeMap::new();
        amplitudes.insert(FockKet4::VACUUM, Complex::new(T::one(), T::zero()));
        Self {
            amplitudes,
            cutoff,
            modes: 0,
        }
    }

    /// Builds a state from explicit amplitudes. Duplicate kets accumulate;
    /// the result is not normalized.
    pub fn from_amplitudes<I>(cutoff: u32, amplitudes: I) -> Result<Self>
    where
        I: IntoIterator<Item = (FockKet4, Complex<T>)>,
    {
        let mut map: BTreeMap<FockKet4, Complex<T>> = BTreeMap::new();
        for (ket, amp) in amplitudes {
            if ket.port_a_total() > 2 * cutoff || ket.port_b_total() > 2 * cutoff {
                return Err(Error::KetOutOfRange(ket.to_string()));
            }
            *map.entry(ket).or_insert_with(Complex::default) += amp;
        }
        Ok(Self::from_map(map, cutoff))
    }

    pub(crate) fn from_map(mut amplitudes: BTreeMap<FockKet4, Complex<T>>, cutoff: u32) -> Self {
        let threshold = T::lit(PRUNE_THRESHOLD);
        amplitudes.retain(|_, a| a.norm() >= threshold);
        let modes = amplitudes.keys().fold(0, |m, k| m | k.mode_mask());
        Self {
            amplitudes,
            cutoff,
            modes,
        }
    }

    pub fn cutoff(&self) -> u32 {
        self.cutoff
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn amplitude(&self, ket: &FockKet4) -> Complex<T> {
        self.amplitudes.get(ket).copied().unwrap_or_default()
    }

    /// Nonzero amplitudes in canonical ket order.
    pub fn iter(&self) -> impl Iterator<Item = (&FockKet4, &Complex<T>)> {
        self.amplitudes.iter()
    }

    pub fn norm_sqr(&self) -> T {
        self.amplitudes
            .values()
            .fold(T::zero(), |acc, a| acc + a.norm_sqr())
    }

    pub fn normalize(&self) -> Result<Self> {
        let norm = self.norm_sqr().sqrt();
        if norm <= T::zero() || !norm.is_finite() {
            return Err(Error::ZeroNorm);
        }
        let scale = norm.recip();
        let map = self
            .amplitudes
            .iter()
            .map(|(k, a)| (*k, a.scale(scale)))
            .collect();
        Ok(Self {
            modes: self.modes,
            ..Self::from_map(map, self.cutoff)
        })
    }

    /// Total probability of the event `n_aH + n_aV = n` and `n_bV + n_bH = n`.
    fn sector_weight(&self, n: u32) -> T {
        self.amplitudes
            .iter()
            .filter(|(k, _)| k.port_a_total() == n && k.port_b_total() == n)
            .fold(T::zero(), |acc, (_, a)| acc + a.norm_sqr())
    }

    pub fn to_dump(&self) -> StateDump {
        StateDump {
            cutoff: self.cutoff,
            kets: self
                .amplitudes
                .iter()
                .map(|(k, a)| KetAmplitude {
                    ket: k.as_array(),
                    re: a.re.as_f64(),
                    im: a.im.as_f64(),
                })
                .collect(),
        }
    }
}

/// Serializable view of a state, kets in canonical order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDump {
    pub cutoff: u32,
    pub kets: Vec<KetAmplitude>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KetAmplitude {
    pub ket: [u32; 4],
    pub re: f64,
    pub im: f64,
}

impl StateDump {
    pub fn to_state<T: Real>(&self) -> Result<PureState<T>> {
        PureState::from_amplitudes(
            self.cutoff,
            self.kets.iter().map(|k| {
                (
                    FockKet4::from_array(k.ket),
                    Complex::new(T::lit(k.re), T::lit(k.im)),
                )
            }),
        )
    }
}

/// Two-mode squeezed wavepacket `Σ_k (1-λ²)^{1/2} λ^k e^{ikφ} |k,k>` on the
/// assigned mode pair, truncated at `cutoff` and renormalized.
pub fn make_squeezed_wavepacket<T: Real>(
    params: &SqueezeParams<T>,
    assignment: ModeAssignment,
    cutoff: u32,
) -> Result<PureState<T>> {
    if cutoff < 1 || cutoff > MAX_CUTOFF {
        return Err(Error::Truncation {
            cutoff,
            tail: params.tail_norm(cutoff).as_f64(),
            bound: TAIL_NORM_BOUND,
        });
    }
    let tail = params.tail_norm(cutoff);
    if tail > T::lit(TAIL_NORM_BOUND) {
        return Err(Error::Truncation {
            cutoff,
            tail: tail.as_f64(),
            bound: TAIL_NORM_BOUND,
        });
    }
    let lambda = params.lambda();
    let prefactor = (T::one() - lambda * lambda).sqrt();
    let step = Complex::from_polar(lambda, params.phi());
    let mut amp = Complex::new(prefactor, T::zero());
    let mut map = BTreeMap::new();
    for k in 0..=cutoff {
        map.insert(assignment.ket(k), amp);
        amp = amp * step;
    }
    let state = PureState::from_map(map, cutoff).normalize()?;
    Ok(PureState {
        modes: assignment.mask(),
        ..state
    })
}

/// Joint state of two wavepackets on disjoint mode pairs.
pub fn tensor_product<T: Real>(psi1: &PureState<T>, psi2: &PureState<T>) -> Result<PureState<T>> {
    if psi1.cutoff != psi2.cutoff {
        return Err(Error::InvalidComposition(format!(
            "cutoffs differ ({} vs {})",
            psi1.cutoff, psi2.cutoff
        )));
    }
    if psi1.modes & psi2.modes != 0 {
        return Err(Error::InvalidComposition(
            "states share occupied modes".to_string(),
        ));
    }
    let mut map = BTreeMap::new();
    for (k1, a1) in &psi1.amplitudes {
        for (k2, a2) in &psi2.amplitudes {
            map.insert(k1.add(k2), a1 * a2);
        }
    }
    let mut joint = PureState::from_map(map, psi1.cutoff);
    joint.modes = psi1.modes | psi2.modes;
    Ok(joint)
}

/// Probability of finding `n` photons in each spatial mode, for
/// `n = 0..=2*cutoff`.
pub fn photon_sector_probabilities<T: Real>(state: &PureState<T>) -> Vec<(u32, T)> {
    (0..=2 * state.cutoff)
        .map(|n| (n, state.sector_weight(n)))
        .collect()
}

/// Projects onto the sector with `n` photons in each spatial mode and
/// renormalizes. Returns the post-measurement state and the outcome
/// probability.
pub fn project_total_photon<T: Real>(state: &PureState<T>, n: u32) -> Result<(PureState<T>, T)> {
    let probability = state.sector_weight(n);
    if probability <= T::zero() {
        return Err(Error::ImpossibleOutcome(n));
    }
    let map = state
        .amplitudes
        .iter()
        .filter(|(k, _)| k.port_a_total() == n && k.port_b_total() == n)
        .map(|(k, a)| (*k, *a))
        .collect();
    let projected = PureState {
        modes: state.modes,
        ..PureState::from_map(map, state.cutoff)
    }
    .normalize()?;
    Ok((projected, probability))
}

/// Inner product `<a|b>`.
pub fn overlap<T: Real>(a: &PureState<T>, b: &PureState<T>) -> Complex<T> {
    let (small, large, conj_small) = if a.len() <= b.len() {
        (a, b, true)
    } else {
        (b, a, false)
    };
    small
        .amplitudes
        .iter()
        .filter_map(|(k, x)| large.amplitudes.get(k).map(|y| (x, y)))
        .fold(Complex::default(), |acc, (x, y)| {
            if conj_small {
                acc + x.conj() * y
            } else {
                acc + y.conj() * x
            }
        })
}
