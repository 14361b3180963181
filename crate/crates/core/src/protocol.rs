//! Per-shot pipeline and analyzer sweeps.
//!
//! A shot emits two wavepackets, samples the photon-number sector `n`
//! shared by both spatial modes, analyzes the projected state at both ports
//! and samples the detector counts. The analyzers conserve the photon
//! number of each port, so sampling the sector first and analyzing the
//! projected state gives the same outcome law as analyzing the full joint
//! state; vacuum shots never build a state.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::stats::{two_proportion_z, wilson_interval, Z_95};
use crate::error::{Error, Result};
use crate::fock::{
    make_squeezed_wavepacket, photon_sector_probabilities, project_total_photon, tensor_product, ModeAssignment,
    SqueezeParams, MAX_CUTOFF, TAIL_NORM_BOUND,
};
use crate::optics::{
    exact_outcome_distribution_with, sample_from_distribution, AnalyzerConvention, DetectorModel, OutcomeDistribution,
    PortOutcome, PortSettings,
};
use crate::rng::{setting_id, StreamFactory};
use crate::scalar::reduce_angle;
use crate::sources::{build_wavepacket_pair, draw_phases, PhasePair, SourceModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Pipeline {
    /// Photon counting with good-event post-selection.
    #[default]
    Destructive,
    /// Non-demolition measurement of the photon number per spatial mode;
    /// shots outside sector `n` are discarded.
    Qnd { n: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub params: SqueezeParams<f64>,
    pub model: SourceModel,
    pub detector: DetectorModel,
    pub betas: Vec<f64>,
    pub delta: f64,
    pub shots_per_beta: u64,
    pub pipeline: Pipeline,
    pub seed: u64,
    pub cutoff: u32,
    pub convention: AnalyzerConvention,
}

impl ExperimentConfig {
    /// Defaults: absorbing polarizers with number-resolving detectors,
    /// destructive pipeline, β = 0, δ = 0, seed 0, smallest admissible cutoff.
    pub fn new(r: f64, model: SourceModel) -> Result<Self> {
        let params = SqueezeParams::new(r, 0.0)?;
        Ok(Self {
            cutoff: params.default_cutoff(),
            params,
            model,
            detector: DetectorModel::default(),
            betas: vec![0.0],
            delta: 0.0,
            shots_per_beta: 1,
            pipeline: Pipeline::Destructive,
            seed: 0,
            convention: AnalyzerConvention::Standard,
        })
    }

    pub fn with_betas(mut self, betas: Vec<f64>) -> Self {
        self.betas = betas;
        self
    }

    pub fn with_shots(mut self, shots: u64) -> Self {
        self.shots_per_beta = shots;
        self
    }

    pub fn with_pipeline(mut self, pipeline: Pipeline) -> Self {
        self.pipeline = pipeline;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_detector(mut self, detector: DetectorModel) -> Self {
        self.detector = detector;
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    /// Checks everything except the shot count. Tail-bound violations are
    /// reported as [`Error::Numeric`], everything else as [`Error::Config`].
    pub fn validate_structure(&self) -> Result<()> {
        if self.betas.is_empty() {
            return Err(Error::Config("betas must be non-empty".into()));
        }
        for &b in &self.betas {
            if !b.is_finite() || !(0.0..std::f64::consts::PI).contains(&b) {
                return Err(Error::Config(format!("beta {b} outside [0, π)")));
            }
        }
        if !self.delta.is_finite() {
            return Err(Error::Config("delta must be finite".into()));
        }
        self.model.validated().map_err(|e| Error::Config(e.to_string()))?;
        if self.cutoff < 1 || self.cutoff > MAX_CUTOFF {
            return Err(Error::Numeric(format!("cutoff {} outside [1, {MAX_CUTOFF}]", self.cutoff)));
        }
        let tail = self.params.tail_norm(self.cutoff);
        if tail > TAIL_NORM_BOUND {
            return Err(Error::Numeric(format!(
                "cutoff {} leaves tail norm {tail:e} above {TAIL_NORM_BOUND:e} at r = {}",
                self.cutoff,
                self.params.r()
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_structure()?;
        if self.shots_per_beta == 0 {
            return Err(Error::Config("shots_per_beta must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoodClass {
    Coincidence11,
    Single10,
    Single01,
    NotGood,
}

impl GoodClass {
    pub fn is_good(self) -> bool {
        self != GoodClass::NotGood
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GoodClass::Coincidence11 => "coincidence11",
            GoodClass::Single10 => "single10",
            GoodClass::Single01 => "single01",
            GoodClass::NotGood => "not_good",
        }
    }
}

impl fmt::Display for GoodClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GoodClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "coincidence11" => GoodClass::Coincidence11,
            "single10" => GoodClass::Single10,
            "single01" => GoodClass::Single01,
            "not_good" => GoodClass::NotGood,
            other => return Err(Error::EventLog(format!("unknown good_class {other:?}"))),
        })
    }
}

/// At least one port counts exactly one photon and no port counts more.
pub fn classify_good(outcome: &PortOutcome) -> GoodClass {
    match (outcome.count_a, outcome.count_b) {
        (1, 1) => GoodClass::Coincidence11,
        (1, 0) => GoodClass::Single10,
        (0, 1) => GoodClass::Single01,
        _ => GoodClass::NotGood,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionEvent {
    pub shot_index: u64,
    pub beta: f64,
    pub delta: f64,
    pub outcome: PortOutcome,
    pub good: bool,
    pub good_class: GoodClass,
    pub phases: PhasePair,
    /// Photon-number sector the shot collapsed to. Simulation audit only;
    /// not part of the event log.
    pub sector: Option<u32>,
    /// Removed by the QND selection.
    pub discarded: bool,
}

type SectorCache = Vec<Option<OutcomeDistribution<f64>>>;

/// The phases every shot uses, when the source never varies them.
fn fixed_phases(model: &SourceModel) -> Option<PhasePair> {
    match model {
        SourceModel::VanEnkFuchs { phi_rad } => Some(PhasePair {
            phi1: *phi_rad,
            phi2: *phi_rad,
        }),
        SourceModel::TwoSource { phi1_rad, phi2_rad } => Some(PhasePair {
            phi1: *phi1_rad,
            phi2: *phi2_rad,
        }),
        _ => None,
    }
}

/// Prepared per-config state shared by all shots of a run.
#[derive(Debug, Clone)]
pub struct ShotEngine<'a> {
    config: &'a ExperimentConfig,
    streams: StreamFactory,
    sector_cdf: Vec<f64>,
}

impl<'a> ShotEngine<'a> {
    pub fn new(config: &'a ExperimentConfig) -> Result<Self> {
        config.validate_structure()?;
        // sector weights do not depend on the phases
        let psi1 = make_squeezed_wavepacket(&config.params, ModeAssignment::AhWithBv, config.cutoff)?;
        let psi2 = make_squeezed_wavepacket(&config.params, ModeAssignment::AvWithBh, config.cutoff)?;
        let joint = tensor_product(&psi1, &psi2)?;
        let mut acc = 0.0;
        let sector_cdf = photon_sector_probabilities(&joint)
            .into_iter()
            .map(|(_, p)| {
                acc += p;
                acc
            })
            .collect();
        Ok(Self {
            config,
            streams: StreamFactory::new(config.seed),
            sector_cdf,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        self.config
    }

    fn sample_sector(&self, u: f64) -> u32 {
        let total = *self.sector_cdf.last().unwrap_or(&1.0);
        let u = u * total;
        self.sector_cdf
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.sector_cdf.len() - 1) as u32
    }

    pub fn run_shot(&self, beta: f64, delta: f64, shot_index: u64) -> DetectionEvent {
        self.run_shot_with(beta, delta, shot_index, None)
    }

    /// Outcome laws per sector for sources whose phases never vary; `None`
    /// for random-phase sources.
    fn setting_cache(&self, beta: f64, delta: f64) -> Option<SectorCache> {
        let phases = fixed_phases(&self.config.model)?;
        let config = self.config;
        let pair = build_wavepacket_pair(&config.params, config.cutoff, phases).ok()?;
        let joint = tensor_product(&pair.psi1, &pair.psi2).ok()?;
        let settings = PortSettings::experiment(beta, delta);
        Some(
            (0..self.sector_cdf.len() as u32)
                .map(|n| {
                    project_total_photon(&joint, n).ok().map(|(projected, _)| {
                        exact_outcome_distribution_with(&projected, &config.detector, &settings, config.convention)
                    })
                })
                .collect(),
        )
    }

    fn run_shot_with(&self, beta: f64, delta: f64, shot_index: u64, cache: Option<&SectorCache>) -> DetectionEvent {
        let config = self.config;
        let mut rng = self.streams.stream(setting_id(beta, delta), shot_index);
        let phases = draw_phases(&config.model, &mut rng);
        let sector = self.sample_sector(rand::Rng::random(&mut rng));

        let selected = match config.pipeline {
            Pipeline::Destructive => true,
            Pipeline::Qnd { n } => n == sector,
        };
        let mut event = DetectionEvent {
            shot_index,
            beta,
            delta,
            outcome: PortOutcome::no_photons(&config.detector),
            good: false,
            good_class: GoodClass::NotGood,
            phases,
            sector: Some(sector),
            discarded: !selected,
        };
        if !selected || sector == 0 {
            return event;
        }

        let outcome = match cache {
            Some(cache) => cache[sector as usize]
                .as_ref()
                .map(|dist| sample_from_distribution(dist, &mut rng))
                .ok_or(Error::ImpossibleOutcome(sector)),
            None => build_wavepacket_pair(&config.params, config.cutoff, phases)
                .and_then(|pair| tensor_product(&pair.psi1, &pair.psi2))
                .and_then(|joint| project_total_photon(&joint, sector))
                .map(|(projected, _)| {
                    let dist = exact_outcome_distribution_with(
                        &projected,
                        &config.detector,
                        &PortSettings::experiment(beta, delta),
                        config.convention,
                    );
                    sample_from_distribution(&dist, &mut rng)
                }),
        };
        match outcome {
            Ok(outcome) => {
                event.outcome = outcome;
                event.good_class = classify_good(&outcome);
                event.good = event.good_class.is_good();
            }
            Err(_) => event.discarded = true,
        }
        event
    }

    pub fn run_setting(&self, beta: f64, delta: f64, shots: u64) -> Vec<DetectionEvent> {
        let cache = self.setting_cache(beta, delta);
        (0..shots)
            .into_par_iter()
            .map(|s| self.run_shot_with(beta, delta, s, cache.as_ref()))
            .collect()
    }

    pub fn tally_setting(&self, beta: f64, delta: f64, shots: u64) -> Tally {
        let cache = self.setting_cache(beta, delta);
        (0..shots)
            .into_par_iter()
            .fold(Tally::default, |mut t, s| {
                t.record(&self.run_shot_with(beta, delta, s, cache.as_ref()));
                t
            })
            .reduce(Tally::default, Tally::merge)
    }

    /// First `target` good events in shot order starting at `first_shot`,
    /// giving up after `max_shots`. Returns the events and the number of
    /// shots consumed.
    pub fn collect_good_events(
        &self,
        beta: f64,
        delta: f64,
        target: usize,
        first_shot: u64,
        max_shots: u64,
    ) -> (Vec<DetectionEvent>, u64) {
        const CHUNK: u64 = 2048;
        let cache = self.setting_cache(beta, delta);
        let mut good = Vec::with_capacity(target);
        let mut next = first_shot;
        let end = first_shot.saturating_add(max_shots);
        while good.len() < target && next < end {
            let stop = (next + CHUNK).min(end);
            let chunk: Vec<DetectionEvent> = (next..stop)
                .into_par_iter()
                .map(|s| self.run_shot_with(beta, delta, s, cache.as_ref()))
                .filter(|e| e.good)
                .collect();
            for e in chunk {
                if good.len() == target {
                    break;
                }
                next = e.shot_index + 1;
                good.push(e);
            }
            if good.len() < target {
                next = stop;
            }
        }
        (good, next - first_shot)
    }
}

pub fn run_shot(config: &ExperimentConfig, beta: f64, shot_index: u64) -> Result<DetectionEvent> {
    Ok(ShotEngine::new(config)?.run_shot(beta, config.delta, shot_index))
}

/// Count vector for one analyzer setting. Merging is associative and
/// commutative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Tally {
    pub n_total: u64,
    pub n_coincidence: u64,
    pub n_single10: u64,
    pub n_single01: u64,
    /// Logged (0, 0) outcomes, discarded shots included, so the count
    /// survives a round trip through the event log.
    pub n_no_click: u64,
    pub n_discarded: u64,
    /// Good events whose shot collapsed to a sector with `n ≥ 2`.
    pub n_good_multiphoton: u64,
}

impl Tally {
    pub fn record(&mut self, e: &DetectionEvent) {
        self.n_total += 1;
        match e.good_class {
            GoodClass::Coincidence11 => self.n_coincidence += 1,
            GoodClass::Single10 => self.n_single10 += 1,
            GoodClass::Single01 => self.n_single01 += 1,
            GoodClass::NotGood => {}
        }
        if e.discarded {
            self.n_discarded += 1;
        }
        if e.outcome.count_a == 0 && e.outcome.count_b == 0 {
            self.n_no_click += 1;
        }
        if e.good && e.sector.is_some_and(|n| n >= 2) {
            self.n_good_multiphoton += 1;
        }
    }

    pub fn merge(self, o: Self) -> Self {
        Self {
            n_total: self.n_total + o.n_total,
            n_coincidence: self.n_coincidence + o.n_coincidence,
            n_single10: self.n_single10 + o.n_single10,
            n_single01: self.n_single01 + o.n_single01,
            n_no_click: self.n_no_click + o.n_no_click,
            n_discarded: self.n_discarded + o.n_discarded,
            n_good_multiphoton: self.n_good_multiphoton + o.n_good_multiphoton,
        }
    }

    pub fn n_good(&self) -> u64 {
        self.n_coincidence + self.n_single10 + self.n_single01
    }

    pub fn from_events<'e>(events: impl IntoIterator<Item = &'e DetectionEvent>) -> Self {
        let mut t = Tally::default();
        for e in events {
            t.record(e);
        }
        t
    }

    pub fn summary(&self, beta: f64, delta: f64) -> CorrelationSummary {
        let n_good = self.n_good();
        let (wilson_low, wilson_high) = wilson_interval(self.n_coincidence, n_good, Z_95);
        CorrelationSummary {
            beta_rad: beta,
            delta_rad: delta,
            n_total: self.n_total,
            n_good,
            n_coincidence: self.n_coincidence,
            n_single: self.n_single10 + self.n_single01,
            n_single10: self.n_single10,
            n_single01: self.n_single01,
            n_no_click: self.n_no_click,
            conditional_coincidence: (n_good > 0).then(|| self.n_coincidence as f64 / n_good as f64),
            wilson_low,
            wilson_high,
            unconditional_coincidence: if self.n_total > 0 {
                self.n_coincidence as f64 / self.n_total as f64
            } else {
                0.0
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSummary {
    pub beta_rad: f64,
    pub delta_rad: f64,
    pub n_total: u64,
    pub n_good: u64,
    pub n_coincidence: u64,
    pub n_single: u64,
    pub n_single10: u64,
    pub n_single01: u64,
    pub n_no_click: u64,
    /// `n_coincidence / n_good`; absent without good events.
    pub conditional_coincidence: Option<f64>,
    /// 95% Wilson interval for the conditional coincidence.
    pub wilson_low: f64,
    pub wilson_high: f64,
    /// `n_coincidence / n_total`.
    pub unconditional_coincidence: f64,
}

impl CorrelationSummary {
    /// Wilson interval at an arbitrary normal quantile.
    pub fn wilson(&self, z: f64) -> (f64, f64) {
        wilson_interval(self.n_coincidence, self.n_good, z)
    }
}

/// Summaries per distinct (β, δ) in first-appearance order.
pub fn summarize_events(events: &[DetectionEvent]) -> Vec<CorrelationSummary> {
    let mut order: Vec<(u64, u64)> = Vec::new();
    let mut tallies: std::collections::HashMap<(u64, u64), Tally> = Default::default();
    for e in events {
        let key = (e.beta.to_bits(), e.delta.to_bits());
        tallies
            .entry(key)
            .or_insert_with(|| {
                order.push(key);
                Tally::default()
            })
            .record(e);
    }
    order
        .into_iter()
        .map(|k| tallies[&k].summary(f64::from_bits(k.0), f64::from_bits(k.1)))
        .collect()
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub summaries: Vec<CorrelationSummary>,
    /// Ordered by β (config order), then shot index.
    pub events: Vec<DetectionEvent>,
}

pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepOutput> {
    config.validate()?;
    let engine = ShotEngine::new(config)?;
    let mut events = Vec::with_capacity(config.betas.len() * config.shots_per_beta as usize);
    let mut summaries = Vec::with_capacity(config.betas.len());
    for &beta in &config.betas {
        let block = engine.run_setting(beta, config.delta, config.shots_per_beta);
        summaries.push(Tally::from_events(&block).summary(beta, config.delta));
        events.extend(block);
    }
    Ok(SweepOutput { summaries, events })
}

/// Like [`run_sweep`] without keeping the event log.
pub fn tally_sweep(config: &ExperimentConfig) -> Result<Vec<(CorrelationSummary, Tally)>> {
    config.validate()?;
    let engine = ShotEngine::new(config)?;
    Ok(config
        .betas
        .iter()
        .map(|&beta| {
            let t = engine.tally_setting(beta, config.delta, config.shots_per_beta);
            (t.summary(beta, config.delta), t)
        })
        .collect())
}

/// Conditional good-class frequencies must agree within this many standard
/// errors.
pub const EQUIVALENCE_SIGMA: f64 = 5.0;

/// Minimum good events per pipeline and β for a conclusive comparison.
pub const EQUIVALENCE_MIN_GOOD: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquivalenceVerdict {
    Agree,
    Disagree,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceRow {
    pub beta_rad: f64,
    pub qnd_good: u64,
    pub destructive_good: u64,
    /// z-scores for coincidence11, single10, single01 proportions.
    pub z_scores: [f64; 3],
    pub max_abs_z: f64,
    /// Fraction of destructive good events from sectors with `n ≥ 2`.
    pub destructive_contamination: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub rows: Vec<EquivalenceRow>,
    pub verdict: EquivalenceVerdict,
}

/// Runs the config under QND{1} and Destructive with the same seed and
/// compares the conditional good-class distributions per β.
pub fn qnd_destructive_equivalence(config: &ExperimentConfig) -> Result<EquivalenceReport> {
    config.validate_structure()?;
    if config.shots_per_beta == 0 {
        return Ok(EquivalenceReport {
            rows: Vec::new(),
            verdict: EquivalenceVerdict::Inconclusive,
        });
    }
    let qnd = tally_sweep(&config.clone().with_pipeline(Pipeline::Qnd { n: 1 }))?;
    let destructive = tally_sweep(&config.clone().with_pipeline(Pipeline::Destructive))?;
    let mut rows = Vec::new();
    let mut inconclusive = false;
    let mut disagree = false;
    for ((qs, qt), (_, dt)) in qnd.iter().zip(&destructive) {
        let (nq, nd) = (qt.n_good(), dt.n_good());
        let z_scores = if nq == 0 || nd == 0 {
            [0.0; 3]
        } else {
            [
                two_proportion_z(qt.n_coincidence, nq, dt.n_coincidence, nd),
                two_proportion_z(qt.n_single10, nq, dt.n_single10, nd),
                two_proportion_z(qt.n_single01, nq, dt.n_single01, nd),
            ]
        };
        let max_abs_z = z_scores.iter().fold(0.0f64, |m, z| m.max(z.abs()));
        inconclusive |= nq < EQUIVALENCE_MIN_GOOD || nd < EQUIVALENCE_MIN_GOOD;
        disagree |= max_abs_z > EQUIVALENCE_SIGMA;
        rows.push(EquivalenceRow {
            beta_rad: qs.beta_rad,
            qnd_good: nq,
            destructive_good: nd,
            z_scores,
            max_abs_z,
            destructive_contamination: if nd > 0 {
                dt.n_good_multiphoton as f64 / nd as f64
            } else {
                0.0
            },
        });
    }
    let verdict = if inconclusive {
        EquivalenceVerdict::Inconclusive
    } else if disagree {
        EquivalenceVerdict::Disagree
    } else {
        EquivalenceVerdict::Agree
    };
    Ok(EquivalenceReport { rows, verdict })
}

/// Canonical β used by the discrimination protocol.
pub fn is_quarter_turn(beta: f64) -> bool {
    (reduce_angle(beta, std::f64::consts::PI) - std::f64::consts::FRAC_PI_4).abs() < 1e-9
}
