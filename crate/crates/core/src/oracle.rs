//! Structural invariant suite run by `oracle-check`.
//!
//! Exact checks compare independent computations of the same quantity.
//! Sampling checks run the shot pipeline and test it against the exact
//! outcome law; they are skipped when the config asks for zero shots.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use num_complex::Complex;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::predict::{predict_sector, Hypothesis};
use crate::analysis::stats::chi_square_gof;
use crate::error::Result;
use crate::fock::{
    overlap, photon_sector_probabilities, project_total_photon, tensor_product, FockKet4, PureState,
};
use crate::io::{events_to_csv_bytes, parse_config, read_events, to_json_string, ConfigFile, RunManifest};
use crate::optics::{
    apply_analyzer_with, exact_outcome_distribution_with, AnalyzerConvention, AnalyzerSetting, DetectorModel,
    OutcomeDistribution, Port, PortOutcome, PortSettings,
};
use crate::protocol::{
    qnd_destructive_equivalence, run_sweep, summarize_events, EquivalenceVerdict, ExperimentConfig, GoodClass,
    Pipeline, ShotEngine, EQUIVALENCE_SIGMA,
};
use crate::rng::StreamFactory;
use crate::sources::{build_wavepacket_pair, draw_phases, PhaseDistribution, PhasePair, SourceModel};

pub const NORMALIZATION_TOL: f64 = 1e-12;
pub const UNITARITY_TOL: f64 = 1e-12;
pub const CLOSED_FORM_TOL: f64 = 1e-10;
pub const MIXTURE_TOL: f64 = 1e-12;
/// Family-wise significance of the chi-square tests (Bonferroni over β).
pub const CHI_SQUARE_ALPHA: f64 = 1e-3;

const RANDOM_TRIPLES: usize = 100;
const RANDOM_STATES: usize = 8;
// stream ids for oracle draws, away from any setting id in practice
const PHASE_STREAM: u64 = u64::MAX;
const STATE_STREAM: u64 = u64::MAX - 1;
const ANGLE_STREAM: u64 = u64::MAX - 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub name: String,
    pub status: CheckStatus,
    pub detail: String,
    /// Largest deviation seen, in the check's own units.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worst: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

impl OracleCheck {
    fn measured(name: &str, worst: f64, tolerance: f64, detail: String) -> Self {
        Self {
            name: name.to_string(),
            status: if worst <= tolerance { CheckStatus::Pass } else { CheckStatus::Fail },
            detail,
            worst: Some(worst),
            tolerance: Some(tolerance),
        }
    }

    fn skipped(name: &str, detail: &str) -> Self {
        Self {
            name: name.to_string(),
            status: CheckStatus::Skipped,
            detail: detail.to_string(),
            worst: None,
            tolerance: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub checks: Vec<OracleCheck>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &OracleCheck> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Fail)
    }

    pub fn get(&self, name: &str) -> Option<&OracleCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub fn run_oracle_check(file: &ConfigFile) -> Result<OracleReport> {
    let config = file.to_experiment()?;
    config.validate_structure()?;
    let mut checks = vec![
        check_normalization(&config)?,
        check_unitarity(&config),
        check_composition(&config),
        check_closed_form(&config)?,
        check_sector_mixture(&config)?,
        check_qnd_destructive_exact(&config)?,
    ];
    if config.shots_per_beta == 0 {
        let notice = "zero shots configured; sampling check skipped";
        for name in [
            "qnd_vs_destructive_sampled",
            "sampling_chi_square",
            "event_log_round_trip",
            "manifest_replay",
        ] {
            checks.push(OracleCheck::skipped(name, notice));
        }
    } else {
        checks.push(check_qnd_destructive_sampled(&config)?);
        checks.push(check_chi_square(&config)?);
        let (round_trip, replay) = check_logs(file, &config)?;
        checks.push(round_trip);
        checks.push(replay);
    }
    Ok(OracleReport { checks })
}

fn oracle_streams(config: &ExperimentConfig) -> StreamFactory {
    StreamFactory::new(config.seed)
}

/// Phase pairs representative of the source: the fixed phases, or a few
/// draws for random-phase sources.
fn representative_phases(config: &ExperimentConfig) -> Vec<PhasePair> {
    let streams = oracle_streams(config);
    (0..4)
        .map(|i| draw_phases(&config.model, &mut streams.stream(PHASE_STREAM, i)))
        .collect()
}

fn joint_state(config: &ExperimentConfig, phases: PhasePair) -> Result<PureState<f64>> {
    let pair = build_wavepacket_pair(&config.params, config.cutoff, phases)?;
    tensor_product(&pair.psi1, &pair.psi2)
}

fn distribution(config: &ExperimentConfig, state: &PureState<f64>, beta: f64, delta: f64) -> OutcomeDistribution<f64> {
    exact_outcome_distribution_with(
        state,
        &config.detector,
        &PortSettings::experiment(beta, delta),
        config.convention,
    )
}

fn max_abs_diff(p: &OutcomeDistribution<f64>, q: &OutcomeDistribution<f64>) -> f64 {
    let keys: std::collections::BTreeSet<&PortOutcome> = p.keys().chain(q.keys()).collect();
    keys.into_iter()
        .map(|k| (p.get(k).copied().unwrap_or(0.0) - q.get(k).copied().unwrap_or(0.0)).abs())
        .fold(0.0, f64::max)
}

fn settings_grid(config: &ExperimentConfig) -> Vec<(f64, f64)> {
    config.betas.iter().map(|&b| (b, config.delta)).collect()
}

fn check_normalization(config: &ExperimentConfig) -> Result<OracleCheck> {
    let mut worst = 0.0f64;
    for phases in representative_phases(config) {
        let pair = build_wavepacket_pair(&config.params, config.cutoff, phases)?;
        worst = worst.max((pair.psi1.norm_sqr() - 1.0).abs());
        worst = worst.max((pair.psi2.norm_sqr() - 1.0).abs());
        let joint = tensor_product(&pair.psi1, &pair.psi2)?;
        worst = worst.max((joint.norm_sqr() - 1.0).abs());
        let sectors: f64 = photon_sector_probabilities(&joint).iter().map(|(_, p)| p).sum();
        worst = worst.max((sectors - 1.0).abs());
        for (beta, delta) in settings_grid(config) {
            let total: f64 = distribution(config, &joint, beta, delta).values().sum();
            worst = worst.max((total - 1.0).abs());
        }
    }
    Ok(OracleCheck::measured(
        "normalization",
        worst,
        NORMALIZATION_TOL,
        "wavepacket, joint-state, sector-table and outcome-distribution norms".into(),
    ))
}

fn random_state<R: Rng>(rng: &mut R) -> PureState<f64> {
    let mut amps = Vec::new();
    for ah in 0..=2 {
        for av in 0..=2 {
            for bv in 0..=2 {
                for bh in 0..=2 {
                    let z = Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                    amps.push((FockKet4::new(ah, av, bv, bh), z));
                }
            }
        }
    }
    PureState::from_amplitudes(2, amps)
        .and_then(|s| s.normalize())
        .expect("random state is well formed")
}

fn apply_both(state: &PureState<f64>, a: &AnalyzerSetting<f64>, b: &AnalyzerSetting<f64>, c: AnalyzerConvention) -> PureState<f64> {
    apply_analyzer_with(&apply_analyzer_with(state, Port::A, a, c), Port::B, b, c)
}

/// Norms and inner products preserved by the analyzers.
fn check_unitarity(config: &ExperimentConfig) -> OracleCheck {
    let streams = oracle_streams(config);
    let mut worst = 0.0f64;
    for i in 0..RANDOM_STATES as u64 {
        let mut rng = streams.stream(STATE_STREAM, i);
        let psi = random_state(&mut rng);
        let phi = random_state(&mut rng);
        let a = AnalyzerSetting::new(rng.random_range(0.0..PI), rng.random_range(0.0..TAU));
        let b = AnalyzerSetting::new(rng.random_range(0.0..PI), rng.random_range(0.0..TAU));
        let u_psi = apply_both(&psi, &a, &b, config.convention);
        let u_phi = apply_both(&phi, &a, &b, config.convention);
        worst = worst.max((u_psi.norm_sqr() - 1.0).abs());
        worst = worst.max((overlap(&u_psi, &u_phi) - overlap(&psi, &phi)).norm());
    }
    OracleCheck::measured(
        "analyzer_unitarity",
        worst,
        UNITARITY_TOL,
        format!("{RANDOM_STATES} random state pairs with up to two photons per mode"),
    )
}

/// Rotations compose additively while the total stays below π.
fn check_composition(config: &ExperimentConfig) -> OracleCheck {
    let streams = oracle_streams(config);
    let mut worst = 0.0f64;
    for i in 0..RANDOM_STATES as u64 {
        let mut rng = streams.stream(STATE_STREAM, 1000 + i);
        let psi = random_state(&mut rng);
        let b1 = rng.random_range(0.0..PI / 2.0);
        let b2 = rng.random_range(0.0..PI / 2.0);
        for port in [Port::A, Port::B] {
            let step = apply_analyzer_with(&psi, port, &AnalyzerSetting::rotation(b1), config.convention);
            let step = apply_analyzer_with(&step, port, &AnalyzerSetting::rotation(b2), config.convention);
            let once = apply_analyzer_with(&psi, port, &AnalyzerSetting::rotation(b1 + b2), config.convention);
            let kets: std::collections::BTreeSet<&FockKet4> = step.iter().map(|(k, _)| k).chain(once.iter().map(|(k, _)| k)).collect();
            for k in kets {
                worst = worst.max((step.amplitude(k) - once.amplitude(k)).norm());
            }
        }
    }
    OracleCheck::measured(
        "analyzer_composition",
        worst,
        UNITARITY_TOL,
        "R(β₂)R(β₁) = R(β₁+β₂) on random states, β₁ + β₂ < π".into(),
    )
}

/// `(|1,0,1,0> + e^{iΔ}|0,1,0,1>)/√2`.
fn one_photon_state(phase_difference: f64) -> PureState<f64> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    PureState::from_amplitudes(
        1,
        [
            (FockKet4::new(1, 0, 1, 0), Complex::new(h, 0.0)),
            (FockKet4::new(0, 1, 0, 1), Complex::from_polar(h, phase_difference)),
        ],
    )
    .expect("one-photon kets fit cutoff 1")
}

/// `(P11, P_diff, P00)` from the exact absorbing-polarizer distribution.
fn exact_sector(state: &PureState<f64>, beta: f64, delta: f64, convention: AnalyzerConvention) -> (f64, f64, f64) {
    let dist = exact_outcome_distribution_with(
        state,
        &DetectorModel::default(),
        &PortSettings::experiment(beta, delta),
        convention,
    );
    let p = |a, b| dist.get(&PortOutcome::counts(a, b)).copied().unwrap_or(0.0);
    (p(1, 1), p(1, 0) + p(0, 1), p(0, 0))
}

fn closed_form_gap(exact: (f64, f64, f64), h: Hypothesis, beta: f64, delta: f64) -> f64 {
    let p = predict_sector(h, beta, delta);
    let conditional = exact.0 / (exact.0 + exact.1);
    [exact.0 - p.p11, exact.1 - p.p_diff, exact.2 - p.p00, conditional - p.conditional]
        .iter()
        .map(|d| if d.is_finite() { d.abs() } else { f64::INFINITY })
        .fold(0.0, f64::max)
}

fn check_closed_form(config: &ExperimentConfig) -> Result<OracleCheck> {
    let streams = oracle_streams(config);
    let c = config.convention;
    let mut worst = 0.0f64;
    for i in 0..RANDOM_TRIPLES as u64 {
        let mut rng = streams.stream(ANGLE_STREAM, i);
        // keep away from β = 0, π/2 where the conditional is 0/0-adjacent
        let beta = rng.random_range(0.05..PI / 2.0 - 0.05);
        let delta = rng.random_range(0.0..TAU);
        let big_delta = rng.random_range(0.0..TAU);
        let h = Hypothesis::TwoSource {
            phase_difference_rad: big_delta,
        };
        worst = worst.max(closed_form_gap(exact_sector(&one_photon_state(big_delta), beta, delta, c), h, beta, delta));
    }
    let mut anticorrelation = 0.0f64;
    for &beta in &config.betas {
        let vef = exact_sector(&one_photon_state(0.0), beta, 0.0, c);
        worst = worst.max(closed_form_gap(vef, Hypothesis::VanEnkFuchs, beta, 0.0));
        anticorrelation = anticorrelation.max((vef.1 - (2.0 * beta).cos().powi(2)).abs());
        // the sector law is a degree-1 trigonometric polynomial in Δ, so four
        // nodes average it exactly
        let mut avg = (0.0, 0.0, 0.0);
        for j in 0..4 {
            let e = exact_sector(&one_photon_state(j as f64 * PI / 2.0), beta, config.delta, c);
            avg = (avg.0 + e.0 / 4.0, avg.1 + e.1 / 4.0, avg.2 + e.2 / 4.0);
        }
        if beta.sin() * beta.cos() != 0.0 {
            worst = worst.max(closed_form_gap(avg, Hypothesis::RudolphSanders, beta, config.delta));
        } else {
            worst = worst.max(avg.0.abs()).max((avg.1 - 1.0).abs());
        }
    }
    worst = worst.max(anticorrelation);

    // the source-built one-photon sector is the same state up to a global phase
    if config.params.r() > 0.0 {
        for phases in representative_phases(config) {
            let (projected, _) = project_total_photon(&joint_state(config, phases)?, 1)?;
            let target = one_photon_state(phases.phi2 - phases.phi1);
            worst = worst.max(1.0 - overlap(&projected, &target).norm());
        }
    }
    Ok(OracleCheck::measured(
        "closed_form_vs_exact",
        worst,
        CLOSED_FORM_TOL,
        format!(
            "{RANDOM_TRIPLES} random (β, δ, Δ) triples, fixed-phase and phase-averaged grids, cos²2β anticorrelation ({anticorrelation:.1e})"
        ),
    ))
}

fn check_sector_mixture(config: &ExperimentConfig) -> Result<OracleCheck> {
    let mut worst = 0.0f64;
    for phases in representative_phases(config).into_iter().take(2) {
        let joint = joint_state(config, phases)?;
        for (beta, delta) in settings_grid(config) {
            let full = distribution(config, &joint, beta, delta);
            let mixture = sector_mixture(config, &joint, beta, delta)?;
            worst = worst.max(max_abs_diff(&full, &mixture));
        }
    }
    Ok(OracleCheck::measured(
        "sector_mixture",
        worst,
        MIXTURE_TOL,
        "analyzing the full state equals the photon-number-sector mixture".into(),
    ))
}

fn sector_mixture(
    config: &ExperimentConfig,
    joint: &PureState<f64>,
    beta: f64,
    delta: f64,
) -> Result<OutcomeDistribution<f64>> {
    let mut mixture: OutcomeDistribution<f64> = BTreeMap::new();
    for (n, p) in photon_sector_probabilities(joint) {
        if p <= 0.0 {
            continue;
        }
        let (projected, _) = project_total_photon(joint, n)?;
        for (o, q) in distribution(config, &projected, beta, delta) {
            *mixture.entry(o).or_insert(0.0) += p * q;
        }
    }
    Ok(mixture)
}

/// Relative-phase nodes and weights reproducing the source's phase average
/// of the outcome law exactly, or `None` when the source has no such rule.
fn phase_quadrature(config: &ExperimentConfig) -> Option<Vec<(PhasePair, f64)>> {
    let uniform = |m: u32| {
        (0..m)
            .map(|j| {
                (
                    PhasePair {
                        phi1: 0.0,
                        phi2: TAU * j as f64 / m as f64,
                    },
                    1.0 / m as f64,
                )
            })
            .collect()
    };
    // outcome probabilities depend on φ₂ − φ₁ through frequencies up to the cutoff
    let nodes = 2 * config.cutoff + 2;
    match &config.model {
        SourceModel::VanEnkFuchs { phi_rad } => Some(vec![(PhasePair { phi1: *phi_rad, phi2: *phi_rad }, 1.0)]),
        SourceModel::TwoSource { phi1_rad, phi2_rad } => Some(vec![(PhasePair { phi1: *phi1_rad, phi2: *phi2_rad }, 1.0)]),
        SourceModel::RudolphSanders => Some(uniform(nodes)),
        SourceModel::CustomPhase { shared: true, .. } => Some(vec![(PhasePair::default(), 1.0)]),
        SourceModel::CustomPhase {
            distribution: PhaseDistribution::Uniform,
            ..
        } => Some(uniform(nodes)),
        SourceModel::CustomPhase { .. } => None,
    }
}

fn averaged_distribution(
    config: &ExperimentConfig,
    nodes: &[(PhasePair, f64)],
    beta: f64,
    delta: f64,
    sector: Option<u32>,
) -> Result<OutcomeDistribution<f64>> {
    let mut avg: OutcomeDistribution<f64> = BTreeMap::new();
    for &(phases, w) in nodes {
        let joint = joint_state(config, phases)?;
        let state = match sector {
            Some(n) => project_total_photon(&joint, n)?.0,
            None => joint,
        };
        for (o, p) in distribution(config, &state, beta, delta) {
            *avg.entry(o).or_insert(0.0) += w * p;
        }
    }
    Ok(avg)
}

fn good_conditional(dist: &OutcomeDistribution<f64>) -> ([f64; 3], f64) {
    let mut classes = [0.0; 3];
    for (o, p) in dist {
        match crate::protocol::classify_good(o) {
            GoodClass::Coincidence11 => classes[0] += p,
            GoodClass::Single10 => classes[1] += p,
            GoodClass::Single01 => classes[2] += p,
            GoodClass::NotGood => {}
        }
    }
    let good: f64 = classes.iter().sum();
    (classes.map(|c| c / good), good)
}

/// Destructive good-class law versus the one-photon sector's, exactly. They
/// differ only through good events from sectors with `n ≥ 2`, whose share
/// `m` bounds the gap by `2m`.
fn check_qnd_destructive_exact(config: &ExperimentConfig) -> Result<OracleCheck> {
    const NAME: &str = "qnd_vs_destructive_exact";
    if config.params.r() == 0.0 {
        return Ok(OracleCheck::skipped(NAME, "r = 0 has no one-photon sector"));
    }
    let Some(nodes) = phase_quadrature(config) else {
        return Ok(OracleCheck::skipped(NAME, "no exact phase average for this custom phase law"));
    };
    let mut excess = 0.0f64;
    let mut largest_gap = 0.0f64;
    for (beta, delta) in settings_grid(config) {
        let full = averaged_distribution(config, &nodes, beta, delta, None)?;
        let one = averaged_distribution(config, &nodes, beta, delta, Some(1))?;
        let (p_full, good_full) = good_conditional(&full);
        let (p_one, good_one) = good_conditional(&one);
        let sector_one = photon_sector_probabilities(&joint_state(config, nodes[0].0)?)[1].1;
        let multiphoton_share = ((good_full - sector_one * good_one) / good_full).max(0.0);
        for k in 0..3 {
            let gap = (p_full[k] - p_one[k]).abs();
            largest_gap = largest_gap.max(gap);
            excess = excess.max(gap - 2.0 * multiphoton_share);
        }
    }
    Ok(OracleCheck::measured(
        NAME,
        excess.max(0.0),
        MIXTURE_TOL,
        format!("largest good-class gap {largest_gap:.3e}, within twice the multiphoton good share"),
    ))
}

fn check_qnd_destructive_sampled(config: &ExperimentConfig) -> Result<OracleCheck> {
    const NAME: &str = "qnd_vs_destructive_sampled";
    let report = qnd_destructive_equivalence(config)?;
    let worst = report.rows.iter().map(|r| r.max_abs_z).fold(0.0, f64::max);
    let detail = format!(
        "max |z| {worst:.2} over {} β values; destructive multiphoton share up to {:.2e}",
        report.rows.len(),
        report.rows.iter().map(|r| r.destructive_contamination).fold(0.0, f64::max)
    );
    Ok(match report.verdict {
        EquivalenceVerdict::Inconclusive => {
            OracleCheck::skipped(NAME, &format!("inconclusive: fewer than 100 good events at some β; {detail}"))
        }
        _ => OracleCheck::measured(NAME, worst, EQUIVALENCE_SIGMA, detail),
    })
}

fn check_chi_square(config: &ExperimentConfig) -> Result<OracleCheck> {
    const NAME: &str = "sampling_chi_square";
    let Some(nodes) = phase_quadrature(config) else {
        return Ok(OracleCheck::skipped(NAME, "no exact phase average for this custom phase law"));
    };
    let destructive = config.clone().with_pipeline(Pipeline::Destructive);
    let engine = ShotEngine::new(&destructive)?;
    let settings = settings_grid(config);
    let alpha = CHI_SQUARE_ALPHA / settings.len() as f64;
    let mut min_p = 1.0f64;
    for (beta, delta) in settings {
        let exact = averaged_distribution(config, &nodes, beta, delta, None)?;
        let total: f64 = exact.values().sum();
        let mut observed: BTreeMap<PortOutcome, u64> = exact.keys().map(|k| (*k, 0)).collect();
        for e in engine.run_setting(beta, delta, config.shots_per_beta) {
            *observed.entry(e.outcome).or_insert(0) += 1;
        }
        let probs: Vec<f64> = observed.keys().map(|k| exact.get(k).copied().unwrap_or(0.0) / total).collect();
        let counts: Vec<u64> = observed.values().copied().collect();
        min_p = min_p.min(chi_square_gof(&counts, &probs).p_value);
    }
    Ok(OracleCheck {
        name: NAME.to_string(),
        status: if min_p >= alpha { CheckStatus::Pass } else { CheckStatus::Fail },
        detail: format!("smallest p-value {min_p:.3e} against per-β level {alpha:.1e}"),
        worst: Some(min_p),
        tolerance: Some(alpha),
    })
}

fn check_logs(file: &ConfigFile, config: &ExperimentConfig) -> Result<(OracleCheck, OracleCheck)> {
    let run = run_sweep(config)?;
    let bytes = events_to_csv_bytes(&run.events)?;
    let back = read_events(bytes.as_slice())?;
    let same_summaries = summarize_events(&back) == run.summaries;
    let same_bytes = events_to_csv_bytes(&back)? == bytes;
    let status = |ok: bool| if ok { CheckStatus::Pass } else { CheckStatus::Fail };
    let round_trip = OracleCheck {
        name: "event_log_round_trip".into(),
        status: status(same_summaries && same_bytes),
        detail: format!(
            "{} events; summaries {}, bytes {}",
            run.events.len(),
            if same_summaries { "identical" } else { "differ" },
            if same_bytes { "identical" } else { "differ" }
        ),
        worst: None,
        tolerance: None,
    };

    let manifest = to_json_string(&RunManifest::new("simulate", file))?;
    let replayed = parse_config(&manifest)?.to_experiment()?;
    let replay_bytes = events_to_csv_bytes(&run_sweep(&replayed)?.events)?;
    let replay = OracleCheck {
        name: "manifest_replay".into(),
        status: status(replay_bytes == bytes),
        detail: format!(
            "event log {} after replay from the manifest",
            if replay_bytes == bytes { "byte-identical" } else { "differs" }
        ),
        worst: None,
        tolerance: None,
    };
    Ok((round_trip, replay))
}
