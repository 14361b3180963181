use std::f64::consts::TAU;

use phasewitness::analysis::stats::{ks_uniform, pearson_correlation};
use phasewitness::rng::StreamFactory;
use phasewitness::sources::{draw_phases, ensemble_density_check, SourceModel};
use phasewitness::Squeeze;

#[test]
fn random_phases_are_uniform_and_independent() {
    let streams = StreamFactory::new(2024);
    let draws: Vec<_> = (0..10_000)
        .map(|i| draw_phases(&SourceModel::RudolphSanders, &mut streams.stream(1, i)))
        .collect();
    let phi1: Vec<f64> = draws.iter().map(|p| p.phi1).collect();
    let phi2: Vec<f64> = draws.iter().map(|p| p.phi2).collect();
    let (_, p1) = ks_uniform(&phi1, TAU);
    let (_, p2) = ks_uniform(&phi2, TAU);
    assert!(p1 > 1e-3 && p2 > 1e-3, "KS p-values {p1}, {p2}");
    let r = pearson_correlation(&phi1, &phi2);
    assert!(r.abs() < 0.05, "correlation {r}");
}

#[test]
fn phase_sequences_are_reproducible() {
    let a = StreamFactory::new(5);
    let b = StreamFactory::new(5);
    for i in 0..100 {
        assert_eq!(
            draw_phases(&SourceModel::RudolphSanders, &mut a.stream(9, i)),
            draw_phases(&SourceModel::RudolphSanders, &mut b.stream(9, i))
        );
    }
}

#[test]
fn random_phase_ensemble_is_diagonal() {
    let lambda: f64 = 0.3;
    let params = Squeeze::new(lambda.atanh(), 0.0).unwrap();
    let cutoff = params.default_cutoff();
    let samples = 100_000;
    let mut rng = StreamFactory::new(77).stream(0, 0);
    let d = ensemble_density_check(&SourceModel::RudolphSanders, &params, cutoff, samples, &mut rng).unwrap();
    for (k, rho) in d.diagonal.iter().enumerate().take(6) {
        let expected = (1.0 - lambda * lambda) * lambda.powi(2 * k as i32);
        // diagonal weights do not depend on the phase; only truncation moves them
        assert!((rho - expected).abs() < 1e-8, "k = {k}: {rho} vs {expected}");
    }
    let bound = 3.0 / (samples as f64).sqrt();
    for (k, c) in d.coherences.iter().enumerate() {
        assert!(c.norm() < 0.01 && c.norm() < bound, "k = {k}: |coherence| = {}", c.norm());
    }
}

#[test]
fn fixed_phase_ensemble_keeps_coherences() {
    let lambda: f64 = 0.3;
    let phi = 1.1;
    let params = Squeeze::new(lambda.atanh(), 0.0).unwrap();
    let mut rng = StreamFactory::new(1).stream(0, 0);
    let d = ensemble_density_check(&SourceModel::VanEnkFuchs { phi_rad: phi }, &params, params.default_cutoff(), 500, &mut rng)
        .unwrap();
    for (k, c) in d.coherences.iter().enumerate().take(5) {
        let magnitude = lambda.powi(2 * k as i32 + 1) * (1.0 - lambda * lambda);
        assert!((c.norm() - magnitude).abs() < 1e-8, "k = {k}");
        assert!((c.arg() - phi).abs() < 1e-12, "k = {k}: phase {}", c.arg());
    }
}
