use std::f64::consts::{FRAC_PI_4, FRAC_PI_8};

use proptest::prelude::*;

use phasewitness::analysis::predict_good_event_rate;
use phasewitness::protocol::{run_sweep, tally_sweep, ExperimentConfig, Pipeline, ShotEngine};
use phasewitness::sources::SourceModel;

fn rs(r: f64) -> ExperimentConfig {
    ExperimentConfig::new(r, SourceModel::RudolphSanders).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn summaries_are_internally_consistent(
        r in 0.05f64..0.6,
        beta in 0.0f64..3.1,
        seed in any::<u64>(),
        qnd in any::<bool>(),
    ) {
        let pipeline = if qnd { Pipeline::Qnd { n: 1 } } else { Pipeline::Destructive };
        let config = rs(r).with_betas(vec![beta]).with_shots(400).with_seed(seed).with_pipeline(pipeline);
        let out = run_sweep(&config).unwrap();
        let s = &out.summaries[0];
        prop_assert_eq!(s.n_total, 400);
        prop_assert_eq!(s.n_coincidence + s.n_single, s.n_good);
        prop_assert_eq!(s.n_single10 + s.n_single01, s.n_single);
        prop_assert!(s.n_good + s.n_no_click <= s.n_total);
        if let Some(g) = s.conditional_coincidence {
            prop_assert!((0.0..=1.0).contains(&g));
            prop_assert!(s.wilson_low <= g && g <= s.wilson_high);
        }
        prop_assert!(out.events.windows(2).all(|w| w[0].shot_index < w[1].shot_index));
    }
}

#[test]
fn good_event_rate_matches_the_one_photon_weight() {
    let config = rs(0.01).with_betas(vec![0.0, FRAC_PI_8]).with_shots(1_000_000).with_seed(3);
    let p1 = predict_good_event_rate(&config.params);
    let rows = tally_sweep(&config).unwrap();
    for (summary, _) in rows {
        let (s, c) = summary.beta_rad.sin_cos();
        // the one-photon sector is dark at both ports with probability c²s²
        let p = p1 * (1.0 - c * c * s * s);
        let mean = 1e6 * p;
        let sd = (1e6 * p * (1.0 - p)).sqrt();
        let n = summary.n_good as f64;
        assert!((n - mean).abs() <= 5.0 * sd, "β = {}: {n} vs {mean} ± {sd}", summary.beta_rad);
    }
}

#[test]
fn fixed_phase_source_is_perfectly_correlated_at_the_diagonal() {
    let config = ExperimentConfig::new(0.2, SourceModel::VanEnkFuchs { phi_rad: 0.4 })
        .unwrap()
        .with_betas(vec![FRAC_PI_4])
        .with_pipeline(Pipeline::Qnd { n: 1 })
        .with_seed(11);
    let engine = ShotEngine::new(&config).unwrap();
    let (good, _) = engine.collect_good_events(FRAC_PI_4, 0.0, 500, 0, 1_000_000);
    assert_eq!(good.len(), 500);
    assert!(good.iter().all(|e| e.outcome.count_a == 1 && e.outcome.count_b == 1));
}

#[test]
fn results_do_not_depend_on_the_thread_count() {
    let config = rs(0.3).with_betas(vec![0.0, FRAC_PI_4]).with_shots(3000).with_seed(17);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_sweep(&config).unwrap())
    };
    let one = run(1);
    let three = run(3);
    assert_eq!(one.events, three.events);
    assert_eq!(one.summaries, three.summaries);
}

#[test]
fn prefix_of_a_longer_run_is_the_shorter_run() {
    let short = run_sweep(&rs(0.2).with_shots(500).with_seed(8)).unwrap();
    let long = run_sweep(&rs(0.2).with_shots(1500).with_seed(8)).unwrap();
    assert_eq!(short.events[..], long.events[..500]);
}

#[test]
fn counts_grow_with_shots() {
    let mut last = 0;
    for shots in [1_000u64, 4_000, 16_000] {
        let (s, _) = tally_sweep(&rs(0.3).with_shots(shots).with_seed(2)).unwrap().remove(0);
        assert!(s.n_good >= last);
        last = s.n_good;
    }
}
