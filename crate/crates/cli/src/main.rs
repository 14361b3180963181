//! `phasewitness` command-line driver.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use phasewitness::analysis::{discriminate, estimate_phase_difference, EstimationMethod, Verdict};
use phasewitness::analysis::predict::predict_good_event_rate;
use phasewitness::fock::{project_total_photon, tensor_product};
use phasewitness::io::{
    events_to_csv_bytes, load_config, prediction_table, rate_table, read_events_path, read_summaries, recount_check,
    to_json_string, write_csv_rows, ConfigFile, RunManifest, PREDICTION_COLUMNS, RATE_COLUMNS,
};
use phasewitness::oracle::{run_oracle_check, CheckStatus};
use phasewitness::protocol::{is_quarter_turn, run_sweep, summarize_events, DetectionEvent, ShotEngine};
use phasewitness::rng::StreamFactory;
use phasewitness::sources::{build_wavepacket_pair, draw_phases, SourceModel};
use phasewitness::Error;

const EXIT_USAGE: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_INCONCLUSIVE: u8 = 4;
const EXIT_ORACLE: u8 = 5;

const THREADS_ENV: &str = "PHASEWITNESS_THREADS";

#[derive(Parser)]
#[command(name = "phasewitness", version, about = "Simulate and discriminate fixed-phase and random-phase squeezed-light ensembles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form prediction and rate tables.
    Predict(Common),
    /// Run the shot pipeline; writes events.csv, summary.json and manifest.json.
    Simulate(Common),
    /// Log-likelihood-ratio verdict from an event log or a simulated run.
    Discriminate {
        #[command(flatten)]
        common: Common,
        /// Event log to score instead of simulating the config.
        #[arg(long)]
        events: Option<PathBuf>,
        /// Decision threshold in nats; overrides the config.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Relative phase of a two-source run from a retardance sweep at β = π/4.
    EstimatePhase {
        #[command(flatten)]
        common: Common,
        /// Event log to fit instead of simulating the config.
        #[arg(long)]
        events: Option<PathBuf>,
        #[arg(long, value_enum)]
        method: Option<Method>,
    },
    /// Run the structural invariant suite.
    OracleCheck(Common),
    /// Summarize an external event log, optionally checking a stored summary.
    Ingest {
        #[command(flatten)]
        common: Common,
        /// Event log CSV.
        events: PathBuf,
        /// Summary JSON to recount against the log.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Print the joint state of one shot as JSON.
    DumpState {
        #[command(flatten)]
        common: Common,
        /// Project onto this photon-number sector first.
        #[arg(long)]
        sector: Option<u32>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; tables go to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    FringeFit,
    TwoQuadrature,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Numeric(_) | Error::Truncation { .. } | Error::ZeroNorm | Error::ImpossibleOutcome(_) => EXIT_NUMERIC,
            _ => EXIT_USAGE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::usage(e.to_string())
    }
}

type Outcome = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| run(cli.command));
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::usage(format!("{THREADS_ENV} must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::usage(e.to_string()))
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Predict(c) => predict(&c),
        Command::Simulate(c) => simulate(&c),
        Command::Discriminate {
            common,
            events,
            threshold,
        } => discriminate_cmd(&common, events.as_deref(), threshold),
        Command::EstimatePhase { common, events, method } => estimate_phase(&common, events.as_deref(), method),
        Command::OracleCheck(c) => oracle_check(&c),
        Command::Ingest { common, events, summary } => ingest(&common, &events, summary.as_deref()),
        Command::DumpState { common, sector } => dump_state(&common, sector),
    }
}

fn config(common: &Common) -> Result<ConfigFile, Failure> {
    let path = common
        .config
        .as_deref()
        .ok_or_else(|| Failure::usage("--config PATH is required"))?;
    let mut file = load_config(path)?;
    if let Some(seed) = common.seed {
        file.seed = seed;
    }
    Ok(file)
}

/// Writes `bytes` to `out/name`, or to stdout without an output directory.
fn emit(out: Option<&Path>, name: &str, bytes: &[u8]) -> Result<Option<PathBuf>, Failure> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let path = dir.join(name);
            fs::write(&path, bytes)?;
            eprintln!("wrote {}", path.display());
            Ok(Some(path))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(None)
        }
    }
}

fn table<S: serde::Serialize>(format: Format, header: &[&str], rows: &[S]) -> Result<Vec<u8>, Failure> {
    match format {
        Format::Csv => {
            let mut buf = Vec::new();
            write_csv_rows(&mut buf, header, rows)?;
            Ok(buf)
        }
        Format::Json => Ok(to_json_string(rows)?.into_bytes()),
    }
}

fn extension(format: Format) -> &'static str {
    match format {
        Format::Csv => "csv",
        Format::Json => "json",
    }
}

fn predict(common: &Common) -> Outcome {
    let file = config(common)?;
    let format = common.format.unwrap_or(Format::Csv);
    let predictions = prediction_table(&file)?;
    let rates = rate_table(&file)?;
    let ext = extension(format);
    emit(
        common.out.as_deref(),
        &format!("predictions.{ext}"),
        &table(format, &PREDICTION_COLUMNS, &predictions)?,
    )?;
    emit(common.out.as_deref(), &format!("rates.{ext}"), &table(format, &RATE_COLUMNS, &rates)?)?;
    Ok(0)
}

fn simulate(common: &Common) -> Outcome {
    let file = config(common)?;
    let experiment = file.to_experiment()?;
    experiment.validate()?;
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let mut manifest = RunManifest::new("simulate", &file);
    let run = run_sweep(&experiment)?;

    let events = events_to_csv_bytes(&run.events)?;
    let summary = to_json_string(&run.summaries)?.into_bytes();
    if let Some(p) = emit(Some(&out), "events.csv", &events)? {
        manifest.record_output("events", &p, &events);
    }
    if let Some(p) = emit(Some(&out), "summary.json", &summary)? {
        manifest.record_output("summary", &p, &summary);
    }
    if common.format == Some(Format::Csv) {
        let csv = table(Format::Csv, &[], &run.summaries)?;
        if let Some(p) = emit(Some(&out), "summary.csv", &csv)? {
            manifest.record_output("summary_csv", &p, &csv);
        }
    }
    manifest.finish();
    emit(Some(&out), "manifest.json", to_json_string(&manifest)?.as_bytes())?;
    for s in &run.summaries {
        let conditional = s
            .conditional_coincidence
            .map_or_else(|| "n/a".to_string(), |c| format!("{c:.6}"));
        eprintln!(
            "beta {:.6} rad: {} shots, {} good, conditional coincidence {conditional}",
            s.beta_rad, s.n_total, s.n_good
        );
    }
    Ok(0)
}

fn quarter_turn_events(events: Vec<DetectionEvent>) -> Result<Vec<DetectionEvent>, Failure> {
    if events.is_empty() {
        return Ok(events);
    }
    let selected: Vec<DetectionEvent> = events.into_iter().filter(|e| is_quarter_turn(e.beta)).collect();
    if selected.is_empty() {
        return Err(Failure::usage("event log has no events at beta = pi/4"));
    }
    Ok(selected)
}

fn discriminate_cmd(common: &Common, events: Option<&Path>, threshold: Option<f64>) -> Outcome {
    let (events, default_threshold) = match events {
        Some(path) => {
            let threshold = match &common.config {
                Some(_) => config(common)?.threshold(),
                None => phasewitness::analysis::DEFAULT_THRESHOLD_NATS,
            };
            (read_events_path(path)?, threshold)
        }
        None => {
            let file = config(common)?;
            let experiment = file.to_experiment()?;
            experiment.validate()?;
            if !experiment.betas.iter().any(|&b| is_quarter_turn(b)) {
                return Err(Failure::usage("config betas must include pi/4 for discrimination"));
            }
            (run_sweep(&experiment)?.events, file.threshold())
        }
    };
    let threshold = threshold.unwrap_or(default_threshold);
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(Failure::usage("threshold must be positive"));
    }
    let result = discriminate(&quarter_turn_events(events)?, threshold);
    let bytes = match common.format.unwrap_or(Format::Json) {
        Format::Json => to_json_string(&result)?.into_bytes(),
        Format::Csv => table(Format::Csv, &[], std::slice::from_ref(&result))?,
    };
    emit(common.out.as_deref(), &format!("discrimination.{}", extension(common.format.unwrap_or(Format::Json))), &bytes)?;
    Ok(match result.verdict {
        Verdict::Inconclusive => EXIT_INCONCLUSIVE,
        _ => 0,
    })
}

fn simulate_fringe(file: &ConfigFile) -> Result<Vec<DetectionEvent>, Failure> {
    let beta = std::f64::consts::FRAC_PI_4;
    let mut experiment = file.to_experiment()?;
    // the sweep always runs at π/4
    experiment.betas = vec![beta];
    experiment.validate_structure()?;
    if file.delta_grid().iter().any(|d| !d.is_finite()) {
        return Err(Failure::usage("retardance grid must be finite"));
    }
    let engine = ShotEngine::new(&experiment)?;
    let mut events = Vec::new();
    match file.target_good_per_point {
        Some(target) => {
            let cap = if file.shots_per_beta > 0 {
                file.shots_per_beta
            } else {
                let rate = predict_good_event_rate(&experiment.params).max(1e-12);
                ((50.0 * target as f64 / rate).ceil() as u64).max(1_000_000)
            };
            for delta in file.delta_grid() {
                let (good, _) = engine.collect_good_events(beta, delta, target as usize, 0, cap);
                events.extend(good);
            }
        }
        None => {
            experiment.validate()?;
            for delta in file.delta_grid() {
                events.extend(engine.run_setting(beta, delta, file.shots_per_beta));
            }
        }
    }
    Ok(events)
}

fn estimate_phase(common: &Common, events: Option<&Path>, method: Option<Method>) -> Outcome {
    let file = match (&common.config, events) {
        (None, Some(_)) => None,
        _ => Some(config(common)?),
    };
    let method = match (method, file.as_ref().and_then(|f| f.estimation_method)) {
        (Some(Method::FringeFit), _) => EstimationMethod::FringeFit,
        (Some(Method::TwoQuadrature), _) => EstimationMethod::TwoQuadrature,
        (None, Some(m)) => m,
        (None, None) => EstimationMethod::FringeFit,
    };
    let events = match (events, &file) {
        (Some(path), _) => read_events_path(path)?,
        (None, Some(file)) => {
            if !matches!(file.model, SourceModel::TwoSource { .. }) {
                return Err(Failure::usage(format!(
                    "estimate-phase needs a two_source model, config has {}",
                    file.model.name()
                )));
            }
            let events = simulate_fringe(file)?;
            if let Some(out) = &common.out {
                emit(Some(out), "events.csv", &events_to_csv_bytes(&events)?)?;
            }
            events
        }
        (None, None) => unreachable!("config is loaded when no event log is given"),
    };
    let quarter: Vec<DetectionEvent> = events.into_iter().filter(|e| is_quarter_turn(e.beta)).collect();
    let estimate = estimate_phase_difference(&quarter, method)?;
    let bytes = match common.format.unwrap_or(Format::Json) {
        Format::Json => to_json_string(&estimate)?.into_bytes(),
        Format::Csv => table(Format::Csv, &[], std::slice::from_ref(&estimate))?,
    };
    emit(
        common.out.as_deref(),
        &format!("phase_estimate.{}", extension(common.format.unwrap_or(Format::Json))),
        &bytes,
    )?;
    Ok(0)
}

fn oracle_check(common: &Common) -> Outcome {
    let file = config(common)?;
    let report = run_oracle_check(&file)?;
    for c in &report.checks {
        let status = match c.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Skipped => "SKIP",
        };
        match (c.worst, c.tolerance) {
            (Some(w), Some(t)) => eprintln!("{status} {:<28} {w:.3e} (limit {t:.1e}) {}", c.name, c.detail),
            _ => eprintln!("{status} {:<28} {}", c.name, c.detail),
        }
    }
    if common.out.is_some() || common.format == Some(Format::Json) {
        emit(common.out.as_deref(), "oracle_report.json", to_json_string(&report)?.as_bytes())?;
    }
    if report.passed() {
        Ok(0)
    } else {
        let names: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
        Err(Failure {
            code: EXIT_ORACLE,
            message: format!("oracle check failed: {}", names.join(", ")),
        })
    }
}

fn ingest(common: &Common, events: &Path, summary: Option<&Path>) -> Outcome {
    let events = read_events_path(events)?;
    let summaries = summarize_events(&events);
    if let Some(path) = summary {
        recount_check(&events, &read_summaries(path)?)?;
        eprintln!("summary matches the event log");
    }
    let format = common.format.unwrap_or(Format::Json);
    let bytes = match format {
        Format::Json => to_json_string(&summaries)?.into_bytes(),
        Format::Csv => table(Format::Csv, &[], &summaries)?,
    };
    emit(common.out.as_deref(), &format!("summary.{}", extension(format)), &bytes)?;
    Ok(0)
}

fn dump_state(common: &Common, sector: Option<u32>) -> Outcome {
    let file = config(common)?;
    let experiment = file.to_experiment()?;
    experiment.validate_structure()?;
    let phases = draw_phases(&experiment.model, &mut StreamFactory::new(experiment.seed).stream(0, 0));
    let pair = build_wavepacket_pair(&experiment.params, experiment.cutoff, phases)?;
    let mut state = tensor_product(&pair.psi1, &pair.psi2)?;
    if let Some(n) = sector {
        state = project_total_photon(&state, n)?.0;
    }
    emit(common.out.as_deref(), "state.json", to_json_string(&state.to_dump())?.as_bytes())?;
    Ok(0)
}
