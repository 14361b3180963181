//! Configuration files, event logs, summaries and run manifests.
//!
//! Configs are JSON with the unit in every angle field name. Any key ending
//! in `_deg` is converted to the matching `_rad` key when the file is read,
//! so the rest of the crate only ever sees radians. CSV output uses `,`
//! separators, `.` decimals, `\n` line endings and a header row.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::analysis::discriminate::DEFAULT_THRESHOLD_NATS;
use crate::analysis::phase::EstimationMethod;
use crate::analysis::predict::{contamination_ratio, predict_good_event_rate, predict_sector, Hypothesis};
use crate::error::{Error, Result};
use crate::fock::{photon_sector_probabilities, SqueezeParams, MAX_CUTOFF};
use crate::optics::{AnalyzerConvention, DetectorModel, PortOutcome};
use crate::protocol::{
    classify_good, summarize_events, CorrelationSummary, DetectionEvent, ExperimentConfig, GoodClass, Pipeline,
};
use crate::sources::{PhasePair, SourceModel};

pub const ARTIFACT_VERSION: &str = concat!("phasewitness ", env!("CARGO_PKG_VERSION"));

/// Canonical (radian) form of a run configuration. This is also what a
/// manifest echoes, so a manifest can be fed back as a config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub r: f64,
    pub model: SourceModel,
    #[serde(default)]
    pub detector: DetectorModel,
    #[serde(default)]
    pub betas_rad: Vec<f64>,
    #[serde(default)]
    pub delta_rad: f64,
    /// Retardance grid for phase estimation; when present it replaces
    /// `delta_rad` for predictions and sweeps.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub deltas_rad: Vec<f64>,
    #[serde(default)]
    pub shots_per_beta: u64,
    #[serde(default)]
    pub pipeline: Pipeline,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<u32>,
    /// Good events to collect per retardance in phase estimation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_good_per_point: Option<u64>,
    /// Squeezing values for the rate table; defaults to `[r]`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub r_grid: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_nats: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimation_method: Option<EstimationMethod>,
    #[serde(default, skip_serializing_if = "is_standard")]
    pub analyzer_fixture: AnalyzerConvention,
}

fn is_standard(c: &AnalyzerConvention) -> bool {
    *c == AnalyzerConvention::Standard
}

impl ConfigFile {
    pub fn new(r: f64, model: SourceModel) -> Self {
        Self {
            r,
            model,
            detector: DetectorModel::default(),
            betas_rad: Vec::new(),
            delta_rad: 0.0,
            deltas_rad: Vec::new(),
            shots_per_beta: 0,
            pipeline: Pipeline::default(),
            seed: 0,
            cutoff: None,
            target_good_per_point: None,
            r_grid: Vec::new(),
            threshold_nats: None,
            estimation_method: None,
            analyzer_fixture: AnalyzerConvention::Standard,
        }
    }

    /// Builds the experiment without checking it; call
    /// [`ExperimentConfig::validate`] or `validate_structure` afterwards.
    pub fn to_experiment(&self) -> Result<ExperimentConfig> {
        let params = SqueezeParams::new(self.r, 0.0).map_err(|e| Error::Config(e.to_string()))?;
        Ok(ExperimentConfig {
            cutoff: self.cutoff.unwrap_or_else(|| params.default_cutoff()),
            params,
            model: self.model.clone(),
            detector: self.detector,
            betas: self.betas_rad.clone(),
            delta: self.delta_rad,
            shots_per_beta: self.shots_per_beta,
            pipeline: self.pipeline,
            seed: self.seed,
            convention: self.analyzer_fixture,
        })
    }

    /// Retardance grid: `deltas_rad` if given, else the single `delta_rad`.
    pub fn delta_grid(&self) -> Vec<f64> {
        if self.deltas_rad.is_empty() {
            vec![self.delta_rad]
        } else {
            self.deltas_rad.clone()
        }
    }

    pub fn threshold(&self) -> f64 {
        self.threshold_nats.unwrap_or(DEFAULT_THRESHOLD_NATS)
    }

    /// Closed-form hypothesis matching the source model, if there is one.
    pub fn hypothesis(&self) -> Result<Hypothesis> {
        hypothesis_for(&self.model)
    }
}

pub fn hypothesis_for(model: &SourceModel) -> Result<Hypothesis> {
    match model {
        SourceModel::VanEnkFuchs { .. } => Ok(Hypothesis::VanEnkFuchs),
        SourceModel::RudolphSanders => Ok(Hypothesis::RudolphSanders),
        SourceModel::TwoSource { phi1_rad, phi2_rad } => Ok(Hypothesis::TwoSource {
            phase_difference_rad: phi2_rad - phi1_rad,
        }),
        SourceModel::CustomPhase { .. } => Err(Error::Config(
            "custom_phase sources have no closed-form prediction".into(),
        )),
    }
}

/// Rewrites every `*_deg` key as `*_rad`, converting numbers and arrays of
/// numbers.
pub fn normalize_units(value: Value) -> Result<Value> {
    match value {
        Value::Object(map) => {
            let mut out = Map::new();
            let mut converted = Vec::new();
            for (key, v) in map {
                let v = normalize_units(v)?;
                match key.strip_suffix("_deg") {
                    Some(stem) => converted.push((format!("{stem}_rad"), key.clone(), to_radians(&key, v)?)),
                    None => {
                        out.insert(key, v);
                    }
                }
            }
            for (rad_key, deg_key, v) in converted {
                if out.contains_key(&rad_key) {
                    return Err(Error::Config(format!("both {deg_key} and {rad_key} given")));
                }
                out.insert(rad_key, v);
            }
            Ok(Value::Object(out))
        }
        Value::Array(items) => Ok(Value::Array(
            items.into_iter().map(normalize_units).collect::<Result<_>>()?,
        )),
        other => Ok(other),
    }
}

fn to_radians(key: &str, v: Value) -> Result<Value> {
    let convert = |x: &Value| {
        x.as_f64()
            .map(|d| Value::from(d.to_radians()))
            .ok_or_else(|| Error::Config(format!("{key} must hold numbers")))
    };
    match &v {
        Value::Number(_) => convert(&v),
        Value::Array(items) => Ok(Value::Array(items.iter().map(convert).collect::<Result<_>>()?)),
        _ => Err(Error::Config(format!("{key} must be a number or an array of numbers"))),
    }
}

/// Parses a config document or a run manifest (whose `config` field is
/// used).
pub fn parse_config(text: &str) -> Result<ConfigFile> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("config is not valid JSON: {e}")))?;
    let value = match value {
        Value::Object(mut map) if map.contains_key("artifact_version") && map.contains_key("config") => {
            map.remove("config").unwrap_or(Value::Null)
        }
        v => v,
    };
    let value = normalize_units(value)?;
    serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))
}

pub fn load_config(path: &Path) -> Result<ConfigFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

#[derive(Debug, Serialize, Deserialize)]
struct EventRow {
    shot_index: u64,
    beta_rad: f64,
    delta_rad: f64,
    count_a: u32,
    count_b: u32,
    good: u8,
    good_class: GoodClass,
    phi1_rad: f64,
    phi2_rad: f64,
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .has_headers(true)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

/// Serializes rows with a header line. An empty table still gets its header.
pub fn write_csv_rows<W: Write, S: Serialize>(w: W, header: &[&str], rows: &[S]) -> Result<()> {
    let mut writer = csv_writer(w);
    if rows.is_empty() {
        writer.write_record(header)?;
    }
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub const EVENT_COLUMNS: [&str; 9] = [
    "shot_index",
    "beta_rad",
    "delta_rad",
    "count_a",
    "count_b",
    "good",
    "good_class",
    "phi1_rad",
    "phi2_rad",
];

pub fn write_events<W: Write>(w: W, events: &[DetectionEvent]) -> Result<()> {
    let rows: Vec<EventRow> = events
        .iter()
        .map(|e| EventRow {
            shot_index: e.shot_index,
            beta_rad: e.beta,
            delta_rad: e.delta,
            count_a: e.outcome.count_a,
            count_b: e.outcome.count_b,
            good: e.good as u8,
            good_class: e.good_class,
            phi1_rad: e.phases.phi1,
            phi2_rad: e.phases.phi2,
        })
        .collect();
    write_csv_rows(w, &EVENT_COLUMNS, &rows)
}

pub fn events_to_csv_bytes(events: &[DetectionEvent]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_events(&mut buf, events)?;
    Ok(buf)
}

/// Reads an event log, rejecting rows whose `good`/`good_class` disagree
/// with the counts.
pub fn read_events<R: Read>(r: R) -> Result<Vec<DetectionEvent>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let headers = reader.headers()?.clone();
    if headers.iter().ne(EVENT_COLUMNS.iter().copied()) {
        return Err(Error::EventLog(format!(
            "expected header {}, found {}",
            EVENT_COLUMNS.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut events = Vec::new();
    for (line, row) in reader.deserialize::<EventRow>().enumerate() {
        let row = row.map_err(|e| Error::EventLog(format!("row {}: {e}", line + 1)))?;
        let outcome = PortOutcome::counts(row.count_a, row.count_b);
        let class = classify_good(&outcome);
        if class != row.good_class || (row.good == 1) != class.is_good() || row.good > 1 {
            return Err(Error::EventLog(format!(
                "row {}: counts ({}, {}) imply {class}, log says good={} {}",
                line + 1,
                row.count_a,
                row.count_b,
                row.good,
                row.good_class
            )));
        }
        events.push(DetectionEvent {
            shot_index: row.shot_index,
            beta: row.beta_rad,
            delta: row.delta_rad,
            outcome,
            good: class.is_good(),
            good_class: class,
            phases: PhasePair {
                phi1: row.phi1_rad,
                phi2: row.phi2_rad,
            },
            sector: None,
            discarded: false,
        });
    }
    Ok(events)
}

pub fn read_events_path(path: &Path) -> Result<Vec<DetectionEvent>> {
    let file = fs::File::open(path).map_err(|e| Error::EventLog(format!("cannot open {}: {e}", path.display())))?;
    read_events(std::io::BufReader::new(file))
}

/// Pretty JSON with a trailing newline.
pub fn to_json_string<S: Serialize + ?Sized>(value: &S) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn read_summaries(path: &Path) -> Result<Vec<CorrelationSummary>> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Recounts the event log and compares against stored summaries.
pub fn recount_check(events: &[DetectionEvent], summaries: &[CorrelationSummary]) -> Result<()> {
    let recount = summarize_events(events);
    if recount.len() != summaries.len() {
        return Err(Error::EventLog(format!(
            "summary lists {} settings, event log has {}",
            summaries.len(),
            recount.len()
        )));
    }
    for (a, b) in recount.iter().zip(summaries) {
        if a != b {
            return Err(Error::EventLog(format!(
                "summary at beta = {} rad does not match the event log",
                b.beta_rad
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub beta_rad: f64,
    pub delta_rad: f64,
    pub model: String,
    pub p11: f64,
    pub p_diff: f64,
    pub p00: f64,
    pub conditional_coincidence: f64,
}

pub const PREDICTION_COLUMNS: [&str; 7] = [
    "beta_rad",
    "delta_rad",
    "model",
    "p11",
    "p_diff",
    "p00",
    "conditional_coincidence",
];

/// β × δ grid of one-photon-sector predictions.
pub fn prediction_table(config: &ConfigFile) -> Result<Vec<PredictionRow>> {
    let hypothesis = config.hypothesis()?;
    let deltas = config.delta_grid();
    if config.betas_rad.is_empty() {
        return Err(Error::Config("betas grid is empty".into()));
    }
    for &x in config.betas_rad.iter().chain(&deltas) {
        if !x.is_finite() {
            return Err(Error::Config(format!("non-finite angle {x} in grid")));
        }
    }
    let mut rows = Vec::with_capacity(config.betas_rad.len() * deltas.len());
    for &beta in &config.betas_rad {
        if !(0.0..std::f64::consts::PI).contains(&beta) {
            return Err(Error::Config(format!("beta {beta} outside [0, π)")));
        }
        for &delta in &deltas {
            let p = predict_sector(hypothesis, beta, delta);
            rows.push(PredictionRow {
                beta_rad: beta,
                delta_rad: delta,
                model: hypothesis.label(),
                p11: p.p11,
                p_diff: p.p_diff,
                p00: p.p00,
                conditional_coincidence: p.conditional,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub r: f64,
    pub lambda: f64,
    pub good_event_rate: f64,
    /// Same rate from the truncated joint state's sector table.
    pub good_event_rate_enumerated: f64,
    /// Absent at `r = 0`.
    pub contamination_ratio: Option<f64>,
}

pub const RATE_COLUMNS: [&str; 5] = [
    "r",
    "lambda",
    "good_event_rate",
    "good_event_rate_enumerated",
    "contamination_ratio",
];

const ENUMERATION_TAIL: f64 = 1e-14;

pub fn rate_table(config: &ConfigFile) -> Result<Vec<RateRow>> {
    let grid = if config.r_grid.is_empty() {
        vec![config.r]
    } else {
        config.r_grid.clone()
    };
    grid.iter()
        .map(|&r| {
            let params = SqueezeParams::new(r, 0.0).map_err(|e| Error::Config(e.to_string()))?;
            // tight enough that renormalizing the truncation moves P(1) by < 1e-13
            let cutoff = params.cutoff_for_tail(ENUMERATION_TAIL).min(MAX_CUTOFF).max(params.default_cutoff());
            let joint = crate::fock::tensor_product(
                &crate::fock::make_squeezed_wavepacket(&params, crate::fock::ModeAssignment::AhWithBv, cutoff)?,
                &crate::fock::make_squeezed_wavepacket(&params, crate::fock::ModeAssignment::AvWithBh, cutoff)?,
            )?;
            let enumerated = photon_sector_probabilities(&joint)
                .into_iter()
                .find(|(n, _)| *n == 1)
                .map(|(_, p)| p)
                .unwrap_or(0.0);
            Ok(RateRow {
                r,
                lambda: params.lambda(),
                good_event_rate: predict_good_event_rate(&params),
                good_event_rate_enumerated: enumerated,
                contamination_ratio: contamination_ratio(&params).ok(),
            })
        })
        .collect()
}

/// Record of one run: the full config, what was written, and when.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub command: String,
    pub seed: u64,
    pub config: ConfigFile,
    pub started_at: String,
    pub finished_at: String,
    /// Artifact name to path.
    pub outputs: BTreeMap<String, String>,
    /// SHA-256 of each artifact, hex.
    pub sha256: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, config: &ConfigFile) -> Self {
        Self {
            artifact_version: ARTIFACT_VERSION.to_string(),
            command: command.to_string(),
            seed: config.seed,
            config: config.clone(),
            started_at: now_rfc3339(),
            finished_at: String::new(),
            outputs: BTreeMap::new(),
            sha256: BTreeMap::new(),
        }
    }

    pub fn record_output(&mut self, name: &str, path: &Path, bytes: &[u8]) {
        self.outputs.insert(name.to_string(), path.display().to_string());
        self.sha256.insert(name.to_string(), sha256_hex(bytes));
    }

    pub fn finish(&mut self) {
        self.finished_at = now_rfc3339();
    }
}

pub fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::run_sweep;
    use std::f64::consts::{FRAC_PI_4, FRAC_PI_8};

    #[test]
    fn degrees_become_radians() {
        let c = parse_config(r#"{"r": 0.1, "model": {"kind": "van_enk_fuchs", "phi_deg": 90}, "betas_deg": [0, 45], "delta_deg": 180}"#)
            .unwrap();
        assert_eq!(c.betas_rad, vec![0.0, FRAC_PI_4]);
        assert_eq!(c.delta_rad, std::f64::consts::PI);
        assert_eq!(c.model, SourceModel::VanEnkFuchs { phi_rad: std::f64::consts::FRAC_PI_2 });
    }

    #[test]
    fn conflicting_units_rejected() {
        let e = parse_config(r#"{"r": 0.1, "model": {"kind": "rudolph_sanders"}, "delta_deg": 1, "delta_rad": 1}"#);
        assert!(matches!(e, Err(Error::Config(_))));
    }

    #[test]
    fn unknown_fields_rejected() {
        let e = parse_config(r#"{"r": 0.1, "model": {"kind": "rudolph_sanders"}, "shots": 10}"#);
        assert!(matches!(e, Err(Error::Config(_))));
    }

    #[test]
    fn negative_r_is_a_config_error() {
        let c = parse_config(r#"{"r": -0.1, "model": {"kind": "rudolph_sanders"}}"#).unwrap();
        assert!(matches!(c.to_experiment(), Err(Error::Config(_))));
    }

    #[test]
    fn fixture_alias() {
        let c = parse_config(r#"{"r": 0.1, "model": {"kind": "rudolph_sanders"}, "analyzer_fixture": "corrupted"}"#)
            .unwrap();
        assert_eq!(c.analyzer_fixture, AnalyzerConvention::CorruptedFixture);
    }

    #[test]
    fn manifest_is_accepted_as_config() {
        let mut c = ConfigFile::new(0.05, SourceModel::RudolphSanders);
        c.betas_rad = vec![0.0, FRAC_PI_8];
        c.shots_per_beta = 10;
        c.seed = 9;
        let manifest = RunManifest::new("simulate", &c);
        let back = parse_config(&to_json_string(&manifest).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn event_csv_round_trip() {
        let mut c = ConfigFile::new(0.3, SourceModel::RudolphSanders);
        c.betas_rad = vec![0.0, FRAC_PI_8, FRAC_PI_4];
        c.shots_per_beta = 200;
        c.seed = 3;
        c.pipeline = Pipeline::Qnd { n: 1 };
        let run = run_sweep(&c.to_experiment().unwrap()).unwrap();
        let bytes = events_to_csv_bytes(&run.events).unwrap();
        let text = std::str::from_utf8(&bytes).unwrap();
        assert!(text.starts_with("shot_index,beta_rad,delta_rad,count_a,count_b,good,good_class,phi1_rad,phi2_rad\n"));
        assert!(!text.contains('\r'));
        let back = read_events(bytes.as_slice()).unwrap();
        assert_eq!(summarize_events(&back), run.summaries);
        assert_eq!(events_to_csv_bytes(&back).unwrap(), bytes);
        recount_check(&back, &run.summaries).unwrap();
    }

    #[test]
    fn inconsistent_rows_rejected() {
        let csv = "shot_index,beta_rad,delta_rad,count_a,count_b,good,good_class,phi1_rad,phi2_rad\n0,0,0,1,1,0,not_good,0,0\n";
        assert!(matches!(read_events(csv.as_bytes()), Err(Error::EventLog(_))));
        let bad_header = "shot,beta_rad\n";
        assert!(read_events(bad_header.as_bytes()).is_err());
    }

    #[test]
    fn prediction_rows() {
        let mut c = ConfigFile::new(0.01, SourceModel::VanEnkFuchs { phi_rad: 0.0 });
        c.betas_rad = vec![0.0, FRAC_PI_4];
        let rows = prediction_table(&c).unwrap();
        assert_eq!(rows[0].conditional_coincidence, 0.0);
        assert!((rows[1].conditional_coincidence - 1.0).abs() < 1e-15);
        c.betas_rad.clear();
        assert!(matches!(prediction_table(&c), Err(Error::Config(_))));
    }

    #[test]
    fn rate_rows_match_enumeration() {
        let c = ConfigFile::new(0.01, SourceModel::RudolphSanders);
        let row = &rate_table(&c).unwrap()[0];
        assert!((row.good_event_rate - 1.999466747546363e-4).abs() < 1e-16);
        assert!(((row.good_event_rate_enumerated - row.good_event_rate) / row.good_event_rate).abs() < 1e-12);
    }

    #[test]
    fn empty_tables_keep_header() {
        let mut buf = Vec::new();
        write_csv_rows::<_, PredictionRow>(&mut buf, &PREDICTION_COLUMNS, &[]).unwrap();
        assert_eq!(buf, b"beta_rad,delta_rad,model,p11,p_diff,p00,conditional_coincidence\n");
    }
}
