//! Experiment configuration, seeded trial sweeps and reports.
//!
//! A config is a list of `key = value` lines (TOML values; bare words are
//! read as strings). Trial `t` uses seed `seed + t` for every random
//! object it builds. Trials run on a worker pool sized by the
//! `DUALRP_WORKERS` environment variable; each trial is single-threaded
//! and pure, so records do not depend on the worker count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::concentration::{
    drp_error_bound, full_rank_error_bound, full_rank_sample_bound, iterative_error_bound, measurement_error_bound,
    naive_error_lower_bound, sample_size_bound, smallest_passing_m, span_error_bound, spectral_deviation,
    FULL_RANK_CONSTANT, LOW_RANK_CONSTANT,
};
use crate::error::{Error, Result};
use crate::io::{read_dataset_csv, read_spectrum_file};
use crate::loss::LossSpec;
use crate::model::{
    decaying_singular_values, effective_rank, make_decaying_spectrum, make_low_rank, numerical_rank,
    plant_labels_in_span, spectrum, Dataset, LabelRule, SpectrumInfo, DEFAULT_RANK_THRESHOLD,
};
use crate::recover::{
    measurement_error, recover_drp, recover_iterative, recover_naive, relative_error, ridge_drp_closed_form,
    span_restricted_error, subspace_leakage, Method,
};
use crate::sketch::{project, read_sketch_matrix, ProjectionSketch};
use crate::solve::{ErmObjective, PrimalSolution, SolverConfig};

pub const SCHEMA_VERSION: u32 = 1;
pub const WORKERS_ENV: &str = "DUALRP_WORKERS";
/// Tolerance of the exact solve that produces reference solutions.
pub const REFERENCE_TOLERANCE: f64 = 1e-12;
/// A reference solve that stalls above [`REFERENCE_TOLERANCE`] is still
/// accepted when its gradient norm is below this.
pub const REFERENCE_FALLBACK: f64 = 1e-9;
/// Fraction of trials that must hold the deviation event for the
/// empirical sample size reported by concentration runs.
pub const EMPIRICAL_COVERAGE: f64 = 0.95;

pub const KNOWN_KEYS: &[&str] = &[
    "experiment",
    "dataset",
    "d",
    "n",
    "rank",
    "decay",
    "labels",
    "data_file",
    "loss",
    "lambda",
    "sketch_dim",
    "sketch_file",
    "epsilon",
    "delta",
    "c",
    "method",
    "iters",
    "reference",
    "tol",
    "max_iters",
    "trials",
    "seed",
    "output",
    "format",
    "full_rank",
    "spectrum_file",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Recover,
    Iterate,
    NaiveVsDrp,
    Measurement,
    SpanError,
    Concentration,
    Bounds,
    FullRank,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::Recover,
        Experiment::Iterate,
        Experiment::NaiveVsDrp,
        Experiment::Measurement,
        Experiment::SpanError,
        Experiment::Concentration,
        Experiment::Bounds,
        Experiment::FullRank,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Recover => "recover",
            Experiment::Iterate => "iterate",
            Experiment::NaiveVsDrp => "naive_vs_drp",
            Experiment::Measurement => "measurement",
            Experiment::SpanError => "span_error",
            Experiment::Concentration => "concentration",
            Experiment::Bounds => "bounds",
            Experiment::FullRank => "full_rank",
        }
    }

    fn needs_data(self) -> bool {
        !matches!(self, Experiment::Concentration | Experiment::Bounds)
    }

    fn needs_reference(self) -> bool {
        matches!(
            self,
            Experiment::NaiveVsDrp | Experiment::Measurement | Experiment::SpanError | Experiment::FullRank
        )
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.replace('-', "_");
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::config("experiment", format!("unknown experiment `{s}`; expected one of {}", experiment_names())))
    }
}

fn experiment_names() -> String {
    Experiment::ALL.map(|e| e.name()).join(", ")
}

/// How labels of the decaying-spectrum generator are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayLabels {
    Random,
    /// Signs of a random direction in the span of the top singular
    /// vectors above `√(λ/γ)`.
    TopSpan,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    LowRank { d: usize, n: usize, rank: usize, labels: LabelRule },
    Decaying { d: usize, n: usize, decay: f64, labels: DecayLabels },
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub enum SketchSize {
    Fixed(usize),
    /// Derived from the sample-size bound at the configured `epsilon`, `delta`.
    Bound,
    /// `R = √d·I`.
    Identity,
    /// A persisted `R`, shared by every trial.
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub dataset: Option<DatasetSpec>,
    pub loss: LossSpec,
    pub lambda: f64,
    pub sketch: SketchSize,
    pub epsilon: f64,
    pub delta: f64,
    pub c: Option<f64>,
    pub rank: Option<usize>,
    pub full_rank: bool,
    pub spectrum_file: Option<PathBuf>,
    pub method: Method,
    pub iters: usize,
    pub reference: bool,
    pub solver: SolverConfig,
    pub trials: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub format: Format,
    /// Keys that were filled in from defaults.
    pub defaulted: Vec<String>,
}

/// Parses config text into a table of raw values.
pub fn parse_config_text(raw: &str) -> Result<toml::Table> {
    let mut table = toml::Table::new();
    for (lineno, line) in raw.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::config(line, format!("line {}: expected `key = value`", lineno + 1))
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::config("", format!("line {}: empty key", lineno + 1)));
        }
        if table.contains_key(key) {
            return Err(Error::config(key, "given more than once"));
        }
        table.insert(key.to_string(), parse_value(value));
    }
    Ok(table)
}

/// A TOML value when `text` is one, otherwise the trimmed text as a string.
/// Trailing `# comments` after a bare word are dropped.
pub fn parse_value(text: &str) -> toml::Value {
    let text = text.trim();
    if let Ok(mut t) = toml::from_str::<toml::Table>(&format!("v = {text}")) {
        if let Some(v) = t.remove("v") {
            return v;
        }
    }
    let bare = text.split('#').next().unwrap_or("").trim();
    toml::Value::String(bare.to_string())
}

struct Reader<'a> {
    table: &'a toml::Table,
    defaulted: Vec<String>,
}

impl<'a> Reader<'a> {
    fn has(&self, key: &str) -> bool {
        self.table.contains_key(key)
    }

    fn string(&mut self, key: &str, default: Option<&str>) -> Result<Option<String>> {
        match self.table.get(key) {
            Some(toml::Value::String(s)) => Ok(Some(s.clone())),
            Some(other) => Err(Error::config(key, format!("expected a string, got {other}"))),
            None => {
                if default.is_some() {
                    self.defaulted.push(key.to_string());
                }
                Ok(default.map(str::to_string))
            }
        }
    }

    fn float(&mut self, key: &str, default: Option<f64>) -> Result<Option<f64>> {
        match self.table.get(key) {
            Some(toml::Value::Float(f)) => Ok(Some(*f)),
            Some(toml::Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(other) => Err(Error::config(key, format!("expected a number, got {other}"))),
            None => {
                if default.is_some() {
                    self.defaulted.push(key.to_string());
                }
                Ok(default)
            }
        }
    }

    fn uint(&mut self, key: &str, default: Option<u64>) -> Result<Option<u64>> {
        match self.table.get(key) {
            Some(toml::Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(toml::Value::Integer(i)) => Err(Error::config(key, format!("must be non-negative, got {i}"))),
            Some(other) => Err(Error::config(key, format!("expected a non-negative integer, got {other}"))),
            None => {
                if default.is_some() {
                    self.defaulted.push(key.to_string());
                }
                Ok(default)
            }
        }
    }

    fn boolean(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.table.get(key) {
            Some(toml::Value::Boolean(b)) => Ok(*b),
            Some(other) => Err(Error::config(key, format!("expected true or false, got {other}"))),
            None => {
                self.defaulted.push(key.to_string());
                Ok(default)
            }
        }
    }

    fn required_uint(&mut self, key: &str, context: &str) -> Result<usize> {
        self.uint(key, None)?
            .map(|v| v as usize)
            .ok_or_else(|| Error::config(key, format!("required {context}")))
    }

    fn path(&mut self, key: &str) -> Result<Option<PathBuf>> {
        let p = self.string(key, None)?.map(PathBuf::from);
        if let Some(p) = &p {
            if !p.exists() {
                return Err(Error::config(key, format!("file {} does not exist", p.display())));
            }
        }
        Ok(p)
    }
}

/// Parses and validates config text.
pub fn validate_config(raw: &str) -> Result<ExperimentConfig> {
    config_from_table(&parse_config_text(raw)?)
}

pub fn config_from_table(table: &toml::Table) -> Result<ExperimentConfig> {
    if table.is_empty() {
        return Err(Error::config(
            "experiment",
            format!(
                "empty config; required keys: experiment (one of {}), plus d, n, rank for generated low-rank data \
                 (or data_file), or rank for concentration and bounds",
                experiment_names()
            ),
        ));
    }
    if let Some(unknown) = table.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
        return Err(Error::config(unknown.clone(), format!("unknown key; known keys: {}", KNOWN_KEYS.join(", "))));
    }
    let mut r = Reader {
        table,
        defaulted: Vec::new(),
    };
    let experiment: Experiment = r
        .string("experiment", None)?
        .ok_or_else(|| Error::config("experiment", format!("required key missing; one of {}", experiment_names())))?
        .parse()?;

    let loss: LossSpec = r
        .string("loss", Some("logistic"))?
        .unwrap()
        .parse()
        .map_err(|e: Error| Error::config("loss", e.to_string()))?;
    let lambda = r.float("lambda", Some(1.0))?.unwrap();
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::config("lambda", format!("must be positive, got {lambda}")));
    }
    let epsilon = r.float("epsilon", Some(0.5))?.unwrap();
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::config("epsilon", format!("must lie in (0, 1], got {epsilon}")));
    }
    let delta = r.float("delta", Some(0.1))?.unwrap();
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::config("delta", format!("must lie in (0, 1), got {delta}")));
    }
    let c = r.float("c", None)?;
    if let Some(c) = c {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::config("c", format!("must be positive, got {c}")));
        }
    }
    let tol = r.float("tol", Some(1e-10))?.unwrap();
    let max_iters = r.uint("max_iters", Some(100_000))?.unwrap() as usize;
    let solver = SolverConfig::new(tol, max_iters).map_err(|e| match e {
        Error::InvalidArgument { name: "tolerance", reason } => Error::config("tol", reason),
        other => Error::config("max_iters", other.to_string()),
    })?;
    let trials = r.uint("trials", Some(1))?.unwrap() as usize;
    if trials == 0 {
        return Err(Error::config("trials", "must be at least 1"));
    }
    let seed = r.uint("seed", Some(0))?.unwrap();
    let iters = r.uint("iters", Some(5))?.unwrap() as usize;
    if iters == 0 {
        return Err(Error::config("iters", "must be at least 1"));
    }
    let full_rank = r.boolean("full_rank", false)?;
    let reference = r.boolean("reference", true)?;
    if !reference && experiment.needs_reference() {
        return Err(Error::config("reference", format!("experiment {} needs the reference solution", experiment.name())));
    }
    let output = r.string("output", None)?.map(PathBuf::from);
    let format = match r.string("format", Some("json"))?.unwrap().as_str() {
        "json" => Format::Json,
        "csv" => Format::Csv,
        other => return Err(Error::config("format", format!("expected json or csv, got `{other}`"))),
    };
    let method = match r.string("method", Some("drp"))?.unwrap().replace('-', "_").as_str() {
        "naive" => Method::Naive,
        "drp" => Method::Drp,
        "ridge_closed" => Method::RidgeClosed,
        other => {
            return Err(Error::config("method", format!("expected naive, drp or ridge_closed, got `{other}`")))
        }
    };
    if experiment == Experiment::Recover && method == Method::RidgeClosed && loss != LossSpec::square() {
        return Err(Error::config("method", "ridge_closed needs loss = square"));
    }
    let spectrum_file = r.path("spectrum_file")?;
    let rank = r.uint("rank", None)?.map(|v| v as usize);
    if rank == Some(0) {
        return Err(Error::config("rank", "must be at least 1"));
    }

    let wants_data = experiment.needs_data() || (experiment == Experiment::Bounds && full_rank && spectrum_file.is_none());
    let dataset = if wants_data { Some(read_dataset_spec(&mut r, experiment, rank)?) } else { None };

    let sketch = if let Some(p) = r.path("sketch_file")? {
        if r.has("sketch_dim") {
            return Err(Error::config("sketch_file", "give either sketch_file or sketch_dim, not both"));
        }
        SketchSize::File(p)
    } else {
        match table.get("sketch_dim") {
            None => {
                r.defaulted.push("sketch_dim".into());
                SketchSize::Bound
            }
            Some(toml::Value::Integer(m)) if *m >= 1 => SketchSize::Fixed(*m as usize),
            Some(toml::Value::String(s)) if s == "bound" => SketchSize::Bound,
            Some(toml::Value::String(s)) if s == "identity" => SketchSize::Identity,
            Some(other) => {
                return Err(Error::config(
                    "sketch_dim",
                    format!("expected a positive integer, `bound` or `identity`, got {other}"),
                ))
            }
        }
    };

    match experiment {
        Experiment::Concentration => {
            if rank.is_none() {
                return Err(Error::config("rank", "required for the concentration experiment"));
            }
            if matches!(sketch, SketchSize::Identity | SketchSize::File(_)) {
                return Err(Error::config("sketch_dim", "concentration needs an integer or `bound`"));
            }
        }
        Experiment::Bounds if !full_rank && rank.is_none() => {
            return Err(Error::config("rank", "required for low-rank bounds (or set full_rank = true)"));
        }
        _ => {}
    }
    let low_rank_bound = match experiment {
        Experiment::Concentration => true,
        Experiment::Bounds => !full_rank,
        Experiment::FullRank => false,
        _ => !matches!(dataset, Some(DatasetSpec::Decaying { .. })),
    };
    if low_rank_bound && (sketch == SketchSize::Bound || experiment == Experiment::Bounds) && epsilon > 0.5 {
        return Err(Error::config("epsilon", format!("the low-rank sample bound needs epsilon <= 0.5, got {epsilon}")));
    }

    Ok(ExperimentConfig {
        experiment,
        dataset,
        loss,
        lambda,
        sketch,
        epsilon,
        delta,
        c,
        rank,
        full_rank,
        spectrum_file,
        method,
        iters,
        reference,
        solver,
        trials,
        seed,
        output,
        format,
        defaulted: r.defaulted,
    })
}

fn read_dataset_spec(r: &mut Reader<'_>, experiment: Experiment, rank: Option<usize>) -> Result<DatasetSpec> {
    if let Some(path) = r.path("data_file")? {
        if let Some(kind) = r.string("dataset", None)? {
            if kind != "csv" {
                return Err(Error::config("dataset", format!("data_file given but dataset = `{kind}`")));
            }
        }
        return Ok(DatasetSpec::Csv { path });
    }
    let default_kind = if experiment == Experiment::FullRank { "decaying" } else { "low_rank" };
    let kind = r.string("dataset", Some(default_kind))?.unwrap();
    let context = format!("for dataset = {kind}");
    match kind.as_str() {
        "low_rank" => {
            let d = r.required_uint("d", &context)?;
            let n = r.required_uint("n", &context)?;
            let rank = rank.ok_or_else(|| Error::config("rank", format!("required {context}")))?;
            if d == 0 || n == 0 {
                return Err(Error::config(if d == 0 { "d" } else { "n" }, "must be at least 1"));
            }
            if rank > d.min(n) {
                return Err(Error::config("rank", format!("must not exceed min(d, n) = {}", d.min(n))));
            }
            let labels = r
                .string("labels", Some("sign_of_plant"))?
                .unwrap()
                .parse()
                .map_err(|e: Error| Error::config("labels", e.to_string()))?;
            Ok(DatasetSpec::LowRank { d, n, rank, labels })
        }
        "decaying" => {
            let d = r.required_uint("d", &context)?;
            let n = r.required_uint("n", &context)?;
            if d == 0 || n == 0 {
                return Err(Error::config(if d == 0 { "d" } else { "n" }, "must be at least 1"));
            }
            let decay = r.float("decay", Some(1.0))?.unwrap();
            if !(decay > 0.0 && decay.is_finite()) {
                return Err(Error::config("decay", format!("must be positive, got {decay}")));
            }
            let default_labels = if experiment == Experiment::FullRank { "top_span" } else { "random" };
            let labels = match r.string("labels", Some(default_labels))?.unwrap().as_str() {
                "random" => DecayLabels::Random,
                "top_span" => DecayLabels::TopSpan,
                other => {
                    return Err(Error::config("labels", format!("expected random or top_span for decaying data, got `{other}`")))
                }
            };
            Ok(DatasetSpec::Decaying { d, n, decay, labels })
        }
        "csv" => Err(Error::config("data_file", "required for dataset = csv")),
        other => Err(Error::config("dataset", format!("expected low_rank, decaying or csv, got `{other}`"))),
    }
}

impl ExperimentConfig {
    /// Every field, with defaults filled in.
    pub fn echo(&self) -> Value {
        let dataset = match &self.dataset {
            None => Value::Null,
            Some(DatasetSpec::LowRank { d, n, rank, labels }) => json!({
                "kind": "low_rank", "d": d, "n": n, "rank": rank,
                "labels": match labels { LabelRule::SignOfPlant => "sign_of_plant", LabelRule::Random => "random" },
            }),
            Some(DatasetSpec::Decaying { d, n, decay, labels }) => json!({
                "kind": "decaying", "d": d, "n": n, "decay": decay,
                "labels": match labels { DecayLabels::Random => "random", DecayLabels::TopSpan => "top_span" },
            }),
            Some(DatasetSpec::Csv { path }) => json!({"kind": "csv", "path": path.display().to_string()}),
        };
        let sketch = match &self.sketch {
            SketchSize::Fixed(m) => json!(m),
            SketchSize::Bound => json!("bound"),
            SketchSize::Identity => json!("identity"),
            SketchSize::File(p) => json!({"file": p.display().to_string()}),
        };
        json!({
            "experiment": self.experiment.name(),
            "dataset": dataset,
            "loss": self.loss.to_string(),
            "lambda": self.lambda,
            "sketch_dim": sketch,
            "epsilon": self.epsilon,
            "delta": self.delta,
            "c": self.c,
            "rank": self.rank,
            "full_rank": self.full_rank,
            "spectrum_file": self.spectrum_file.as_ref().map(|p| p.display().to_string()),
            "method": self.method.to_string(),
            "iters": self.iters,
            "reference": self.reference,
            "tol": self.solver.tolerance,
            "max_iters": self.solver.max_iterations,
            "trials": self.trials,
            "seed": self.seed,
            "output": self.output.as_ref().map(|p| p.display().to_string()),
            "format": self.format,
            "defaulted": self.defaulted,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// The statistic should not exceed the bound.
    Upper,
    /// The statistic should not fall below the bound.
    Lower,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    /// Name of the checked quantity: `rel_error` or a metric key.
    pub statistic: String,
    pub epsilon: f64,
    pub value: f64,
    pub kind: BoundKind,
}

impl BoundCheck {
    fn upper(statistic: &str, epsilon: f64, value: f64) -> Self {
        BoundCheck {
            statistic: statistic.into(),
            epsilon,
            value,
            kind: BoundKind::Upper,
        }
    }

    fn lower(statistic: &str, epsilon: f64, value: f64) -> Self {
        BoundCheck {
            kind: BoundKind::Lower,
            ..BoundCheck::upper(statistic, epsilon, value)
        }
    }

    pub fn holds(&self, observed: f64) -> bool {
        match self.kind {
            BoundKind::Upper => observed <= self.value,
            BoundKind::Lower => observed >= self.value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub m: usize,
    pub method: String,
    pub rel_error: Option<f64>,
    pub bound: Option<BoundCheck>,
    pub within_bound: Option<bool>,
    pub trace: Vec<f64>,
    pub metrics: BTreeMap<String, f64>,
    pub error: Option<String>,
}

impl TrialRecord {
    fn new(trial: usize, seed: u64, method: &str) -> Self {
        TrialRecord {
            trial,
            seed,
            m: 0,
            method: method.into(),
            rel_error: None,
            bound: None,
            within_bound: None,
            trace: Vec::new(),
            metrics: BTreeMap::new(),
            error: None,
        }
    }

    /// The value the bound check refers to.
    pub fn statistic(&self) -> Option<f64> {
        let b = self.bound.as_ref()?;
        if b.statistic == "rel_error" {
            self.rel_error
        } else {
            self.metrics.get(&b.statistic).copied()
        }
    }

    fn check(mut self, bound: BoundCheck) -> Self {
        self.bound = Some(bound);
        self.within_bound = self.statistic().map(|v| self.bound.as_ref().unwrap().holds(v));
        self
    }

    fn metric(&mut self, key: &str, value: f64) {
        self.metrics.insert(key.into(), value);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregates {
    pub trials: usize,
    pub errored: usize,
    pub mean_rel_error: Option<f64>,
    pub max_rel_error: Option<f64>,
    /// Fraction of bound-checked trials whose statistic satisfied the bound.
    pub success_fraction: Option<f64>,
    pub metric_means: BTreeMap<String, f64>,
}

impl Aggregates {
    pub fn from_records(records: &[TrialRecord]) -> Self {
        let errors: Vec<f64> = records.iter().filter_map(|r| r.rel_error).collect();
        let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        let checked: Vec<bool> = records.iter().filter_map(|r| r.within_bound).collect();
        let mut by_key: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for r in records {
            for (k, v) in &r.metrics {
                by_key.entry(k.clone()).or_default().push(*v);
            }
        }
        Aggregates {
            trials: records.len(),
            errored: records.iter().filter(|r| r.error.is_some()).count(),
            mean_rel_error: mean(&errors),
            max_rel_error: errors.iter().cloned().reduce(f64::max),
            success_fraction: (!checked.is_empty())
                .then(|| checked.iter().filter(|&&b| b).count() as f64 / checked.len() as f64),
            metric_means: by_key.into_iter().map(|(k, v)| (k, mean(&v).unwrap())).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timings {
    pub workers: usize,
    pub total_seconds: f64,
    pub per_trial_seconds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportDocument {
    pub schema_version: u32,
    pub config: Value,
    /// Experiment-level values that are not per trial.
    pub summary: BTreeMap<String, Value>,
    pub records: Vec<TrialRecord>,
    pub aggregates: Aggregates,
    pub timings: Timings,
}

impl ReportDocument {
    /// `0` when no trial errored, `4` when every trial did, `1` otherwise.
    pub fn exit_code(&self) -> i32 {
        match self.aggregates.errored {
            0 => 0,
            e if e == self.records.len() => 4,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Stable CSV, one row per trial, with the schema version as the first
    /// column. Concentration reports use the columns `seed, deviation, pass`.
    pub fn to_csv(&self) -> String {
        let mut out = Vec::new();
        {
            let mut w = csv::Writer::from_writer(&mut out);
            let concentration = self.config["experiment"] == "concentration";
            if concentration {
                w.write_record(["schema_version", "seed", "deviation", "pass"]).unwrap();
                for r in &self.records {
                    w.write_record([
                        SCHEMA_VERSION.to_string(),
                        r.seed.to_string(),
                        opt_num(r.metrics.get("deviation").copied()),
                        opt_bool(r.within_bound),
                    ])
                    .unwrap();
                }
            } else {
                w.write_record([
                    "schema_version",
                    "trial",
                    "seed",
                    "m",
                    "method",
                    "rel_error",
                    "bound_statistic",
                    "bound_kind",
                    "bound_epsilon",
                    "bound_value",
                    "within_bound",
                    "error",
                    "trace",
                    "metrics",
                ])
                .unwrap();
                for r in &self.records {
                    let (stat, kind, eps, val) = match &r.bound {
                        Some(b) => (
                            b.statistic.clone(),
                            match b.kind {
                                BoundKind::Upper => "upper".to_string(),
                                BoundKind::Lower => "lower".to_string(),
                            },
                            opt_num(Some(b.epsilon)),
                            opt_num(Some(b.value)),
                        ),
                        None => Default::default(),
                    };
                    let trace = r.trace.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(";");
                    let metrics = r.metrics.iter().fold(String::new(), |mut s, (k, v)| {
                        if !s.is_empty() {
                            s.push(';');
                        }
                        let _ = write!(s, "{k}={v:e}");
                        s
                    });
                    w.write_record([
                        SCHEMA_VERSION.to_string(),
                        r.trial.to_string(),
                        r.seed.to_string(),
                        r.m.to_string(),
                        r.method.clone(),
                        opt_num(r.rel_error),
                        stat,
                        kind,
                        eps,
                        val,
                        opt_bool(r.within_bound),
                        r.error.clone().unwrap_or_default(),
                        trace,
                        metrics,
                    ])
                    .unwrap();
                }
            }
            w.flush().unwrap();
        }
        String::from_utf8(out).expect("csv is utf-8")
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => self.to_json(),
            Format::Csv => self.to_csv(),
        }
    }

    /// Writes the rendered report to `path`.
    pub fn write(&self, path: &Path, format: Format) -> Result<()> {
        std::fs::write(path, self.render(format)).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn opt_num(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

fn opt_bool(v: Option<bool>) -> String {
    v.map(|b| b.to_string()).unwrap_or_default()
}

/// Process exit status for an error raised before any trial ran.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config { .. } | Error::InvalidArgument { .. } => 2,
        Error::Io { .. } | Error::Format { .. } => 3,
        _ => 1,
    }
}

/// Worker count from [`WORKERS_ENV`], defaulting to the available cores.
pub fn worker_count() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Error::config(WORKERS_ENV, format!("must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

/// Files loaded once and shared by every trial.
struct Inputs {
    dataset: Option<Dataset>,
    sketch: Option<(DMatrix<f64>, u64)>,
    spectrum: Option<Vec<f64>>,
}

fn load_inputs(config: &ExperimentConfig) -> Result<Inputs> {
    let dataset = match &config.dataset {
        Some(DatasetSpec::Csv { path }) => Some(read_dataset_csv(path)?),
        _ => None,
    };
    let sketch = match &config.sketch {
        SketchSize::File(p) => Some(read_sketch_matrix(p)?),
        _ => None,
    };
    let spectrum = match &config.spectrum_file {
        Some(p) => Some(read_spectrum_file(p)?),
        None => None,
    };
    Ok(Inputs {
        dataset,
        sketch,
        spectrum,
    })
}

/// Runs every trial of `config` on a pool of [`worker_count`] threads.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ReportDocument> {
    run_experiment_with_workers(config, worker_count()?)
}

pub fn run_experiment_with_workers(config: &ExperimentConfig, workers: usize) -> Result<ReportDocument> {
    let start = Instant::now();
    let inputs = load_inputs(config)?;
    let mut summary = BTreeMap::new();

    let (records, per_trial_seconds) = if config.experiment == Experiment::Bounds {
        let t0 = Instant::now();
        let rec = bounds_record(config, &inputs)?;
        summary.insert("m".into(), json!(rec.m));
        (vec![rec], vec![t0.elapsed().as_secs_f64()])
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| Error::config(WORKERS_ENV, e.to_string()))?;
        let timed: Vec<(TrialRecord, f64)> = pool.install(|| {
            (0..config.trials)
                .into_par_iter()
                .map(|t| {
                    let t0 = Instant::now();
                    let rec = run_trial(config, &inputs, t);
                    (rec, t0.elapsed().as_secs_f64())
                })
                .collect()
        });
        timed.into_iter().unzip()
    };

    if config.experiment == Experiment::Concentration {
        let rank = config.rank.unwrap();
        let bound = low_rank_m(config, rank)?;
        summary.insert("sample_size_bound".into(), json!(bound));
        let upper = records.iter().map(|r| r.m).max().unwrap_or(bound).max(bound);
        let empirical = smallest_passing_m(rank, config.epsilon, EMPIRICAL_COVERAGE, config.trials, config.seed, upper)?;
        summary.insert("empirical_m".into(), json!(empirical));
        summary.insert("empirical_coverage".into(), json!(EMPIRICAL_COVERAGE));
    }

    let aggregates = Aggregates::from_records(&records);
    Ok(ReportDocument {
        schema_version: SCHEMA_VERSION,
        config: config.echo(),
        summary,
        records,
        aggregates,
        timings: Timings {
            workers,
            total_seconds: start.elapsed().as_secs_f64(),
            per_trial_seconds,
        },
    })
}

fn low_rank_m(config: &ExperimentConfig, rank: usize) -> Result<usize> {
    sample_size_bound(rank, config.epsilon, config.delta, config.c.unwrap_or(LOW_RANK_CONSTANT))
}

fn full_rank_m(config: &ExperimentConfig, sv: &[f64], d: usize) -> Result<usize> {
    full_rank_sample_bound(
        sv,
        config.lambda,
        config.loss.gamma(),
        config.epsilon,
        config.delta,
        d,
        config.c.unwrap_or(FULL_RANK_CONSTANT),
    )
}

fn run_trial(config: &ExperimentConfig, inputs: &Inputs, t: usize) -> TrialRecord {
    let seed = config.seed.wrapping_add(t as u64);
    let method = match config.experiment {
        Experiment::Recover => config.method.to_string(),
        Experiment::Iterate => Method::DrpIterative.to_string(),
        Experiment::SpanError => Method::Naive.to_string(),
        Experiment::Measurement | Experiment::FullRank => Method::Drp.to_string(),
        other => other.name().to_string(),
    };
    let base = TrialRecord::new(t, seed, &method);
    let outcome = if config.experiment == Experiment::Concentration {
        concentration_trial(config, base.clone())
    } else {
        data_trial(config, inputs, base.clone())
    };
    outcome.unwrap_or_else(|e| TrialRecord {
        error: Some(e.to_string()),
        ..base
    })
}

fn concentration_trial(config: &ExperimentConfig, mut rec: TrialRecord) -> Result<TrialRecord> {
    let rank = config.rank.unwrap();
    rec.m = match config.sketch {
        SketchSize::Fixed(m) => m,
        _ => low_rank_m(config, rank)?,
    };
    let deviation = spectral_deviation(rank, rec.m, rec.seed)?;
    rec.metric("deviation", deviation);
    Ok(rec.check(BoundCheck::upper("deviation", config.epsilon, config.epsilon)))
}

/// A generated or loaded dataset with what is known about its spectrum.
struct TrialData {
    data: Dataset,
    /// Rank used by low-rank bounds.
    rank: usize,
    /// Singular values, sorted non-increasingly, when known without an SVD.
    singular_values: Option<Vec<f64>>,
    spectrum: Option<SpectrumInfo>,
}

impl TrialData {
    fn spectrum(&mut self) -> Result<&SpectrumInfo> {
        if self.spectrum.is_none() {
            self.spectrum = Some(spectrum(&self.data, DEFAULT_RANK_THRESHOLD)?);
        }
        Ok(self.spectrum.as_ref().unwrap())
    }

    fn singular_values(&mut self) -> Result<Vec<f64>> {
        if let Some(s) = &self.singular_values {
            return Ok(s.clone());
        }
        Ok(self.spectrum()?.singular_values.iter().copied().collect())
    }
}

fn build_data(config: &ExperimentConfig, inputs: &Inputs, seed: u64) -> Result<TrialData> {
    match config.dataset.as_ref().expect("data experiments carry a dataset") {
        DatasetSpec::LowRank { d, n, rank, labels } => Ok(TrialData {
            data: make_low_rank(*d, *n, *rank, *labels, seed)?,
            rank: *rank,
            singular_values: None,
            spectrum: None,
        }),
        DatasetSpec::Decaying { d, n, decay, labels } => {
            let data = make_decaying_spectrum(*d, *n, *decay, seed)?;
            let sv: Vec<f64> = decaying_singular_values(*d, *n, *decay).iter().copied().collect();
            let mut out = TrialData {
                rank: sv.len(),
                data,
                singular_values: Some(sv.clone()),
                spectrum: None,
            };
            if *labels == DecayLabels::TopSpan {
                let k = numerical_rank(&sv, (config.lambda / config.loss.gamma()).sqrt()).max(1);
                let basis = out.spectrum()?.left_vectors.columns(0, k).into_owned();
                out.data = plant_labels_in_span(&out.data, &basis, seed)?;
            }
            Ok(out)
        }
        DatasetSpec::Csv { .. } => {
            let data = inputs.dataset.clone().expect("csv dataset loaded");
            let mut out = TrialData {
                data,
                rank: 0,
                singular_values: None,
                spectrum: None,
            };
            out.rank = out.spectrum()?.rank.max(1);
            Ok(out)
        }
    }
}

fn build_sketch(config: &ExperimentConfig, inputs: &Inputs, td: &mut TrialData, seed: u64) -> Result<ProjectionSketch> {
    match &config.sketch {
        SketchSize::Fixed(m) => ProjectionSketch::gaussian(&td.data, *m, seed),
        SketchSize::Identity => ProjectionSketch::identity(&td.data),
        SketchSize::File(_) => {
            let (r, file_seed) = inputs.sketch.clone().expect("sketch file loaded");
            let m = r.ncols();
            project(&td.data, r, m, file_seed)
        }
        SketchSize::Bound => {
            let full = config.experiment == Experiment::FullRank
                || matches!(config.dataset, Some(DatasetSpec::Decaying { .. }));
            let m = if full {
                let sv = td.singular_values()?;
                full_rank_m(config, &sv, td.data.dim())?
            } else {
                low_rank_m(config, td.rank)?
            };
            if m == 0 {
                return Err(Error::invalid("sketch_dim", "the sample bound is zero for this spectrum"));
            }
            ProjectionSketch::gaussian(&td.data, m, seed)
        }
    }
}

fn reference_solution(config: &ExperimentConfig, data: &Dataset) -> Result<PrimalSolution> {
    let cfg = SolverConfig::new(REFERENCE_TOLERANCE, config.solver.max_iterations)?;
    match ErmObjective::new(data.features(), data.labels(), &config.loss, config.lambda)?.solve(&cfg) {
        Err(Error::NotConverged { best }) if best.grad_norm <= REFERENCE_FALLBACK => Ok(*best),
        other => other,
    }
}

fn sketched_solution(config: &ExperimentConfig, data: &Dataset, sketch: &ProjectionSketch) -> Result<PrimalSolution> {
    ErmObjective::new(sketch.sketched_features(), data.labels(), &config.loss, config.lambda)?.solve(&config.solver)
}

fn data_trial(config: &ExperimentConfig, inputs: &Inputs, mut rec: TrialRecord) -> Result<TrialRecord> {
    let mut td = build_data(config, inputs, rec.seed)?;
    let sketch = build_sketch(config, inputs, &mut td, rec.seed)?;
    rec.m = sketch.m();
    let reference = if config.reference {
        let sol = reference_solution(config, &td.data)?;
        rec.metric("reference_grad_norm", sol.grad_norm);
        Some(sol.weights)
    } else {
        None
    };
    let eps = config.epsilon;
    let (d, m) = (td.data.dim(), rec.m);
    let set_error = |rec: &mut TrialRecord, w: &DVector<f64>| {
        if let Some(r) = &reference {
            rec.rel_error = Some(relative_error(w, r));
        }
    };

    match config.experiment {
        Experiment::Recover => {
            let (w, bound) = match config.method {
                Method::Naive => {
                    let z = sketched_solution(config, &td.data, &sketch)?;
                    let w = recover_naive(sketch.matrix_r(), &z.weights, m)?;
                    (w, BoundCheck::lower("rel_error", eps, naive_error_lower_bound(d, td.rank, m, eps)))
                }
                Method::RidgeClosed => (
                    ridge_drp_closed_form(&td.data, config.lambda, &sketch)?,
                    BoundCheck::upper("rel_error", eps, drp_error_bound(eps)),
                ),
                _ => (
                    recover_drp(&td.data, &config.loss, config.lambda, &sketch, &config.solver)?.recovered,
                    BoundCheck::upper("rel_error", eps, drp_error_bound(eps)),
                ),
            };
            set_error(&mut rec, &w);
            rec.metric("recovered_norm", w.norm());
            Ok(if reference.is_some() { rec.check(bound) } else { rec })
        }
        Experiment::Iterate => {
            let (res, trace) = recover_iterative(
                &td.data,
                &config.loss,
                config.lambda,
                &sketch,
                config.iters,
                &config.solver,
                reference.as_ref(),
            )?;
            rec.rel_error = res.rel_error;
            rec.trace = trace.per_iteration_errors;
            rec.metric("rounds", trace.sketched_norms.len() as f64);
            rec.metric("stopped_early", if trace.stopped_early { 1.0 } else { 0.0 });
            let bound = BoundCheck::upper("rel_error", eps, iterative_error_bound(eps, config.iters));
            Ok(if reference.is_some() { rec.check(bound) } else { rec })
        }
        Experiment::NaiveVsDrp => {
            let w_star = reference.as_ref().unwrap();
            let drp = recover_drp(&td.data, &config.loss, config.lambda, &sketch, &config.solver)?;
            let z = drp.sketched.as_ref().unwrap();
            let naive = recover_naive(sketch.matrix_r(), &z.weights, m)?;
            let (e_naive, e_drp) = (relative_error(&naive, w_star), relative_error(&drp.recovered, w_star));
            rec.rel_error = Some(e_drp);
            rec.metric("drp_rel_error", e_drp);
            rec.metric("naive_rel_error", e_naive);
            rec.metric("ratio", e_naive / e_drp);
            rec.metric("naive_lower_bound", naive_error_lower_bound(d, td.rank, m, eps));
            Ok(rec.check(BoundCheck::upper("rel_error", eps, drp_error_bound(eps))))
        }
        Experiment::Measurement => {
            let w_star = reference.as_ref().unwrap();
            let z = sketched_solution(config, &td.data, &sketch)?;
            let ratio = measurement_error(&z.weights, sketch.matrix_r(), m, w_star)?;
            rec.metric("measurement_error", ratio);
            Ok(rec.check(BoundCheck::upper("measurement_error", eps, measurement_error_bound(eps))))
        }
        Experiment::SpanError => {
            let w_star = reference.as_ref().unwrap();
            let z = sketched_solution(config, &td.data, &sketch)?;
            let naive = recover_naive(sketch.matrix_r(), &z.weights, m)?;
            set_error(&mut rec, &naive);
            let span = span_restricted_error(td.spectrum()?, &naive, w_star)? / w_star.norm();
            rec.metric("span_error", span);
            Ok(rec.check(BoundCheck::upper("span_error", eps, span_error_bound(eps))))
        }
        Experiment::FullRank => {
            let w_star = reference.as_ref().unwrap();
            let sv = td.singular_values()?;
            let gamma = config.loss.gamma();
            let k = numerical_rank(&sv, (config.lambda / gamma).sqrt());
            let drp = recover_drp(&td.data, &config.loss, config.lambda, &sketch, &config.solver)?;
            set_error(&mut rec, &drp.recovered);
            let value = if k == 0 {
                f64::INFINITY
            } else {
                full_rank_error_bound(eps, config.lambda, gamma, sv[k - 1])
            };
            rec.metric("k", k as f64);
            if k > 0 {
                rec.metric("sigma_k", sv[k - 1]);
                let basis = td.spectrum()?.left_vectors.columns(0, k).into_owned();
                rec.metric("leakage", subspace_leakage(&basis, w_star));
            }
            rec.metric("effective_rank", effective_rank(&sv, config.lambda, gamma)?);
            Ok(rec.check(BoundCheck::upper("rel_error", eps, value)))
        }
        Experiment::Concentration | Experiment::Bounds => unreachable!("handled separately"),
    }
}

fn bounds_record(config: &ExperimentConfig, inputs: &Inputs) -> Result<TrialRecord> {
    let mut rec = TrialRecord::new(0, config.seed, "bounds");
    if !config.full_rank {
        let rank = config.rank.unwrap();
        rec.m = low_rank_m(config, rank)?;
        rec.metric("rank", rank as f64);
        rec.metric("c", config.c.unwrap_or(LOW_RANK_CONSTANT));
        return Ok(rec);
    }
    let (sv, d) = match &inputs.spectrum {
        Some(sv) => (sv.clone(), sv.len()),
        None => {
            let mut td = build_data(config, inputs, config.seed)?;
            let d = td.data.dim();
            (td.singular_values()?, d)
        }
    };
    let gamma = config.loss.gamma();
    rec.m = full_rank_m(config, &sv, d)?;
    rec.metric("c", config.c.unwrap_or(FULL_RANK_CONSTANT));
    rec.metric("effective_rank", effective_rank(&sv, config.lambda, gamma)?);
    rec.metric("numerical_rank", numerical_rank(&sv, (config.lambda / gamma).sqrt()) as f64);
    Ok(rec)
}
