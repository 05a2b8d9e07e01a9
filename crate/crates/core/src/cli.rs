//! Command-line front end: flag and config-file resolution, dispatch, and
//! artifact writing.
//!
//! Settings resolve as built-in defaults, then the TOML file given by
//! `--config`, then explicit flags. Every artifact written to `--out` gets a
//! sibling `<out>.manifest.json` holding the resolved config, its SHA-256, the
//! seed and the wall time; wall time never enters the data files, so reruns
//! of the same config produce byte-identical data.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::analytic::{
    corrections, expected_degree_count, expected_x, expected_y, recurrence_residuals, sum_c_over_l,
    AnalyticTables, Precision, TableOptions, DEFAULT_CELL_BUDGET,
};
use crate::error::{Error, Result};
use crate::experiments::{build_stable_cover, lipschitz_audit, run_ensemble, EnsembleSpec};
use crate::graph::MultiGraph;
use crate::io::{import_edge_list, write_atomic, write_edge_list, EdgeFormat, EdgeListHeader};
use crate::model::{build_sequence, materialize, ModelParams};
use crate::stats::{degree_histogram, vertex_stats, CountTables, STATS_SCHEMA};

pub const MANIFEST_SCHEMA: &str = "second-degree/manifest/1";
pub const PREDICT_SCHEMA: &str = "second-degree/predict/1";
pub const AUDIT_SCHEMA: &str = "second-degree/audit/1";

const SERIES_REL_TOL: f64 = 1e-10;
const DEGREE_ROWS: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Generate,
    Stats,
    Predict,
    Experiment,
    PerturbAudit,
    CoverAudit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    /// Plain `u v` edge list (generate only).
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PrecisionArg {
    Double,
    DoubleDouble,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::Double => Precision::Double,
            PrecisionArg::DoubleDouble => Precision::DoubleDouble,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "second-degree",
    version,
    about = "Second-degree statistics of preferential-attachment graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Sample one graph and write its edge list.
    Generate(Flags),
    /// Degree and second-degree counts of a sampled or imported graph.
    Stats(Flags),
    /// Leading-order predictions, optional series sums and recurrence tables.
    Predict(Flags),
    /// Monte Carlo ensemble with power-law fit and concentration probe.
    Experiment(Flags),
    /// Single-coordinate perturbation audit of Y(k).
    PerturbAudit(Flags),
    /// Stable-cover construction with budget, stability and witness checks.
    CoverAudit(Flags),
}

/// Flags shared by every command; each command reads the ones it needs.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
struct Flags {
    /// TOML file with any of the settings below (snake_case keys).
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    a: Option<f64>,
    #[arg(long)]
    m: Option<u32>,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    #[serde(alias = "base_seed")]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<u32>,
    /// Comma-separated second-degree thresholds, e.g. 4,8,16,32.
    #[arg(long, value_delimiter = ',')]
    k_grid: Option<Vec<u32>>,
    #[arg(long, allow_hyphen_values = true)]
    epsilon: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Edge list to analyse instead of sampling (stats).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Single threshold (audits; replaces the grid in predict).
    #[arg(long)]
    k: Option<u32>,
    #[arg(long)]
    trials: Option<u64>,
    /// Random completions per coordinate set (cover-audit).
    #[arg(long)]
    completions: Option<u64>,
    #[arg(long)]
    l_max: Option<u32>,
    #[arg(long)]
    k_max: Option<u32>,
    /// Constant p(2, 0) of the loop table.
    #[arg(long, allow_hyphen_values = true)]
    p0: Option<f64>,
    #[arg(long, value_enum)]
    precision: Option<PrecisionArg>,
    /// Also sum c(l, k) over l for each k (predict).
    #[arg(long)]
    #[serde(default)]
    series: bool,
    /// Also build and write the c/p tables (predict).
    #[arg(long)]
    #[serde(default)]
    tables: bool,
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub model: ModelParams,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub input: Option<PathBuf>,
    pub replicas: u32,
    pub k_grid: Vec<u32>,
    pub epsilon: f64,
    pub k: Option<u32>,
    pub trials: u64,
    pub completions: u64,
    pub l_max: u32,
    pub k_max: u32,
    pub p0: Option<f64>,
    pub precision: PrecisionArg,
    pub series: bool,
    pub tables: bool,
}

impl RunConfig {
    pub fn ensemble_spec(&self) -> EnsembleSpec {
        EnsembleSpec {
            params: self.model,
            replicas: self.replicas,
            base_seed: self.seed,
            k_grid: self.k_grid.clone(),
            l_grid: None,
            epsilon: self.epsilon,
        }
    }

    fn threshold(&self) -> u32 {
        self.k.unwrap_or(3)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        format!("{:x}", Sha256::digest(bytes))
    }
}

/// Failure of a CLI invocation, before or during dispatch.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Run(e) => run_exit_code(e),
        }
    }

    fn record(&self) -> Value {
        let (kind, message) = match self {
            Failure::Usage(m) => ("usage", m.clone()),
            Failure::Run(e) => (e.kind(), e.to_string()),
        };
        json!({ "error": kind, "message": message, "exit_code": self.exit_code() })
    }
}

fn run_exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } | Error::Parse { .. } => 4,
        Error::Replica { source, .. } => run_exit_code(source),
        _ => 3,
    }
}

fn load_file_config(path: &Path) -> std::result::Result<Flags, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Run(Error::io(path, e)))?;
    toml::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn resolve(command: Command, flags: Flags) -> std::result::Result<RunConfig, Failure> {
    let file = match &flags.config {
        Some(path) => load_file_config(path)?,
        None => Flags::default(),
    };
    macro_rules! pick {
        ($field:ident, $default:expr) => {
            flags
                .$field
                .clone()
                .or(file.$field.clone())
                .unwrap_or($default)
        };
    }
    let default_format = if command == Command::Generate {
        Format::Text
    } else {
        Format::Json
    };
    let format = pick!(format, default_format);
    if format == Format::Text && command != Command::Generate {
        return Err(Failure::Usage(
            "--format text applies to generate only".into(),
        ));
    }
    let model = ModelParams {
        a: pick!(a, 1.0),
        m: pick!(m, 1),
        n: pick!(n, 1000),
    };
    Ok(RunConfig {
        command,
        model,
        seed: pick!(seed, 0),
        out: flags.out.clone().or(file.out.clone()),
        format,
        input: flags.input.clone().or(file.input.clone()),
        replicas: pick!(replicas, 20),
        k_grid: pick!(k_grid, vec![4, 8, 16, 32]),
        epsilon: pick!(epsilon, 0.2),
        k: flags.k.or(file.k),
        trials: pick!(trials, 1000),
        completions: pick!(completions, 100),
        l_max: pick!(l_max, 200),
        k_max: pick!(k_max, 200),
        p0: flags.p0.or(file.p0),
        precision: pick!(precision, PrecisionArg::Double),
        series: flags.series || file.series,
        tables: flags.tables || file.tables,
    })
}

/// Parses arguments into a resolved config.
pub fn parse_args<I, T>(args: I) -> std::result::Result<RunConfig, Failure>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Failure::Usage(e.to_string()))?;
    let (command, flags) = match cli.command {
        Sub::Generate(f) => (Command::Generate, f),
        Sub::Stats(f) => (Command::Stats, f),
        Sub::Predict(f) => (Command::Predict, f),
        Sub::Experiment(f) => (Command::Experiment, f),
        Sub::PerturbAudit(f) => (Command::PerturbAudit, f),
        Sub::CoverAudit(f) => (Command::CoverAudit, f),
    };
    resolve(command, flags)
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<T> = args.into_iter().collect();
    if let Err(e) = Cli::try_parse_from(args.clone()) {
        use clap::error::ErrorKind;
        if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
            let _ = e.print();
            return 0;
        }
    }
    let outcome = parse_args(args).and_then(|config| dispatch(&config).map_err(Failure::from));
    match outcome {
        Ok(_) => 0,
        Err(failure) => {
            if let Failure::Usage(message) = &failure {
                eprintln!("{message}");
            }
            eprintln!("{}", failure.record());
            failure.exit_code()
        }
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    schema: &'static str,
    tool: &'static str,
    version: &'static str,
    config: &'a RunConfig,
    config_hash: String,
    seed: u64,
    wall_seconds: f64,
    outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<Value>,
}

/// `dir/name.csv` with tag `lk` becomes `dir/name.lk.csv`.
pub fn sibling(path: &Path, tag: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.{tag}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{tag}"),
    };
    path.with_file_name(name)
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

/// Collects the files of one run; without `--out` only the main artifact is
/// printed to stdout.
struct Sink<'a> {
    config: &'a RunConfig,
    written: Vec<PathBuf>,
}

impl<'a> Sink<'a> {
    fn emit<F>(&mut self, tag: Option<&str>, body: F) -> Result<()>
    where
        F: FnOnce(&mut dyn Write) -> io::Result<()>,
    {
        match (&self.config.out, tag) {
            (Some(out), tag) => {
                let path = tag.map_or_else(|| out.clone(), |t| sibling(out, t));
                write_atomic(&path, body)?;
                self.written.push(path);
                Ok(())
            }
            (None, None) => {
                let stdout = io::stdout();
                let mut lock = stdout.lock();
                body(&mut lock)
                    .and_then(|_| lock.flush())
                    .map_err(|e| Error::io("<stdout>", e))
            }
            (None, Some(_)) => Ok(()),
        }
    }

    fn emit_json(&mut self, tag: Option<&str>, value: &Value) -> Result<()> {
        self.emit(tag, |w| {
            serde_json::to_writer_pretty(&mut *w, value).map_err(io::Error::other)?;
            writeln!(w)
        })
    }

    /// Writes a CSV whose writer starts with a `# schema:` line, adding a
    /// `# config:` line right after it.
    fn emit_csv<F>(&mut self, tag: Option<&str>, body: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> io::Result<()>,
    {
        let config = serde_json::to_string(self.config).expect("config serializes");
        let mut buf = Vec::new();
        body(&mut buf).map_err(|e| Error::io("<buffer>", e))?;
        let split = buf.iter().position(|&b| b == b'\n').map_or(0, |p| p + 1);
        self.emit(tag, |w| {
            w.write_all(&buf[..split])?;
            writeln!(w, "# config: {config}")?;
            w.write_all(&buf[split..])
        })
    }
}

/// Runs the configured command and writes its artifacts.
pub fn dispatch(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let start = Instant::now();
    let mut sink = Sink {
        config,
        written: Vec::new(),
    };
    let metrics = match config.command {
        Command::Generate => generate(&mut sink)?,
        Command::Stats => stats(&mut sink)?,
        Command::Predict => predict(&mut sink)?,
        Command::Experiment => experiment(&mut sink)?,
        Command::PerturbAudit => perturb_audit(&mut sink)?,
        Command::CoverAudit => cover_audit(&mut sink)?,
    };
    let written = sink.written;
    if let Some(out) = &config.out {
        let manifest = Manifest {
            schema: MANIFEST_SCHEMA,
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            config,
            config_hash: config.hash(),
            seed: config.seed,
            wall_seconds: start.elapsed().as_secs_f64(),
            outputs: written.iter().map(|p| p.display().to_string()).collect(),
            metrics,
        };
        let path = manifest_path(out);
        write_atomic(&path, |w| {
            serde_json::to_writer_pretty(&mut *w, &manifest).map_err(io::Error::other)?;
            writeln!(w)
        })?;
    }
    Ok(written)
}

fn sample_graph(config: &RunConfig) -> Result<MultiGraph> {
    let seq = build_sequence(&config.model, config.seed)?;
    materialize(&seq, &config.model)
}

fn generate(sink: &mut Sink) -> Result<Option<Value>> {
    let config = sink.config;
    let g = sample_graph(config)?;
    let header = EdgeListHeader {
        a: config.model.a,
        m: config.model.m,
        n: config.model.n,
        seed: config.seed,
    };
    let format = match config.format {
        Format::Text => EdgeFormat::Text,
        Format::Csv => EdgeFormat::Csv,
        Format::Json => EdgeFormat::Json,
    };
    sink.emit(None, |w| write_edge_list(&g, &header, format, w))?;
    Ok(None)
}

fn stats(sink: &mut Sink) -> Result<Option<Value>> {
    let config = sink.config;
    let (source, g) = match &config.input {
        Some(path) => {
            let (header, g) = import_edge_list(path)?;
            (json!({ "input": path, "header": header }), g)
        }
        None => (
            json!({ "sampled": config.model, "seed": config.seed }),
            sample_graph(config)?,
        ),
    };
    let tables = CountTables::from_stats(&vertex_stats(&g));
    match config.format {
        Format::Csv => {
            sink.emit_csv(None, |w| tables.write_k_csv(w))?;
            sink.emit_csv(Some("lk"), |w| tables.write_lk_csv(w))?;
        }
        _ => {
            let rows: Vec<Value> = tables
                .y_dense()
                .iter()
                .zip(tables.x_dense())
                .enumerate()
                .map(|(k, (y, x))| json!({ "k": k, "Y": y, "X": x }))
                .collect();
            let mut keys: Vec<(u32, u32)> =
                tables.n.keys().chain(tables.p.keys()).copied().collect();
            keys.sort_unstable();
            keys.dedup();
            let cells: Vec<Value> = keys
                .into_iter()
                .map(|(l, k)| json!({ "l": l, "k": k, "N": tables.n_count(l, k), "P": tables.p_count(l, k) }))
                .collect();
            let hist: Vec<(u32, u64)> = degree_histogram(&g).into_iter().collect();
            sink.emit_json(
                None,
                &json!({
                    "schema": STATS_SCHEMA,
                    "config": config,
                    "source": source,
                    "vertex_count": g.vertex_count(),
                    "edge_count": g.edge_count(),
                    "rows": rows,
                    "cells": cells,
                    "degree_histogram": hist,
                }),
            )?;
        }
    }
    Ok(None)
}

fn option_json(x: Option<f64>) -> Value {
    x.map_or(Value::Null, |v| json!(v))
}

fn predict(sink: &mut Sink) -> Result<Option<Value>> {
    let config = sink.config;
    let model = &config.model;
    model.validate()?;
    let n = model.n as u64;
    let ks = match config.k {
        Some(k) => vec![k],
        None => config.k_grid.clone(),
    };
    struct Row {
        k: u32,
        y: Option<f64>,
        x: Option<f64>,
        series: Option<f64>,
        small_k: f64,
        finite_n: f64,
    }
    let mut rows = Vec::with_capacity(ks.len());
    for &k in &ks {
        let c = corrections(n, k, model.a);
        rows.push(Row {
            k,
            y: if k >= 2 {
                Some(expected_y(n, k, model.a)?)
            } else {
                None
            },
            x: if k >= 1 {
                Some(expected_x(n, k, model.a)?)
            } else {
                None
            },
            series: if config.series && k >= 1 {
                Some(sum_c_over_l(k, model.a, SERIES_REL_TOL, DEFAULT_CELL_BUDGET)?.value)
            } else {
                None
            },
            small_k: c.small_k,
            finite_n: c.finite_n,
        });
    }
    let degrees: Vec<(u32, f64)> = (model.m..model.m + DEGREE_ROWS)
        .map(|d| expected_degree_count(d, n, model).map(|e| (d, e)))
        .collect::<Result<_>>()?;
    let tables = if config.tables {
        let t = AnalyticTables::build(
            model.a,
            config.l_max,
            config.k_max,
            TableOptions {
                precision: config.precision.into(),
                cell_budget: DEFAULT_CELL_BUDGET,
                p0: config.p0,
            },
        )?;
        let residuals = recurrence_residuals(&t)?;
        Some((t, residuals))
    } else {
        None
    };

    match config.format {
        Format::Csv => {
            sink.emit_csv(None, |w| {
                writeln!(w, "# schema: {PREDICT_SCHEMA}")?;
                writeln!(
                    w,
                    "k,expected_y,expected_x,series_sum,small_k_correction,finite_n_correction"
                )?;
                let cell = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
                for r in &rows {
                    writeln!(
                        w,
                        "{},{},{},{},{},{}",
                        r.k,
                        cell(r.y),
                        cell(r.x),
                        cell(r.series),
                        r.small_k,
                        r.finite_n
                    )?;
                }
                Ok(())
            })?;
            sink.emit_csv(Some("degree"), |w| {
                writeln!(w, "# schema: {PREDICT_SCHEMA}")?;
                writeln!(w, "d,expected_count")?;
                for (d, e) in &degrees {
                    writeln!(w, "{d},{e}")?;
                }
                Ok(())
            })?;
            if let Some((t, _)) = &tables {
                sink.emit(Some("tables"), |w| t.write_csv(w))?;
            }
        }
        _ => {
            let rows: Vec<Value> = rows
                .iter()
                .map(|r| {
                    json!({
                        "k": r.k,
                        "expected_y": option_json(r.y),
                        "expected_x": option_json(r.x),
                        "series_sum": option_json(r.series),
                        "small_k_correction": r.small_k,
                        "finite_n_correction": r.finite_n,
                    })
                })
                .collect();
            let degrees: Vec<Value> = degrees
                .iter()
                .map(|&(d, e)| json!({ "d": d, "expected_count": e }))
                .collect();
            let table_summary = tables.as_ref().map(|(t, residuals)| {
                json!({
                    "l_max": t.l_max,
                    "k_max": t.k_max,
                    "p0": t.p0,
                    "tail_constant": t.tail.constant,
                    "truncation_certificate": t.truncation_certificate,
                    "residual_ulps": residuals,
                })
            });
            sink.emit_json(
                None,
                &json!({
                    "schema": PREDICT_SCHEMA,
                    "config": config,
                    "rows": rows,
                    "degrees": degrees,
                    "tables": table_summary,
                }),
            )?;
            if let Some((t, _)) = &tables {
                sink.emit(Some("tables"), |w| t.write_json(w))?;
            }
        }
    }
    Ok(None)
}

fn experiment(sink: &mut Sink) -> Result<Option<Value>> {
    let config = sink.config;
    let report = run_ensemble(&config.ensemble_spec())?;
    let timing = serde_json::to_value(&report.timing).expect("timing serializes");
    match config.format {
        Format::Csv => {
            sink.emit_csv(None, |w| report.write_k_csv(w))?;
            sink.emit_csv(Some("lk"), |w| report.write_lk_csv(w))?;
            sink.emit_csv(Some("samples"), |w| report.write_samples_csv(w))?;
        }
        _ => {
            let mut body = serde_json::to_value(&report).expect("report serializes");
            if let Value::Object(map) = &mut body {
                map.remove("timing");
                map.insert("config".into(), json!(config));
            }
            sink.emit_json(None, &body)?;
        }
    }
    Ok(Some(json!({ "timing": timing })))
}

fn perturb_audit(sink: &mut Sink) -> Result<Option<Value>> {
    let config = sink.config;
    let report = lipschitz_audit(
        &config.model,
        config.threshold(),
        config.trials,
        config.seed,
    )?;
    match config.format {
        Format::Csv => sink.emit_csv(None, |w| {
            writeln!(w, "# schema: {AUDIT_SCHEMA}")?;
            writeln!(w, "k,bound,trials,max_delta,violations,identity_trials")?;
            writeln!(
                w,
                "{},{},{},{},{},{}",
                report.k,
                report.bound,
                report.trials,
                report.max_delta,
                report.violations,
                report.identity_trials
            )
        })?,
        _ => sink.emit_json(
            None,
            &json!({ "schema": AUDIT_SCHEMA, "config": config, "lipschitz": report }),
        )?,
    }
    Ok(None)
}

fn cover_audit(sink: &mut Sink) -> Result<Option<Value>> {
    let config = sink.config;
    let model = config.model;
    model.validate()?;
    if model.m != 1 {
        return Err(Error::Unsupported("cover-audit needs m = 1".into()));
    }
    let k = config.threshold();
    let mut rows = Vec::new();
    for r in 0..config.replicas {
        let seed = config.seed.wrapping_add(r as u64);
        let seq = build_sequence(&model, seed)?;
        let g = materialize(&seq, &model)?;
        let cover = build_stable_cover(&g, &seq, k)?;
        let witness = cover.check_witness(&seq, model.a, config.completions, seed);
        rows.push(json!({
            "replica": r,
            "seed": seed,
            "q": cover.q(),
            "sets": cover.sets.len(),
            "total_cost": cover.total_cost(),
            "budget": cover.budget(),
            "within_budget": cover.within_budget(),
            "stable": cover.is_stable(&seq),
            "completions": witness.completions,
            "witness_failures": witness.failures,
        }));
    }
    let passed = rows.iter().all(|r| {
        r["within_budget"] == json!(true)
            && r["stable"] == json!(true)
            && r["witness_failures"] == json!(0)
    });
    match config.format {
        Format::Csv => sink.emit_csv(None, |w| {
            writeln!(w, "# schema: {AUDIT_SCHEMA}")?;
            let cols = [
                "replica",
                "seed",
                "q",
                "sets",
                "total_cost",
                "budget",
                "within_budget",
                "stable",
                "completions",
                "witness_failures",
            ];
            writeln!(w, "{}", cols.join(","))?;
            for r in &rows {
                let line: Vec<String> = cols.iter().map(|c| r[*c].to_string()).collect();
                writeln!(w, "{}", line.join(","))?;
            }
            Ok(())
        })?,
        _ => sink.emit_json(
            None,
            &json!({ "schema": AUDIT_SCHEMA, "config": config, "k": k, "passed": passed, "rows": rows }),
        )?,
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> std::result::Result<RunConfig, Failure> {
        parse_args(std::iter::once("second-degree").chain(args.iter().copied()))
    }

    #[test]
    fn defaults_and_flags() {
        let c = parse(&["generate"]).unwrap();
        assert_eq!(c.format, Format::Text);
        assert_eq!(
            c.model,
            ModelParams {
                a: 1.0,
                m: 1,
                n: 1000
            }
        );
        let c = parse(&[
            "experiment",
            "--a",
            "2",
            "--k-grid",
            "2,4,8",
            "--replicas",
            "5",
        ])
        .unwrap();
        assert_eq!(c.k_grid, vec![2, 4, 8]);
        assert_eq!(c.model.a, 2.0);
        assert_eq!(c.format, Format::Json);
        assert_eq!(c.ensemble_spec().replicas, 5);
    }

    #[test]
    fn config_file_sits_between_defaults_and_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(
            &path,
            "a = 0.5\nn = 77\nbase_seed = 9\nk_grid = [3, 5]\nepsilon = 0.3\n",
        )
        .unwrap();
        let p = path.to_str().unwrap();
        let c = parse(&["experiment", "--config", p, "--n", "88"]).unwrap();
        assert_eq!(c.model.a, 0.5);
        assert_eq!(c.model.n, 88);
        assert_eq!(c.seed, 9);
        assert_eq!(c.k_grid, vec![3, 5]);
        assert_eq!(c.epsilon, 0.3);
        assert_eq!(c.replicas, 20);
    }

    #[test]
    fn bad_inputs_map_to_exit_codes() {
        assert_eq!(parse(&["generate", "--n", "x"]).unwrap_err().exit_code(), 2);
        assert_eq!(parse(&["frobnicate"]).unwrap_err().exit_code(), 2);
        assert_eq!(
            parse(&["stats", "--format", "text"])
                .unwrap_err()
                .exit_code(),
            2
        );
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.toml");
        fs::write(&bad, "colour = 1\n").unwrap();
        let failure = parse(&["generate", "--config", bad.to_str().unwrap()]).unwrap_err();
        assert_eq!(failure.exit_code(), 2);
        let missing = dir.path().join("missing.toml");
        let failure = parse(&["generate", "--config", missing.to_str().unwrap()]).unwrap_err();
        assert_eq!(failure.exit_code(), 4);
        let c = parse(&["generate", "--a", "-1"]).unwrap();
        assert_eq!(Failure::from(dispatch(&c).unwrap_err()).exit_code(), 3);
        let boxed = Error::Replica {
            replica: 3,
            source: Box::new(Error::io("x", io::Error::other("disk"))),
        };
        assert_eq!(run_exit_code(&boxed), 4);
    }

    #[test]
    fn sibling_and_manifest_names() {
        assert_eq!(
            sibling(Path::new("/t/out.csv"), "lk"),
            PathBuf::from("/t/out.lk.csv")
        );
        assert_eq!(sibling(Path::new("out"), "lk"), PathBuf::from("out.lk"));
        assert_eq!(
            manifest_path(Path::new("/t/g.txt")),
            PathBuf::from("/t/g.txt.manifest.json")
        );
    }

    #[test]
    fn config_hash_tracks_content() {
        let a = parse(&["generate", "--seed", "1"]).unwrap();
        let b = parse(&["generate", "--seed", "2"]).unwrap();
        assert_eq!(
            a.hash(),
            parse(&["generate", "--seed", "1"]).unwrap().hash()
        );
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    fn run(args: &[&str]) -> i32 {
        main_with_args(std::iter::once("second-degree").chain(args.iter().copied()))
    }

    fn read_json(path: &Path) -> Value {
        serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
    }

    #[test]
    fn generate_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let (one, two) = (dir.path().join("one.txt"), dir.path().join("two.txt"));
        for out in [&one, &two] {
            let args = [
                "generate", "--a", "0.5", "--m", "2", "--n", "300", "--seed", "42", "--out",
            ];
            assert_eq!(run(&[&args[..], &[out.to_str().unwrap()]].concat()), 0);
        }
        assert_eq!(fs::read(&one).unwrap(), fs::read(&two).unwrap());
        let (header, g) = import_edge_list(&one).unwrap();
        assert_eq!(header.unwrap().seed, 42);
        assert_eq!(g.edge_count(), 600);
        let manifest = read_json(&manifest_path(&one));
        assert_eq!(manifest["seed"], 42);
        assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
        assert_eq!(manifest["outputs"][0], one.display().to_string());
    }

    #[test]
    fn stats_on_an_edge_list() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("g.txt");
        fs::write(&input, "1 1\n2 1\n3 2\n4 3\n").unwrap();
        let out = dir.path().join("s.csv");
        let code = run(&[
            "stats",
            "--input",
            input.to_str().unwrap(),
            "--format",
            "csv",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        let k_rows = fs::read_to_string(&out).unwrap();
        let lines: Vec<&str> = k_rows.lines().collect();
        assert!(lines[0].starts_with("# schema:"));
        assert!(lines[1].starts_with("# config: {"));
        assert!(lines.contains(&"2,1,1"));
        assert!(sibling(&out, "lk").exists());
    }

    #[test]
    fn predict_reports_the_leading_law() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("p.json");
        assert_eq!(
            run(&[
                "predict",
                "--n",
                "100000",
                "--k",
                "8",
                "--out",
                out.to_str().unwrap()
            ]),
            0
        );
        let v = read_json(&out);
        let y = v["rows"][0]["expected_y"].as_f64().unwrap();
        assert!((y - 50_000.0).abs() < 1e-6);
        assert_eq!(v["degrees"].as_array().unwrap().len(), DEGREE_ROWS as usize);
    }

    #[test]
    fn small_runs_of_every_audit() {
        let dir = tempfile::tempdir().unwrap();
        let path = |name: &str| dir.path().join(name).to_str().unwrap().to_owned();
        let (e, l, c) = (path("e.json"), path("l.json"), path("c.json"));
        assert_eq!(
            run(&[
                "experiment",
                "--n",
                "300",
                "--replicas",
                "3",
                "--k-grid",
                "2,4",
                "--out",
                &e
            ]),
            0
        );
        assert_eq!(
            run(&["perturb-audit", "--n", "100", "--trials", "50", "--out", &l]),
            0
        );
        assert_eq!(
            run(&[
                "cover-audit",
                "--n",
                "200",
                "--replicas",
                "2",
                "--completions",
                "5",
                "--out",
                &c
            ]),
            0
        );
        assert_eq!(read_json(Path::new(&e))["k"].as_array().unwrap().len(), 2);
        assert!(read_json(Path::new(&e)).get("timing").is_none());
        assert!(read_json(&manifest_path(Path::new(&e)))["metrics"]["timing"].is_object());
        assert_eq!(read_json(Path::new(&l))["lipschitz"]["violations"], 0);
        assert_eq!(read_json(Path::new(&c))["passed"], true);
        assert_eq!(run(&["cover-audit", "--m", "2", "--out", &c]), 3);
    }

    #[test]
    fn process_exit_codes() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.txt");
        assert_eq!(run(&["stats", "--input", missing.to_str().unwrap()]), 4);
        assert_eq!(run(&["generate", "--n", "0"]), 3);
        assert_eq!(run(&["generate", "--bogus"]), 2);
    }
}
