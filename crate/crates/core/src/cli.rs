//! `carbonprof` command line.
//!
//! Exit codes: 0 success, 1 configuration error, 2 source or trace error,
//! 3 workload failure, 4 no strain detected (`analyze`).

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::intensity::{lookup_intensity, CarbonIntensity, IntensityError, DEFAULT_REGION};
use crate::powersource::{SourceDescriptor, SourceError, DEFAULT_SAMPLE_INTERVAL};
use crate::protocol::{
    compute_carbon, run_session, strain_footprint_scaled, ProtocolError, SessionConfig, SessionReport, Workload,
    DEFAULT_BASELINE_SECS,
};
use crate::report::{self, AnalysisReport, Format, OracleReport};
use crate::traceio::{self, TraceError, DEFAULT_K};
use crate::workloads::{oracle_rotate, run_workload, Variant, WorkloadError, WorkloadSpec, DEFAULT_WINDOW};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_SOURCE: i32 = 2;
pub const EXIT_WORKLOAD: i32 = 3;
pub const EXIT_NO_STRAIN: i32 = 4;

const DEFAULT_ITERS: u64 = 10_000_000;

#[derive(Debug, Parser)]
#[command(name = "carbonprof", version, about = "Energy and carbon footprint profiler for running workloads")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Profile one workload through a full three-phase session.
    Run(RunArgs),
    /// Profile all four built-in workloads and print a comparison table.
    Bench(BenchArgs),
    /// Detect the strain window in a recorded trace and size its footprint.
    Analyze(AnalyzeArgs),
    /// Check every workload variant against the rotation oracle.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
pub struct IntensityArgs {
    /// Bundled region name, or custom:<kg CO2e per kWh>.
    #[arg(long, default_value = DEFAULT_REGION)]
    pub region: String,
    /// Explicit intensity in kg CO2e per kWh; overrides --region.
    #[arg(long)]
    pub intensity_factor: Option<f64>,
}

impl IntensityArgs {
    fn resolve(&self) -> Result<CarbonIntensity, IntensityError> {
        match self.intensity_factor {
            Some(f) => CarbonIntensity::new("custom", f),
            None => lookup_intensity(&self.region),
        }
    }
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Also emit energy as W·min and the matching carbon figure, the
    /// convention some energy tables label as Wh.
    #[arg(long)]
    pub paper_units: bool,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SessionArgs {
    /// Inactivity phase length before and after the strain, in seconds.
    #[arg(long, default_value_t = DEFAULT_BASELINE_SECS)]
    pub baseline_secs: f64,
    #[arg(long, default_value_t = 1)]
    pub runs: u32,
    /// Sampling period in seconds.
    #[arg(long, default_value_t = DEFAULT_SAMPLE_INTERVAL)]
    pub interval: f64,
    /// Detector sensitivity for replayed traces.
    #[arg(long, default_value_t = DEFAULT_K)]
    pub k: f64,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Built-in workload: vector, raw, array or list. Omit and pass a
    /// command after `--` to profile an external program.
    #[arg(long)]
    pub workload: Option<String>,
    #[arg(long, default_value_t = DEFAULT_ITERS)]
    pub iters: u64,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    pub window: usize,
    /// battery | battery:<dir> | trace:<path> | synthetic:<profile> | null
    #[arg(long, default_value = "battery")]
    pub source: String,
    #[command(flatten)]
    pub session: SessionArgs,
    #[command(flatten)]
    pub intensity: IntensityArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Save the recorded session trace as CSV.
    #[arg(long)]
    pub record: Option<PathBuf>,
    /// External command line to profile.
    #[arg(last = true)]
    pub command: Vec<String>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = DEFAULT_ITERS)]
    pub iters: u64,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    pub window: usize,
    /// One source for all workloads, or four (vector, raw, array, list).
    #[arg(long)]
    pub source: Vec<String>,
    #[command(flatten)]
    pub session: SessionArgs,
    #[command(flatten)]
    pub intensity: IntensityArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Trace CSV to analyze.
    pub trace: Option<PathBuf>,
    /// Alternative to the positional path: trace:<path>.
    #[arg(long)]
    pub source: Option<String>,
    /// Baseline taken from the first this-many seconds of the trace.
    #[arg(long, default_value_t = DEFAULT_BASELINE_SECS)]
    pub baseline_secs: f64,
    /// Explicit baseline interval `T0,T1`, overriding --baseline-secs.
    #[arg(long)]
    pub baseline: Option<String>,
    #[arg(long, default_value_t = DEFAULT_K)]
    pub k: f64,
    #[command(flatten)]
    pub intensity: IntensityArgs,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub iters: u64,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    pub window: usize,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Intensity(#[from] IntensityError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error("variant checksums disagree with the oracle")]
    OracleMismatch,
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn source_code(e: &SourceError) -> i32 {
    match e {
        SourceError::InvalidDescriptor(_) => EXIT_CONFIG,
        _ => EXIT_SOURCE,
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Intensity(_) | CliError::Output { .. } => EXIT_CONFIG,
            CliError::Source(e) => source_code(e),
            CliError::Trace(TraceError::NoStrainDetected { .. }) => EXIT_NO_STRAIN,
            CliError::Trace(_) => EXIT_SOURCE,
            CliError::Workload(_) => EXIT_CONFIG,
            CliError::OracleMismatch => EXIT_WORKLOAD,
            CliError::Protocol(p) => match p {
                ProtocolError::Source(e) => source_code(e),
                ProtocolError::Trace(_) | ProtocolError::NoBaseline => EXIT_SOURCE,
                ProtocolError::WorkloadFailed(_) => EXIT_WORKLOAD,
                ProtocolError::Workload(_) | ProtocolError::InvalidConfig(_) | ProtocolError::InvalidInput(_) => {
                    EXIT_CONFIG
                }
            },
        }
    }
}

/// What a command produced: the report text and the exit code to use.
#[derive(Debug)]
pub struct Outcome {
    pub report: String,
    pub code: i32,
    pub warnings: Vec<String>,
}

impl Outcome {
    fn ok(report: String) -> Self {
        Self {
            report,
            code: EXIT_OK,
            warnings: Vec::new(),
        }
    }
}

fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// `null`/`none` select timing-only mode.
fn parse_source(text: &str) -> Result<Option<SourceDescriptor>, CliError> {
    match text {
        "null" | "none" => Ok(None),
        _ => Ok(Some(text.parse()?)),
    }
}

fn session_config(args: &SessionArgs, intensity: CarbonIntensity) -> SessionConfig {
    SessionConfig {
        baseline_secs: args.baseline_secs,
        runs: args.runs,
        intensity,
        k: args.k,
    }
}

fn with_interval(src: Option<SourceDescriptor>, interval: f64) -> Result<Option<SourceDescriptor>, CliError> {
    src.map(|d| {
        let d = d.with_interval(interval);
        d.validate().map(|_| d)
    })
    .transpose()
    .map_err(CliError::from)
}

fn write_recording(path: &Path, trace: &traceio::PowerTrace) -> Result<(), CliError> {
    fs::write(path, traceio::serialize_trace(trace)).map_err(|source| CliError::Output {
        path: path.to_path_buf(),
        source,
    })
}

pub fn cmd_run(args: &RunArgs) -> Result<Outcome, CliError> {
    let intensity = args.intensity.resolve()?;
    let workload = match (&args.workload, args.command.is_empty()) {
        (Some(name), true) => {
            let variant: Variant = name.parse()?;
            let spec = WorkloadSpec::new(variant, args.iters).with_window(args.window);
            spec.validate()?;
            Workload::Builtin(spec)
        }
        (None, false) => Workload::External(args.command.clone()),
        (Some(_), false) => return Err(CliError::Config("give either --workload or a command after --, not both".into())),
        (None, true) => return Err(CliError::Config("missing --workload (or a command after --)".into())),
    };
    let source = with_interval(parse_source(&args.source)?, args.session.interval)?;
    let cfg = session_config(&args.session, intensity);
    let (session, report) = run_session(&workload, source.as_ref(), &cfg)?;
    if let (Some(path), Some(trace)) = (&args.record, session.combined_trace()) {
        write_recording(path, &trace)?;
    }
    let text = report::render_run(&report, args.output.format, args.output.paper_units, Some(&timestamp()));
    Ok(Outcome {
        warnings: report.warnings.clone(),
        ..Outcome::ok(text)
    })
}

/// Sessions for all four variants under identical settings.
pub fn bench_reports(args: &BenchArgs) -> Result<Vec<SessionReport>, CliError> {
    let intensity = args.intensity.resolve()?;
    let sources: Vec<Option<SourceDescriptor>> = match args.source.len() {
        0 => vec![Some(SourceDescriptor::battery()); 4],
        1 => vec![parse_source(&args.source[0])?; 4],
        4 => args.source.iter().map(|s| parse_source(s)).collect::<Result<_, _>>()?,
        n => return Err(CliError::Config(format!("--source takes 1 or 4 values, got {n}"))),
    };
    let cfg = session_config(&args.session, intensity);
    Variant::ALL
        .iter()
        .zip(sources)
        .map(|(&variant, src)| {
            let spec = WorkloadSpec::new(variant, args.iters).with_window(args.window);
            spec.validate()?;
            let src = with_interval(src, args.session.interval)?;
            Ok(run_session(&Workload::Builtin(spec), src.as_ref(), &cfg)?.1)
        })
        .collect()
}

pub fn cmd_bench(args: &BenchArgs) -> Result<Outcome, CliError> {
    let rows = bench_reports(args)?;
    let text = report::render_bench(&rows, args.output.format, args.output.paper_units, Some(&timestamp()));
    Ok(Outcome {
        warnings: rows.iter().flat_map(|r| r.warnings.iter().map(|w| format!("{}: {w}", r.workload))).collect(),
        ..Outcome::ok(text)
    })
}

fn parse_interval(text: &str) -> Result<(f64, f64), CliError> {
    let bad = || CliError::Config(format!("--baseline expects T0,T1 in seconds, got `{text}`"));
    let (a, b) = text.split_once(',').ok_or_else(bad)?;
    let t0: f64 = a.trim().parse().map_err(|_| bad())?;
    let t1: f64 = b.trim().parse().map_err(|_| bad())?;
    Ok((t0, t1))
}

/// Runs detection and sizing; returns the report even when nothing was
/// detected so the baseline statistics can still be shown.
pub fn analyze_trace(
    label: &str,
    trace: &traceio::PowerTrace,
    baseline: (f64, f64),
    k: f64,
    intensity: &CarbonIntensity,
) -> Result<(AnalysisReport, bool), CliError> {
    let stats = traceio::baseline_stats(trace, baseline.0, baseline.1)?;
    let mut out = AnalysisReport {
        trace: label.to_string(),
        samples: trace.len(),
        k,
        baseline: stats,
        threshold_w: stats.mean_w + k * stats.std_w,
        window: None,
        energy_total_j: None,
        energy_strain_j: None,
        carbon_g: None,
        intensity: intensity.clone(),
    };
    match traceio::detect_strain_window(trace, baseline.0, baseline.1, k) {
        Ok(w) => {
            let total = traceio::integrate_joules(trace, w.t_start, w.t_end)?;
            let strain = strain_footprint_scaled(total, w.baseline_power, w.duration())?;
            out.threshold_w = w.threshold;
            out.window = Some(w);
            out.energy_total_j = Some(total);
            out.energy_strain_j = Some(strain.value);
            out.carbon_g = Some(compute_carbon(strain.value / 3600.0, intensity));
            Ok((out, true))
        }
        Err(TraceError::NoStrainDetected { threshold, .. }) => {
            out.threshold_w = threshold;
            Ok((out, false))
        }
        Err(e) => Err(e.into()),
    }
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<Outcome, CliError> {
    let intensity = args.intensity.resolve()?;
    let path = match (&args.trace, &args.source) {
        (Some(p), None) => p.clone(),
        (None, Some(s)) => match s.parse::<SourceDescriptor>()? {
            d if d.kind == crate::powersource::SourceKind::TraceReplay => PathBuf::from(d.location),
            _ => return Err(CliError::Config("analyze needs a trace:<path> source".into())),
        },
        (Some(_), Some(_)) => return Err(CliError::Config("give the trace either positionally or via --source".into())),
        (None, None) => return Err(CliError::Config("missing trace path".into())),
    };
    let bytes = fs::read(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::Source(SourceError::TraceNotFound(path.clone())),
        _ => CliError::Source(SourceError::ReadFailure {
            path: path.clone(),
            source: e,
        }),
    })?;
    let trace = traceio::parse_trace(&bytes)?;
    let first = trace.first_t().unwrap_or(0.0);
    let last = trace.last_t().unwrap_or(0.0);
    let baseline = match &args.baseline {
        Some(text) => parse_interval(text)?,
        None => {
            if !(args.baseline_secs.is_finite() && args.baseline_secs > 0.0) {
                return Err(CliError::Config("--baseline-secs must be positive".into()));
            }
            (first, (first + args.baseline_secs).min(last))
        }
    };
    let (analysis, detected) = analyze_trace(&path.display().to_string(), &trace, baseline, args.k, &intensity)?;
    let text = report::render_analysis(&analysis, args.format, Some(&timestamp()));
    Ok(Outcome {
        report: text,
        code: if detected { EXIT_OK } else { EXIT_NO_STRAIN },
        warnings: if detected {
            Vec::new()
        } else {
            vec![format!(
                "no strain detected (baseline mean {:.6} W, std {:.6} W, threshold {:.6} W)",
                analysis.baseline.mean_w, analysis.baseline.std_w, analysis.threshold_w
            )]
        },
    })
}

pub fn cmd_oracle(args: &OracleArgs) -> Result<Outcome, CliError> {
    let oracle_checksum = oracle_rotate(args.iters, args.window)?;
    let variants = Variant::ALL
        .iter()
        .map(|&v| {
            let r = run_workload(&WorkloadSpec::new(v, args.iters).with_window(args.window))?;
            Ok((v.to_string(), r.checksum))
        })
        .collect::<Result<Vec<_>, WorkloadError>>()?;
    let o = OracleReport {
        iters: args.iters,
        window: args.window,
        oracle_checksum,
        variants,
    };
    let text = report::render_oracle(&o, args.format);
    Ok(Outcome {
        code: if o.agree() { EXIT_OK } else { EXIT_WORKLOAD },
        ..Outcome::ok(text)
    })
}

pub fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Oracle(a) => cmd_oracle(a),
    }
}

fn out_path(cli: &Cli) -> Option<&Path> {
    match &cli.command {
        Command::Run(a) => a.output.out.as_deref(),
        Command::Bench(a) => a.output.out.as_deref(),
        Command::Analyze(a) => a.out.as_deref(),
        Command::Oracle(_) => None,
    }
}

/// Parses `args`, runs the command and writes its report. Returns the
/// process exit code.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(stderr, "{}", e.render())
            } else {
                write!(stdout, "{}", e.render())
            };
            return code;
        }
    };
    let outcome = match execute(&cli) {
        Ok(o) => o,
        Err(e) => {
            let _ = writeln!(stderr, "carbonprof: error: {e}");
            return e.exit_code();
        }
    };
    for w in &outcome.warnings {
        let _ = writeln!(stderr, "carbonprof: warning: {w}");
    }
    match out_path(&cli) {
        Some(path) => {
            if let Err(e) = fs::write(path, &outcome.report) {
                let _ = writeln!(stderr, "carbonprof: error: cannot write {}: {e}", path.display());
                return EXIT_CONFIG;
            }
        }
        None => {
            let _ = stdout.write_all(outcome.report.as_bytes());
        }
    }
    outcome.code
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run_cli(std::iter::once("carbonprof").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn run_step_source_json() {
        let (code, out, _) = run(&[
            "run", "--workload", "list", "--iters", "10000000", "--source", "synthetic:step:8,15", "--baseline-secs",
            "10", "--format", "json",
        ]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert!((v["alg_dr_w"].as_f64().unwrap() - 7.0).abs() < 1e-9);
        assert_eq!(v["checksum"], 1_000_004_950i64);
        assert!(v.get("energy_paper_wmin").is_none());
    }

    #[test]
    fn paper_units_flag_adds_fields() {
        let (code, out, _) = run(&[
            "run", "--workload", "vector", "--iters", "10", "--source", "synthetic:step:9.288,15.953,198.496",
            "--paper-units",
        ]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert!((v["energy_paper_wmin"].as_f64().unwrap() - 22.05).abs() < 0.01);
        assert!((v["carbon_paper_g"].as_f64().unwrap() - 14.33).abs() < 0.01);
    }

    #[test]
    fn config_errors_exit_one() {
        assert_eq!(run(&["run", "--workload", "deque", "--source", "synthetic:constant:1"]).0, EXIT_CONFIG);
        assert_eq!(run(&["run", "--source", "synthetic:constant:1"]).0, EXIT_CONFIG);
        assert_eq!(run(&["run", "--workload", "list", "--intensity-factor", "0.0"]).0, EXIT_CONFIG);
        assert_eq!(run(&["run", "--workload", "list", "--region", "Mars"]).0, EXIT_CONFIG);
        assert_eq!(run(&["run", "--workload", "list", "--source", "usb"]).0, EXIT_CONFIG);
        assert_eq!(
            run(&["run", "--workload", "list", "--source", "synthetic:constant:1", "--baseline-secs", "2"]).0,
            EXIT_CONFIG
        );
        assert_eq!(run(&["frobnicate"]).0, EXIT_CONFIG);
        assert_eq!(run(&["bench", "--source", "null", "--source", "null"]).0, EXIT_CONFIG);
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = run(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("bench"));
    }

    #[test]
    fn missing_trace_exits_two() {
        let (code, _, err) = run(&["run", "--workload", "vector", "--iters", "100", "--source", "trace:/no/fixture.csv"]);
        assert_eq!(code, EXIT_SOURCE);
        assert!(err.contains("not found"), "{err}");
        assert_eq!(run(&["analyze", "/no/fixture.csv"]).0, EXIT_SOURCE);
    }

    #[test]
    fn timing_only_bench_flags_na() {
        let (code, out, _) = run(&["bench", "--iters", "1000", "--source", "null", "--format", "md"]);
        assert_eq!(code, 0);
        assert_eq!(out.matches("n/a").count(), 4 * 5);
        for name in ["Vector", "Raw", "Array", "List"] {
            assert!(out.contains(&format!("| {name} |")), "{out}");
        }
    }

    #[test]
    fn oracle_command() {
        let (code, out, _) = run(&["oracle", "--iters", "1000"]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["oracle_checksum"], 104_950);
        assert_eq!(v["agree"], true);
    }

    #[test]
    fn baseline_interval_parsing() {
        assert_eq!(parse_interval("0,60").unwrap(), (0.0, 60.0));
        assert!(parse_interval("60").is_err());
        assert!(parse_interval("a,b").is_err());
    }
}
