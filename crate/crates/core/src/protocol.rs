//! Three-phase measurement sessions.
//!
//! A session samples the idle system, runs the workload (one or more
//! times) while sampling, then samples the idle system again. The idle
//! phases give the initial discharge rate; the strain phases give the
//! running discharge rate; their difference is the share attributed to the
//! workload, which is turned into energy and carbon.

use std::process::{Command, Stdio};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::intensity::CarbonIntensity;
use crate::powersource::{
    BatterySource, Phase, PowerSample, PowerSource, SourceDescriptor, SourceError, SyntheticSource, TraceReplay,
};
use crate::traceio::{self, PowerTrace, TraceError, DEFAULT_K};
use crate::workloads::{expected_checksum, run_workload, WorkloadError, WorkloadSpec};

pub const DEFAULT_BASELINE_SECS: f64 = 60.0;
pub const MIN_BASELINE_SECS: f64 = 10.0;

/// Shortest strain phase laid out on a virtual clock, so a trace always
/// spans a non-empty interval.
const MIN_VIRTUAL_STRAIN_SECS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error("workload failed: {0}")]
    WorkloadFailed(String),
    #[error("invalid session configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no inactivity samples to derive a baseline from")]
    NoBaseline,
}

/// A difference that may legitimately come out negative. Negative values
/// are kept, and flagged, rather than clamped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Delta {
    pub value: f64,
    pub negative: bool,
}

impl Delta {
    fn new(value: f64) -> Self {
        Self {
            value,
            negative: value < 0.0,
        }
    }
}

fn check_input(name: &str, v: f64) -> Result<(), ProtocolError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(ProtocolError::InvalidInput(format!("{name} must be finite and non-negative, got {v}")))
    }
}

/// Discharge rate caused by the workload: running minus initial.
pub fn compute_alg_dr(init_dr: f64, running_dr: f64) -> Result<Delta, ProtocolError> {
    check_input("init_dr", init_dr)?;
    check_input("running_dr", running_dr)?;
    Ok(Delta::new(running_dr - init_dr))
}

/// True watt-hours for a power held over `time_s` seconds.
pub fn energy_wh(watts: f64, time_s: f64) -> f64 {
    watts * time_s / 3600.0
}

/// Power times minutes (W·min), a convention some energy tables label as Wh.
pub fn energy_paper_wmin(watts: f64, time_s: f64) -> f64 {
    watts * time_s / 60.0
}

/// Grams of CO2e for `energy` watt-hours. `energy` should be non-negative.
pub fn compute_carbon(energy: f64, intensity: &CarbonIntensity) -> f64 {
    energy * intensity.grams_per_wh()
}

/// Workload share of a strain-phase footprint: total minus the average
/// inactivity footprint.
pub fn strain_footprint(total_strain: f64, avg_inactivity: f64) -> Result<Delta, ProtocolError> {
    check_input("total_strain", total_strain)?;
    check_input("avg_inactivity", avg_inactivity)?;
    Ok(Delta::new(total_strain - avg_inactivity))
}

/// Duration-corrected variant: subtracts a baseline rate integrated over the
/// strain duration.
pub fn strain_footprint_scaled(
    total_strain: f64,
    baseline_rate: f64,
    strain_duration: f64,
) -> Result<Delta, ProtocolError> {
    check_input("total_strain", total_strain)?;
    check_input("baseline_rate", baseline_rate)?;
    check_input("strain_duration", strain_duration)?;
    Ok(Delta::new(total_strain - baseline_rate * strain_duration))
}

/// Derived columns of one report row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Figures {
    pub alg_dr_w: f64,
    pub energy_wh: f64,
    pub energy_paper_wmin: f64,
    pub carbon_g: f64,
    pub carbon_paper_g: f64,
}

impl Figures {
    pub fn derive(
        init_dr: f64,
        running_dr: f64,
        time_s: f64,
        intensity: &CarbonIntensity,
    ) -> Result<(Self, Delta), ProtocolError> {
        check_input("time_s", time_s)?;
        let alg = compute_alg_dr(init_dr, running_dr)?;
        let wh = energy_wh(alg.value, time_s);
        let wmin = energy_paper_wmin(alg.value, time_s);
        Ok((
            Self {
                alg_dr_w: alg.value,
                energy_wh: wh,
                energy_paper_wmin: wmin,
                carbon_g: compute_carbon(wh, intensity),
                carbon_paper_g: compute_carbon(wmin, intensity),
            },
            alg,
        ))
    }
}

/// What gets run during the strain phase.
#[derive(Debug, Clone, PartialEq)]
pub enum Workload {
    Builtin(WorkloadSpec),
    /// Any command line; its exit status gates the report.
    External(Vec<String>),
}

impl Workload {
    pub fn label(&self) -> String {
        match self {
            Workload::Builtin(spec) => spec.variant.to_string(),
            Workload::External(argv) => argv.join(" "),
        }
    }

    pub fn iters(&self) -> Option<u64> {
        match self {
            Workload::Builtin(spec) => Some(spec.max_iter),
            Workload::External(_) => None,
        }
    }

    /// Runs once, timed by the monotonic clock.
    pub fn execute(&self) -> Result<StrainOutcome, ProtocolError> {
        match self {
            Workload::Builtin(spec) => {
                let result = run_workload(spec)?;
                let want = expected_checksum(spec.max_iter, spec.window)?;
                if result.checksum != want {
                    return Err(ProtocolError::WorkloadFailed(format!(
                        "{} checksum {} != expected {want}",
                        spec.variant, result.checksum
                    )));
                }
                Ok(StrainOutcome {
                    wall_secs: result.wall_secs(),
                    checksum: Some(result.checksum),
                })
            }
            Workload::External(argv) => {
                let (program, args) = argv
                    .split_first()
                    .ok_or_else(|| ProtocolError::InvalidConfig("empty command line".into()))?;
                let start = Instant::now();
                let output = Command::new(program)
                    .args(args)
                    .stdin(Stdio::null())
                    .stderr(Stdio::inherit())
                    .output()
                    .map_err(|e| ProtocolError::WorkloadFailed(format!("cannot start `{program}`: {e}")))?;
                let wall_secs = start.elapsed().as_secs_f64();
                if !output.status.success() {
                    return Err(ProtocolError::WorkloadFailed(format!(
                        "`{}` exited with {}",
                        argv.join(" "),
                        output.status
                    )));
                }
                Ok(StrainOutcome {
                    wall_secs,
                    checksum: parse_checksum_line(&String::from_utf8_lossy(&output.stdout)),
                })
            }
        }
    }
}

/// Picks `checksum=<n>` from the last stdout line that carries one.
pub fn parse_checksum_line(stdout: &str) -> Option<i64> {
    stdout.lines().rev().find_map(|line| {
        line.split_whitespace()
            .find_map(|tok| tok.strip_prefix("checksum="))
            .and_then(|v| v.parse().ok())
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrainOutcome {
    pub wall_secs: f64,
    pub checksum: Option<i64>,
}

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub baseline_secs: f64,
    pub runs: u32,
    pub intensity: CarbonIntensity,
    /// Detector sensitivity used to segment replayed traces.
    pub k: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            baseline_secs: DEFAULT_BASELINE_SECS,
            runs: 1,
            intensity: CarbonIntensity::default(),
            k: DEFAULT_K,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        if !(self.baseline_secs.is_finite() && self.baseline_secs >= MIN_BASELINE_SECS) {
            return Err(ProtocolError::InvalidConfig(format!(
                "baseline must be at least {MIN_BASELINE_SECS} s, got {}",
                self.baseline_secs
            )));
        }
        if self.runs == 0 {
            return Err(ProtocolError::InvalidConfig("runs must be at least 1".into()));
        }
        if !(self.k.is_finite() && self.k > 0.0) {
            return Err(ProtocolError::InvalidConfig(format!("k must be positive, got {}", self.k)));
        }
        Ok(())
    }
}

/// One phase: its samples (absent in timing-only mode) and duration.
#[derive(Debug, Clone)]
pub struct PhaseRecord {
    pub trace: Option<PowerTrace>,
    pub duration: f64,
}

impl PhaseRecord {
    fn from_trace(trace: PowerTrace) -> Self {
        let duration = trace.duration();
        Self {
            trace: Some(trace),
            duration,
        }
    }

    fn mean_w(&self) -> Result<Option<f64>, ProtocolError> {
        match &self.trace {
            Some(t) if t.len() >= 2 => Ok(Some(traceio::mean_power_full(t)?)),
            _ => Ok(None),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StrainRecord {
    pub phase: PhaseRecord,
    /// Wall time of the workload itself, as measured around its execution.
    pub wall_secs: f64,
    pub checksum: Option<i64>,
}

/// Everything recorded during a session. Traces are immutable once their
/// phase has closed.
#[derive(Debug, Clone)]
pub struct MeasurementSession {
    pub workload: String,
    pub iters: Option<u64>,
    pub source: Option<SourceDescriptor>,
    pub pre: Option<PhaseRecord>,
    pub strains: Vec<StrainRecord>,
    pub post: Option<PhaseRecord>,
    pub battery_start_pct: Option<f64>,
    pub battery_end_pct: Option<f64>,
    pub warnings: Vec<String>,
}

impl MeasurementSession {
    pub fn runs(&self) -> usize {
        self.strains.len()
    }

    /// All phases as one trace, in time order. Samples that would not
    /// advance the clock (shared phase boundaries) are dropped.
    pub fn combined_trace(&self) -> Option<PowerTrace> {
        let origin = self.source.clone()?;
        let phases = self
            .pre
            .iter()
            .chain(self.strains.iter().map(|s| &s.phase))
            .chain(self.post.iter());
        let mut samples: Vec<PowerSample> = Vec::new();
        for phase in phases {
            for s in phase.trace.iter().flat_map(|t| t.samples()) {
                if samples.last().is_none_or(|last| s.t > last.t) {
                    samples.push(*s);
                }
            }
        }
        Some(PowerTrace::new(samples, origin).expect("filtered to increasing timestamps"))
    }
}

/// Records a full session.
pub fn record_session(
    workload: &Workload,
    source: Option<&SourceDescriptor>,
    cfg: &SessionConfig,
) -> Result<MeasurementSession, ProtocolError> {
    cfg.validate()?;
    let mut session = MeasurementSession {
        workload: workload.label(),
        iters: workload.iters(),
        source: source.cloned(),
        pre: None,
        strains: Vec::new(),
        post: None,
        battery_start_pct: None,
        battery_end_pct: None,
        warnings: Vec::new(),
    };
    let Some(desc) = source else {
        for _ in 0..cfg.runs {
            let outcome = workload.execute()?;
            session.strains.push(StrainRecord {
                phase: PhaseRecord {
                    trace: None,
                    duration: outcome.wall_secs,
                },
                wall_secs: outcome.wall_secs,
                checksum: outcome.checksum,
            });
        }
        return Ok(session);
    };
    match PowerSource::open(desc)? {
        PowerSource::Synthetic(src) => record_virtual(&mut session, src, desc, workload, cfg)?,
        PowerSource::Replay(src) => record_replay(&mut session, &src, workload, cfg)?,
        PowerSource::Battery(src) => record_live(&mut session, src, desc, workload, cfg)?,
    }
    Ok(session)
}

/// Evenly spaced samples over `[start, start + duration]`, both ends
/// included, at no more than `interval` apart.
fn virtual_phase(
    src: &SyntheticSource,
    desc: &SourceDescriptor,
    phase: Phase,
    start: f64,
    duration: f64,
) -> Result<PhaseRecord, ProtocolError> {
    let steps = ((duration / desc.sample_interval).ceil() as usize).max(1);
    let samples = (0..=steps)
        .map(|j| {
            let t = if j == steps {
                start + duration
            } else {
                start + duration * j as f64 / steps as f64
            };
            src.sample_at(t, phase)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let trace = PowerTrace::new(samples, desc.clone())?;
    Ok(PhaseRecord {
        trace: Some(trace),
        duration,
    })
}

fn record_virtual(
    session: &mut MeasurementSession,
    src: SyntheticSource,
    desc: &SourceDescriptor,
    workload: &Workload,
    cfg: &SessionConfig,
) -> Result<(), ProtocolError> {
    let mut clock = 0.0;
    let pre = virtual_phase(&src, desc, Phase::Pre, clock, cfg.baseline_secs)?;
    clock += pre.duration;
    session.pre = Some(pre);
    for _ in 0..cfg.runs {
        let outcome = workload.execute()?;
        let duration = src
            .profile()
            .pinned_strain_secs()
            .unwrap_or(outcome.wall_secs)
            .max(MIN_VIRTUAL_STRAIN_SECS);
        let phase = virtual_phase(&src, desc, Phase::Strain, clock, duration)?;
        clock += duration;
        session.strains.push(StrainRecord {
            phase,
            wall_secs: outcome.wall_secs,
            checksum: outcome.checksum,
        });
    }
    session.post = Some(virtual_phase(&src, desc, Phase::Post, clock, cfg.baseline_secs)?);
    Ok(())
}

/// Replayed recordings are segmented by strain detection: the first
/// `baseline_secs` are taken as idle, the detected window is the strain,
/// and up to `baseline_secs` on either side of it form the idle phases.
fn record_replay(
    session: &mut MeasurementSession,
    src: &TraceReplay,
    workload: &Workload,
    cfg: &SessionConfig,
) -> Result<(), ProtocolError> {
    let trace = src.trace();
    let (first, last) = match (trace.first_t(), trace.last_t()) {
        (Some(a), Some(b)) if b > a => (a, b),
        _ => return Err(TraceError::TooFewSamples(trace.len()).into()),
    };
    let window = traceio::detect_strain_window(trace, first, (first + cfg.baseline_secs).min(last), cfg.k)?;
    // The window's own end samples belong to the strain, not the baseline.
    let outside = |t: PowerTrace| {
        let samples = t.samples().iter().filter(|s| s.t < window.t_start || s.t > window.t_end).copied().collect();
        PowerTrace::new(samples, t.origin.clone()).expect("subset of an ordered trace")
    };
    let pre = outside(trace.slice((window.t_start - cfg.baseline_secs).max(first), window.t_start));
    let post = outside(trace.slice(window.t_end, (window.t_end + cfg.baseline_secs).min(last)));
    let keep = |t: PowerTrace| (t.len() >= 2).then(|| PhaseRecord::from_trace(t));
    session.pre = keep(pre);
    session.post = keep(post);
    if session.pre.is_none() && session.post.is_none() {
        return Err(ProtocolError::NoBaseline);
    }
    for _ in 0..cfg.runs {
        let outcome = workload.execute()?;
        session.strains.push(StrainRecord {
            phase: PhaseRecord::from_trace(trace.slice(window.t_start, window.t_end)),
            wall_secs: outcome.wall_secs,
            checksum: outcome.checksum,
        });
    }
    Ok(())
}

/// Samples `src` every `interval` until `stop` fires, with one reading at
/// each end.
fn sample_until(
    src: &mut BatterySource,
    interval: Duration,
    stop: mpsc::Receiver<()>,
) -> Result<Vec<PowerSample>, SourceError> {
    let mut samples = vec![src.sample()?];
    loop {
        match stop.recv_timeout(interval) {
            Err(RecvTimeoutError::Timeout) => samples.push(src.sample()?),
            Ok(()) | Err(RecvTimeoutError::Disconnected) => {
                samples.push(src.sample()?);
                return Ok(samples);
            }
        }
    }
}

/// Runs `body` on the coordinator while a sampler thread reads the battery.
fn sampled<T>(
    src: &mut BatterySource,
    desc: &SourceDescriptor,
    body: impl FnOnce() -> T,
) -> Result<(PowerTrace, T), ProtocolError> {
    let interval = Duration::from_secs_f64(desc.sample_interval);
    let (samples, out) = thread::scope(|scope| {
        let (tx, rx) = mpsc::channel();
        let sampler = scope.spawn(move || sample_until(src, interval, rx));
        let out = body();
        drop(tx);
        (sampler.join().expect("sampler thread panicked"), out)
    });
    Ok((PowerTrace::new(samples?, desc.clone())?, out))
}

fn record_live(
    session: &mut MeasurementSession,
    mut src: BatterySource,
    desc: &SourceDescriptor,
    workload: &Workload,
    cfg: &SessionConfig,
) -> Result<(), ProtocolError> {
    session.battery_start_pct = src.capacity_percent();
    if let Some(pct) = session.battery_start_pct {
        if pct < 100.0 {
            session.warnings.push(format!(
                "battery at {pct}% at session start; discharge is non-linear, start from full charge for comparable figures"
            ));
        }
    }
    let idle = Duration::from_secs_f64(cfg.baseline_secs);
    let (pre, ()) = sampled(&mut src, desc, || thread::sleep(idle))?;
    session.pre = Some(PhaseRecord::from_trace(pre));
    for _ in 0..cfg.runs {
        let (trace, outcome) = sampled(&mut src, desc, || workload.execute())?;
        let outcome = outcome?;
        session.strains.push(StrainRecord {
            phase: PhaseRecord {
                trace: Some(trace),
                duration: outcome.wall_secs,
            },
            wall_secs: outcome.wall_secs,
            checksum: outcome.checksum,
        });
    }
    let (post, ()) = sampled(&mut src, desc, || thread::sleep(idle))?;
    session.post = Some(PhaseRecord::from_trace(post));
    session.battery_end_pct = src.capacity_percent();
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseSummary {
    pub mean_w: Option<f64>,
    pub duration_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseSummaries {
    pub pre: PhaseSummary,
    pub strain: PhaseSummary,
    pub post: PhaseSummary,
}

/// One repetition's row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunFigures {
    pub running_dr_w: Option<f64>,
    pub time_s: f64,
    pub figures: Option<Figures>,
    pub checksum: Option<i64>,
}

/// The row a session contributes to a results table. Power-derived fields
/// are `None` in timing-only mode.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionReport {
    pub workload: String,
    pub iters: Option<u64>,
    pub runs: usize,
    pub source: Option<String>,
    pub phases: PhaseSummaries,
    pub init_dr_w: Option<f64>,
    pub running_dr_w: Option<f64>,
    pub time_s: f64,
    pub figures: Option<Figures>,
    pub intensity: CarbonIntensity,
    pub checksum: Option<i64>,
    pub per_run: Vec<RunFigures>,
    pub battery_start_pct: Option<f64>,
    pub battery_end_pct: Option<f64>,
    pub warnings: Vec<String>,
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl SessionReport {
    /// Derives the report. Averages are taken over runs first; the derived
    /// columns are then computed from the averages so the row satisfies
    /// the same identities as each per-run row.
    pub fn from_session(session: &MeasurementSession, intensity: &CarbonIntensity) -> Result<Self, ProtocolError> {
        if session.strains.is_empty() {
            return Err(ProtocolError::InvalidConfig("session has no runs".into()));
        }
        let pre_mean = session.pre.as_ref().map(PhaseRecord::mean_w).transpose()?.flatten();
        let post_mean = session.post.as_ref().map(PhaseRecord::mean_w).transpose()?.flatten();
        let init_dr = mean(pre_mean.into_iter().chain(post_mean));
        let mut warnings = session.warnings.clone();
        if session.source.is_some() && init_dr.is_none() {
            return Err(ProtocolError::NoBaseline);
        }

        let mut per_run = Vec::with_capacity(session.strains.len());
        for (i, strain) in session.strains.iter().enumerate() {
            let running = strain.phase.mean_w()?;
            let figures = match (init_dr, running) {
                (Some(init), Some(run)) => {
                    let (fig, alg) = Figures::derive(init, run, strain.phase.duration, intensity)?;
                    if alg.negative {
                        warnings.push(format!(
                            "run {}: running DR {run:.3} W below initial DR {init:.3} W (baseline drift?)",
                            i + 1
                        ));
                    }
                    Some(fig)
                }
                _ => None,
            };
            per_run.push(RunFigures {
                running_dr_w: running,
                time_s: strain.phase.duration,
                figures,
                checksum: strain.checksum,
            });
        }

        let running_dr = if per_run.iter().all(|r| r.running_dr_w.is_some()) {
            mean(per_run.iter().filter_map(|r| r.running_dr_w))
        } else {
            None
        };
        let time_s = mean(per_run.iter().map(|r| r.time_s)).unwrap_or(0.0);
        let figures = match (init_dr, running_dr) {
            (Some(init), Some(run)) => Some(Figures::derive(init, run, time_s, intensity)?.0),
            _ => None,
        };
        let pre_duration = session.pre.as_ref().map_or(0.0, |p| p.duration);
        let post_duration = session.post.as_ref().map_or(0.0, |p| p.duration);
        Ok(Self {
            workload: session.workload.clone(),
            iters: session.iters,
            runs: session.strains.len(),
            source: session.source.as_ref().map(ToString::to_string),
            phases: PhaseSummaries {
                pre: PhaseSummary {
                    mean_w: pre_mean,
                    duration_s: pre_duration,
                },
                strain: PhaseSummary {
                    mean_w: running_dr,
                    duration_s: time_s,
                },
                post: PhaseSummary {
                    mean_w: post_mean,
                    duration_s: post_duration,
                },
            },
            init_dr_w: init_dr,
            running_dr_w: running_dr,
            time_s,
            figures,
            intensity: intensity.clone(),
            checksum: session.strains.last().and_then(|s| s.checksum),
            per_run,
            battery_start_pct: session.battery_start_pct,
            battery_end_pct: session.battery_end_pct,
            warnings,
        })
    }

    pub fn alg_dr_w(&self) -> Option<f64> {
        self.figures.map(|f| f.alg_dr_w)
    }

    pub fn carbon_g(&self) -> Option<f64> {
        self.figures.map(|f| f.carbon_g)
    }
}

/// Records a session and derives its report.
pub fn run_session(
    workload: &Workload,
    source: Option<&SourceDescriptor>,
    cfg: &SessionConfig,
) -> Result<(MeasurementSession, SessionReport), ProtocolError> {
    let session = record_session(workload, source, cfg)?;
    let report = SessionReport::from_session(&session, &cfg.intensity)?;
    Ok((session, report))
}
