//! Power sample origins.
//!
//! A [`PowerSource`] hides where readings come from: the OS battery
//! interface (software estimate of the discharge rate), a recorded meter
//! trace, or a synthetic generator used for repeatable sessions.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::traceio::{self, PowerTrace, TraceError};

/// Environment variable that redirects the battery interface, mainly for
/// test fixtures.
pub const BATTERY_PATH_ENV: &str = "CARBONPROF_BATTERY_PATH";

/// Default power-supply class directory on Linux.
pub const DEFAULT_POWER_SUPPLY_DIR: &str = "/sys/class/power_supply";

/// Default sampling period in seconds.
pub const DEFAULT_SAMPLE_INTERVAL: f64 = 1.0;

const WATTS_REL_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("no battery found under {0}")]
    NoBattery(PathBuf),
    #[error("battery is not discharging (status `{0}`); run on battery power only")]
    OnAcPower(String),
    #[error("trace file not found: {0}")]
    TraceNotFound(PathBuf),
    #[error("trace parse error: {0}")]
    Parse(#[from] TraceError),
    #[error("trace replay reached the end of the recording")]
    SourceExhausted,
    #[error("failed to read {path}: {source}")]
    ReadFailure {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("negative power reading {0} W (battery charging?)")]
    NegativeReading(f64),
    #[error("invalid source descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("invalid sample: {0}")]
    InvalidSample(String),
}

/// One timestamped reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSample {
    /// Seconds since session start.
    pub t: f64,
    pub volts: Option<f64>,
    pub amps: Option<f64>,
    pub watts: f64,
}

impl PowerSample {
    /// Sample known only by its power.
    pub fn from_watts(t: f64, watts: f64) -> Result<Self, SourceError> {
        Self::new(t, None, None, watts)
    }

    /// Sample derived from voltage and current.
    pub fn from_volts_amps(t: f64, volts: f64, amps: f64) -> Result<Self, SourceError> {
        Self::new(t, Some(volts), Some(amps), volts * amps)
    }

    pub fn new(
        t: f64,
        volts: Option<f64>,
        amps: Option<f64>,
        watts: f64,
    ) -> Result<Self, SourceError> {
        if !t.is_finite() || t < 0.0 {
            return Err(SourceError::InvalidSample(format!("timestamp {t} must be finite and non-negative")));
        }
        if !watts.is_finite() {
            return Err(SourceError::InvalidSample(format!("power {watts} is not finite")));
        }
        if watts < 0.0 {
            return Err(SourceError::NegativeReading(watts));
        }
        if let (Some(v), Some(a)) = (volts, amps) {
            if !watts_consistent(v, a, watts) {
                return Err(SourceError::InvalidSample(format!(
                    "power {watts} W disagrees with {v} V x {a} A"
                )));
            }
        }
        Ok(Self { t, volts, amps, watts })
    }
}

pub(crate) fn watts_consistent(volts: f64, amps: f64, watts: f64) -> bool {
    let product = volts * amps;
    (product - watts).abs() <= WATTS_REL_TOL * product.abs().max(watts.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Battery,
    TraceReplay,
    Synthetic,
}

/// Where samples come from and how often they are taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceDescriptor {
    pub kind: SourceKind,
    /// Battery directory, trace path, or synthetic profile text.
    pub location: String,
    pub sample_interval: f64,
}

impl SourceDescriptor {
    pub fn battery() -> Self {
        Self {
            kind: SourceKind::Battery,
            location: String::new(),
            sample_interval: DEFAULT_SAMPLE_INTERVAL,
        }
    }

    pub fn trace(path: impl Into<String>) -> Self {
        Self {
            kind: SourceKind::TraceReplay,
            location: path.into(),
            sample_interval: DEFAULT_SAMPLE_INTERVAL,
        }
    }

    pub fn synthetic(profile: impl Into<String>) -> Self {
        Self {
            kind: SourceKind::Synthetic,
            location: profile.into(),
            sample_interval: DEFAULT_SAMPLE_INTERVAL,
        }
    }

    pub fn with_interval(mut self, secs: f64) -> Self {
        self.sample_interval = secs;
        self
    }

    pub fn validate(&self) -> Result<(), SourceError> {
        if !(self.sample_interval.is_finite() && self.sample_interval > 0.0) {
            return Err(SourceError::InvalidDescriptor(format!(
                "sample interval must be positive, got {}",
                self.sample_interval
            )));
        }
        if self.kind == SourceKind::Synthetic {
            self.location.parse::<SyntheticProfile>()?;
        }
        Ok(())
    }
}

impl fmt::Display for SourceDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            SourceKind::Battery if self.location.is_empty() => f.write_str("battery"),
            SourceKind::Battery => write!(f, "battery:{}", self.location),
            SourceKind::TraceReplay => write!(f, "trace:{}", self.location),
            SourceKind::Synthetic => write!(f, "synthetic:{}", self.location),
        }
    }
}

/// Parses the command-line form: `battery`, `battery:<dir>`,
/// `trace:<path>` or `synthetic:<profile>`.
impl FromStr for SourceDescriptor {
    type Err = SourceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (head, rest) = match s.split_once(':') {
            Some((h, r)) => (h, Some(r)),
            None => (s, None),
        };
        let desc = match (head, rest) {
            ("battery", None) => Self::battery(),
            ("battery", Some(dir)) => Self {
                location: dir.to_string(),
                ..Self::battery()
            },
            ("trace", Some(path)) if !path.is_empty() => Self::trace(path),
            ("synthetic", Some(profile)) => Self::synthetic(profile),
            _ => {
                return Err(SourceError::InvalidDescriptor(format!(
                    "`{s}` (expected battery, trace:<path> or synthetic:<profile>)"
                )))
            }
        };
        desc.validate()?;
        Ok(desc)
    }
}

/// Measurement phase, used by phase-aware synthetic profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Pre,
    Strain,
    Post,
}

/// Synthetic power profile.
///
/// Text forms: `constant:<W>` and `step:<baseline W>,<strain W>[,<strain s>]`.
/// The optional third step field pins the strain duration so a session on
/// this source is fully deterministic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SyntheticProfile {
    Constant(f64),
    Step {
        baseline: f64,
        strain: f64,
        strain_secs: Option<f64>,
    },
}

impl SyntheticProfile {
    pub fn watts(&self, phase: Phase) -> f64 {
        match *self {
            SyntheticProfile::Constant(w) => w,
            SyntheticProfile::Step { baseline, strain, .. } => match phase {
                Phase::Strain => strain,
                Phase::Pre | Phase::Post => baseline,
            },
        }
    }

    pub fn pinned_strain_secs(&self) -> Option<f64> {
        match *self {
            SyntheticProfile::Step { strain_secs, .. } => strain_secs,
            SyntheticProfile::Constant(_) => None,
        }
    }
}

impl FromStr for SyntheticProfile {
    type Err = SourceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |why: &str| SourceError::InvalidDescriptor(format!("synthetic profile `{s}`: {why}"));
        let number = |field: &str| -> Result<f64, SourceError> {
            let v: f64 = field.trim().parse().map_err(|_| bad("non-numeric field"))?;
            if v.is_finite() && v >= 0.0 {
                Ok(v)
            } else {
                Err(bad("values must be finite and non-negative"))
            }
        };
        let (kind, args) = s.split_once(':').ok_or_else(|| bad("missing `:`"))?;
        let fields: Vec<&str> = args.split(',').collect();
        match (kind.trim(), fields.as_slice()) {
            ("constant", [w]) => Ok(SyntheticProfile::Constant(number(w)?)),
            ("step", [b, st]) => Ok(SyntheticProfile::Step {
                baseline: number(b)?,
                strain: number(st)?,
                strain_secs: None,
            }),
            ("step", [b, st, secs]) => {
                let secs = number(secs)?;
                if secs <= 0.0 {
                    return Err(bad("strain duration must be positive"));
                }
                Ok(SyntheticProfile::Step {
                    baseline: number(b)?,
                    strain: number(st)?,
                    strain_secs: Some(secs),
                })
            }
            _ => Err(bad("expected constant:<W> or step:<W>,<W>[,<s>]")),
        }
    }
}

/// Synthetic generator on a virtual clock.
#[derive(Debug, Clone)]
pub struct SyntheticSource {
    profile: SyntheticProfile,
    phase: Phase,
    clock: f64,
    interval: f64,
}

impl SyntheticSource {
    pub fn new(profile: SyntheticProfile, interval: f64) -> Self {
        Self {
            profile,
            phase: Phase::Pre,
            clock: 0.0,
            interval,
        }
    }

    pub fn profile(&self) -> &SyntheticProfile {
        &self.profile
    }

    pub fn set_phase(&mut self, phase: Phase) {
        self.phase = phase;
    }

    pub fn sample(&mut self) -> Result<PowerSample, SourceError> {
        self.clock += self.interval;
        PowerSample::from_watts(self.clock, self.profile.watts(self.phase))
    }

    /// Reading at an arbitrary virtual time, without touching the clock.
    pub fn sample_at(&self, t: f64, phase: Phase) -> Result<PowerSample, SourceError> {
        PowerSample::from_watts(t, self.profile.watts(phase))
    }
}

/// Replays a recorded trace row by row.
#[derive(Debug, Clone)]
pub struct TraceReplay {
    trace: PowerTrace,
    cursor: usize,
}

impl TraceReplay {
    pub fn new(trace: PowerTrace) -> Self {
        Self { trace, cursor: 0 }
    }

    pub fn open(path: &Path, desc: &SourceDescriptor) -> Result<Self, SourceError> {
        let bytes = fs::read(path).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => SourceError::TraceNotFound(path.to_path_buf()),
            _ => SourceError::ReadFailure {
                path: path.to_path_buf(),
                source: e,
            },
        })?;
        let mut trace = traceio::parse_trace(&bytes)?;
        trace.origin = desc.clone();
        Ok(Self::new(trace))
    }

    pub fn trace(&self) -> &PowerTrace {
        &self.trace
    }

    pub fn sample(&mut self) -> Result<PowerSample, SourceError> {
        let s = self
            .trace
            .samples()
            .get(self.cursor)
            .copied()
            .ok_or(SourceError::SourceExhausted)?;
        self.cursor += 1;
        Ok(s)
    }
}

/// Reads the Linux power-supply interface of one battery.
#[derive(Debug)]
pub struct BatterySource {
    dir: PathBuf,
    origin: Instant,
    last_t: Option<f64>,
}

impl BatterySource {
    /// Opens the battery at `location`, or discovers one. `location` may be
    /// a battery directory (one holding a `status` file) or a class
    /// directory whose children are scanned for a battery.
    pub fn open(location: Option<&Path>) -> Result<Self, SourceError> {
        let root = match location {
            Some(p) => p.to_path_buf(),
            None => std::env::var_os(BATTERY_PATH_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_POWER_SUPPLY_DIR)),
        };
        let dir = find_battery(&root)?;
        let status = read_trimmed(&dir.join("status"))?;
        if status != "Discharging" {
            return Err(SourceError::OnAcPower(status));
        }
        Ok(Self {
            dir,
            origin: Instant::now(),
            last_t: None,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Charge level in percent, when the interface reports one.
    pub fn capacity_percent(&self) -> Option<f64> {
        read_trimmed(&self.dir.join("capacity")).ok()?.parse().ok()
    }

    pub fn sample(&mut self) -> Result<PowerSample, SourceError> {
        let mut t = self.origin.elapsed().as_secs_f64();
        if let Some(last) = self.last_t {
            if t <= last {
                t = last + 1e-9;
            }
        }
        let sample = read_battery_power(&self.dir, t)?;
        self.last_t = Some(t);
        Ok(sample)
    }
}

/// Direct power reading (µW) when present, else current (µA) x voltage (µV).
pub fn read_battery_power(dir: &Path, t: f64) -> Result<PowerSample, SourceError> {
    let power = dir.join("power_now");
    if power.exists() {
        let watts = read_micro(&power)?;
        if watts < 0.0 {
            return Err(SourceError::NegativeReading(watts));
        }
        return PowerSample::from_watts(t, watts);
    }
    let amps = read_micro(&dir.join("current_now"))?;
    let volts = read_micro(&dir.join("voltage_now"))?;
    let watts = volts * amps;
    if watts < 0.0 {
        return Err(SourceError::NegativeReading(watts));
    }
    PowerSample::from_volts_amps(t, volts, amps)
}

fn find_battery(root: &Path) -> Result<PathBuf, SourceError> {
    if root.join("status").is_file() {
        return Ok(root.to_path_buf());
    }
    let entries = fs::read_dir(root).map_err(|_| SourceError::NoBattery(root.to_path_buf()))?;
    let mut candidates: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| {
            read_trimmed(&p.join("type")).map(|t| t == "Battery").unwrap_or(false)
                && p.join("status").is_file()
        })
        .collect();
    candidates.sort();
    candidates
        .into_iter()
        .next()
        .ok_or_else(|| SourceError::NoBattery(root.to_path_buf()))
}

fn read_trimmed(path: &Path) -> Result<String, SourceError> {
    fs::read_to_string(path)
        .map(|s| s.trim().to_string())
        .map_err(|source| SourceError::ReadFailure {
            path: path.to_path_buf(),
            source,
        })
}

/// Reads an integer micro-unit value and converts it to the base unit.
fn read_micro(path: &Path) -> Result<f64, SourceError> {
    let text = read_trimmed(path)?;
    let raw: i64 = text.parse().map_err(|_| SourceError::ReadFailure {
        path: path.to_path_buf(),
        source: io::Error::new(io::ErrorKind::InvalidData, format!("`{text}` is not an integer")),
    })?;
    Ok(micro_to_unit(raw))
}

pub(crate) fn micro_to_unit(raw: i64) -> f64 {
    raw as f64 / 1e6
}

/// An open sample stream.
#[derive(Debug)]
pub enum PowerSource {
    Battery(BatterySource),
    Replay(TraceReplay),
    Synthetic(SyntheticSource),
}

impl PowerSource {
    pub fn open(desc: &SourceDescriptor) -> Result<Self, SourceError> {
        desc.validate()?;
        match desc.kind {
            SourceKind::Battery => {
                let loc = (!desc.location.is_empty()).then(|| Path::new(&desc.location));
                BatterySource::open(loc).map(PowerSource::Battery)
            }
            SourceKind::TraceReplay => {
                TraceReplay::open(Path::new(&desc.location), desc).map(PowerSource::Replay)
            }
            SourceKind::Synthetic => {
                let profile = desc.location.parse()?;
                Ok(PowerSource::Synthetic(SyntheticSource::new(profile, desc.sample_interval)))
            }
        }
    }

    pub fn sample(&mut self) -> Result<PowerSample, SourceError> {
        match self {
            PowerSource::Battery(b) => b.sample(),
            PowerSource::Replay(r) => r.sample(),
            PowerSource::Synthetic(s) => s.sample(),
        }
    }

    /// Live sources have to be sampled in real time, next to the workload.
    pub fn is_live(&self) -> bool {
        matches!(self, PowerSource::Battery(_))
    }
}
