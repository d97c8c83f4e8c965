//! Power traces: CSV import/export, energy integration and strain detection.
//!
//! The CSV format is the one produced by power-meter log exports and by the
//! harness's own recordings:
//!
//! ```text
//! t_s,v_V,i_A[,p_W]
//! 0.0,5.0,1.0
//! 0.5,5.0,1.2
//! ```
//!
//! `t_s` must be strictly increasing. When `p_W` is absent (or empty on a
//! row) the power is `v_V * i_A`; when it is present `v_V`/`i_A` may be
//! left empty.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::powersource::{watts_consistent, PowerSample, SourceDescriptor, SourceError, SourceKind};

const HEADER: [&str; 3] = ["t_s", "v_V", "i_A"];
const POWER_COLUMN: &str = "p_W";

/// Half-width of the centered rolling mean used by the detector.
const ROLLING_HALF_WIDTH: usize = 2;
/// Raw dips of at most this many samples do not split a window.
const MAX_DIP_SAMPLES: usize = 2;
/// A raw dip widens by the rolling half-width on each side once smoothed.
const MAX_ROLLING_GAP: usize = MAX_DIP_SAMPLES + 2 * ROLLING_HALF_WIDTH;

/// Default detection sensitivity (threshold in baseline standard deviations).
pub const DEFAULT_K: f64 = 3.0;

#[derive(Debug, Error, PartialEq)]
pub enum TraceError {
    #[error("bad header `{0}` (expected t_s,v_V,i_A[,p_W])")]
    BadHeader(String),
    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("line {line}: timestamp {t} does not increase")]
    NonMonotonicTime { line: u64, t: f64 },
    #[error("trace holds no samples")]
    EmptyTrace,
    #[error("at least 2 samples are required, trace has {0}")]
    TooFewSamples(usize),
    #[error("range [{t0}, {t1}] is not inside the trace span [{first}, {last}]")]
    RangeOutsideTrace { t0: f64, t1: f64, first: f64, last: f64 },
    #[error("empty or reversed range [{0}, {1}]")]
    InvalidRange(f64, f64),
    #[error("baseline interval holds {0} samples; need at least 2")]
    ThinBaseline(usize),
    #[error("invalid detector parameter: {0}")]
    InvalidParameter(String),
    #[error(
        "no strain detected above {threshold:.6} W (baseline mean {baseline_mean:.6} W, std {baseline_std:.6} W)"
    )]
    NoStrainDetected {
        baseline_mean: f64,
        baseline_std: f64,
        threshold: f64,
    },
    #[error("i/o error: {0}")]
    Io(String),
}

/// Ordered samples plus where they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerTrace {
    samples: Vec<PowerSample>,
    pub origin: SourceDescriptor,
}

impl PowerTrace {
    /// Builds a trace, checking that timestamps strictly increase.
    pub fn new(samples: Vec<PowerSample>, origin: SourceDescriptor) -> Result<Self, TraceError> {
        for (i, pair) in samples.windows(2).enumerate() {
            if pair[1].t <= pair[0].t {
                return Err(TraceError::NonMonotonicTime {
                    line: i as u64 + 2,
                    t: pair[1].t,
                });
            }
        }
        Ok(Self { samples, origin })
    }

    pub fn samples(&self) -> &[PowerSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first_t(&self) -> Option<f64> {
        self.samples.first().map(|s| s.t)
    }

    pub fn last_t(&self) -> Option<f64> {
        self.samples.last().map(|s| s.t)
    }

    pub fn duration(&self) -> f64 {
        match (self.first_t(), self.last_t()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    /// Samples with `t0 <= t <= t1`.
    pub fn slice(&self, t0: f64, t1: f64) -> PowerTrace {
        let lo = self.samples.partition_point(|s| s.t < t0);
        let hi = self.samples.partition_point(|s| s.t <= t1);
        PowerTrace {
            samples: self.samples[lo..hi.max(lo)].to_vec(),
            origin: self.origin.clone(),
        }
    }

    /// Same trace with every power reading mapped through `f`.
    pub fn map_watts(&self, f: impl Fn(f64) -> f64) -> Result<PowerTrace, SourceError> {
        let samples = self
            .samples
            .iter()
            .map(|s| PowerSample::from_watts(s.t, f(s.watts)))
            .collect::<Result<_, _>>()?;
        Ok(PowerTrace {
            samples,
            origin: self.origin.clone(),
        })
    }

    fn check_range(&self, t0: f64, t1: f64) -> Result<(), TraceError> {
        if self.samples.len() < 2 {
            return Err(TraceError::TooFewSamples(self.samples.len()));
        }
        if t0.partial_cmp(&t1) != Some(std::cmp::Ordering::Less) {
            return Err(TraceError::InvalidRange(t0, t1));
        }
        let (first, last) = (self.samples[0].t, self.samples[self.samples.len() - 1].t);
        if t0 < first || t1 > last {
            return Err(TraceError::RangeOutsideTrace { t0, t1, first, last });
        }
        Ok(())
    }

    /// Linearly interpolated power at `t`; `t` must lie inside the span.
    fn watts_at(&self, t: f64) -> f64 {
        let idx = self.samples.partition_point(|s| s.t < t);
        let right = self.samples[idx.min(self.samples.len() - 1)];
        if right.t == t || idx == 0 {
            return right.watts;
        }
        let left = self.samples[idx - 1];
        let frac = (t - left.t) / (right.t - left.t);
        left.watts + frac * (right.watts - left.watts)
    }
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn malformed(line: u64, reason: impl Into<String>) -> TraceError {
    TraceError::MalformedRow {
        line,
        reason: reason.into(),
    }
}

/// Parses a trace CSV export.
pub fn parse_trace(bytes: &[u8]) -> Result<PowerTrace, TraceError> {
    let bytes = bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(bytes);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let header = reader.headers().map_err(|e| TraceError::Io(e.to_string()))?.clone();
    let names: Vec<&str> = header.iter().collect();
    let has_power = match names.as_slice() {
        [t, v, i] if [*t, *v, *i] == HEADER => false,
        [t, v, i, p] if [*t, *v, *i] == HEADER && *p == POWER_COLUMN => true,
        _ => return Err(TraceError::BadHeader(names.join(","))),
    };
    let columns = header.len();

    let mut samples: Vec<PowerSample> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| TraceError::Io(e.to_string()))?;
        let line = line_of(&record);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != columns {
            return Err(malformed(line, format!("expected {columns} columns, found {}", record.len())));
        }
        let field = |idx: usize, name: &str| -> Result<Option<f64>, TraceError> {
            let raw = record.get(idx).unwrap_or("");
            if raw.is_empty() {
                return Ok(None);
            }
            let v: f64 = raw
                .parse()
                .map_err(|_| malformed(line, format!("{name} `{raw}` is not a number")))?;
            if !v.is_finite() {
                return Err(malformed(line, format!("{name} `{raw}` is not finite")));
            }
            Ok(Some(v))
        };
        let t = field(0, "t_s")?.ok_or_else(|| malformed(line, "missing t_s"))?;
        let mut volts = field(1, "v_V")?;
        let mut amps = field(2, "i_A")?;
        let power = if has_power { field(3, "p_W")? } else { None };
        let watts = match (power, volts, amps) {
            (Some(p), Some(v), Some(a)) => {
                // The meter's own power column wins; V/I that round to a
                // different product are dropped so the sample stays consistent.
                if !watts_consistent(v, a, p) {
                    volts = None;
                    amps = None;
                }
                p
            }
            (Some(p), _, _) => p,
            (None, Some(v), Some(a)) => v * a,
            (None, _, _) => return Err(malformed(line, "need p_W or both v_V and i_A")),
        };
        if let Some(prev) = samples.last() {
            if t <= prev.t {
                return Err(TraceError::NonMonotonicTime { line, t });
            }
        }
        let sample = PowerSample::new(t, volts, amps, watts).map_err(|e| malformed(line, e.to_string()))?;
        samples.push(sample);
    }
    if samples.is_empty() {
        return Err(TraceError::EmptyTrace);
    }
    let interval = if samples.len() > 1 {
        (samples[samples.len() - 1].t - samples[0].t) / (samples.len() - 1) as f64
    } else {
        1.0
    };
    let origin = SourceDescriptor {
        kind: SourceKind::TraceReplay,
        location: String::new(),
        sample_interval: interval,
    };
    Ok(PowerTrace { samples, origin })
}

/// Writes a trace in the canonical CSV format. Numbers use the shortest
/// representation that parses back to the same value.
pub fn write_trace<W: Write>(trace: &PowerTrace, out: W) -> Result<(), TraceError> {
    let mut writer = csv::Writer::from_writer(out);
    let io = |e: csv::Error| TraceError::Io(e.to_string());
    writer
        .write_record(HEADER.iter().copied().chain(std::iter::once(POWER_COLUMN)))
        .map_err(io)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for s in trace.samples() {
        writer
            .write_record([s.t.to_string(), opt(s.volts), opt(s.amps), s.watts.to_string()])
            .map_err(io)?;
    }
    writer.flush().map_err(|e| TraceError::Io(e.to_string()))
}

pub fn serialize_trace(trace: &PowerTrace) -> String {
    let mut buf = Vec::new();
    write_trace(trace, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("csv output is utf-8")
}

/// Trapezoidal integral of power over `[t0, t1]`, in joules.
pub fn integrate_joules(trace: &PowerTrace, t0: f64, t1: f64) -> Result<f64, TraceError> {
    trace.check_range(t0, t1)?;
    let samples = trace.samples();
    let lo = samples.partition_point(|s| s.t <= t0);
    let hi = samples.partition_point(|s| s.t < t1);
    let mut prev = (t0, trace.watts_at(t0));
    let mut joules = 0.0;
    for s in &samples[lo..hi] {
        joules += 0.5 * (prev.1 + s.watts) * (s.t - prev.0);
        prev = (s.t, s.watts);
    }
    joules += 0.5 * (prev.1 + trace.watts_at(t1)) * (t1 - prev.0);
    Ok(joules)
}

/// Energy over `[t0, t1]` in watt-hours.
pub fn integrate_energy(trace: &PowerTrace, t0: f64, t1: f64) -> Result<f64, TraceError> {
    integrate_joules(trace, t0, t1).map(|j| j / 3600.0)
}

/// Time-weighted mean power over `[t0, t1]`.
pub fn mean_power(trace: &PowerTrace, t0: f64, t1: f64) -> Result<f64, TraceError> {
    integrate_energy(trace, t0, t1).map(|wh| wh * 3600.0 / (t1 - t0))
}

/// Mean power over the whole trace.
pub fn mean_power_full(trace: &PowerTrace) -> Result<f64, TraceError> {
    let (a, b) = match (trace.first_t(), trace.last_t()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(TraceError::TooFewSamples(0)),
    };
    mean_power(trace, a, b)
}

/// Mean and population standard deviation of the samples in `[t0, t1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BaselineStats {
    pub t0: f64,
    pub t1: f64,
    pub samples: usize,
    pub mean_w: f64,
    pub std_w: f64,
}

pub fn baseline_stats(trace: &PowerTrace, t0: f64, t1: f64) -> Result<BaselineStats, TraceError> {
    trace.check_range(t0, t1)?;
    let window = trace.slice(t0, t1);
    let n = window.len();
    if n < 2 {
        return Err(TraceError::ThinBaseline(n));
    }
    let mean = window.samples().iter().map(|s| s.watts).sum::<f64>() / n as f64;
    let var = window
        .samples()
        .iter()
        .map(|s| (s.watts - mean).powi(2))
        .sum::<f64>()
        / n as f64;
    Ok(BaselineStats {
        t0,
        t1,
        samples: n,
        mean_w: mean,
        std_w: var.sqrt(),
    })
}

/// A detected strain segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StrainWindow {
    pub t_start: f64,
    pub t_end: f64,
    pub mean_power: f64,
    pub baseline_power: f64,
    pub baseline_std: f64,
    pub threshold: f64,
}

impl StrainWindow {
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }
}

fn rolling_mean(values: &[f64], half: usize) -> Vec<f64> {
    let mut prefix = Vec::with_capacity(values.len() + 1);
    prefix.push(0.0);
    for v in values {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(values.len());
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Finds where the workload was running.
///
/// The baseline mean and standard deviation come from `[baseline_t0,
/// baseline_t1]`. A centered 5-sample rolling mean is compared against
/// `mean + k * std`; the strain window is the longest contiguous run above
/// it, where dips of at most two samples do not break the run. Its ends
/// are then trimmed to the outermost raw samples above the threshold.
pub fn detect_strain_window(
    trace: &PowerTrace,
    baseline_t0: f64,
    baseline_t1: f64,
    k: f64,
) -> Result<StrainWindow, TraceError> {
    if !(k.is_finite() && k > 0.0) {
        return Err(TraceError::InvalidParameter(format!("k must be positive, got {k}")));
    }
    let stats = baseline_stats(trace, baseline_t0, baseline_t1)?;
    // Slack keeps a perfectly flat trace from tripping on rounding in the
    // rolling sums.
    let slack = 1e-9 * stats.mean_w.abs().max(1.0);
    let threshold = stats.mean_w + k * stats.std_w + slack;
    let not_found = || TraceError::NoStrainDetected {
        baseline_mean: stats.mean_w,
        baseline_std: stats.std_w,
        threshold,
    };

    let samples = trace.samples();
    let watts: Vec<f64> = samples.iter().map(|s| s.watts).collect();
    let above: Vec<bool> = rolling_mean(&watts, ROLLING_HALF_WIDTH)
        .into_iter()
        .map(|m| m > threshold)
        .collect();

    // Runs of indices above threshold, with short dips merged.
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < above.len() {
        if !above[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < above.len() && above[i] {
            i += 1;
        }
        let end = i - 1;
        match runs.last_mut() {
            Some(last) if start - last.1 - 1 <= MAX_ROLLING_GAP => last.1 = end,
            _ => runs.push((start, end)),
        }
    }

    let best = runs
        .into_iter()
        .filter(|&(s, e)| samples[e].t > samples[s].t)
        .fold(None::<(usize, usize)>, |best, run| match best {
            Some(b) if samples[b.1].t - samples[b.0].t >= samples[run.1].t - samples[run.0].t => Some(b),
            _ => Some(run),
        });
    let (mut s, mut e) = best.ok_or_else(not_found)?;
    // The rolling mean smears each edge outward by up to the half width;
    // pull the endpoints in to the outermost raw samples above threshold.
    while s < e && watts[s] <= threshold {
        s += 1;
    }
    while e > s && watts[e] <= threshold {
        e -= 1;
    }
    if samples[e].t <= samples[s].t {
        return Err(not_found());
    }
    let (t_start, t_end) = (samples[s].t, samples[e].t);
    Ok(StrainWindow {
        t_start,
        t_end,
        mean_power: mean_power(trace, t_start, t_end)?,
        baseline_power: stats.mean_w,
        baseline_std: stats.std_w,
        threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace_from(points: &[(f64, f64)]) -> PowerTrace {
        let samples = points
            .iter()
            .map(|&(t, w)| PowerSample::from_watts(t, w).unwrap())
            .collect();
        PowerTrace::new(samples, SourceDescriptor::synthetic("constant:0")).unwrap()
    }

    fn uniform(n: usize, dt: f64, f: impl Fn(f64) -> f64) -> PowerTrace {
        let pts: Vec<(f64, f64)> = (0..n).map(|i| (i as f64 * dt, f(i as f64 * dt))).collect();
        trace_from(&pts)
    }

    #[test]
    fn parses_voltage_current_rows() {
        let t = parse_trace(b"t_s,v_V,i_A\n0.0,5.0,1.0\n0.5,5.0,1.2\n").unwrap();
        let w: Vec<f64> = t.samples().iter().map(|s| s.watts).collect();
        assert_eq!(w, vec![5.0, 6.0]);
        assert_eq!(t.samples()[1].amps, Some(1.2));
    }

    #[test]
    fn parses_crlf_and_power_column() {
        let t = parse_trace(b"t_s,v_V,i_A,p_W\r\n0,,,6.665\r\n1,5,1,5\r\n").unwrap();
        assert_eq!(t.samples()[0].watts, 6.665);
        assert_eq!(t.samples()[0].volts, None);
        assert_eq!(t.samples()[1].watts, 5.0);
    }

    #[test]
    fn inconsistent_meter_columns_keep_power() {
        let t = parse_trace(b"t_s,v_V,i_A,p_W\n0,5.1234,1.2345,6.3248\n1,5,1,5\n").unwrap();
        assert_eq!(t.samples()[0].watts, 6.3248);
        assert_eq!(t.samples()[0].volts, None);
    }

    #[test]
    fn rejects_decreasing_time() {
        let err = parse_trace(b"t_s,v_V,i_A\n1.0,5,1\n0.5,5,1\n").unwrap_err();
        assert!(matches!(err, TraceError::NonMonotonicTime { line: 3, .. }), "{err:?}");
        let dup = parse_trace(b"t_s,v_V,i_A\n1.0,5,1\n1.0,5,1\n").unwrap_err();
        assert!(matches!(dup, TraceError::NonMonotonicTime { .. }));
    }

    #[test]
    fn rejects_malformed_rows() {
        for body in [
            "t_s,v_V,i_A\n0,5\n",
            "t_s,v_V,i_A\n0,five,1\n",
            "t_s,v_V,i_A\n0,5,1,9\n",
            "t_s,v_V,i_A\n0,,1\n",
            "t_s,v_V,i_A\n-1,5,1\n",
            "t_s,v_V,i_A\n0,5,-1\n",
            "t_s,v_V,i_A\n0,inf,1\n",
        ] {
            let err = parse_trace(body.as_bytes()).unwrap_err();
            assert!(matches!(err, TraceError::MalformedRow { .. }), "{body:?}: {err:?}");
        }
    }

    #[test]
    fn rejects_bad_header_and_empty() {
        assert!(matches!(parse_trace(b"time,volts,amps\n0,1,1\n"), Err(TraceError::BadHeader(_))));
        assert_eq!(parse_trace(b"t_s,v_V,i_A\n"), Err(TraceError::EmptyTrace));
        assert_eq!(parse_trace(b"t_s,v_V,i_A\n\n"), Err(TraceError::EmptyTrace));
    }

    #[test]
    fn thousand_rows_at_one_millisecond() {
        let mut body = String::from("t_s,v_V,i_A\n");
        for i in 0..1000 {
            body.push_str(&format!("{},5.0,0.8\n", i as f64 * 0.001));
        }
        let t = parse_trace(body.as_bytes()).unwrap();
        assert_eq!(t.len(), 1000);
        assert!((t.duration() - 0.999).abs() < 1e-12);
    }

    #[test]
    fn serialize_round_trip() {
        let src = "t_s,v_V,i_A,p_W\n0,5,1.2,6\n0.25,,,3.3\n0.5,4.9,0.1,0.49000000000000005\n";
        let t = parse_trace(src.as_bytes()).unwrap();
        let again = parse_trace(serialize_trace(&t).as_bytes()).unwrap();
        assert_eq!(t.samples(), again.samples());
    }

    #[test]
    fn constant_rectangle() {
        let t = uniform(11, 1.0, |_| 5.0);
        let wh = integrate_energy(&t, 0.0, 10.0).unwrap();
        assert!((wh - 50.0 / 3600.0).abs() < 1e-15);
        assert!((wh - 0.013889).abs() < 1e-6);
    }

    #[test]
    fn ramp_triangle() {
        let t = uniform(61, 1.0, |x| x / 6.0);
        let wh = integrate_energy(&t, 0.0, 60.0).unwrap();
        assert!((wh * 3600.0 - 300.0).abs() < 1e-9);
        assert!((mean_power(&t, 0.0, 60.0).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn boundaries_interpolate_linearly() {
        let t = trace_from(&[(0.0, 0.0), (10.0, 10.0)]);
        // Trapezoid over [2.5, 7.5] on the line w = t.
        let j = integrate_joules(&t, 2.5, 7.5).unwrap();
        assert!((j - 25.0).abs() < 1e-12);
        assert!((mean_power(&t, 2.5, 7.5).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn range_errors() {
        let t = uniform(11, 1.0, |_| 5.0);
        assert!(matches!(integrate_energy(&t, -1.0, 5.0), Err(TraceError::RangeOutsideTrace { .. })));
        assert!(matches!(integrate_energy(&t, 0.0, 10.5), Err(TraceError::RangeOutsideTrace { .. })));
        assert!(matches!(integrate_energy(&t, 5.0, 5.0), Err(TraceError::InvalidRange(..))));
        let single = trace_from(&[(0.0, 1.0)]);
        assert_eq!(integrate_energy(&single, 0.0, 1.0), Err(TraceError::TooFewSamples(1)));
    }

    #[test]
    fn step_segment_mean() {
        let t = uniform(151, 1.0, |x| if (60.0..=90.0).contains(&x) { 5.0 } else { 3.0 });
        assert!((mean_power(&t, 60.0, 90.0).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn constant_trace_has_no_strain() {
        let t = uniform(200, 1.0, |_| 3.3);
        match detect_strain_window(&t, 0.0, 60.0, DEFAULT_K) {
            Err(TraceError::NoStrainDetected { baseline_mean, baseline_std, .. }) => {
                assert!((baseline_mean - 3.3).abs() < 1e-12);
                assert!(baseline_std < 1e-12);
            }
            other => panic!("expected NoStrainDetected, got {other:?}"),
        }
    }

    #[test]
    fn short_dips_do_not_split_window() {
        let t = uniform(150, 1.0, |x| {
            if x == 75.0 || x == 76.0 {
                // two-sample withdrawal
                0.0
            } else if (60.0..90.0).contains(&x) {
                5.0
            } else {
                3.3
            }
        });
        let w = detect_strain_window(&t, 0.0, 50.0, DEFAULT_K).unwrap();
        assert!(w.t_start <= 60.0 && w.t_start >= 58.0, "{w:?}");
        assert!(w.t_end >= 89.0 && w.t_end <= 91.0, "{w:?}");
    }

    #[test]
    fn longest_run_wins() {
        let t = uniform(300, 1.0, |x| {
            if (60.0..70.0).contains(&x) || (120.0..200.0).contains(&x) {
                6.0
            } else {
                3.0
            }
        });
        let w = detect_strain_window(&t, 0.0, 50.0, DEFAULT_K).unwrap();
        assert!((118.0..=120.0).contains(&w.t_start), "{w:?}");
        assert!((199.0..=201.0).contains(&w.t_end), "{w:?}");
    }

    #[test]
    fn detector_rejects_bad_parameters() {
        let t = uniform(100, 1.0, |_| 3.0);
        assert!(matches!(detect_strain_window(&t, 0.0, 50.0, 0.0), Err(TraceError::InvalidParameter(_))));
        assert!(matches!(detect_strain_window(&t, 0.0, 500.0, 3.0), Err(TraceError::RangeOutsideTrace { .. })));
        assert!(matches!(detect_strain_window(&t, 0.2, 0.8, 3.0), Err(TraceError::ThinBaseline(0))));
    }

    #[test]
    fn slice_is_inclusive() {
        let t = uniform(11, 1.0, |x| x);
        let s = t.slice(2.0, 5.0);
        assert_eq!(s.len(), 4);
        assert_eq!(s.first_t(), Some(2.0));
        assert_eq!(s.last_t(), Some(5.0));
        assert!(t.slice(20.0, 30.0).is_empty());
    }
}
