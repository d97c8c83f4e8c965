//! Report emission: JSON (full precision), CSV and Markdown tables.
//!
//! JSON layouts are described in `docs/report.schema.json`. Tables print
//! three decimals; CSV carries the same full-precision numbers as JSON.

use std::fmt::Write as _;

use clap::ValueEnum;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::intensity::CarbonIntensity;
use crate::protocol::{PhaseSummary, RunFigures, SessionReport};
use crate::traceio::{BaselineStats, StrainWindow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Md,
}

const NA: &str = "n/a";

fn fixed3(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_string(), |x| format!("{x:.3}"))
}

fn full(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_string(), |x| x.to_string())
}

fn phase_json(p: &PhaseSummary) -> Value {
    json!({ "mean_w": p.mean_w, "duration_s": p.duration_s })
}

fn run_figures_json(r: &RunFigures, paper_units: bool) -> Value {
    let f = r.figures;
    let mut m = Map::new();
    m.insert("running_dr_w".into(), json!(r.running_dr_w));
    m.insert("alg_dr_w".into(), json!(f.map(|f| f.alg_dr_w)));
    m.insert("time_s".into(), json!(r.time_s));
    m.insert("energy_wh".into(), json!(f.map(|f| f.energy_wh)));
    if paper_units {
        m.insert("energy_paper_wmin".into(), json!(f.map(|f| f.energy_paper_wmin)));
        m.insert("carbon_paper_g".into(), json!(f.map(|f| f.carbon_paper_g)));
    }
    m.insert("carbon_g".into(), json!(f.map(|f| f.carbon_g)));
    m.insert("checksum".into(), json!(r.checksum));
    Value::Object(m)
}

/// JSON object for one session, without a timestamp.
pub fn session_json(r: &SessionReport, paper_units: bool) -> Value {
    let f = r.figures;
    let mut m = Map::new();
    m.insert("workload".into(), json!(r.workload));
    m.insert("iters".into(), json!(r.iters));
    m.insert("runs".into(), json!(r.runs));
    m.insert("source".into(), json!(r.source));
    m.insert(
        "phases".into(),
        json!({
            "pre": phase_json(&r.phases.pre),
            "strain": phase_json(&r.phases.strain),
            "post": phase_json(&r.phases.post),
        }),
    );
    m.insert("init_dr_w".into(), json!(r.init_dr_w));
    m.insert("running_dr_w".into(), json!(r.running_dr_w));
    m.insert("alg_dr_w".into(), json!(f.map(|f| f.alg_dr_w)));
    m.insert("time_s".into(), json!(r.time_s));
    m.insert("energy_wh".into(), json!(f.map(|f| f.energy_wh)));
    if paper_units {
        m.insert("energy_paper_wmin".into(), json!(f.map(|f| f.energy_paper_wmin)));
        m.insert("carbon_paper_g".into(), json!(f.map(|f| f.carbon_paper_g)));
    }
    m.insert("carbon_g".into(), json!(f.map(|f| f.carbon_g)));
    m.insert("intensity_kg_per_kwh".into(), json!(r.intensity.factor));
    m.insert("region".into(), json!(r.intensity.region));
    m.insert("checksum".into(), json!(r.checksum));
    m.insert(
        "per_run".into(),
        Value::Array(r.per_run.iter().map(|p| run_figures_json(p, paper_units)).collect()),
    );
    if r.battery_start_pct.is_some() || r.battery_end_pct.is_some() {
        m.insert(
            "battery".into(),
            json!({ "start_pct": r.battery_start_pct, "end_pct": r.battery_end_pct }),
        );
    }
    m.insert("warnings".into(), json!(r.warnings));
    Value::Object(m)
}

fn with_timestamp(mut body: Value, timestamp: Option<&str>) -> Value {
    if let (Some(ts), Value::Object(m)) = (timestamp, &mut body) {
        let mut out = Map::new();
        out.insert("timestamp".into(), json!(ts));
        out.append(m);
        return Value::Object(out);
    }
    body
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report values serialize");
    s.push('\n');
    s
}

/// Column values of one table row, in display order.
struct Row {
    label: String,
    init: Option<f64>,
    running: Option<f64>,
    alg: Option<f64>,
    time: f64,
    energy: Option<f64>,
    carbon: Option<f64>,
}

impl Row {
    fn of(r: &SessionReport, label: String, paper_units: bool) -> Self {
        let f = r.figures;
        Self {
            label,
            init: r.init_dr_w,
            running: r.running_dr_w,
            alg: f.map(|f| f.alg_dr_w),
            time: r.time_s,
            energy: f.map(|f| if paper_units { f.energy_paper_wmin } else { f.energy_wh }),
            carbon: f.map(|f| if paper_units { f.carbon_paper_g } else { f.carbon_g }),
        }
    }
}

fn table_header(paper_units: bool) -> String {
    let energy = if paper_units { "Energy [W·min]" } else { "Energy [Wh]" };
    format!(
        "| Algorithm | Init DR [W] | Running DR [W] | Alg. DR [W] | Time [sec] | {energy} | Carbon footprint [g CO2e] |\n\
         |---|--:|--:|--:|--:|--:|--:|\n"
    )
}

fn csv_header(paper_units: bool) -> Vec<&'static str> {
    let mut h = vec!["workload", "iters", "runs", "init_dr_w", "running_dr_w", "alg_dr_w", "time_s", "energy_wh"];
    if paper_units {
        h.extend(["energy_paper_wmin", "carbon_paper_g"]);
    }
    h.extend(["carbon_g", "intensity_kg_per_kwh", "checksum"]);
    h
}

fn csv_record(r: &SessionReport, paper_units: bool) -> Vec<String> {
    let f = r.figures;
    let mut v = vec![
        r.workload.clone(),
        r.iters.map_or_else(|| NA.to_string(), |i| i.to_string()),
        r.runs.to_string(),
        full(r.init_dr_w),
        full(r.running_dr_w),
        full(f.map(|f| f.alg_dr_w)),
        r.time_s.to_string(),
        full(f.map(|f| f.energy_wh)),
    ];
    if paper_units {
        v.push(full(f.map(|f| f.energy_paper_wmin)));
        v.push(full(f.map(|f| f.carbon_paper_g)));
    }
    v.push(full(f.map(|f| f.carbon_g)));
    v.push(r.intensity.factor.to_string());
    v.push(r.checksum.map_or_else(|| NA.to_string(), |c| c.to_string()));
    v
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for row in rows {
        w.write_record(&row).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
}

pub fn render_run(r: &SessionReport, format: Format, paper_units: bool, timestamp: Option<&str>) -> String {
    match format {
        Format::Json => pretty(&with_timestamp(session_json(r, paper_units), timestamp)),
        Format::Csv => csv_string(&csv_header(paper_units), [csv_record(r, paper_units)]),
        Format::Md => {
            let mut out = format!("## carbonprof run: {}\n\n", r.workload);
            out.push_str(&table_header(paper_units));
            out.push_str(&md_row(&Row::of(r, r.workload.clone(), paper_units), false));
            out.push('\n');
            md_phases(&mut out, r);
            md_footer(&mut out, &r.intensity, r.checksum, &r.warnings);
            out
        }
    }
}

fn md_row(row: &Row, bold_carbon: bool) -> String {
    let carbon = fixed3(row.carbon);
    let carbon = if bold_carbon { format!("**{carbon}**") } else { carbon };
    format!(
        "| {} | {} | {} | {} | {:.3} | {} | {} |\n",
        row.label,
        fixed3(row.init),
        fixed3(row.running),
        fixed3(row.alg),
        row.time,
        fixed3(row.energy),
        carbon
    )
}

fn md_phases(out: &mut String, r: &SessionReport) {
    for (name, p) in [("pre", &r.phases.pre), ("strain", &r.phases.strain), ("post", &r.phases.post)] {
        let _ = writeln!(out, "- {name}: mean {} W over {:.3} s", fixed3(p.mean_w), p.duration_s);
    }
}

fn md_footer(out: &mut String, intensity: &CarbonIntensity, checksum: Option<i64>, warnings: &[String]) {
    let _ = writeln!(out, "- intensity: {} kg CO2e/kWh ({})", intensity.factor, intensity.region);
    if let Some(c) = checksum {
        let _ = writeln!(out, "- checksum: {c}");
    }
    for w in warnings {
        let _ = writeln!(out, "- warning: {w}");
    }
}

/// Indices of the highest and lowest carbon rows, when every row has one.
pub fn carbon_extremes(rows: &[SessionReport]) -> Option<(usize, usize)> {
    let carbons: Vec<f64> = rows.iter().map(|r| r.carbon_g()).collect::<Option<_>>()?;
    // Ties go to the earlier row in both directions.
    let max = (0..carbons.len()).reduce(|a, b| if carbons[b] > carbons[a] { b } else { a })?;
    let min = (0..carbons.len()).reduce(|a, b| if carbons[b] < carbons[a] { b } else { a })?;
    Some((max, min))
}

fn row_title(r: &SessionReport) -> String {
    r.workload
        .parse::<crate::workloads::Variant>()
        .map(|v| v.title().to_string())
        .unwrap_or_else(|_| r.workload.clone())
}

pub fn bench_json(rows: &[SessionReport], paper_units: bool) -> Value {
    let extremes = carbon_extremes(rows);
    let first = rows.first();
    json!({
        "iters": first.and_then(|r| r.iters),
        "runs": first.map(|r| r.runs),
        "intensity_kg_per_kwh": first.map(|r| r.intensity.factor),
        "rows": rows.iter().map(|r| session_json(r, paper_units)).collect::<Vec<_>>(),
        "max_carbon": extremes.map(|(max, _)| rows[max].workload.clone()),
        "min_carbon": extremes.map(|(_, min)| rows[min].workload.clone()),
    })
}

pub fn render_bench(rows: &[SessionReport], format: Format, paper_units: bool, timestamp: Option<&str>) -> String {
    let extremes = carbon_extremes(rows);
    let mark = |i: usize| match extremes {
        Some((max, _)) if max == i => "max",
        Some((_, min)) if min == i => "min",
        _ => "",
    };
    match format {
        Format::Json => pretty(&with_timestamp(bench_json(rows, paper_units), timestamp)),
        Format::Csv => {
            let mut header = csv_header(paper_units);
            header.push("mark");
            csv_string(
                &header,
                rows.iter().enumerate().map(|(i, r)| {
                    let mut rec = csv_record(r, paper_units);
                    rec.push(mark(i).to_string());
                    rec
                }),
            )
        }
        Format::Md => {
            let mut out = String::from("## carbonprof bench\n\n");
            out.push_str(&table_header(paper_units));
            for (i, r) in rows.iter().enumerate() {
                out.push_str(&md_row(&Row::of(r, row_title(r), paper_units), mark(i) == "max"));
            }
            out.push('\n');
            if let Some((max, min)) = extremes {
                let _ = writeln!(
                    out,
                    "- highest carbon: {}; lowest carbon: {}",
                    row_title(&rows[max]),
                    row_title(&rows[min])
                );
            }
            if let Some(first) = rows.first() {
                md_footer(&mut out, &first.intensity, None, &[]);
            }
            for r in rows {
                for w in &r.warnings {
                    let _ = writeln!(out, "- warning ({}): {w}", r.workload);
                }
            }
            out
        }
    }
}

/// Offline analysis of a recorded trace.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub trace: String,
    pub samples: usize,
    pub k: f64,
    pub baseline: BaselineStats,
    pub threshold_w: f64,
    pub window: Option<StrainWindow>,
    pub energy_total_j: Option<f64>,
    pub energy_strain_j: Option<f64>,
    pub carbon_g: Option<f64>,
    pub intensity: CarbonIntensity,
}

impl AnalysisReport {
    pub fn energy_strain_wh(&self) -> Option<f64> {
        self.energy_strain_j.map(|j| j / 3600.0)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "trace": self.trace,
            "samples": self.samples,
            "k": self.k,
            "baseline": {
                "t0": self.baseline.t0,
                "t1": self.baseline.t1,
                "samples": self.baseline.samples,
                "mean_w": self.baseline.mean_w,
                "std_w": self.baseline.std_w,
            },
            "threshold_w": self.threshold_w,
            "detected": self.window.is_some(),
            "window": self.window.map(|w| json!({
                "t_start": w.t_start,
                "t_end": w.t_end,
                "duration_s": w.duration(),
                "mean_w": w.mean_power,
                "baseline_w": w.baseline_power,
            })),
            "energy_total_j": self.energy_total_j,
            "energy_strain_j": self.energy_strain_j,
            "energy_strain_wh": self.energy_strain_wh(),
            "carbon_g": self.carbon_g,
            "intensity_kg_per_kwh": self.intensity.factor,
        })
    }
}

pub fn render_analysis(a: &AnalysisReport, format: Format, timestamp: Option<&str>) -> String {
    let w = a.window;
    match format {
        Format::Json => pretty(&with_timestamp(a.to_json(), timestamp)),
        Format::Csv => csv_string(
            &[
                "trace",
                "samples",
                "baseline_mean_w",
                "baseline_std_w",
                "threshold_w",
                "t_start",
                "t_end",
                "duration_s",
                "mean_w",
                "energy_total_j",
                "energy_strain_j",
                "energy_strain_wh",
                "carbon_g",
                "intensity_kg_per_kwh",
            ],
            [vec![
                a.trace.clone(),
                a.samples.to_string(),
                a.baseline.mean_w.to_string(),
                a.baseline.std_w.to_string(),
                a.threshold_w.to_string(),
                full(w.map(|w| w.t_start)),
                full(w.map(|w| w.t_end)),
                full(w.map(|w| w.duration())),
                full(w.map(|w| w.mean_power)),
                full(a.energy_total_j),
                full(a.energy_strain_j),
                full(a.energy_strain_wh()),
                full(a.carbon_g),
                a.intensity.factor.to_string(),
            ]],
        ),
        Format::Md => {
            let mut out = format!("## carbonprof analyze: {}\n\n", a.trace);
            let _ = writeln!(
                out,
                "- baseline [{:.3}, {:.3}] s: mean {:.3} W, std {:.3} W over {} samples",
                a.baseline.t0, a.baseline.t1, a.baseline.mean_w, a.baseline.std_w, a.baseline.samples
            );
            let _ = writeln!(out, "- threshold: {:.3} W (k = {})", a.threshold_w, a.k);
            match w {
                Some(w) => {
                    let _ = writeln!(
                        out,
                        "- strain window: [{:.3}, {:.3}] s ({:.3} s), mean {:.3} W",
                        w.t_start,
                        w.t_end,
                        w.duration(),
                        w.mean_power
                    );
                    let _ = writeln!(
                        out,
                        "- strain energy: {} J ({} Wh) of {} J total",
                        fixed3(a.energy_strain_j),
                        fixed3(a.energy_strain_wh()),
                        fixed3(a.energy_total_j)
                    );
                    let _ = writeln!(out, "- carbon footprint: {} g CO2e", fixed3(a.carbon_g));
                }
                None => out.push_str("- no strain detected\n"),
            }
            out
        }
    }
}

/// Checksums from the rotation oracle and every variant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub iters: u64,
    pub window: usize,
    pub oracle_checksum: i64,
    pub variants: Vec<(String, i64)>,
}

impl OracleReport {
    pub fn agree(&self) -> bool {
        self.variants.iter().all(|(_, c)| *c == self.oracle_checksum)
    }

    pub fn to_json(&self) -> Value {
        let variants: Map<String, Value> = self.variants.iter().map(|(n, c)| (n.clone(), json!(c))).collect();
        json!({
            "iters": self.iters,
            "window": self.window,
            "oracle_checksum": self.oracle_checksum,
            "variants": variants,
            "agree": self.agree(),
        })
    }
}

pub fn render_oracle(o: &OracleReport, format: Format) -> String {
    match format {
        Format::Json => pretty(&o.to_json()),
        Format::Csv => csv_string(
            &["name", "checksum", "matches_oracle"],
            std::iter::once(vec!["oracle".to_string(), o.oracle_checksum.to_string(), "true".into()]).chain(
                o.variants
                    .iter()
                    .map(|(n, c)| vec![n.clone(), c.to_string(), (*c == o.oracle_checksum).to_string()]),
            ),
        ),
        Format::Md => {
            let mut out = format!("## carbonprof oracle: {} iterations, window {}\n\n", o.iters, o.window);
            out.push_str("| Name | Checksum | Matches oracle |\n|---|--:|:-:|\n");
            let _ = writeln!(out, "| oracle | {} | yes |", o.oracle_checksum);
            for (n, c) in &o.variants {
                let ok = if *c == o.oracle_checksum { "yes" } else { "NO" };
                let _ = writeln!(out, "| {n} | {c} | {ok} |");
            }
            out
        }
    }
}
