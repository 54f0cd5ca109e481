//! Cost and accuracy bookkeeping across experiment runs.
//!
//! Every command appends to an NDJSON ledger: stage timings and mAP50
//! results. [`replay`] folds the ledger into one [`ExperimentRecord`] per
//! (method, dataset size) and [`emit_report`] renders them as CSV plus an
//! accuracy-vs-cost SVG plot.
//!
//! A timing entry without a method or without a size is shared: it is added
//! to every record it matches. Rendering the base pool once and reusing it for
//! every method is the typical case.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_SVG: &str = "report.svg";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    BaseRender,
    FilBrightness,
    FilPhash,
    AugContext,
    AugRandom,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::BaseRender,
        Method::FilBrightness,
        Method::FilPhash,
        Method::AugContext,
        Method::AugRandom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::BaseRender => "base_render",
            Method::FilBrightness => "fil_brightness",
            Method::FilPhash => "fil_phash",
            Method::AugContext => "aug_context",
            Method::AugRandom => "aug_random",
        }
    }

    fn color(self) -> &'static str {
        match self {
            Method::BaseRender => "#1f77b4",
            Method::FilBrightness => "#ff7f0e",
            Method::FilPhash => "#2ca02c",
            Method::AugContext => "#d62728",
            Method::AugRandom => "#9467bd",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::contract(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Render,
    Generation,
    Filtering,
    Training,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Render, Stage::Generation, Stage::Filtering, Stage::Training];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Render => "render",
            Stage::Generation => "generation",
            Stage::Filtering => "filtering",
            Stage::Training => "training",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::contract(format!("unknown stage '{s}'")))
    }
}

/// One ledger line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LedgerEntry {
    Timing {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        method: Option<Method>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_images: Option<usize>,
        stage: Stage,
        seconds: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        hardware: Option<String>,
    },
    /// Training result. The latest entry for a record replaces earlier ones,
    /// including its training time, so re-ingesting is idempotent.
    Map50 {
        method: Method,
        n_images: usize,
        map50: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        training_seconds: Option<f64>,
    },
}

impl LedgerEntry {
    fn validate(&self) -> Result<()> {
        match self {
            LedgerEntry::Timing { seconds, .. } if !(seconds.is_finite() && *seconds >= 0.0) => Err(Error::contract(
                format!("stage time must be a non-negative number, got {seconds}"),
            )),
            LedgerEntry::Map50 { map50, .. } if !(0.0..=1.0).contains(map50) => {
                Err(Error::contract(format!("mAP50 must lie in [0, 1], got {map50}")))
            }
            LedgerEntry::Map50 {
                training_seconds: Some(s),
                ..
            } if !(s.is_finite() && *s >= 0.0) => {
                Err(Error::contract(format!("training time must be non-negative, got {s}")))
            }
            _ => Ok(()),
        }
    }
}

/// Append-only NDJSON ledger, safe to share between threads.
#[derive(Debug)]
pub struct Ledger {
    path: PathBuf,
    file: Mutex<File>,
}

impl Ledger {
    pub fn open(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(Ledger {
            path: path.to_path_buf(),
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, entry: &LedgerEntry) -> Result<()> {
        entry.validate()?;
        let mut line = serde_json::to_string(entry).expect("ledger entry serializes");
        line.push('\n');
        let mut f = self.file.lock().expect("ledger lock");
        f.write_all(line.as_bytes()).map_err(|e| Error::io(&self.path, e))
    }

    pub fn record_timing(
        &self,
        method: Option<Method>,
        n_images: Option<usize>,
        stage: Stage,
        seconds: f64,
        hardware: Option<&str>,
    ) -> Result<()> {
        self.append(&LedgerEntry::Timing {
            method,
            n_images,
            stage,
            seconds,
            hardware: hardware.map(str::to_string),
        })
    }

    pub fn entries(&self) -> Result<Vec<LedgerEntry>> {
        read_ledger(&self.path)
    }
}

pub fn read_ledger(path: &Path) -> Result<Vec<LedgerEntry>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let entry: LedgerEntry = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        entry.validate().map_err(|e| parse_err(e.to_string()))?;
        out.push(entry);
    }
    Ok(out)
}

/// Wall-clock timer for one stage.
#[derive(Debug)]
pub struct StageTimer {
    stage: Stage,
    started: Instant,
}

impl StageTimer {
    pub fn start(stage: Stage) -> Self {
        StageTimer {
            stage,
            started: Instant::now(),
        }
    }

    pub fn elapsed_seconds(&self) -> f64 {
        self.started.elapsed().as_secs_f64()
    }

    /// Records the elapsed time and returns it in seconds.
    pub fn finish(self, ledger: &Ledger, method: Option<Method>, n_images: Option<usize>) -> Result<f64> {
        let secs = self.elapsed_seconds();
        ledger.record_timing(method, n_images, self.stage, secs, None)?;
        Ok(secs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub method: Method,
    pub n_images: usize,
    pub stage_times: BTreeMap<Stage, f64>,
    pub map50: Option<f64>,
    pub hardware: Option<String>,
}

impl ExperimentRecord {
    fn new(method: Method, n_images: usize) -> Self {
        ExperimentRecord {
            method,
            n_images,
            stage_times: BTreeMap::new(),
            map50: None,
            hardware: None,
        }
    }

    pub fn stage(&self, stage: Stage) -> f64 {
        self.stage_times.get(&stage).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        Stage::ALL.iter().map(|&s| self.stage(s)).sum()
    }

    pub fn is_complete(&self) -> bool {
        self.map50.is_some()
    }
}

/// Folds ledger entries into records sorted by (method, size).
///
/// Records exist for every (method, size) named by a fully specified entry;
/// shared timings never create records on their own.
pub fn replay(entries: &[LedgerEntry]) -> Vec<ExperimentRecord> {
    let mut records: BTreeMap<(Method, usize), ExperimentRecord> = BTreeMap::new();
    for e in entries {
        let key = match e {
            LedgerEntry::Timing {
                method: Some(m),
                n_images: Some(n),
                ..
            } => (*m, *n),
            LedgerEntry::Map50 { method, n_images, .. } => (*method, *n_images),
            _ => continue,
        };
        records
            .entry(key)
            .or_insert_with(|| ExperimentRecord::new(key.0, key.1));
    }

    let mut trained: BTreeMap<(Method, usize), f64> = BTreeMap::new();
    for e in entries {
        match e {
            LedgerEntry::Timing {
                method,
                n_images,
                stage,
                seconds,
                hardware,
            } => {
                for r in records
                    .values_mut()
                    .filter(|r| method.is_none_or(|m| m == r.method) && n_images.is_none_or(|n| n == r.n_images))
                {
                    *r.stage_times.entry(*stage).or_insert(0.0) += seconds;
                    if hardware.is_some() {
                        r.hardware.clone_from(hardware);
                    }
                }
            }
            LedgerEntry::Map50 {
                method,
                n_images,
                map50,
                training_seconds,
            } => {
                let key = (*method, *n_images);
                records.get_mut(&key).expect("record created above").map50 = Some(*map50);
                match training_seconds {
                    Some(s) => trained.insert(key, *s),
                    None => trained.remove(&key),
                };
            }
        }
    }
    for (key, secs) in trained {
        let r = records.get_mut(&key).expect("record created above");
        *r.stage_times.entry(Stage::Training).or_insert(0.0) += secs;
    }
    records.into_values().collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestSummary {
    pub ingested: usize,
    /// Rows naming a method outside [`Method::ALL`], as (line, method).
    pub unknown_methods: Vec<(usize, String)>,
    /// Rows for which the ledger had no record yet.
    pub new_records: Vec<(Method, usize)>,
    /// (method, size) pairs that appeared more than once; the last row won.
    pub duplicates: Vec<(Method, usize)>,
}

#[derive(Debug, Deserialize)]
struct TrainingRow {
    method: String,
    n_images: usize,
    map50: f64,
    #[serde(default)]
    training_seconds: Option<f64>,
}

/// Reads `method,n_images,map50,training_seconds` rows produced by the
/// external training step and appends them to the ledger.
pub fn ingest_training_results(csv_path: &Path, ledger: &Ledger) -> Result<IngestSummary> {
    let csv_err = |source| Error::Csv {
        path: csv_path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(csv_path)
        .map_err(csv_err)?;
    let mut summary = IngestSummary::default();
    let mut rows: BTreeMap<(Method, usize), (f64, Option<f64>)> = BTreeMap::new();
    for (i, row) in reader.deserialize::<TrainingRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(csv_err)?;
        let Ok(method) = row.method.parse::<Method>() else {
            summary.unknown_methods.push((line, row.method));
            continue;
        };
        let entry = LedgerEntry::Map50 {
            method,
            n_images: row.n_images,
            map50: row.map50,
            training_seconds: row.training_seconds,
        };
        entry.validate().map_err(|e| Error::Parse {
            path: csv_path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        if rows
            .insert((method, row.n_images), (row.map50, row.training_seconds))
            .is_some()
        {
            log::warn!(
                "{}:{line}: repeated {method} n={}, keeping the last row",
                csv_path.display(),
                row.n_images
            );
            summary.duplicates.push((method, row.n_images));
        }
    }

    let known: std::collections::BTreeSet<(Method, usize)> = replay(&ledger.entries()?)
        .into_iter()
        .map(|r| (r.method, r.n_images))
        .collect();
    for ((method, n_images), (map50, training_seconds)) in rows {
        if !known.contains(&(method, n_images)) {
            log::warn!("no ledger record for {method} n={n_images}; creating one");
            summary.new_records.push((method, n_images));
        }
        ledger.append(&LedgerEntry::Map50 {
            method,
            n_images,
            map50,
            training_seconds,
        })?;
        summary.ingested += 1;
    }
    summary.duplicates.dedup();
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportPaths {
    pub csv: PathBuf,
    pub svg: PathBuf,
}

/// Writes `report.csv` and `report.svg` under `out_dir`.
///
/// Records without mAP50 appear in the CSV as `pending` and are left off
/// the plot. Output bytes depend only on `records`.
pub fn emit_report(records: &[ExperimentRecord], out_dir: &Path) -> Result<ReportPaths> {
    let complete: Vec<&ExperimentRecord> = records.iter().filter(|r| r.is_complete()).collect();
    if complete.is_empty() {
        return Err(Error::contract(
            "no experiment has an mAP50 result yet; nothing to report",
        ));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut sorted: Vec<&ExperimentRecord> = records.iter().collect();
    sorted.sort_by_key(|r| (r.method, r.n_images));

    let csv_path = out_dir.join(REPORT_CSV);
    std::fs::write(&csv_path, report_csv(&sorted)).map_err(|e| Error::io(&csv_path, e))?;
    let svg_path = out_dir.join(REPORT_SVG);
    std::fs::write(&svg_path, report_svg(&complete)).map_err(|e| Error::io(&svg_path, e))?;
    Ok(ReportPaths {
        csv: csv_path,
        svg: svg_path,
    })
}

fn report_csv(records: &[&ExperimentRecord]) -> String {
    let mut out = String::from("method,n_images");
    for s in Stage::ALL {
        write!(out, ",{s}_s").unwrap();
    }
    out.push_str(",total_s,map50,status,hardware\n");
    for r in records {
        let total = r.total();
        let stage_sum: f64 = Stage::ALL.iter().map(|&s| r.stage(s)).sum();
        debug_assert_eq!(total, stage_sum);
        write!(out, "{},{}", r.method, r.n_images).unwrap();
        for s in Stage::ALL {
            write!(out, ",{:.3}", r.stage(s)).unwrap();
        }
        let (map50, status) = match r.map50 {
            Some(m) => (format!("{m:.4}"), "complete"),
            None => (String::new(), "pending"),
        };
        let hardware = r.hardware.as_deref().unwrap_or("").replace([',', '\n', '"'], " ");
        writeln!(out, ",{total:.3},{map50},{status},{hardware}").unwrap();
    }
    out
}

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;

fn nice_step(span: f64, ticks: f64) -> f64 {
    let raw = span / ticks;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let m = if norm <= 1.0 {
        1.0
    } else if norm <= 2.0 {
        2.0
    } else if norm <= 5.0 {
        5.0
    } else {
        10.0
    };
    m * mag
}

fn tick_label(v: f64, step: f64) -> String {
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    format!("{v:.decimals$}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn report_svg(records: &[&ExperimentRecord]) -> String {
    let max_cost = records.iter().map(|r| r.total()).fold(0.0, f64::max);
    let x_step = nice_step(if max_cost > 0.0 { max_cost } else { 1.0 }, 5.0);
    let x_max = (max_cost / x_step).ceil().max(1.0) * x_step;
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |c: f64| LEFT + c / x_max * plot_w;
    let py = |m: f64| TOP + (1.0 - m) * plot_h;

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();

    let mut k = 0.0;
    while k <= x_max + x_step * 1e-9 {
        let x = px(k);
        writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{TOP:.2}" x2="{x:.2}" y2="{:.2}" stroke="#dddddd"/>"##,
            TOP + plot_h
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + plot_h + 18.0,
            tick_label(k, x_step)
        )
        .unwrap();
        k += x_step;
    }
    for i in 0..=5 {
        let m = i as f64 / 5.0;
        let y = py(m);
        writeln!(
            s,
            r##"<line x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
            LEFT + plot_w
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{m:.1}</text>"#,
            LEFT - 8.0,
            y + 4.0
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{plot_w:.2}" height="{plot_h:.2}" fill="none" stroke="black"/>"#
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">total cost (s)</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">mAP50</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    )
    .unwrap();

    let mut series: BTreeMap<&'static str, Vec<&ExperimentRecord>> = BTreeMap::new();
    for r in records {
        series.entry(r.method.as_str()).or_default().push(r);
    }
    for (row, (name, mut pts)) in series.into_iter().enumerate() {
        pts.sort_by_key(|r| r.n_images);
        let color = pts[0].method.color();
        let coords: Vec<String> = pts
            .iter()
            .map(|r| format!("{:.2},{:.2}", px(r.total()), py(r.map50.unwrap_or(0.0))))
            .collect();
        if coords.len() > 1 {
            writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                coords.join(" ")
            )
            .unwrap();
        }
        for r in &pts {
            let (x, y) = (px(r.total()), py(r.map50.unwrap_or(0.0)));
            writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3.5" fill="{color}"/>"#).unwrap();
            writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" font-size="10">{}</text>"#,
                x + 5.0,
                y - 5.0,
                r.n_images
            )
            .unwrap();
        }
        let ly = TOP + 10.0 + row as f64 * 20.0;
        let lx = WIDTH - RIGHT + 20.0;
        writeln!(
            s,
            r#"<rect x="{lx:.2}" y="{:.2}" width="12" height="12" fill="{color}"/>"#,
            ly - 10.0
        )
        .unwrap();
        writeln!(s, r#"<text x="{:.2}" y="{ly:.2}">{}</text>"#, lx + 18.0, escape(name)).unwrap();
    }
    s.push_str("</svg>\n");
    s
}
