//! Result persistence: `results.csv`, `summary.csv` and `manifest.json`.
//!
//! Floats are written with 17 significant digits (`%.17g`), so every value
//! round-trips exactly through the CSV.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use icb_core::stats::{mean_ci95, sample_std};
use icb_core::{Purpose, RngStream};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{LabError, Result};

pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

pub const RESULTS_HEADER: [&str; 14] = [
    "experiment",
    "seed",
    "algorithm",
    "d",
    "K",
    "N",
    "alpha",
    "T",
    "L",
    "pred_regret",
    "dir_error",
    "clean_risk",
    "learner_regret",
    "wall_ms",
];

/// Columns that may differ between otherwise identical runs.
pub const NONDETERMINISTIC_COLUMNS: [&str; 1] = ["wall_ms"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub seed: u64,
    /// Learner name, optionally followed by `/strategy`.
    pub algorithm: String,
    pub d: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub alpha: f64,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub pred_regret: f64,
    pub dir_error: f64,
    pub clean_risk: f64,
    pub learner_regret: f64,
    pub wall_ms: f64,
}

impl ResultRow {
    pub fn strategy(&self) -> Option<&str> {
        self.algorithm.split_once('/').map(|(_, s)| s)
    }

    fn fields(&self) -> [String; 14] {
        [
            self.experiment.clone(),
            self.seed.to_string(),
            self.algorithm.clone(),
            self.d.to_string(),
            self.k.to_string(),
            self.n.to_string(),
            format_g17(self.alpha),
            self.t.to_string(),
            self.l.to_string(),
            format_g17(self.pred_regret),
            format_g17(self.dir_error),
            format_g17(self.clean_risk),
            format_g17(self.learner_regret),
            format_g17(self.wall_ms),
        ]
    }
}

/// C's `%.17g`.
pub fn format_g17(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    if !(-4..17).contains(&exp) {
        let frac = digits[1..].trim_end_matches('0');
        let m = if frac.is_empty() {
            digits[..1].to_string()
        } else {
            format!("{}.{}", &digits[..1], frac)
        };
        let esign = if exp < 0 { '-' } else { '+' };
        return format!("{sign}{m}e{esign}{:02}", exp.abs());
    }
    let (int, frac) = if exp >= 0 {
        let e = exp as usize + 1;
        (digits[..e].to_string(), digits[e..].to_string())
    } else {
        (
            "0".to_string(),
            format!("{}{}", "0".repeat((-exp - 1) as usize), digits),
        )
    };
    let frac = frac.trim_end_matches('0');
    if frac.is_empty() {
        format!("{sign}{int}")
    } else {
        format!("{sign}{int}.{frac}")
    }
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> LabError + '_ {
    move |source| LabError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> LabError + '_ {
    move |source| LabError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_results<W: Write>(w: W, rows: &[ResultRow]) -> csv::Result<()> {
    let mut out = csv_writer(w);
    out.write_record(RESULTS_HEADER)?;
    for r in rows {
        out.write_record(r.fields())?;
    }
    out.flush()?;
    Ok(())
}

pub fn results_to_string(rows: &[ResultRow]) -> String {
    let mut buf = Vec::new();
    write_results(&mut buf, rows).expect("in-memory write");
    String::from_utf8(buf).expect("utf-8")
}

/// Parses rows, refusing any header other than the fixed schema.
pub fn read_results<R: Read>(r: R, path: &Path) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers().map_err(csv_err(path))?.clone();
    if header.iter().ne(RESULTS_HEADER.iter().copied()) {
        return Err(LabError::Schema {
            path: path.to_path_buf(),
            message: format!(
                "expected header `{}`, found `{}`",
                RESULTS_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    rdr.deserialize()
        .collect::<csv::Result<Vec<ResultRow>>>()
        .map_err(csv_err(path))
}

pub fn load_results(path: &Path) -> Result<Vec<ResultRow>> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    read_results(f, path)
}

/// The CSV text with the non-deterministic columns blanked, for reproducibility comparisons.
pub fn deterministic_projection(csv_text: &str) -> Result<String> {
    let path = Path::new("<memory>");
    let mut rdr = csv::Reader::from_reader(csv_text.as_bytes());
    let header = rdr.headers().map_err(csv_err(path))?.clone();
    let drop: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| NONDETERMINISTIC_COLUMNS.contains(h))
        .map(|(i, _)| i)
        .collect();
    let mut buf = Vec::new();
    {
        let mut out = csv_writer(&mut buf);
        let keep = |rec: &csv::StringRecord| -> Vec<String> {
            rec.iter()
                .enumerate()
                .filter(|(i, _)| !drop.contains(i))
                .map(|(_, v)| v.to_string())
                .collect()
        };
        out.write_record(keep(&header)).map_err(csv_err(path))?;
        for rec in rdr.records() {
            out.write_record(keep(&rec.map_err(csv_err(path))?))
                .map_err(csv_err(path))?;
        }
        out.flush().map_err(io_err(path))?;
    }
    Ok(String::from_utf8(buf).expect("utf-8"))
}

pub const SUMMARY_HEADER: [&str; 12] = [
    "experiment",
    "algorithm",
    "d",
    "K",
    "N",
    "alpha",
    "metric",
    "seeds",
    "mean",
    "std",
    "ci_lo",
    "ci_hi",
];

pub const SUMMARY_METRICS: [&str; 5] = [
    "pred_regret",
    "dir_error",
    "clean_risk",
    "learner_regret",
    "T",
];

/// Seed mean and 95% interval of one metric within one group of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment: String,
    pub algorithm: String,
    pub d: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N")]
    pub n: usize,
    /// Empty for the oracle, whose exponent is chosen per seed.
    pub alpha: Option<f64>,
    pub metric: String,
    pub seeds: usize,
    pub mean: f64,
    pub std: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

fn metric_value(r: &ResultRow, metric: &str) -> f64 {
    match metric {
        "pred_regret" => r.pred_regret,
        "dir_error" => r.dir_error,
        "clean_risk" => r.clean_risk,
        "learner_regret" => r.learner_regret,
        "T" => r.t as f64,
        other => unreachable!("unknown summary metric {other}"),
    }
}

fn group_alpha(r: &ResultRow) -> Option<f64> {
    (r.strategy() != Some("oracle")).then_some(r.alpha)
}

/// Groups by `(experiment, algorithm, d, K, N, alpha)` and summarizes every metric.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    fn key(r: &ResultRow) -> (&str, &str, usize, usize, usize, Option<f64>) {
        (&r.experiment, &r.algorithm, r.d, r.k, r.n, group_alpha(r))
    }
    let mut sorted: Vec<&ResultRow> = rows.iter().collect();
    let cmp_alpha = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (a, b) => a.is_some().cmp(&b.is_some()),
    };
    sorted.sort_by(|a, b| {
        let (ka, kb) = (key(a), key(b));
        (ka.0, ka.1, ka.2, ka.3, ka.4)
            .cmp(&(kb.0, kb.1, kb.2, kb.3, kb.4))
            .then(cmp_alpha(ka.5, kb.5))
    });
    let mut out = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let k = key(sorted[i]);
        let same = |r: &ResultRow| {
            let o = key(r);
            (o.0, o.1, o.2, o.3, o.4) == (k.0, k.1, k.2, k.3, k.4) && cmp_alpha(o.5, k.5).is_eq()
        };
        let mut j = i;
        while j < sorted.len() && same(sorted[j]) {
            j += 1;
        }
        let group = &sorted[i..j];
        for metric in SUMMARY_METRICS {
            let vals: Vec<f64> = group.iter().map(|r| metric_value(r, metric)).collect();
            let ci = mean_ci95(&vals).expect("non-empty group");
            out.push(SummaryRow {
                experiment: k.0.to_string(),
                algorithm: k.1.to_string(),
                d: k.2,
                k: k.3,
                n: k.4,
                alpha: k.5,
                metric: metric.to_string(),
                seeds: vals.len(),
                mean: ci.mean,
                std: sample_std(&vals).expect("non-empty group"),
                ci_lo: ci.lo,
                ci_hi: ci.hi,
            });
        }
        i = j;
    }
    out
}

pub fn write_summary<W: Write>(w: W, rows: &[SummaryRow]) -> csv::Result<()> {
    let mut out = csv_writer(w);
    out.write_record(SUMMARY_HEADER)?;
    for s in rows {
        out.write_record([
            s.experiment.clone(),
            s.algorithm.clone(),
            s.d.to_string(),
            s.k.to_string(),
            s.n.to_string(),
            s.alpha.map(format_g17).unwrap_or_default(),
            s.metric.clone(),
            s.seeds.to_string(),
            format_g17(s.mean),
            format_g17(s.std),
            format_g17(s.ci_lo),
            format_g17(s.ci_hi),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_summary<R: Read>(r: R, path: &Path) -> Result<Vec<SummaryRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers().map_err(csv_err(path))?.clone();
    if header.iter().ne(SUMMARY_HEADER.iter().copied()) {
        return Err(LabError::Schema {
            path: path.to_path_buf(),
            message: format!("expected header `{}`", SUMMARY_HEADER.join(",")),
        });
    }
    rdr.deserialize()
        .collect::<csv::Result<Vec<SummaryRow>>>()
        .map_err(csv_err(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedStreams {
    pub seed: u64,
    pub theta: u64,
    pub contexts: u64,
    pub rewards: u64,
    pub policy: u64,
    pub evaluation: u64,
    pub split: u64,
}

impl SeedStreams {
    pub fn for_seed(seed: u64) -> Self {
        let id = |p| RngStream::derive(seed, p).stream_id;
        Self {
            seed,
            theta: id(Purpose::Theta),
            contexts: id(Purpose::Contexts),
            rewards: id(Purpose::Rewards),
            policy: id(Purpose::Policy),
            evaluation: id(Purpose::Evaluation),
            split: id(Purpose::Split),
        }
    }
}

/// Everything needed to reproduce a run with the same binary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub experiment: String,
    pub status: RunStatus,
    pub error: Option<String>,
    pub started_unix_ms: u64,
    pub finished_unix_ms: Option<u64>,
    pub config: ExperimentConfig,
    pub streams: Vec<SeedStreams>,
    pub outputs: Vec<String>,
    /// Experiment-level results that do not fit the row schema.
    pub derived: serde_json::Value,
}

pub fn unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl RunManifest {
    pub fn start(cfg: &ExperimentConfig) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            experiment: cfg.experiment.name().to_string(),
            status: RunStatus::Running,
            error: None,
            started_unix_ms: unix_ms(),
            finished_unix_ms: None,
            config: cfg.clone(),
            streams: cfg
                .seeds
                .iter()
                .map(|&s| SeedStreams::for_seed(s))
                .collect(),
            outputs: Vec::new(),
            derived: serde_json::Value::Null,
        }
    }

    pub fn finish(&mut self, error: Option<String>) {
        self.status = if error.is_some() {
            RunStatus::Failed
        } else {
            RunStatus::Complete
        };
        self.error = error;
        self.finished_unix_ms = Some(unix_ms());
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).map_err(|source| LabError::Json {
            path: path.clone(),
            source,
        })?;
        fs::write(&path, text + "\n").map_err(io_err(&path))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|source| LabError::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write_file(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> csv::Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(csv_err(path))?;
    fs::write(path, buf).map_err(io_err(path))
}

/// Writes `results.csv`, `summary.csv` and the manifest into `dir`.
pub fn emit_results(rows: &[ResultRow], manifest: &mut RunManifest, dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    write_file(&dir.join(RESULTS_FILE), |b| write_results(b, rows))?;
    write_file(&dir.join(SUMMARY_FILE), |b| {
        write_summary(b, &summarize(rows))
    })?;
    for f in [RESULTS_FILE, SUMMARY_FILE, MANIFEST_FILE] {
        if !manifest.outputs.iter().any(|o| o == f) {
            manifest.outputs.push(f.to_string());
        }
    }
    manifest.write(dir)?;
    Ok(())
}

/// Writes any serializable table as CSV next to the main outputs.
pub fn write_table<S: Serialize>(path: &Path, rows: &[S]) -> Result<()> {
    let mut buf = Vec::new();
    {
        let mut out = csv_writer(&mut buf);
        for r in rows {
            out.serialize(r).map_err(csv_err(path))?;
        }
        out.flush().map_err(io_err(path))?;
    }
    fs::write(path, buf).map_err(io_err(path))
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| LabError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, text + "\n").map_err(io_err(path))
}
