//! Report persistence: fixed-column CSV, JSON summary and plot-ready CSVs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::aerosol::{AerosolRun, ParameterSummary};
use super::bench::{AlgorithmSummary, DetectionResult, ReplicateFailure, XiPoint};
use crate::diagnostics::{RunReport, REPORT_COLUMNS};
use crate::error::Result;

/// The published JSON schema of [`Summary`].
pub const SUMMARY_SCHEMA: &str = include_str!("../../schemas/summary.schema.json");

pub const REPORTS_FILE: &str = "reports.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Run,
    Bench,
    ModeDetect,
    TuneXi,
    Aerosol,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSummary {
    pub algorithm: String,
    pub window: usize,
    pub replicates: usize,
    pub count: usize,
}

impl From<&DetectionResult> for DetectionSummary {
    fn from(d: &DetectionResult) -> Self {
        Self { algorithm: d.algorithm.clone(), window: d.window, replicates: d.detections.len(), count: d.count }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub algorithm: String,
    pub parameters: Vec<ParameterSummary>,
}

/// Everything a command learned, in one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub command: Command,
    pub base_seed: u64,
    pub replicates: usize,
    #[serde(default)]
    pub algorithms: Vec<AlgorithmSummary>,
    #[serde(default)]
    pub mode_detection: Vec<DetectionSummary>,
    #[serde(default)]
    pub xi_scan: Vec<XiPoint>,
    #[serde(default)]
    pub posterior: Vec<PosteriorSummary>,
    #[serde(default)]
    pub failures: Vec<ReplicateFailure>,
}

impl Summary {
    pub fn new(command: Command, base_seed: u64, replicates: usize) -> Self {
        Self {
            command,
            base_seed,
            replicates,
            algorithms: Vec::new(),
            mode_detection: Vec::new(),
            xi_scan: Vec::new(),
            posterior: Vec::new(),
            failures: Vec::new(),
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

/// Writes rows to `reports.csv` one at a time, header first.
pub struct ReportWriter {
    inner: csv::Writer<fs::File>,
    path: PathBuf,
}

impl ReportWriter {
    pub fn create(out_dir: &Path) -> Result<Self> {
        ensure_dir(out_dir)?;
        let path = out_dir.join(REPORTS_FILE);
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_path(&path)?;
        inner.write_record(REPORT_COLUMNS)?;
        inner.flush()?;
        Ok(Self { inner, path })
    }

    pub fn write(&mut self, report: &RunReport) -> Result<()> {
        self.inner.serialize(report)?;
        self.inner.flush()?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.inner.flush()?;
        Ok(self.path)
    }
}

pub fn write_reports_csv(reports: &[RunReport], out_dir: &Path) -> Result<PathBuf> {
    let mut w = ReportWriter::create(out_dir)?;
    for r in reports {
        w.write(r)?;
    }
    w.finish()
}

pub fn read_reports_csv(path: &Path) -> Result<Vec<RunReport>> {
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize().map(|r| r.map_err(Into::into)).collect()
}

pub fn write_summary_json(summary: &Summary, out_dir: &Path) -> Result<PathBuf> {
    ensure_dir(out_dir)?;
    let path = out_dir.join(SUMMARY_FILE);
    let mut f = fs::File::create(&path)?;
    serde_json::to_writer_pretty(&mut f, summary)?;
    f.write_all(b"\n")?;
    Ok(path)
}

/// Write the per-run CSV or the JSON summary into `out_dir`.
pub fn emit_report(reports: &[RunReport], summary: &Summary, format: ReportFormat, out_dir: &Path) -> Result<Vec<PathBuf>> {
    match format {
        ReportFormat::Csv => Ok(vec![write_reports_csv(reports, out_dir)?]),
        ReportFormat::Json => Ok(vec![write_summary_json(summary, out_dir)?]),
    }
}

fn write_rows<I, R>(path: PathBuf, header: &[&str], rows: I) -> Result<PathBuf>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(path)
}

/// `mode_detection.csv` (one row per replicate) and `mode_histogram.csv`
/// (detections per iteration).
pub fn write_detection_csvs(results: &[DetectionResult], out_dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(out_dir)?;
    let per_rep = write_rows(
        out_dir.join("mode_detection.csv"),
        &["algorithm", "replicate", "detected_at"],
        results.iter().flat_map(|d| {
            d.detections.iter().enumerate().map(move |(r, v)| {
                [d.algorithm.clone(), r.to_string(), v.map(|x| x.to_string()).unwrap_or_default()]
            })
        }),
    )?;
    let hist = write_rows(
        out_dir.join("mode_histogram.csv"),
        &["algorithm", "iteration", "count"],
        results.iter().flat_map(|d| {
            d.histogram()
                .into_iter()
                .enumerate()
                .map(move |(i, c)| [d.algorithm.clone(), i.to_string(), c.to_string()])
        }),
    )?;
    Ok(vec![per_rep, hist])
}

pub fn write_xi_scan_csv(points: &[XiPoint], out_dir: &Path) -> Result<PathBuf> {
    ensure_dir(out_dir)?;
    write_rows(
        out_dir.join("xi_scan.csv"),
        &["xi", "eta"],
        points.iter().map(|p| [p.xi.to_string(), p.eta.map(|e| e.to_string()).unwrap_or_default()]),
    )
}

/// `posterior.csv` (mean and interval per parameter) and `histograms.csv`.
pub fn write_aerosol_csvs(runs: &[AerosolRun], out_dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(out_dir)?;
    let post = write_rows(
        out_dir.join("posterior.csv"),
        &["algorithm", "parameter", "mean", "lower", "upper", "tau"],
        runs.iter().flat_map(|r| {
            r.parameters.iter().map(move |p| {
                [
                    r.report.algorithm.clone(),
                    p.name.clone(),
                    p.mean.to_string(),
                    p.lower.to_string(),
                    p.upper.to_string(),
                    p.tau.to_string(),
                ]
            })
        }),
    )?;
    let hist = write_rows(
        out_dir.join("histograms.csv"),
        &["algorithm", "parameter", "bin", "lower", "upper", "count"],
        runs.iter().flat_map(|r| {
            r.histograms.iter().flat_map(move |h| {
                h.counts.iter().enumerate().map(move |(b, c)| {
                    [
                        r.report.algorithm.clone(),
                        h.parameter.clone(),
                        b.to_string(),
                        h.edges[b].to_string(),
                        h.edges[b + 1].to_string(),
                        c.to_string(),
                    ]
                })
            })
        }),
    )?;
    Ok(vec![post, hist])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(seed: u64) -> RunReport {
        RunReport {
            algorithm: "mha(s=4)".into(),
            seed,
            t: 1000,
            a: Some(0.3012345678901234),
            h: 2.5 + 1e-13 * seed as f64,
            var_h: 1.0 / 3.0,
            tau: 179.123456789,
            ess: 500.0 / 179.123456789,
            n_b: Some(7),
            eta: None,
            wall_clock: 0.0,
        }
    }

    #[test]
    fn empty_report_list_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_reports_csv(&[], dir.path()).unwrap();
        assert_eq!(fs::read_to_string(p).unwrap(), format!("{}\n", REPORT_COLUMNS.join(",")));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let reps = vec![report(1), report(u64::MAX)];
        let p = write_reports_csv(&reps, dir.path()).unwrap();
        assert_eq!(read_reports_csv(&p).unwrap(), reps);
    }

    #[test]
    fn unwritable_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("plain");
        fs::write(&file, "x").unwrap();
        let s = Summary::new(Command::Bench, 0, 1);
        assert!(emit_report(&[], &s, ReportFormat::Json, &file.join("sub")).is_err());
    }

    #[test]
    fn summary_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Summary::new(Command::TuneXi, 3, 2);
        s.xi_scan.push(XiPoint { xi: 1e-5, eta: Some(0.99) });
        let p = emit_report(&[], &s, ReportFormat::Json, dir.path()).unwrap();
        let back: Summary = serde_json::from_str(&fs::read_to_string(&p[0]).unwrap()).unwrap();
        assert_eq!(back, s);
    }
}
