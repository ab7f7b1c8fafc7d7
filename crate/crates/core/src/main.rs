use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hybridmc::harness::aerosol::synth_from;
use hybridmc::harness::bench::Algorithm;
use hybridmc::harness::report::{
    write_aerosol_csvs, write_detection_csvs, write_summary_json, write_xi_scan_csv, DetectionSummary,
    PosteriorSummary, ReportWriter,
};
use hybridmc::harness::{
    load_aerosol_data, load_config, mode_detection_campaign, run_aerosol_experiment, run_benchmark_with, tune_xi_scan,
    AlgorithmSummary, Command, ExperimentConfig, Summary, SynthParams,
};
use hybridmc::samplers::Budget;
use hybridmc::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "hybridmc", version, about = "Hybrid MCMC and population Monte Carlo experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (strict JSON).
    config: PathBuf,
    /// Base seed; replaces `base_seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Iteration budget per run.
    #[arg(long)]
    budget_iters: Option<usize>,
    /// Wall-clock budget per run, in seconds.
    #[arg(long)]
    budget_secs: Option<f64>,
    /// Output directory; replaces `out_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// One run of every configured algorithm, seeded directly with the base seed.
    Run(Common),
    /// Seeded replicates of every configured algorithm with a summary.
    Bench(Common),
    /// Count replicates that find the second mode within the detection window.
    ModeDetect(Common),
    /// Correction-step acceptance η over a grid of ξ values.
    TuneXi {
        #[command(flatten)]
        common: Common,
        /// Comma-separated ξ values.
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        grid: Vec<f64>,
    },
    /// Block-updating runs on the two-component size-distribution posterior.
    Aerosol {
        #[command(flatten)]
        common: Common,
        /// Data file, one positive value per line.
        #[arg(long, conflicts_with = "synth")]
        data: Option<PathBuf>,
        /// Synthetic data, e.g. n=2000,lambda=0.4,mu1=10,mu2=25,sigma1=2,sigma2=3,seed=1
        #[arg(long)]
        synth: Option<String>,
    },
}

enum Failure {
    Config(Error),
    Runtime(Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            Self::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

fn config_err(e: Error) -> Failure {
    Failure::Config(e)
}

fn runtime_err(e: Error) -> Failure {
    Failure::Runtime(e)
}

fn load(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = load_config(&common.config).map_err(|e| match e {
        Error::Io(io) => Error::Config { key: common.config.display().to_string(), message: io.to_string() },
        other => other,
    }).map_err(config_err)?;
    if let Some(s) = common.seed {
        cfg.base_seed = s;
    }
    if common.budget_iters.is_some() || common.budget_secs.is_some() {
        cfg.budget = Budget { iterations: common.budget_iters, seconds: common.budget_secs };
    }
    if let Some(o) = &common.out {
        cfg.out_dir = o.clone();
    }
    if common.workers.is_some() {
        cfg.workers = common.workers;
    }
    cfg.validate().map_err(config_err)?;
    Ok(cfg)
}

fn parse_synth(spec: &str) -> Result<SynthParams, Error> {
    let mut map = serde_json::Map::new();
    for pair in spec.split(',').filter(|p| !p.trim().is_empty()) {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config { key: "--synth".into(), message: format!("`{pair}` is not key=value") })?;
        let v: serde_json::Value = serde_json::from_str(v.trim())
            .map_err(|_| Error::Config { key: format!("--synth.{k}"), message: format!("`{v}` is not a number") })?;
        map.insert(k.trim().to_string(), v);
    }
    let p: SynthParams = serde_json::from_value(serde_json::Value::Object(map))
        .map_err(|e| Error::Config { key: "--synth".into(), message: e.to_string() })?;
    p.validate()?;
    Ok(p)
}

fn print_summaries(summaries: &[AlgorithmSummary]) {
    println!("{:<36} {:>5} {:>10} {:>8} {:>10} {:>10} {:>10}", "algorithm", "runs", "T", "A", "H", "tau", "ess");
    for s in summaries {
        match &s.summary {
            Some(r) => println!(
                "{:<36} {:>5} {:>10.0} {:>8} {:>10.4} {:>10.2} {:>10.1}",
                s.algorithm,
                s.completed,
                r.t.mean,
                r.a.map(|a| format!("{:.3}", a.mean)).unwrap_or_else(|| "-".into()),
                r.h.mean,
                r.tau.mean,
                r.ess.mean
            ),
            None => println!("{:<36} {:>5}", s.algorithm, s.completed),
        }
    }
}

fn list_paths(paths: &[PathBuf]) {
    for p in paths {
        eprintln!("wrote {}", p.display());
    }
}

fn partial_or_ok(failures: usize, completed: usize) -> Result<u8, Failure> {
    if failures == 0 {
        Ok(0)
    } else if completed == 0 {
        Err(Failure::Runtime(Error::Diagnostics(format!("all {failures} runs failed"))))
    } else {
        Ok(EXIT_PARTIAL)
    }
}

fn bench(mut cfg: ExperimentConfig, command: Command) -> Result<u8, Failure> {
    if command == Command::Run {
        cfg.replicates = 1;
    }
    let out = cfg.out_dir.clone();
    let mut writer = ReportWriter::create(&out).map_err(runtime_err)?;
    let mut write_error = None;
    let seed_override = (command == Command::Run).then_some(cfg.base_seed);
    let outcome = if let Some(seed) = seed_override {
        // a single run seeded with the base seed itself, reproducible from its report row
        let mut reports = Vec::new();
        let mut failures = Vec::new();
        for alg in Algorithm::all(&cfg) {
            match hybridmc::harness::bench::run_replicate(&cfg, &alg, seed) {
                Ok(r) => {
                    writer.write(&r).map_err(runtime_err)?;
                    reports.push(r);
                }
                Err(e) => failures.push(hybridmc::harness::ReplicateFailure {
                    algorithm: alg.label(),
                    replicate: 0,
                    seed,
                    error: e.to_string(),
                }),
            }
        }
        let summaries = Algorithm::all(&cfg)
            .iter()
            .map(|a| AlgorithmSummary {
                algorithm: a.label(),
                completed: reports.iter().filter(|r| r.algorithm == a.label()).count(),
                summary: None,
            })
            .collect();
        hybridmc::harness::BenchOutcome { reports, summaries, failures }
    } else {
        run_benchmark_with(&cfg, |r| {
            if let Err(e) = writer.write(r) {
                write_error.get_or_insert(e);
            }
        })
        .map_err(runtime_err)?
    };
    if let Some(e) = write_error {
        return Err(runtime_err(e));
    }
    let mut paths = vec![writer.finish().map_err(runtime_err)?];
    for f in &outcome.failures {
        eprintln!("{} replicate {} (seed {}) failed: {}", f.algorithm, f.replicate, f.seed, f.error);
    }
    if command == Command::Run {
        println!("{:<36} {:>20} {:>10} {:>8} {:>10} {:>10}", "algorithm", "seed", "T", "A", "H", "tau");
        for r in &outcome.reports {
            let a = r.a.map(|a| format!("{a:.3}")).unwrap_or_else(|| "-".into());
            println!("{:<36} {:>20} {:>10} {:>8} {:>10.4} {:>10.2}", r.algorithm, r.seed, r.t, a, r.h, r.tau);
        }
    } else {
        print_summaries(&outcome.summaries);
    }
    let mut summary = Summary::new(command, cfg.base_seed, cfg.replicates);
    summary.algorithms = outcome.summaries;
    summary.failures = outcome.failures;
    paths.push(write_summary_json(&summary, &out).map_err(runtime_err)?);
    list_paths(&paths);
    partial_or_ok(summary.failures.len(), outcome.reports.len())
}

fn mode_detect(cfg: ExperimentConfig) -> Result<u8, Failure> {
    let results = mode_detection_campaign(&cfg).map_err(runtime_err)?;
    let mut paths = write_detection_csvs(&results, &cfg.out_dir).map_err(runtime_err)?;
    println!("{:<36} {:>8} {:>10} {:>8}", "algorithm", "window", "replicates", "detected");
    for r in &results {
        println!("{:<36} {:>8} {:>10} {:>8}", r.algorithm, r.window, r.detections.len(), r.count);
    }
    let mut summary = Summary::new(Command::ModeDetect, cfg.base_seed, cfg.replicates);
    summary.mode_detection = results.iter().map(DetectionSummary::from).collect();
    paths.push(write_summary_json(&summary, &cfg.out_dir).map_err(runtime_err)?);
    list_paths(&paths);
    Ok(0)
}

fn tune_xi(cfg: ExperimentConfig, grid: &[f64]) -> Result<u8, Failure> {
    let points = tune_xi_scan(&cfg, grid).map_err(|e| match e {
        Error::Config { .. } => config_err(e),
        other => runtime_err(other),
    })?;
    let mut paths = vec![write_xi_scan_csv(&points, &cfg.out_dir).map_err(runtime_err)?];
    println!("{:>12} {:>10}", "xi", "eta");
    for p in &points {
        println!("{:>12e} {:>10}", p.xi, p.eta.map(|e| format!("{e:.4}")).unwrap_or_else(|| "-".into()));
    }
    let mut summary = Summary::new(Command::TuneXi, cfg.base_seed, cfg.replicates);
    summary.xi_scan = points;
    paths.push(write_summary_json(&summary, &cfg.out_dir).map_err(runtime_err)?);
    list_paths(&paths);
    Ok(0)
}

fn aerosol(mut cfg: ExperimentConfig, data: Option<&Path>, synth: Option<&str>) -> Result<u8, Failure> {
    let mut acfg = cfg.aerosol.clone().unwrap_or_default();
    if let Some(p) = data {
        acfg.data = Some(p.to_path_buf());
        acfg.synth = None;
    }
    if let Some(s) = synth {
        acfg.synth = Some(parse_synth(s).map_err(config_err)?);
        acfg.data = None;
    }
    let dataset = match (&acfg.data, &acfg.synth) {
        (Some(path), _) => load_aerosol_data(path, acfg.subsample, cfg.base_seed).map_err(config_err)?,
        (None, Some(p)) => synth_from(p).map_err(config_err)?,
        (None, None) => {
            return Err(config_err(Error::Config {
                key: "aerosol".into(),
                message: "give --data, --synth, or aerosol.data / aerosol.synth in the config".into(),
            }))
        }
    };
    cfg.aerosol = Some(acfg);
    let outcome = run_aerosol_experiment(&cfg, &dataset).map_err(runtime_err)?;
    let reports: Vec<_> = outcome.runs.iter().map(|r| r.report.clone()).collect();
    let mut paths = vec![hybridmc::harness::report::write_reports_csv(&reports, &cfg.out_dir).map_err(runtime_err)?];
    paths.extend(write_aerosol_csvs(&outcome.runs, &cfg.out_dir).map_err(runtime_err)?);
    for f in &outcome.failures {
        eprintln!("{} failed: {}", f.algorithm, f.error);
    }
    println!("{:<12} {:>8} {:>8} {:>10} {:>10}", "algorithm", "T", "A", "tau_bar", "ess");
    for r in &outcome.runs {
        let rep = &r.report;
        println!(
            "{:<12} {:>8} {:>8.3} {:>10.2} {:>10.1}",
            rep.algorithm,
            rep.t,
            rep.a.unwrap_or(f64::NAN),
            rep.tau,
            rep.ess
        );
        for p in &r.parameters {
            println!("    {:<8} {:>12.5} [{:.5}, {:.5}]", p.name, p.mean, p.lower, p.upper);
        }
    }
    let mut summary = Summary::new(Command::Aerosol, cfg.base_seed, 1);
    summary.posterior = outcome
        .runs
        .iter()
        .map(|r| PosteriorSummary { algorithm: r.report.algorithm.clone(), parameters: r.parameters.clone() })
        .collect();
    summary.failures = outcome.failures;
    paths.push(write_summary_json(&summary, &cfg.out_dir).map_err(runtime_err)?);
    list_paths(&paths);
    partial_or_ok(summary.failures.len(), outcome.runs.len())
}

fn dispatch(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Cmd::Run(c) => bench(load(&c)?, Command::Run),
        Cmd::Bench(c) => bench(load(&c)?, Command::Bench),
        Cmd::ModeDetect(c) => mode_detect(load(&c)?),
        Cmd::TuneXi { common, grid } => tune_xi(load(&common)?, &grid),
        Cmd::Aerosol { common, data, synth } => aerosol(load(&common)?, data.as_deref(), synth.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            let code = f.code();
            let (Failure::Config(e) | Failure::Runtime(e)) = f;
            eprintln!("error: {e}");
            ExitCode::from(code)
        }
    }
}
