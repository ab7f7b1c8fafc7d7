//! Replicate farms: benchmarks, mode-detection campaigns and ξ scans.

use std::collections::BTreeMap;
use std::sync::mpsc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, PmcConfig};
use crate::diagnostics::{
    mode_detection_time, replicate_summary, report_from_chain, report_from_pmc, ReplicateSummary, RunReport,
};
use crate::error::{Error, Result};
use crate::pmc::{run_pmc, PmcOptions};
use crate::proposals::RepulsiveConfig;
use crate::samplers::{run_chain, Budget, ChainOptions, CorrectionCounters, SamplerSpec, TraceLevel};
use crate::target::Target;

/// Iterations per grid point of a ξ scan.
pub const XI_SCAN_ITERATIONS: usize = 500;

/// Seed of replicate `r`: the first word of stream `r` of the base generator.
pub fn replicate_seed(base_seed: u64, r: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(r);
    rng.next_u64()
}

pub fn rng_for_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub(crate) fn worker_count(cfg: &ExperimentConfig) -> usize {
    cfg.workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Run `task(0..n)` on a pool of `workers` threads and hand results to
/// `collect` in index order, as soon as each prefix is complete.
pub fn farm<T, F, C>(workers: usize, n: usize, task: F, mut collect: C) -> Result<()>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
    C: FnMut(usize, T),
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))?;
    let (tx, rx) = mpsc::channel();
    let task = &task;
    let pool = &pool;
    std::thread::scope(|s| {
        s.spawn(move || {
            pool.install(|| {
                (0..n).into_par_iter().for_each_with(tx, |tx, i| {
                    let _ = tx.send((i, task(i)));
                })
            })
        });
        let mut pending = BTreeMap::new();
        let mut next = 0;
        for (i, v) in rx {
            pending.insert(i, v);
            while let Some(v) = pending.remove(&next) {
                collect(next, v);
                next += 1;
            }
        }
    });
    Ok(())
}

/// A configured algorithm: a particle chain or a PMC variant.
#[derive(Debug, Clone, PartialEq)]
pub enum Algorithm {
    Chain(SamplerSpec),
    Pmc(PmcConfig),
}

impl Algorithm {
    pub fn label(&self) -> String {
        match self {
            Self::Chain(s) => s.label(),
            Self::Pmc(p) => p.label(),
        }
    }

    pub fn all(cfg: &ExperimentConfig) -> Vec<Self> {
        cfg.samplers
            .iter()
            .cloned()
            .map(Self::Chain)
            .chain(cfg.pmc.iter().copied().map(Self::Pmc))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub algorithm: String,
    pub replicate: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub algorithm: String,
    pub completed: usize,
    /// Absent with fewer than two completed replicates.
    pub summary: Option<ReplicateSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOutcome {
    pub reports: Vec<RunReport>,
    pub summaries: Vec<AlgorithmSummary>,
    pub failures: Vec<ReplicateFailure>,
}

impl BenchOutcome {
    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }
}

/// One seeded run of one algorithm under `cfg`.
pub fn run_replicate(cfg: &ExperimentConfig, algorithm: &Algorithm, seed: u64) -> Result<RunReport> {
    let target = cfg.target.build()?;
    let expectation = cfg.expectation();
    let mut rng = rng_for_seed(seed);
    let init = cfg.init.draw(&target, cfg.particles, &mut rng)?;
    let mut report = match algorithm {
        Algorithm::Chain(spec) => {
            let opts = ChainOptions { burn_in: cfg.burn_in, trace: TraceLevel::Summary };
            let trace = run_chain(spec, &target, &init, &cfg.budget, &opts, &mut rng)?;
            report_from_chain(&trace, seed, Some((&expectation, cfg.thresholds.bias)))?
        }
        Algorithm::Pmc(p) => {
            let rep = RepulsiveConfig::new(p.xi, p.nu)?;
            let opts = PmcOptions { burn_in: p.burn_in, keep_populations: false };
            let m = p.m.unwrap_or(cfg.particles);
            let trace = run_pmc(p.variant, &target, &init, p.k, &rep, m, &cfg.budget, &opts, &mut rng)?;
            report_from_pmc(&trace, seed, &expectation, cfg.thresholds.bias)?
        }
    };
    report.algorithm = algorithm.label();
    if !cfg.records_wall_clock() {
        report.wall_clock = 0.0;
    }
    Ok(report)
}

/// `cfg.replicates` seeded runs of every configured algorithm.
pub fn run_benchmark(cfg: &ExperimentConfig) -> Result<BenchOutcome> {
    run_benchmark_with(cfg, |_| {})
}

/// As [`run_benchmark`], calling `on_report` for each completed run in
/// (algorithm, replicate) order as results arrive.
pub fn run_benchmark_with(cfg: &ExperimentConfig, mut on_report: impl FnMut(&RunReport)) -> Result<BenchOutcome> {
    cfg.validate()?;
    let algorithms = Algorithm::all(cfg);
    if algorithms.is_empty() {
        return Err(Error::config("samplers", "no sampler or pmc variant configured"));
    }
    let r = cfg.replicates;
    let seeds: Vec<u64> = (0..r as u64).map(|i| replicate_seed(cfg.base_seed, i)).collect();
    let mut per_alg: Vec<Vec<RunReport>> = vec![Vec::new(); algorithms.len()];
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    farm(
        worker_count(cfg),
        algorithms.len() * r,
        |task| run_replicate(cfg, &algorithms[task / r], seeds[task % r]),
        |task, result| match result {
            Ok(rep) => {
                on_report(&rep);
                per_alg[task / r].push(rep.clone());
                reports.push(rep);
            }
            Err(e) => failures.push(ReplicateFailure {
                algorithm: algorithms[task / r].label(),
                replicate: task % r,
                seed: seeds[task % r],
                error: e.to_string(),
            }),
        },
    )?;
    let truth = cfg.expectation().first().copied();
    let summaries = algorithms
        .iter()
        .zip(&per_alg)
        .map(|(alg, reps)| {
            Ok(AlgorithmSummary {
                algorithm: alg.label(),
                completed: reps.len(),
                summary: if reps.len() >= 2 { Some(replicate_summary(reps, truth)?) } else { None },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchOutcome { reports, summaries, failures })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub algorithm: String,
    pub window: usize,
    /// Per-replicate first detection iteration, absent when never detected in the window.
    pub detections: Vec<Option<usize>>,
    pub count: usize,
}

impl DetectionResult {
    /// Detections per iteration 0..=window.
    pub fn histogram(&self) -> Vec<u64> {
        let mut h = vec![0; self.window + 1];
        for d in self.detections.iter().flatten() {
            h[*d] += 1;
        }
        h
    }
}

/// Start every particle in one mode and count replicates that reach the other
/// within the window (chains: `mode_window` iterations, PMC: `pmc_mode_window`).
pub fn mode_detection_campaign(cfg: &ExperimentConfig) -> Result<Vec<DetectionResult>> {
    cfg.validate()?;
    let target = cfg.target.build()?;
    let centers = target
        .mode_centers()
        .filter(|c| c.len() >= 2)
        .ok_or_else(|| Error::config("target", "mode detection needs a target with at least two modes"))?
        .to_vec();
    let algorithms = Algorithm::all(cfg);
    let r = cfg.replicates;
    let seeds: Vec<u64> = (0..r as u64).map(|i| replicate_seed(cfg.base_seed, i)).collect();
    let mut out: Vec<DetectionResult> = algorithms
        .iter()
        .map(|a| DetectionResult {
            algorithm: a.label(),
            window: match a {
                Algorithm::Chain(_) => cfg.thresholds.mode_window,
                Algorithm::Pmc(_) => cfg.thresholds.pmc_mode_window,
            },
            detections: Vec::with_capacity(r),
            count: 0,
        })
        .collect();
    let mut first_error = None;
    farm(
        worker_count(cfg),
        algorithms.len() * r,
        |task| -> Result<Option<usize>> {
            let alg = &algorithms[task / r];
            let mut rng = rng_for_seed(seeds[task % r]);
            let init = cfg.init.draw(&target, cfg.particles, &mut rng)?;
            let c = [centers[0].as_slice(), centers[1].as_slice()];
            match alg {
                Algorithm::Chain(spec) => {
                    let w = cfg.thresholds.mode_window;
                    let opts = ChainOptions { burn_in: 0, trace: TraceLevel::Full };
                    let trace = run_chain(spec, &target, &init, &Budget::iterations(w), &opts, &mut rng)?;
                    Ok(mode_detection_time(&trace.states, c, w))
                }
                Algorithm::Pmc(p) => {
                    let w = cfg.thresholds.pmc_mode_window;
                    let rep = RepulsiveConfig::new(p.xi, p.nu)?;
                    let opts = PmcOptions { burn_in: 0, keep_populations: true };
                    let m = p.m.unwrap_or(cfg.particles);
                    let budget = Budget::iterations(w);
                    let trace = run_pmc(p.variant, &target, &init, p.k, &rep, m, &budget, &opts, &mut rng)?;
                    Ok(mode_detection_time(&trace.populations, c, w))
                }
            }
        },
        |task, result| match result {
            Ok(d) => {
                let res = &mut out[task / r];
                res.detections.push(d);
                res.count += usize::from(d.is_some());
            }
            Err(e) => {
                first_error.get_or_insert(e);
            }
        },
    )?;
    match first_error {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XiPoint {
    pub xi: f64,
    /// Correction-step acceptance, pooled over replicates; absent if nothing passed the screen.
    pub eta: Option<f64>,
}

/// η at each ξ in the grid, from [`XI_SCAN_ITERATIONS`]-iteration runs of the
/// first repulsive sampler in the config, one per replicate.
pub fn tune_xi_scan(cfg: &ExperimentConfig, xi_grid: &[f64]) -> Result<Vec<XiPoint>> {
    cfg.validate()?;
    let spec = cfg
        .samplers
        .iter()
        .find(|s| s.xi().is_some())
        .ok_or_else(|| Error::config("samplers", "the scan needs an mh-rp or ps sampler"))?;
    for &xi in xi_grid {
        if !(xi >= 0.0 && xi.is_finite()) {
            return Err(Error::config("grid", format!("xi must be finite and nonnegative, got {xi}")));
        }
    }
    let target = cfg.target.build()?;
    let r = cfg.replicates;
    let seeds: Vec<u64> = (0..r as u64).map(|i| replicate_seed(cfg.base_seed, i)).collect();
    let mut pooled = vec![CorrectionCounters::default(); xi_grid.len()];
    let mut first_error = None;
    farm(
        worker_count(cfg),
        xi_grid.len() * r,
        |task| -> Result<CorrectionCounters> {
            let spec = spec.with_xi(xi_grid[task / r]);
            let mut rng = rng_for_seed(seeds[task % r]);
            let init = cfg.init.draw(&target, cfg.particles, &mut rng)?;
            let opts = ChainOptions { burn_in: 0, trace: TraceLevel::Summary };
            let budget = Budget::iterations(XI_SCAN_ITERATIONS);
            Ok(run_chain(&spec, &target, &init, &budget, &opts, &mut rng)?.counters)
        },
        |task, result| match result {
            Ok(c) => pooled[task / r].add(c),
            Err(e) => {
                first_error.get_or_insert(e);
            }
        },
    )?;
    if let Some(e) = first_error {
        return Err(e);
    }
    Ok(xi_grid
        .iter()
        .zip(&pooled)
        .map(|(&xi, c)| XiPoint { xi, eta: crate::diagnostics::correction_acceptance_eta(c) })
        .collect())
}
