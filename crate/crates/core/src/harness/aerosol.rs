//! Particle-size mixture application: data ingestion, synthetic data and the
//! block-updating runs.

use std::path::Path;
use std::time::Instant;

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::bench::{farm, rng_for_seed, worker_count, ReplicateFailure};
use super::config::{AerosolConfig, BlockConfig, ExperimentConfig, SynthParams};
use crate::diagnostics::{correction_acceptance_eta, ess, iat, RunReport};
use crate::error::{Error, Result};
use crate::samplers::{Others, ParticleVector, Sampler, SamplerSpec, StageCounts};
use crate::target::{param, BlockView, MixturePosterior, MixturePosteriorSpec, Target};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AerosolDataset {
    pub diameters: Vec<f64>,
    pub subsample_size: usize,
    pub subsample_seed: u64,
}

/// Parse one positive value per line (blank lines skipped), then draw a
/// seeded uniform subsample without replacement, kept in file order.
pub fn parse_aerosol_data(text: &str, subsample_size: usize, seed: u64) -> Result<AerosolDataset> {
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|_| Error::Data { line: i + 1, message: format!("`{line}` is not a number") })?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Data { line: i + 1, message: format!("value {v} is not positive") });
        }
        values.push(v);
    }
    if subsample_size == 0 || subsample_size > values.len() {
        return Err(Error::config(
            "aerosol.subsample",
            format!("cannot draw {subsample_size} of {} values", values.len()),
        ));
    }
    let mut idx = index::sample(&mut rng_for_seed(seed), values.len(), subsample_size).into_vec();
    idx.sort_unstable();
    Ok(AerosolDataset {
        diameters: idx.into_iter().map(|i| values[i]).collect(),
        subsample_size,
        subsample_seed: seed,
    })
}

pub fn load_aerosol_data(path: impl AsRef<Path>, subsample_size: usize, seed: u64) -> Result<AerosolDataset> {
    parse_aerosol_data(&std::fs::read_to_string(path)?, subsample_size, seed)
}

/// n draws from λN(μ₁,σ₁²) + (1−λ)N(μ₂,σ₂²), redrawing nonpositive values.
pub fn synth_aerosol(n: usize, lambda: f64, mu1: f64, mu2: f64, sigma1: f64, sigma2: f64, seed: u64) -> Result<AerosolDataset> {
    let p = SynthParams { n, lambda, mu1, mu2, sigma1, sigma2, seed };
    p.validate()?;
    let mut rng = rng_for_seed(seed);
    let mut diameters = Vec::with_capacity(n);
    for _ in 0..n {
        let mut tries = 0;
        loop {
            let (m, s) = if rng.random::<f64>() < lambda { (mu1, sigma1) } else { (mu2, sigma2) };
            let z: f64 = rng.sample(StandardNormal);
            let x = m + s * z;
            if x > 0.0 {
                diameters.push(x);
                break;
            }
            tries += 1;
            if tries == 10_000 {
                return Err(Error::config("synth", "mixture puts almost no mass on positive values"));
            }
        }
    }
    Ok(AerosolDataset { diameters, subsample_size: n, subsample_seed: seed })
}

pub fn synth_from(p: &SynthParams) -> Result<AerosolDataset> {
    synth_aerosol(p.n, p.lambda, p.mu1, p.mu2, p.sigma1, p.sigma2, p.seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub tau: f64,
}

impl ParameterSummary {
    pub fn covers(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }

    pub fn overlaps(&self, other: &Self) -> bool {
        self.lower <= other.upper && other.lower <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub parameter: String,
    /// bins + 1 edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AerosolRun {
    pub report: RunReport,
    pub parameters: Vec<ParameterSummary>,
    pub histograms: Vec<Histogram>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AerosolOutcome {
    pub runs: Vec<AerosolRun>,
    pub failures: Vec<ReplicateFailure>,
}

/// The sampler applied to one block. Pinball moves are planar, so on other
/// blocks those samplers fall back to random-walk Metropolis-Hastings.
pub fn block_sampler_spec(kind: &SamplerSpec, block: &BlockConfig) -> SamplerSpec {
    let (s, h, xi) = (block.s, block.h, block.xi);
    let planar = block.params.len() == 2;
    match kind {
        SamplerSpec::Mha { .. } => SamplerSpec::Mha { s },
        SamplerSpec::Mala { .. } => SamplerSpec::Mala { h },
        SamplerSpec::DraRw { .. } => SamplerSpec::DraRw { s },
        SamplerSpec::DraLp { .. } => SamplerSpec::DraLp { s, h },
        SamplerSpec::DraPinball { .. } if planar => SamplerSpec::DraPinball { s },
        SamplerSpec::MhRp { .. } => SamplerSpec::MhRp { s, xi },
        SamplerSpec::Ps { .. } if planar => SamplerSpec::Ps { s, xi },
        SamplerSpec::DraPinball { .. } | SamplerSpec::Ps { .. } => SamplerSpec::Mha { s },
    }
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, v.sqrt())
}

/// Starting particles: each half of the sorted data gives a component's
/// mean and spread, λ = 1/2, jittered by each block's random-walk scale.
pub fn initial_particles<R: Rng + ?Sized>(
    data: &[f64],
    n: usize,
    blocks: &[BlockConfig],
    target: &MixturePosterior,
    rng: &mut R,
) -> Result<ParticleVector> {
    if data.len() < 4 {
        return Err(Error::config("aerosol", "need at least four observations"));
    }
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = sorted.split_at(sorted.len() / 2);
    let (m1, s1) = mean_sd(lo);
    let (m2, s2) = mean_sd(hi);
    let base = [m1, m2, s1.max(1e-6), s2.max(1e-6), 0.5];
    let mut scale = [0.0; 5];
    for b in blocks {
        for i in b.indices()? {
            scale[i] = b.s.sqrt();
        }
    }
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let mut tries = 0;
        let p = loop {
            let p: Vec<f64> = base
                .iter()
                .zip(&scale)
                .map(|(b, s)| b + s * rng.sample::<f64, _>(StandardNormal))
                .collect();
            if target.log_density(&p).is_finite() {
                break p;
            }
            tries += 1;
            if tries == 1000 {
                return Err(Error::InvalidCurrentState { state: p });
            }
        };
        points.push(p);
    }
    ParticleVector::from_points(&points)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn histogram(name: &str, sorted: &[f64], bins: usize) -> Histogram {
    let (a, b) = (sorted[0], sorted[sorted.len() - 1]);
    let width = if b > a { (b - a) / bins as f64 } else { 1.0 };
    let edges: Vec<f64> = (0..=bins).map(|i| a + i as f64 * width).collect();
    let mut counts = vec![0u64; bins];
    for v in sorted {
        let k = (((v - a) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    Histogram { parameter: name.to_string(), edges, counts }
}

/// One block-updating run of `kind` on the mixture posterior of `data`.
pub fn run_aerosol_sampler(
    cfg: &ExperimentConfig,
    acfg: &AerosolConfig,
    kind: &SamplerSpec,
    data: &[f64],
    seed: u64,
) -> Result<AerosolRun> {
    let target = MixturePosterior::new(MixturePosteriorSpec::with_data_priors(data.to_vec()))?;
    let mut rng = rng_for_seed(seed);
    let mut particles = initial_particles(data, cfg.particles, &acfg.blocks, &target, &mut rng)?;
    let n = particles.n();
    let mut log_pi: Vec<f64> = particles.points().map(|p| target.log_density(p)).collect();
    let offset = acfg
        .log_scale_offset
        .unwrap_or_else(|| log_pi.iter().copied().fold(f64::NEG_INFINITY, f64::max));

    let mut blocks = Vec::with_capacity(acfg.blocks.len());
    for b in &acfg.blocks {
        let idx = b.indices()?;
        let sampler = Sampler::from_spec(&block_sampler_spec(kind, b))?.with_log_scale_offset(offset);
        sampler.check_compatible(idx.len(), n, true)?;
        let view = BlockView::new(&target, &idx, particles.point(0))?;
        blocks.push((idx, sampler, view));
    }

    let burn_in = acfg.burn_in;
    let mut counts = StageCounts::default();
    let mut counters = crate::samplers::CorrectionCounters::default();
    let mut means: Vec<Vec<f64>> = vec![Vec::new(); 5];
    let mut samples: Vec<Vec<f64>> = vec![Vec::new(); 5];
    let mut t = 0;
    let started = Instant::now();
    while !cfg.budget.exhausted(t, &started) {
        for (idx, sampler, view) in blocks.iter_mut() {
            let d = idx.len();
            let mut flat: Vec<f64> = particles.points().flat_map(|p| idx.iter().map(move |&j| p[j])).collect();
            for i in 0..n {
                view.set_complement(particles.point(i));
                let state = flat[i * d..(i + 1) * d].to_vec();
                let out = {
                    let others = Others::new(&flat, &log_pi, d, Some(i));
                    sampler.step(&*view, &state, log_pi[i], None, &others, &mut rng)?
                };
                if out.stage.accepted() {
                    particles.set_point(i, &view.embed(&out.new_point));
                    flat[i * d..(i + 1) * d].copy_from_slice(&out.new_point);
                    log_pi[i] = out.new_log_density;
                }
                counts.record(out.stage);
                counters.add(out.counters);
            }
        }
        t += 1;
        let m = particles.mean();
        for (series, v) in means.iter_mut().zip(&m) {
            series.push(*v);
        }
        if t > burn_in {
            for p in particles.points() {
                for (s, v) in samples.iter_mut().zip(p) {
                    s.push(*v);
                }
            }
        }
    }
    let wall_clock = started.elapsed().as_secs_f64();
    if t <= burn_in {
        return Err(Error::Diagnostics(format!("only {t} iterations, burn-in is {burn_in}")));
    }

    let tail = (1.0 - acfg.level) / 2.0;
    let mut parameters = Vec::with_capacity(5);
    let mut histograms = Vec::with_capacity(5);
    for (k, name) in param::NAMES.iter().enumerate() {
        let tau = iat(&means[k][burn_in..])?;
        let mut sorted = samples[k].clone();
        sorted.sort_by(f64::total_cmp);
        parameters.push(ParameterSummary {
            name: name.to_string(),
            mean: samples[k].iter().sum::<f64>() / samples[k].len() as f64,
            lower: quantile(&sorted, tail),
            upper: quantile(&sorted, 1.0 - tail),
            tau,
        });
        histograms.push(histogram(name, &sorted, acfg.bins));
    }
    let tau_bar = parameters.iter().map(|p| p.tau).sum::<f64>() / parameters.len() as f64;
    let (h, sd_h) = mean_sd(&samples[param::MU1]);
    let report = RunReport {
        algorithm: kind.name().to_string(),
        seed,
        t,
        a: Some(counts.accepted() as f64 / counts.attempts() as f64),
        h,
        var_h: sd_h * sd_h,
        tau: tau_bar,
        ess: ess(t, burn_in, tau_bar)?,
        n_b: None,
        eta: correction_acceptance_eta(&counters),
        wall_clock: if cfg.records_wall_clock() { wall_clock } else { 0.0 },
    };
    Ok(AerosolRun { report, parameters, histograms })
}

/// Run every configured sampler on `dataset` with seed `cfg.base_seed`.
pub fn run_aerosol_experiment(cfg: &ExperimentConfig, dataset: &AerosolDataset) -> Result<AerosolOutcome> {
    cfg.validate()?;
    let default_cfg = AerosolConfig::default();
    let acfg = cfg.aerosol.as_ref().unwrap_or(&default_cfg);
    if dataset.diameters.is_empty() {
        return Err(Error::config("aerosol", "dataset is empty"));
    }
    if cfg.samplers.is_empty() {
        return Err(Error::config("samplers", "no sampler configured"));
    }
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    farm(
        worker_count(cfg),
        cfg.samplers.len(),
        |i| run_aerosol_sampler(cfg, acfg, &cfg.samplers[i], &dataset.diameters, cfg.base_seed),
        |i, res| match res {
            Ok(run) => runs.push(run),
            Err(e) => failures.push(ReplicateFailure {
                algorithm: cfg.samplers[i].name().to_string(),
                replicate: 0,
                seed: cfg.base_seed,
                error: e.to_string(),
            }),
        },
    )?;
    Ok(AerosolOutcome { runs, failures })
}
