//! Population Monte Carlo with a kernel importance function.

use std::time::Instant;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::proposals::{estimate_norm_const_ratio, hole_log_factor, sq_dist, RepulsiveConfig, Sampleable};
use crate::samplers::{Budget, ParticleVector};
use crate::target::Target;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Equal-weight Gaussian mixture g = (1/N) Σ N(·; θᵢ, x²I).
///
/// The bandwidth is x = k·σ_θ·N^{−1/(D+4)}, with σ²_θ the mean of the
/// per-coordinate sample variances of the centers.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceFunction {
    centers: ParticleVector,
    bandwidth: f64,
    k: f64,
    pooled_variance: f64,
    log_norm: f64,
}

pub fn build_kernel_importance(particles: &ParticleVector, k: f64) -> Result<ImportanceFunction> {
    ImportanceFunction::new(particles, k)
}

/// Mean of the per-coordinate sample variances (divisor N−1).
pub fn pooled_variance(particles: &ParticleVector) -> f64 {
    let n = particles.n() as f64;
    let mean = particles.mean();
    let mut total = 0.0;
    for p in particles.points() {
        total += sq_dist(p, &mean);
    }
    total / (n - 1.0) / particles.dim() as f64
}

impl ImportanceFunction {
    pub fn new(particles: &ParticleVector, k: f64) -> Result<Self> {
        if !(k > 1.0 && k.is_finite()) {
            return Err(Error::InvalidKernel(format!("bandwidth multiplier k must exceed 1, got {k}")));
        }
        let n = particles.n();
        if n < 2 {
            return Err(Error::DegeneratePopulation("at least two particles are needed for a bandwidth".into()));
        }
        let var = pooled_variance(particles);
        if !(var > 0.0) {
            return Err(Error::DegeneratePopulation("particles have zero variance".into()));
        }
        let d = particles.dim() as f64;
        let bandwidth = k * var.sqrt() * (n as f64).powf(-1.0 / (d + 4.0));
        Ok(Self {
            centers: particles.clone(),
            bandwidth,
            k,
            pooled_variance: var,
            log_norm: -(n as f64).ln() - 0.5 * d * (LN_2PI + 2.0 * bandwidth.ln()),
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn pooled_variance(&self) -> f64 {
        self.pooled_variance
    }

    pub fn centers(&self) -> &ParticleVector {
        &self.centers
    }

    /// Mean of g, equal to the mean of the centers.
    pub fn mean(&self) -> Vec<f64> {
        self.centers.mean()
    }
}

impl Target for ImportanceFunction {
    fn dim(&self) -> usize {
        self.centers.dim()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let inv = -0.5 / (self.bandwidth * self.bandwidth);
        let mut m = f64::NEG_INFINITY;
        let exps: Vec<f64> = self
            .centers
            .points()
            .map(|c| {
                let e = inv * sq_dist(x, c);
                m = m.max(e);
                e
            })
            .collect();
        if m == f64::NEG_INFINITY {
            return m;
        }
        let s: f64 = exps.iter().map(|e| (e - m).exp()).sum();
        self.log_norm + m + s.ln()
    }
}

impl Sampleable for ImportanceFunction {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let i = rng.random_range(0..self.centers.n());
        self.centers
            .point(i)
            .iter()
            .map(|c| c + self.bandwidth * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }
}

/// Proposals with their importance weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    pub particles: ParticleVector,
    pub log_weights_raw: Vec<f64>,
    pub weights_normalized: Vec<f64>,
    /// Normalizing-constant ratio folded into the raw weights; 1 without repulsion.
    pub c_prime: f64,
}

impl WeightedSample {
    fn from_log_weights(particles: ParticleVector, log_weights_raw: Vec<f64>, c_prime: f64) -> Result<Self> {
        let weights_normalized = normalize_log_weights(&log_weights_raw)?;
        Ok(Self { particles, log_weights_raw, weights_normalized, c_prime })
    }

    /// Σ w̄ᵢ φᵢ.
    pub fn weighted_mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.particles.dim()];
        for (p, w) in self.particles.points().zip(&self.weights_normalized) {
            for (a, b) in m.iter_mut().zip(p) {
                *a += w * b;
            }
        }
        m
    }

    /// 1 / Σ w̄ᵢ².
    pub fn ess(&self) -> f64 {
        1.0 / self.weights_normalized.iter().map(|w| w * w).sum::<f64>()
    }

    pub fn max_weight(&self) -> f64 {
        self.weights_normalized.iter().copied().fold(0.0, f64::max)
    }
}

/// Self-normalize log-weights; all −∞ (or NaN) is a degenerate-weights error.
pub fn normalize_log_weights(log_w: &[f64]) -> Result<Vec<f64>> {
    let max = log_w.iter().copied().filter(|v| !v.is_nan()).fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegenerateWeights { max_log_weight: max });
    }
    let w: Vec<f64> = log_w.iter().map(|v| if v.is_nan() { 0.0 } else { (v - max).exp() }).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|v| v / total).collect())
}

/// Multinomial resampling: N iid categorical draws.
pub fn resample_multinomial<R: Rng + ?Sized>(
    particles: &ParticleVector,
    weights: &[f64],
    rng: &mut R,
) -> Result<ParticleVector> {
    if weights.len() != particles.n() {
        return Err(Error::InvalidSimplex(format!("{} weights for {} particles", weights.len(), particles.n())));
    }
    let d = particles.dim();
    let mut data = Vec::with_capacity(particles.n() * d);
    for i in resample_indices(weights, particles.n(), rng)? {
        data.extend_from_slice(particles.point(i));
    }
    ParticleVector::new(particles.n(), d, data)
}

/// `count` iid categorical draws from a weight simplex.
pub fn resample_indices<R: Rng + ?Sized>(weights: &[f64], count: usize, rng: &mut R) -> Result<Vec<usize>> {
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidSimplex("weights must be finite and nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidSimplex(format!("weights sum to {total}")));
    }
    let dist = WeightedIndex::new(weights).map_err(|e| Error::InvalidSimplex(e.to_string()))?;
    Ok((0..count).map(|_| dist.sample(rng)).collect())
}

/// One PMC iteration's products.
#[derive(Debug, Clone, PartialEq)]
pub struct PmcStep {
    pub sample: WeightedSample,
    pub resampled: ParticleVector,
    pub estimate: Vec<f64>,
}

/// Plain PMC: propose N points from g, weight by π/g, resample.
pub fn pmc_iteration<T: Target + ?Sized, R: Rng + ?Sized>(
    target: &T,
    particles: &ParticleVector,
    k: f64,
    rng: &mut R,
) -> Result<PmcStep> {
    let g = build_kernel_importance(particles, k)?;
    let n = particles.n();
    let mut data = Vec::with_capacity(n * particles.dim());
    let mut log_w = Vec::with_capacity(n);
    for _ in 0..n {
        let phi = g.draw(rng);
        log_w.push(target.log_density(&phi) - g.log_density(&phi));
        data.extend(phi);
    }
    finish_iteration(ParticleVector::new(n, particles.dim(), data)?, log_w, 1.0, rng)
}

fn finish_iteration<R: Rng + ?Sized>(proposals: ParticleVector, log_w: Vec<f64>, c_prime: f64, rng: &mut R) -> Result<PmcStep> {
    let sample = WeightedSample::from_log_weights(proposals, log_w, c_prime)?;
    let estimate = sample.weighted_mean();
    let resampled = resample_multinomial(&sample.particles, &sample.weights_normalized, rng)?;
    Ok(PmcStep { sample, resampled, estimate })
}

/// PMC with a holed importance function ĝ.
///
/// Hole centers are N fresh draws from g. Final proposals come from ĝ by
/// rejection from g with acceptance ĝ/g, and carry weights C′·π/ĝ.
pub fn pmc_repulsive_iteration<T: Target + ?Sized, R: Rng + ?Sized>(
    target: &T,
    particles: &ParticleVector,
    k: f64,
    cfg: &RepulsiveConfig,
    m: usize,
    rng: &mut R,
) -> Result<PmcStep> {
    cfg.validate()?;
    let n = particles.n();
    if m < n {
        return Err(Error::config("M", format!("must be at least N = {n}, got {m}")));
    }
    if cfg.xi == 0.0 || cfg.nu == 0.0 {
        // ĝ = g and C′ = 1
        return pmc_iteration(target, particles, k, rng);
    }
    let g = build_kernel_importance(particles, k)?;
    let holes: Vec<Vec<f64>> = (0..n).map(|_| g.draw(rng)).collect();
    let est = estimate_norm_const_ratio(&g, cfg, &holes, m, n, rng);
    let log_g_holes: Vec<f64> = holes.iter().map(|h| g.log_density(h)).collect();
    let hole_iter = || holes.iter().map(Vec::as_slice).zip(log_g_holes.iter().copied());

    let max_attempts = 10_000 * n;
    let mut attempts = 0;
    let mut data = Vec::with_capacity(n * particles.dim());
    let mut log_w = Vec::with_capacity(n);
    while log_w.len() < n {
        if attempts >= max_attempts {
            return Err(Error::HoleConfiguration { attempts });
        }
        attempts += 1;
        let phi = g.draw(rng);
        let log_r = hole_log_factor(&phi, hole_iter(), cfg);
        if rng.random::<f64>() < log_r.exp() {
            let log_ghat = g.log_density(&phi) + log_r;
            log_w.push(est.c_prime.ln() + target.log_density(&phi) - log_ghat);
            data.extend(phi);
        }
    }
    finish_iteration(ParticleVector::new(n, particles.dim(), data)?, log_w, est.c_prime, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PmcVariant {
    Plain,
    Repulsive,
}

impl PmcVariant {
    pub fn name(self) -> &'static str {
        match self {
            Self::Plain => "pmc",
            Self::Repulsive => "pmc-r",
        }
    }
}

/// Per-iteration weighted means, T × D row-major.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EstimateSeries {
    pub dim: usize,
    pub values: Vec<f64>,
}

impl EstimateSeries {
    pub fn new(dim: usize) -> Self {
        Self { dim, values: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.values.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn push(&mut self, estimate: &[f64]) {
        self.values.extend_from_slice(estimate);
    }

    pub fn get(&self, t: usize) -> &[f64] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim.max(1))
    }

    pub fn coordinate(&self, c: usize) -> Vec<f64> {
        self.iter().map(|e| e[c]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmcOptions {
    pub burn_in: usize,
    pub keep_populations: bool,
}

impl Default for PmcOptions {
    fn default() -> Self {
        Self { burn_in: 100, keep_populations: false }
    }
}

/// Output of a PMC run.
#[derive(Debug, Clone, PartialEq)]
pub struct PmcTrace {
    pub variant: PmcVariant,
    pub iterations: usize,
    pub burn_in: usize,
    pub estimates: EstimateSeries,
    pub ess: Vec<f64>,
    pub max_weight: Vec<f64>,
    pub c_prime: Vec<f64>,
    /// Resampled populations after each iteration, initial state first (when kept).
    pub populations: Vec<ParticleVector>,
    pub final_state: ParticleVector,
    pub wall_clock_seconds: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn run_pmc<T: Target + ?Sized, R: Rng + ?Sized>(
    variant: PmcVariant,
    target: &T,
    init: &ParticleVector,
    k: f64,
    cfg: &RepulsiveConfig,
    m: usize,
    budget: &Budget,
    opts: &PmcOptions,
    rng: &mut R,
) -> Result<PmcTrace> {
    budget.validate()?;
    if init.dim() != target.dim() {
        return Err(Error::DimensionMismatch { expected: target.dim(), got: init.dim() });
    }
    build_kernel_importance(init, k)?;
    let started = Instant::now();
    let mut trace = PmcTrace {
        variant,
        iterations: 0,
        burn_in: opts.burn_in,
        estimates: EstimateSeries::new(init.dim()),
        ess: Vec::new(),
        max_weight: Vec::new(),
        c_prime: Vec::new(),
        populations: if opts.keep_populations { vec![init.clone()] } else { Vec::new() },
        final_state: init.clone(),
        wall_clock_seconds: 0.0,
    };
    let mut particles = init.clone();
    while !budget.exhausted(trace.iterations, &started) {
        let step = match variant {
            PmcVariant::Plain => pmc_iteration(target, &particles, k, rng)?,
            PmcVariant::Repulsive => pmc_repulsive_iteration(target, &particles, k, cfg, m, rng)?,
        };
        trace.estimates.push(&step.estimate);
        trace.ess.push(step.sample.ess());
        trace.max_weight.push(step.sample.max_weight());
        trace.c_prime.push(step.sample.c_prime);
        if opts.keep_populations {
            trace.populations.push(step.resampled.clone());
        }
        particles = step.resampled;
        trace.iterations += 1;
    }
    trace.final_state = particles;
    trace.wall_clock_seconds = started.elapsed().as_secs_f64();
    Ok(trace)
}
