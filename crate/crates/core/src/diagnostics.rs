//! Performance measures: acceptance, autocorrelation time, effective sample
//! size, replicate aggregation, mode detection, bias counting and η.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pmc::{EstimateSeries, PmcTrace};
use crate::proposals::{hole_log_factor, RepulsiveConfig};
use crate::samplers::{ChainTrace, CorrectionCounters, ParticleVector, Stage};
use crate::target::Target;

/// Metrics of one run. Column order of the CSV follows field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub algorithm: String,
    pub seed: u64,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "A")]
    pub a: Option<f64>,
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(rename = "var_H")]
    pub var_h: f64,
    pub tau: f64,
    pub ess: f64,
    pub n_b: Option<u64>,
    pub eta: Option<f64>,
    pub wall_clock: f64,
}

pub const REPORT_COLUMNS: [&str; 11] = ["algorithm", "seed", "T", "A", "H", "var_H", "tau", "ess", "n_b", "eta", "wall_clock"];

/// Accepted steps (any stage) over attempts, burn-in included.
pub fn acceptance_rate(trace: &ChainTrace) -> Result<f64> {
    let attempts = trace.stage_counts.attempts();
    if attempts == 0 {
        return Err(Error::Diagnostics("acceptance rate of an empty trace".into()));
    }
    Ok(trace.stage_counts.accepted() as f64 / attempts as f64)
}

pub fn acceptance_rate_of(stages: &[Stage]) -> Result<f64> {
    if stages.is_empty() {
        return Err(Error::Diagnostics("acceptance rate of an empty trace".into()));
    }
    Ok(stages.iter().filter(|s| s.accepted()).count() as f64 / stages.len() as f64)
}

/// Biased autocovariances γ(0..n) via zero-padded FFT.
fn autocovariance(series: &[f64]) -> Vec<f64> {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let m = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = series.iter().map(|x| Complex::new(x - mean, 0.0)).collect();
    buf.resize(m, Complex::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(m).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(m).process(&mut buf);
    buf[..n].iter().map(|c| c.re / (m as f64 * n as f64)).collect()
}

/// Integrated autocorrelation time τ = 1 + 2Σρ(l), truncated by the initial
/// positive sequence rule on paired sums ρ(2m) + ρ(2m+1). Floored at 1;
/// a constant series yields +∞.
pub fn iat(series: &[f64]) -> Result<f64> {
    if series.len() < 100 {
        return Err(Error::Diagnostics(format!("need at least 100 values for the autocorrelation time, got {}", series.len())));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diagnostics("series contains non-finite values".into()));
    }
    let gamma = autocovariance(series);
    if !(gamma[0] > 0.0) || gamma[0] < 1e-300 {
        return Ok(f64::INFINITY);
    }
    let n = gamma.len();
    let mut sum = 0.0;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = (gamma[2 * m] + gamma[2 * m + 1]) / gamma[0];
        if pair <= 0.0 {
            break;
        }
        sum += pair;
        m += 1;
    }
    Ok((2.0 * sum - 1.0).max(1.0))
}

/// (T − T₀) / τ.
pub fn ess(t: usize, t0: usize, tau: f64) -> Result<f64> {
    if t <= t0 {
        return Err(Error::Diagnostics(format!("T = {t} must exceed the burn-in T0 = {t0}")));
    }
    if !(tau >= 1.0) {
        return Err(Error::Diagnostics(format!("tau must be at least 1, got {tau}")));
    }
    Ok((t - t0) as f64 / tau)
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = if x.len() > 1 { x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, v)
}

/// Accepted-at-correction over accepted-at-propose; `None` when nothing passed the first test.
pub fn correction_acceptance_eta(counters: &CorrectionCounters) -> Option<f64> {
    if counters.accepted_at_propose == 0 {
        None
    } else {
        Some(counters.accepted_at_correction as f64 / counters.accepted_at_propose as f64)
    }
}

/// Iterations whose estimate lies farther than `threshold` from `expectation`.
pub fn biased_estimate_count(estimates: &EstimateSeries, expectation: &[f64], threshold: f64) -> u64 {
    let t2 = threshold * threshold;
    estimates
        .iter()
        .filter(|e| e.iter().zip(expectation).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() > t2)
        .count() as u64
}

/// First iteration at which any particle is strictly closer to `centers[1]`
/// than to `centers[0]`, looking at states 0..=window.
pub fn mode_detection_time(states: &[ParticleVector], centers: [&[f64]; 2], window: usize) -> Option<usize> {
    states.iter().take(window + 1).position(|pv| {
        pv.points().any(|p| {
            let d0: f64 = p.iter().zip(centers[0]).map(|(a, b)| (a - b) * (a - b)).sum();
            let d1: f64 = p.iter().zip(centers[1]).map(|(a, b)| (a - b) * (a - b)).sum();
            d1 < d0
        })
    })
}

/// Report for a particle chain; H and τ use the first coordinate of the
/// post-burn-in particle means, n_b counts biased means over all T iterations.
pub fn report_from_chain(trace: &ChainTrace, seed: u64, expectation: Option<(&[f64], f64)>) -> Result<RunReport> {
    let t0 = trace.burn_in;
    let series = trace.mean_series(0);
    let post = series.get(t0..).unwrap_or(&[]);
    let (h, var_h) = mean_var(post);
    let tau = iat(post)?;
    let n_b = expectation.map(|(e, thr)| {
        let es = EstimateSeries { dim: trace.dim, values: trace.means.clone() };
        biased_estimate_count(&es, e, thr)
    });
    Ok(RunReport {
        algorithm: trace.algorithm.clone(),
        seed,
        t: trace.iterations,
        a: Some(acceptance_rate(trace)?),
        h,
        var_h,
        tau,
        ess: ess(trace.iterations, t0, tau)?,
        n_b,
        eta: correction_acceptance_eta(&trace.counters),
        wall_clock: trace.wall_clock_seconds,
    })
}

/// Report for a PMC run; statistics over the post-burn-in estimate series,
/// except n_b which counts biased estimates over all T iterations.
pub fn report_from_pmc(trace: &PmcTrace, seed: u64, expectation: &[f64], threshold: f64) -> Result<RunReport> {
    let t0 = trace.burn_in;
    let series = trace.estimates.coordinate(0);
    let post = series.get(t0..).unwrap_or(&[]);
    let (h, var_h) = mean_var(post);
    let tau = iat(post)?;
    Ok(RunReport {
        algorithm: trace.variant.name().to_string(),
        seed,
        t: trace.iterations,
        a: None,
        h,
        var_h,
        tau,
        ess: ess(trace.iterations, t0, tau)?,
        n_b: Some(biased_estimate_count(&trace.estimates, expectation, threshold)),
        eta: None,
        wall_clock: trace.wall_clock_seconds,
    })
}

/// Mean and mean squared error of one measure across replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureSummary {
    pub mean: f64,
    /// Against the declared truth when one exists, otherwise against the mean.
    pub mse: f64,
    pub count: usize,
}

impl MeasureSummary {
    fn of(values: &[f64], truth: Option<f64>) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let c = truth.unwrap_or(mean);
        let mse = values.iter().map(|v| (v - c) * (v - c)).sum::<f64>() / n;
        Some(Self { mean, mse, count: values.len() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSummary {
    pub algorithm: String,
    pub replicates: usize,
    #[serde(rename = "T")]
    pub t: MeasureSummary,
    #[serde(rename = "A")]
    pub a: Option<MeasureSummary>,
    #[serde(rename = "H")]
    pub h: MeasureSummary,
    #[serde(rename = "var_H")]
    pub var_h: MeasureSummary,
    pub tau: MeasureSummary,
    pub ess: MeasureSummary,
    pub n_b: Option<MeasureSummary>,
    pub eta: Option<MeasureSummary>,
    pub wall_clock: MeasureSummary,
}

/// Means over replicates, with MSE of H against `h_truth` when given.
pub fn replicate_summary(reports: &[RunReport], h_truth: Option<f64>) -> Result<ReplicateSummary> {
    if reports.len() < 2 {
        return Err(Error::Diagnostics(format!("need at least 2 replicates, got {}", reports.len())));
    }
    let col = |f: &dyn Fn(&RunReport) -> Option<f64>| -> Vec<f64> { reports.iter().filter_map(f).collect() };
    let must = |v: Option<MeasureSummary>| v.expect("nonempty column");
    Ok(ReplicateSummary {
        algorithm: reports[0].algorithm.clone(),
        replicates: reports.len(),
        t: must(MeasureSummary::of(&col(&|r| Some(r.t as f64)), None)),
        a: MeasureSummary::of(&col(&|r| r.a), None),
        h: must(MeasureSummary::of(&col(&|r| Some(r.h)), h_truth)),
        var_h: must(MeasureSummary::of(&col(&|r| Some(r.var_h)), None)),
        tau: must(MeasureSummary::of(&col(&|r| Some(r.tau)), None)),
        ess: must(MeasureSummary::of(&col(&|r| Some(r.ess)), None)),
        n_b: MeasureSummary::of(&col(&|r| r.n_b.map(|v| v as f64)), None),
        eta: MeasureSummary::of(&col(&|r| r.eta), None),
        wall_clock: must(MeasureSummary::of(&col(&|r| Some(r.wall_clock)), None)),
    })
}

/// Rectangular 2D grid of `cells × cells` midpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub cells: usize,
}

impl GridSpec {
    pub fn square(lo: f64, hi: f64, cells: usize) -> Self {
        Self { lo: [lo, lo], hi: [hi, hi], cells }
    }
}

fn grid_ratio<T: Target + ?Sized>(target: &T, cfg: &RepulsiveConfig, holes: &[Vec<f64>], log_pi_holes: &[f64], cells: usize, g: &GridSpec) -> f64 {
    let hx = (g.hi[0] - g.lo[0]) / cells as f64;
    let hy = (g.hi[1] - g.lo[1]) / cells as f64;
    let (mut holed, mut plain) = (0.0, 0.0);
    for i in 0..cells {
        for j in 0..cells {
            let p = [g.lo[0] + (i as f64 + 0.5) * hx, g.lo[1] + (j as f64 + 0.5) * hy];
            let v = target.log_density(&p).exp();
            let f = hole_log_factor(&p, holes.iter().map(Vec::as_slice).zip(log_pi_holes.iter().copied()), cfg).exp();
            plain += v;
            holed += v * f;
        }
    }
    holed / plain
}

/// ∫π²ᴿ / ∫π by midpoint quadrature, checked against a grid of half the resolution.
pub fn grid_norm_const_ratio<T: Target + ?Sized>(target: &T, cfg: &RepulsiveConfig, holes: &[Vec<f64>], grid: &GridSpec) -> Result<f64> {
    if target.dim() != 2 {
        return Err(Error::UnsupportedDimension(target.dim()));
    }
    cfg.validate()?;
    if grid.cells < 4 || !(grid.hi[0] > grid.lo[0] && grid.hi[1] > grid.lo[1]) {
        return Err(Error::Diagnostics("grid needs at least 4 cells per side and a positive extent".into()));
    }
    let log_pi_holes: Vec<f64> = holes.iter().map(|h| target.log_density(h)).collect();
    let fine = grid_ratio(target, cfg, holes, &log_pi_holes, grid.cells, grid);
    let coarse = grid_ratio(target, cfg, holes, &log_pi_holes, grid.cells / 2, grid);
    if (fine - coarse).abs() > 0.01 * fine {
        return Err(Error::GridResolution { coarse, fine });
    }
    Ok(fine)
}
