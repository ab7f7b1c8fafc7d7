//! Target densities.
//!
//! Every target is evaluated on the log scale. A return value of
//! `f64::NEG_INFINITY` marks a point outside the support; samplers reject such
//! proposals without further special casing.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// An unnormalized log-density with an optional score function.
pub trait Target: Send + Sync {
    fn dim(&self) -> usize;

    fn log_density(&self, x: &[f64]) -> f64;

    /// Gradient of the log-density, `None` when the target does not provide one.
    fn grad_log_density(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }

    fn has_gradient(&self) -> bool {
        false
    }

    /// Centers of the well separated modes, used only by diagnostics.
    fn mode_centers(&self) -> Option<&[Vec<f64>]> {
        None
    }
}

impl<T: Target + ?Sized> Target for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn log_density(&self, x: &[f64]) -> f64 {
        (**self).log_density(x)
    }
    fn grad_log_density(&self, x: &[f64]) -> Option<Vec<f64>> {
        (**self).grad_log_density(x)
    }
    fn has_gradient(&self) -> bool {
        (**self).has_gradient()
    }
    fn mode_centers(&self) -> Option<&[Vec<f64>]> {
        (**self).mode_centers()
    }
}

impl<T: Target + ?Sized> Target for Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn log_density(&self, x: &[f64]) -> f64 {
        (**self).log_density(x)
    }
    fn grad_log_density(&self, x: &[f64]) -> Option<Vec<f64>> {
        (**self).grad_log_density(x)
    }
    fn has_gradient(&self) -> bool {
        (**self).has_gradient()
    }
    fn mode_centers(&self) -> Option<&[Vec<f64>]> {
        (**self).mode_centers()
    }
}

type LogFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// A target assembled from closures.
pub struct FnTarget {
    dim: usize,
    log_density: Box<LogFn>,
    grad: Option<Box<GradFn>>,
    centers: Option<Vec<Vec<f64>>>,
}

impl FnTarget {
    pub fn new(dim: usize, log_density: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            dim,
            log_density: Box::new(log_density),
            grad: None,
            centers: None,
        }
    }

    pub fn with_gradient(mut self, grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.grad = Some(Box::new(grad));
        self
    }

    pub fn with_mode_centers(mut self, centers: Vec<Vec<f64>>) -> Self {
        self.centers = Some(centers);
        self
    }
}

impl fmt::Debug for FnTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnTarget")
            .field("dim", &self.dim)
            .field("has_gradient", &self.grad.is_some())
            .finish()
    }
}

impl Target for FnTarget {
    fn dim(&self) -> usize {
        self.dim
    }
    fn log_density(&self, x: &[f64]) -> f64 {
        (self.log_density)(x)
    }
    fn grad_log_density(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.grad.as_ref().map(|g| g(x))
    }
    fn has_gradient(&self) -> bool {
        self.grad.is_some()
    }
    fn mode_centers(&self) -> Option<&[Vec<f64>]> {
        self.centers.as_deref()
    }
}

/// Weights, means and covariances of a finite Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianMixtureSpec {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<Vec<f64>>>,
}

impl GaussianMixtureSpec {
    /// Equal mixture of N([0,0], I) and N([5,5], I).
    pub fn two_mode_toy() -> Self {
        let eye = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        Self {
            weights: vec![0.5, 0.5],
            means: vec![vec![0.0, 0.0], vec![5.0, 5.0]],
            covariances: vec![eye.clone(), eye],
        }
    }

    pub fn standard_normal(dim: usize) -> Self {
        let cov = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self {
            weights: vec![1.0],
            means: vec![vec![0.0; dim]],
            covariances: vec![cov],
        }
    }
}

#[derive(Debug, Clone)]
struct Component {
    log_weight: f64,
    mean: Vec<f64>,
    // row-major D×D
    precision: Vec<f64>,
    // lower Cholesky factor of the covariance, row-major
    chol: Vec<f64>,
    log_norm: f64,
}

/// Log of Σ wₖ N(x; mₖ, Σₖ) with its closed-form score.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    dim: usize,
    components: Vec<Component>,
    weights: Vec<f64>,
    centers: Vec<Vec<f64>>,
}

pub fn make_gaussian_mixture(spec: &GaussianMixtureSpec) -> Result<GaussianMixture> {
    GaussianMixture::new(spec)
}

impl GaussianMixture {
    pub fn new(spec: &GaussianMixtureSpec) -> Result<Self> {
        let k = spec.weights.len();
        if k == 0 {
            return Err(Error::InvalidTarget("mixture needs at least one component".into()));
        }
        if spec.means.len() != k || spec.covariances.len() != k {
            return Err(Error::InvalidTarget(format!(
                "{k} weights but {} means and {} covariances",
                spec.means.len(),
                spec.covariances.len()
            )));
        }
        if spec.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidTarget("weights must be finite and nonnegative".into()));
        }
        let total: f64 = spec.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidTarget(format!("weights sum to {total}, not 1")));
        }
        let dim = spec.means[0].len();
        if dim == 0 {
            return Err(Error::InvalidTarget("dimension must be positive".into()));
        }

        let mut components = Vec::with_capacity(k);
        for (idx, ((w, mean), cov)) in spec
            .weights
            .iter()
            .zip(&spec.means)
            .zip(&spec.covariances)
            .enumerate()
        {
            if mean.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: mean.len() });
            }
            if cov.len() != dim || cov.iter().any(|row| row.len() != dim) {
                return Err(Error::InvalidTarget(format!("covariance {idx} is not {dim}×{dim}")));
            }
            let m = DMatrix::from_fn(dim, dim, |i, j| cov[i][j]);
            for i in 0..dim {
                for j in 0..i {
                    let (a, b) = (m[(i, j)], m[(j, i)]);
                    if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                        return Err(Error::NotPositiveDefinite { index: idx });
                    }
                }
            }
            let chol = m
                .clone()
                .cholesky()
                .ok_or(Error::NotPositiveDefinite { index: idx })?;
            let l = chol.l();
            let log_det: f64 = 2.0 * (0..dim).map(|i| l[(i, i)].ln()).sum::<f64>();
            let inv = chol.inverse();
            components.push(Component {
                log_weight: w.ln(),
                mean: mean.clone(),
                precision: (0..dim * dim).map(|p| inv[(p / dim, p % dim)]).collect(),
                chol: (0..dim * dim).map(|p| l[(p / dim, p % dim)]).collect(),
                log_norm: -0.5 * (dim as f64 * LN_2PI + log_det),
            });
        }

        Ok(Self {
            dim,
            components,
            weights: spec.weights.clone(),
            centers: spec.means.clone(),
        })
    }

    /// Per-component log of wₖ N(x; mₖ, Σₖ), plus P(x−m) for the score.
    fn component_terms(&self, x: &[f64], with_score: bool) -> Vec<(f64, Vec<f64>)> {
        let d = self.dim;
        let mut diff = vec![0.0; d];
        self.components
            .iter()
            .map(|c| {
                for i in 0..d {
                    diff[i] = x[i] - c.mean[i];
                }
                let mut quad = 0.0;
                let mut pd = if with_score { vec![0.0; d] } else { Vec::new() };
                for i in 0..d {
                    let row = &c.precision[i * d..(i + 1) * d];
                    let s: f64 = row.iter().zip(&diff).map(|(p, v)| p * v).sum();
                    quad += diff[i] * s;
                    if with_score {
                        pd[i] = s;
                    }
                }
                (c.log_weight + c.log_norm - 0.5 * quad, pd)
            })
            .collect()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    /// Exact draw from component `k`.
    pub fn sample_component<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<f64> {
        let c = &self.components[k];
        let d = self.dim;
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        (0..d)
            .map(|i| c.mean[i] + (0..=i).map(|j| c.chol[i * d + j] * z[j]).sum::<f64>())
            .collect()
    }

    /// Exact draw from the mixture.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = self.components.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = i;
                break;
            }
        }
        self.sample_component(k, rng)
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

impl Target for GaussianMixture {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let terms = self.component_terms(x, false);
        log_sum_exp(terms.iter().map(|t| t.0))
    }

    fn grad_log_density(&self, x: &[f64]) -> Option<Vec<f64>> {
        let terms = self.component_terms(x, true);
        let total = log_sum_exp(terms.iter().map(|t| t.0));
        let mut g = vec![0.0; self.dim];
        for (lw, pd) in &terms {
            let r = (lw - total).exp();
            for i in 0..self.dim {
                g[i] -= r * pd[i];
            }
        }
        Some(g)
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn mode_centers(&self) -> Option<&[Vec<f64>]> {
        Some(&self.centers)
    }
}

/// Data and priors of the two-component normal mixture model.
///
/// Priors: μ₁, μ₂ ~ N(prior_mu_mean, prior_mu_var); σ₁, σ₂ ~ Gamma(shape, rate)
/// placed on the standard deviations; λ ~ U[0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixturePosteriorSpec {
    pub data: Vec<f64>,
    pub prior_mu_mean: f64,
    pub prior_mu_var: f64,
    pub prior_sigma_shape: f64,
    pub prior_sigma_rate: f64,
}

impl MixturePosteriorSpec {
    /// Vague priors centered on the data: N(mean(y), var(y)) for the means and
    /// Gamma(2, 2) for the standard deviations.
    pub fn with_data_priors(data: Vec<f64>) -> Self {
        let n = data.len().max(1) as f64;
        let mean = data.iter().sum::<f64>() / n;
        let var = data.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        Self {
            data,
            prior_mu_mean: mean,
            prior_mu_var: var,
            prior_sigma_shape: 2.0,
            prior_sigma_rate: 2.0,
        }
    }
}

/// Index of each coordinate in the posterior's 5-vector.
pub mod param {
    pub const MU1: usize = 0;
    pub const MU2: usize = 1;
    pub const SIGMA1: usize = 2;
    pub const SIGMA2: usize = 3;
    pub const LAMBDA: usize = 4;
    pub const NAMES: [&str; 5] = ["mu1", "mu2", "sigma1", "sigma2", "lambda"];
}

/// Posterior over (μ₁, μ₂, σ₁, σ₂, λ) under the observed-data mixture likelihood.
#[derive(Debug, Clone)]
pub struct MixturePosterior {
    spec: MixturePosteriorSpec,
    gamma_log_norm: f64,
}

pub fn make_mixture_posterior(spec: MixturePosteriorSpec) -> Result<MixturePosterior> {
    MixturePosterior::new(spec)
}

impl MixturePosterior {
    pub fn new(spec: MixturePosteriorSpec) -> Result<Self> {
        if spec.data.is_empty() {
            return Err(Error::InvalidTarget("mixture posterior needs at least one observation".into()));
        }
        if spec.data.iter().any(|y| !y.is_finite()) {
            return Err(Error::InvalidTarget("observations must be finite".into()));
        }
        if !(spec.prior_mu_var > 0.0 && spec.prior_mu_var.is_finite()) {
            return Err(Error::InvalidTarget("prior_mu_var must be positive".into()));
        }
        if !(spec.prior_sigma_shape > 0.0 && spec.prior_sigma_rate > 0.0) {
            return Err(Error::InvalidTarget("gamma prior shape and rate must be positive".into()));
        }
        let a = spec.prior_sigma_shape;
        let b = spec.prior_sigma_rate;
        let gamma_log_norm = a * b.ln() - ln_gamma(a);
        Ok(Self { spec, gamma_log_norm })
    }

    pub fn spec(&self) -> &MixturePosteriorSpec {
        &self.spec
    }

    fn in_support(x: &[f64]) -> bool {
        x[param::SIGMA1] > 0.0
            && x[param::SIGMA2] > 0.0
            && (0.0..=1.0).contains(&x[param::LAMBDA])
            && x.iter().all(|v| v.is_finite())
    }

    /// Observed-data log-likelihood Σᵢ log(λN(yᵢ; μ₁, σ₁²) + (1−λ)N(yᵢ; μ₂, σ₂²)).
    pub fn log_likelihood(&self, x: &[f64]) -> f64 {
        if !Self::in_support(x) {
            return f64::NEG_INFINITY;
        }
        let (mu1, mu2, s1, s2, lam) = (x[0], x[1], x[2], x[3], x[4]);
        let c1 = lam.ln() - s1.ln() - 0.5 * LN_2PI;
        let c2 = (1.0 - lam).ln() - s2.ln() - 0.5 * LN_2PI;
        let (h1, h2) = (0.5 / (s1 * s1), 0.5 / (s2 * s2));
        self.spec
            .data
            .iter()
            .map(|y| {
                let a = c1 - h1 * (y - mu1).powi(2);
                let b = c2 - h2 * (y - mu2).powi(2);
                log_add_exp(a, b)
            })
            .sum()
    }

    fn log_prior(&self, x: &[f64]) -> f64 {
        let s = &self.spec;
        let normal = |m: f64| -0.5 * (LN_2PI + s.prior_mu_var.ln()) - 0.5 * (m - s.prior_mu_mean).powi(2) / s.prior_mu_var;
        let gamma = |v: f64| self.gamma_log_norm + (s.prior_sigma_shape - 1.0) * v.ln() - s.prior_sigma_rate * v;
        normal(x[0]) + normal(x[1]) + gamma(x[2]) + gamma(x[3])
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Lanczos approximation (g = 7, n = 9), accurate to ~1e-15 for positive arguments.
fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

impl Target for MixturePosterior {
    fn dim(&self) -> usize {
        5
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        if !Self::in_support(x) {
            return f64::NEG_INFINITY;
        }
        self.log_likelihood(x) + self.log_prior(x)
    }

    fn grad_log_density(&self, x: &[f64]) -> Option<Vec<f64>> {
        if !Self::in_support(x) {
            return Some(vec![f64::NAN; 5]);
        }
        let s = &self.spec;
        let (mu1, mu2, s1, s2, lam) = (x[0], x[1], x[2], x[3], x[4]);
        let c1 = lam.ln() - s1.ln();
        let c2 = (1.0 - lam).ln() - s2.ln();
        let (h1, h2) = (0.5 / (s1 * s1), 0.5 / (s2 * s2));
        let mut g = [0.0; 5];
        for y in &s.data {
            let (d1, d2) = (y - mu1, y - mu2);
            let a = c1 - h1 * d1 * d1;
            let b = c2 - h2 * d2 * d2;
            let l = log_add_exp(a, b);
            let (r1, r2) = ((a - l).exp(), (b - l).exp());
            g[0] += r1 * d1 / (s1 * s1);
            g[1] += r2 * d2 / (s2 * s2);
            g[2] += r1 * (d1 * d1 / (s1 * s1 * s1) - 1.0 / s1);
            g[3] += r2 * (d2 * d2 / (s2 * s2 * s2) - 1.0 / s2);
            g[4] += r1 / lam - r2 / (1.0 - lam);
        }
        g[0] -= (mu1 - s.prior_mu_mean) / s.prior_mu_var;
        g[1] -= (mu2 - s.prior_mu_mean) / s.prior_mu_var;
        g[2] += (s.prior_sigma_shape - 1.0) / s1 - s.prior_sigma_rate;
        g[3] += (s.prior_sigma_shape - 1.0) / s2 - s.prior_sigma_rate;
        Some(g.to_vec())
    }

    fn has_gradient(&self) -> bool {
        true
    }
}

/// The target restricted to a subset of coordinates, the rest frozen.
///
/// Ratios of view densities equal ratios of the full conditionals of the block.
#[derive(Debug, Clone)]
pub struct BlockView<T> {
    base: T,
    block: Vec<usize>,
    full: Vec<f64>,
}

pub fn block_view<T: Target>(target: T, block: &[usize], complement_values: &[f64]) -> Result<BlockView<T>> {
    BlockView::new(target, block, complement_values)
}

impl<T: Target> BlockView<T> {
    /// `complement_values` is a full-length point whose block coordinates are ignored.
    pub fn new(base: T, block: &[usize], complement_values: &[f64]) -> Result<Self> {
        let dim = base.dim();
        if complement_values.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: complement_values.len() });
        }
        if block.is_empty() {
            return Err(Error::InvalidTarget("block must contain at least one index".into()));
        }
        for (pos, &i) in block.iter().enumerate() {
            if i >= dim {
                return Err(Error::IndexOutOfRange { index: i, dim });
            }
            if block[..pos].contains(&i) {
                return Err(Error::InvalidTarget(format!("block index {i} repeated")));
            }
        }
        Ok(Self {
            base,
            block: block.to_vec(),
            full: complement_values.to_vec(),
        })
    }

    /// Replace the frozen coordinates without rebuilding the view.
    pub fn set_complement(&mut self, values: &[f64]) {
        self.full.copy_from_slice(values);
    }

    pub fn block(&self) -> &[usize] {
        &self.block
    }

    /// Embed a block point into the full space.
    pub fn embed(&self, x: &[f64]) -> Vec<f64> {
        let mut full = self.full.clone();
        for (&i, v) in self.block.iter().zip(x) {
            full[i] = *v;
        }
        full
    }

    /// Extract the block coordinates of a full point.
    pub fn project(&self, full: &[f64]) -> Vec<f64> {
        self.block.iter().map(|&i| full[i]).collect()
    }
}

impl<T: Target> Target for BlockView<T> {
    fn dim(&self) -> usize {
        self.block.len()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        self.base.log_density(&self.embed(x))
    }

    fn grad_log_density(&self, x: &[f64]) -> Option<Vec<f64>> {
        let g = self.base.grad_log_density(&self.embed(x))?;
        Some(self.block.iter().map(|&i| g[i]).collect())
    }

    fn has_gradient(&self) -> bool {
        self.base.has_gradient()
    }
}
