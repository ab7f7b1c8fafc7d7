//! Proposal kernels and repulsive pseudo-densities.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::target::Target;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Gaussian random walk, isotropic variance `s` or a full covariance.
#[derive(Debug, Clone, PartialEq)]
pub enum RandomWalkKernel {
    Isotropic { s: f64 },
    Covariance { dim: usize, chol: Vec<f64>, precision: Vec<f64>, log_det: f64 },
}

impl RandomWalkKernel {
    pub fn isotropic(s: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidKernel(format!("random-walk variance must be positive, got {s}")));
        }
        Ok(Self::Isotropic { s })
    }

    pub fn with_covariance(cov: &[Vec<f64>]) -> Result<Self> {
        let dim = cov.len();
        if dim == 0 || cov.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidKernel("covariance must be square and nonempty".into()));
        }
        let m = DMatrix::from_fn(dim, dim, |i, j| cov[i][j]);
        if (0..dim).any(|i| (0..i).any(|j| (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * m[(i, j)].abs().max(1.0))) {
            return Err(Error::InvalidKernel("covariance is not symmetric".into()));
        }
        let chol = m
            .cholesky()
            .ok_or_else(|| Error::InvalidKernel("covariance is not positive definite".into()))?;
        let l = chol.l();
        let inv = chol.inverse();
        Ok(Self::Covariance {
            dim,
            chol: (0..dim * dim).map(|p| l[(p / dim, p % dim)]).collect(),
            precision: (0..dim * dim).map(|p| inv[(p / dim, p % dim)]).collect(),
            log_det: 2.0 * (0..dim).map(|i| l[(i, i)].ln()).sum::<f64>(),
        })
    }

    /// log q(from, to).
    pub fn log_transition(&self, from: &[f64], to: &[f64]) -> f64 {
        let d = from.len();
        match self {
            Self::Isotropic { s } => {
                let sq: f64 = from.iter().zip(to).map(|(a, b)| (b - a) * (b - a)).sum();
                -0.5 * d as f64 * (LN_2PI + s.ln()) - 0.5 * sq / s
            }
            Self::Covariance { precision, log_det, .. } => {
                let diff: Vec<f64> = from.iter().zip(to).map(|(a, b)| b - a).collect();
                let mut quad = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        quad += diff[i] * precision[i * d + j] * diff[j];
                    }
                }
                -0.5 * (d as f64 * LN_2PI + log_det) - 0.5 * quad
            }
        }
    }
}

pub fn rw_propose<R: Rng + ?Sized>(state: &[f64], kernel: &RandomWalkKernel, rng: &mut R) -> Vec<f64> {
    match kernel {
        RandomWalkKernel::Isotropic { s } => {
            let sd = s.sqrt();
            state
                .iter()
                .map(|x| x + sd * rng.sample::<f64, _>(StandardNormal))
                .collect()
        }
        RandomWalkKernel::Covariance { dim, chol, .. } => {
            let d = *dim;
            let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            (0..d)
                .map(|i| state[i] + (0..=i).map(|j| chol[i * d + j] * z[j]).sum::<f64>())
                .collect()
        }
    }
}

/// Langevin kernel N(θ + ½h∇log π(θ), hI).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LangevinKernel {
    pub h: f64,
}

impl LangevinKernel {
    pub fn new(h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidKernel(format!("Langevin step must be positive, got {h}")));
        }
        Ok(Self { h })
    }

    pub fn drift(&self, state: &[f64], grad: &[f64]) -> Vec<f64> {
        state.iter().zip(grad).map(|(x, g)| x + 0.5 * self.h * g).collect()
    }

    /// Draw given the gradient at `state`.
    pub fn propose_with_grad<R: Rng + ?Sized>(&self, state: &[f64], grad: &[f64], rng: &mut R) -> Vec<f64> {
        let sd = self.h.sqrt();
        self.drift(state, grad)
            .into_iter()
            .map(|m| m + sd * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    /// log q(from, to) given the gradient at `from`.
    pub fn log_transition_with_grad(&self, from: &[f64], grad_from: &[f64], to: &[f64]) -> f64 {
        let d = from.len() as f64;
        let sq: f64 = self
            .drift(from, grad_from)
            .iter()
            .zip(to)
            .map(|(m, y)| (y - m) * (y - m))
            .sum();
        -0.5 * d * (LN_2PI + self.h.ln()) - 0.5 * sq / self.h
    }
}

/// Gradient at `state`, failing when absent or non-finite.
pub fn checked_gradient<T: Target + ?Sized>(target: &T, state: &[f64]) -> Result<Vec<f64>> {
    let g = target.grad_log_density(state).ok_or(Error::GradientUnavailable)?;
    if g.iter().all(|v| v.is_finite()) {
        Ok(g)
    } else {
        Err(Error::NonFiniteGradient { state: state.to_vec() })
    }
}

pub fn langevin_propose<T: Target + ?Sized, R: Rng + ?Sized>(
    target: &T,
    state: &[f64],
    kernel: &LangevinKernel,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let g = checked_gradient(target, state)?;
    Ok(kernel.propose_with_grad(state, &g, rng))
}

pub fn langevin_log_transition<T: Target + ?Sized>(
    target: &T,
    from: &[f64],
    to: &[f64],
    kernel: &LangevinKernel,
) -> Result<f64> {
    let g = checked_gradient(target, from)?;
    Ok(kernel.log_transition_with_grad(from, &g, to))
}

/// Index of the point closest to `phi`; ties go to the lowest index.
pub fn nearest_index<'a>(phi: &[f64], others: impl IntoIterator<Item = &'a [f64]>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, p) in others.into_iter().enumerate() {
        let d2 = sq_dist(phi, p);
        if best.is_none_or(|(_, b)| d2 < b) {
            best = Some((j, d2));
        }
    }
    best.map(|(j, _)| j)
}

/// Mirror image of `theta` across the line through `a` and `b` (planar).
pub fn reflect_across_line(theta: &[f64], a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if theta.len() != 2 || a.len() != 2 || b.len() != 2 {
        return Err(Error::UnsupportedDimension(theta.len()));
    }
    let (ux, uy) = (b[0] - a[0], b[1] - a[1]);
    let norm2 = ux * ux + uy * uy;
    if norm2 == 0.0 {
        return Err(Error::DegenerateLine);
    }
    let (vx, vy) = (theta[0] - a[0], theta[1] - a[1]);
    let t = (vx * ux + vy * uy) / norm2;
    let (px, py) = (t * ux, t * uy);
    Ok(vec![a[0] + 2.0 * px - vx, a[1] + 2.0 * py - vy])
}

/// Pinball move: reflect θᵢ across the line through φᵢ and its nearest other particle.
pub fn reflect_pinball<'a>(
    theta_i: &[f64],
    phi_i: &[f64],
    others: impl IntoIterator<Item = &'a [f64]> + Clone,
) -> Result<Vec<f64>> {
    if theta_i.len() != 2 {
        return Err(Error::UnsupportedDimension(theta_i.len()));
    }
    let k = nearest_index(phi_i, others.clone())
        .ok_or_else(|| Error::InvalidKernel("pinball reflection needs at least one other particle".into()))?;
    let star = others.into_iter().nth(k).expect("index from nearest_index");
    reflect_across_line(theta_i, star, phi_i)
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Width ξ, depth ν and a log-density offset for the repulsion exponent.
///
/// The exponent uses π(θⱼ)·e^{-offset} in place of π(θⱼ), which rescales ξ by
/// e^{offset}. It exists for targets whose unnormalized log-density sits far
/// below zero, where π(θⱼ) itself underflows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepulsiveConfig {
    pub xi: f64,
    #[serde(default)]
    pub nu: f64,
    #[serde(default)]
    pub log_scale_offset: f64,
}

impl RepulsiveConfig {
    pub fn new(xi: f64, nu: f64) -> Result<Self> {
        let cfg = Self { xi, nu, log_scale_offset: 0.0 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn off() -> Self {
        Self { xi: 0.0, nu: 0.0, log_scale_offset: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.xi >= 0.0 && self.xi.is_finite()) {
            return Err(Error::InvalidKernel(format!("xi must be finite and nonnegative, got {}", self.xi)));
        }
        if !(0.0..=1.0).contains(&self.nu) {
            return Err(Error::InvalidKernel(format!("nu must lie in [0, 1], got {}", self.nu)));
        }
        if !self.log_scale_offset.is_finite() {
            return Err(Error::InvalidKernel("log_scale_offset must be finite".into()));
        }
        Ok(())
    }
}

/// Σⱼ −ξ / (π(θⱼ)‖x−θⱼ‖²) from cached log π(θⱼ). Zero when ξ = 0.
pub fn repulsion<'a>(point: &[f64], others: impl IntoIterator<Item = (&'a [f64], f64)>, cfg: &RepulsiveConfig) -> f64 {
    if cfg.xi == 0.0 {
        return 0.0;
    }
    let ln_xi = cfg.xi.ln();
    let mut total = 0.0;
    for (p, log_pi) in others {
        let d2 = sq_dist(point, p);
        if d2 == 0.0 || log_pi == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        total -= (ln_xi - (log_pi - cfg.log_scale_offset) - d2.ln()).exp();
    }
    total
}

/// log π^R(point) using cached log-densities for the other particles.
pub fn repulsive_log_density_cached<'a>(
    log_pi_point: f64,
    point: &[f64],
    others: impl IntoIterator<Item = (&'a [f64], f64)>,
    cfg: &RepulsiveConfig,
) -> f64 {
    if log_pi_point == f64::NEG_INFINITY {
        return log_pi_point;
    }
    log_pi_point + repulsion(point, others, cfg)
}

/// log π^R(point) = log π(point) − Σⱼ ξ / (π(θⱼ)‖point−θⱼ‖²).
pub fn repulsive_log_density<T: Target + ?Sized>(target: &T, point: &[f64], others: &[Vec<f64>], cfg: &RepulsiveConfig) -> f64 {
    let cached: Vec<f64> = others.iter().map(|p| target.log_density(p)).collect();
    repulsive_log_density_cached(
        target.log_density(point),
        point,
        others.iter().map(Vec::as_slice).zip(cached.iter().copied()),
        cfg,
    )
}

/// log of ĝ/g = log((1−ν) + ν∏ⱼ e^{−ξ/(g(φⱼ)‖x−φⱼ‖²)}), always in [log(1−ν), 0].
pub fn hole_log_factor<'a>(point: &[f64], holes: impl IntoIterator<Item = (&'a [f64], f64)>, cfg: &RepulsiveConfig) -> f64 {
    if cfg.nu == 0.0 || cfg.xi == 0.0 {
        return 0.0;
    }
    let s = repulsion(point, holes, cfg);
    if s == f64::NEG_INFINITY {
        return (1.0 - cfg.nu).ln();
    }
    // (1−ν) + ν e^S = 1 + ν(e^S − 1)
    (cfg.nu * s.exp_m1()).ln_1p()
}

/// Unnormalized log ĝ. With `g` replaced by the target this is log π²ᴿ.
pub fn repulsive_g_log_density<G: Target + ?Sized>(g: &G, point: &[f64], holes: &[Vec<f64>], cfg: &RepulsiveConfig) -> f64 {
    let log_g_holes: Vec<f64> = holes.iter().map(|h| g.log_density(h)).collect();
    let lg = g.log_density(point);
    lg + hole_log_factor(point, holes.iter().map(Vec::as_slice).zip(log_g_holes.iter().copied()), cfg)
}

/// A normalized density that can also be sampled exactly.
pub trait Sampleable: Target {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64>;
}

/// Result of the C′ estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormConstEstimate {
    pub c_prime: f64,
    /// Set when no draw from g − ĝ was obtained and C′ fell back to 1.
    pub no_hole: bool,
    pub accepted: usize,
    pub attempts: usize,
}

/// Estimate C′ = ∫ĝ / ∫g from draws of p ∝ g − ĝ.
///
/// Draws are obtained by rejection from g with acceptance 1 − ĝ/g. The target
/// is `m` accepted draws; if fewer than `m` arrive within `100·m` attempts the
/// target drops to `fallback_m`, and attempts stop at `10⁴·m` in any case.
pub fn estimate_norm_const_ratio<G: Sampleable + ?Sized, R: Rng + ?Sized>(
    g: &G,
    cfg: &RepulsiveConfig,
    holes: &[Vec<f64>],
    m: usize,
    fallback_m: usize,
    rng: &mut R,
) -> NormConstEstimate {
    if cfg.nu == 0.0 || cfg.xi == 0.0 || holes.is_empty() || m == 0 {
        return NormConstEstimate { c_prime: 1.0, no_hole: true, accepted: 0, attempts: 0 };
    }
    let log_g_holes: Vec<f64> = holes.iter().map(|h| g.log_density(h)).collect();
    let hole_iter = || holes.iter().map(Vec::as_slice).zip(log_g_holes.iter().copied());

    let mut target_m = m;
    let max_attempts = m.saturating_mul(10_000);
    let (mut num, mut den) = (0.0, 0.0);
    let (mut accepted, mut attempts) = (0usize, 0usize);
    while accepted < target_m && attempts < max_attempts {
        attempts += 1;
        if attempts == 100 * m + 1 && accepted < m {
            target_m = fallback_m.min(m).max(1);
            if accepted >= target_m {
                break;
            }
        }
        let x = g.draw(rng);
        let log_r = hole_log_factor(&x, hole_iter(), cfg);
        let one_minus_r = -log_r.exp_m1();
        if rng.random::<f64>() < one_minus_r {
            accepted += 1;
            let inv = 1.0 / one_minus_r;
            num += log_r.exp() * inv;
            den += inv;
        }
    }
    if accepted == 0 {
        return NormConstEstimate { c_prime: 1.0, no_hole: true, accepted, attempts };
    }
    NormConstEstimate { c_prime: (num / den).clamp(f64::MIN_POSITIVE, 1.0), no_hole: false, accepted, attempts }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::target::{make_gaussian_mixture, FnTarget, GaussianMixtureSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn std_normal_1d() -> FnTarget {
        FnTarget::new(1, |x| -0.5 * x[0] * x[0]).with_gradient(|x| vec![-x[0]])
    }

    #[test]
    fn rw_moments() {
        let k = RandomWalkKernel::isotropic(4.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let draws: Vec<Vec<f64>> = (0..n).map(|_| rw_propose(&[1.0, 1.0], &k, &mut rng)).collect();
        let mean: Vec<f64> = (0..2).map(|c| draws.iter().map(|d| d[c]).sum::<f64>() / n as f64).collect();
        let se = (4.0 / n as f64).sqrt();
        for m in &mean {
            assert!((m - 1.0).abs() < 3.0 * se, "{mean:?}");
        }
        for a in 0..2 {
            for b in 0..2 {
                let c = draws.iter().map(|d| (d[a] - mean[a]) * (d[b] - mean[b])).sum::<f64>() / (n - 1) as f64;
                let expect = if a == b { 4.0 } else { 0.0 };
                assert!((c - expect).abs() < 0.05 * 4.0, "cov[{a}][{b}] = {c}");
            }
        }
    }

    #[test]
    fn rw_full_covariance_moments() {
        let cov = vec![vec![2.0, 0.8], vec![0.8, 1.0]];
        let k = RandomWalkKernel::with_covariance(&cov).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let draws: Vec<Vec<f64>> = (0..n).map(|_| rw_propose(&[0.0, 0.0], &k, &mut rng)).collect();
        for a in 0..2 {
            for b in 0..2 {
                let c = draws.iter().map(|d| d[a] * d[b]).sum::<f64>() / n as f64;
                assert!((c - cov[a][b]).abs() < 0.05 * 2.0, "cov[{a}][{b}] = {c}");
            }
        }
        let direct = -0.5 * (2.0 * LN_2PI + (2.0f64 - 0.64).ln());
        assert!((k.log_transition(&[0.0, 0.0], &[0.0, 0.0]) - direct).abs() < 1e-12);
    }

    #[test]
    fn rw_rejects_bad_variance() {
        assert!(RandomWalkKernel::isotropic(0.0).is_err());
        assert!(RandomWalkKernel::isotropic(-1.0).is_err());
        assert!(RandomWalkKernel::with_covariance(&[vec![1.0, 2.0], vec![2.0, 1.0]]).is_err());
    }

    #[test]
    fn langevin_mean_for_standard_normal() {
        let t = std_normal_1d();
        let k = LangevinKernel::new(1.0).unwrap();
        assert_eq!(k.drift(&[2.0], &t.grad_log_density(&[2.0]).unwrap()), vec![1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let mean = (0..n).map(|_| langevin_propose(&t, &[2.0], &k, &mut rng).unwrap()[0]).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 3.0 / (n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn langevin_zero_drift_at_toy_midpoint() {
        let t = make_gaussian_mixture(&GaussianMixtureSpec::two_mode_toy()).unwrap();
        let k = LangevinKernel::new(2.0).unwrap();
        let g = checked_gradient(&t, &[2.5, 2.5]).unwrap();
        assert_eq!(k.drift(&[2.5, 2.5], &g), vec![2.5, 2.5]);
    }

    #[test]
    fn langevin_errors() {
        let no_grad = FnTarget::new(1, |x| -x[0] * x[0]);
        let k = LangevinKernel::new(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(langevin_propose(&no_grad, &[0.0], &k, &mut rng), Err(Error::GradientUnavailable)));
        let bad = FnTarget::new(1, |_| 0.0).with_gradient(|_| vec![f64::NAN]);
        match langevin_propose(&bad, &[0.25], &k, &mut rng) {
            Err(Error::NonFiniteGradient { state }) => assert_eq!(state, vec![0.25]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn langevin_log_transition_closed_forms() {
        let t = std_normal_1d();
        let k = LangevinKernel::new(2.0).unwrap();
        let v = langevin_log_transition(&t, &[0.0], &[0.0], &k).unwrap();
        assert!((v - (-0.5 * (4.0 * std::f64::consts::PI).ln())).abs() < 1e-14);
        let toy = make_gaussian_mixture(&GaussianMixtureSpec::two_mode_toy()).unwrap();
        let k = LangevinKernel::new(0.7).unwrap();
        let from = [1.0, -0.5];
        let to = k.drift(&from, &toy.grad_log_density(&from).unwrap());
        let v = langevin_log_transition(&toy, &from, &to, &k).unwrap();
        assert!((v + (2.0 * std::f64::consts::PI * 0.7).ln()).abs() < 1e-12);
    }

    #[test]
    fn langevin_transition_integrates_to_one() {
        let toy = make_gaussian_mixture(&GaussianMixtureSpec::two_mode_toy()).unwrap();
        let k = LangevinKernel::new(2.0).unwrap();
        let from = [1.3, 0.4];
        let c = k.drift(&from, &toy.grad_log_density(&from).unwrap());
        let step = 0.025;
        let half = 10.0;
        let n = (2.0 * half / step) as usize;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let to = [c[0] - half + (i as f64 + 0.5) * step, c[1] - half + (j as f64 + 0.5) * step];
                total += langevin_log_transition(&toy, &from, &to, &k).unwrap().exp() * step * step;
            }
        }
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }

    #[test]
    fn reflect_across_x_axis() {
        let r = reflect_pinball(&[0.0, 1.0], &[1.0, 0.0], [&[0.0, 0.0][..]]).unwrap();
        assert!((r[0] - 0.0).abs() < 1e-15 && (r[1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn reflect_fixed_point_and_involution() {
        let a = [0.3, -1.2];
        let b = [2.0, 0.5];
        let on_line = [a[0] + 0.4 * (b[0] - a[0]), a[1] + 0.4 * (b[1] - a[1])];
        let r = reflect_across_line(&on_line, &a, &b).unwrap();
        assert!(sq_dist(&r, &on_line).sqrt() < 1e-12);
        let theta = [4.0, -3.0];
        let once = reflect_across_line(&theta, &a, &b).unwrap();
        let twice = reflect_across_line(&once, &a, &b).unwrap();
        assert!(sq_dist(&twice, &theta).sqrt() < 1e-12);
    }

    #[test]
    fn reflect_errors_and_ties() {
        let others = [vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(matches!(
            reflect_pinball(&[0.0, 0.0], &[1.0, 0.0], others.iter().map(Vec::as_slice)),
            Err(Error::DegenerateLine)
        ));
        assert!(matches!(
            reflect_pinball(&[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0], [&[0.0, 0.0, 1.0][..]]),
            Err(Error::UnsupportedDimension(3))
        ));
        // φ equidistant from both; the lower index wins
        let tie = [vec![2.0, 0.0], vec![0.0, 2.0]];
        assert_eq!(nearest_index(&[1.0, 1.0], tie.iter().map(Vec::as_slice)), Some(0));
    }

    #[test]
    fn repulsion_closed_forms() {
        let toy = make_gaussian_mixture(&GaussianMixtureSpec::two_mode_toy()).unwrap();
        let others = vec![vec![0.0, 0.0], vec![5.0, 5.0]];
        let off = RepulsiveConfig::new(0.0, 0.0).unwrap();
        let p = [1.0, 2.0];
        assert_eq!(repulsive_log_density(&toy, &p, &others, &off), toy.log_density(&p));
        let cfg = RepulsiveConfig::new(1e-5, 0.0).unwrap();
        assert_eq!(repulsive_log_density(&toy, &[5.0, 5.0], &others, &cfg), f64::NEG_INFINITY);
        // direct product formula
        let expect = toy.log_density(&p)
            - others
                .iter()
                .map(|o| 1e-5 / (toy.log_density(o).exp() * sq_dist(&p, o)))
                .sum::<f64>();
        assert!((repulsive_log_density(&toy, &p, &others, &cfg) - expect).abs() < 1e-14);
    }

    #[test]
    fn repulsion_small_at_distance_for_pinned_configuration() {
        let toy = make_gaussian_mixture(&GaussianMixtureSpec::two_mode_toy()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let particles: Vec<Vec<f64>> = (0..10).map(|_| toy.sample(&mut rng)).collect();
        let cfg = RepulsiveConfig::new(1e-5, 0.0).unwrap();
        let mut checked = 0;
        while checked < 200 {
            let p = toy.sample(&mut rng);
            if particles.iter().any(|o| sq_dist(&p, o) < 1.0) {
                continue;
            }
            let ratio = (repulsive_log_density(&toy, &p, &particles, &cfg) - toy.log_density(&p)).exp();
            assert!(ratio > 0.9 && ratio <= 1.0, "{ratio}");
            checked += 1;
        }
    }

    #[test]
    fn hole_factor_limits() {
        let toy = make_gaussian_mixture(&GaussianMixtureSpec::two_mode_toy()).unwrap();
        let holes = vec![vec![0.5, 0.5], vec![4.0, 5.0]];
        let p = [1.5, 1.0];
        let nu0 = RepulsiveConfig::new(1e-2, 0.0).unwrap();
        assert_eq!(repulsive_g_log_density(&toy, &p, &holes, &nu0), toy.log_density(&p));
        let cfg = RepulsiveConfig::new(1e-2, 0.3).unwrap();
        let at_hole = repulsive_g_log_density(&toy, &holes[0], &holes, &cfg);
        assert!((at_hole - (0.7f64.ln() + toy.log_density(&holes[0]))).abs() < 1e-14);
        let big = RepulsiveConfig::new(1e3, 0.3).unwrap();
        let v = repulsive_g_log_density(&toy, &p, &holes, &big);
        assert!((v - (0.7f64.ln() + toy.log_density(&p))).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(RepulsiveConfig::new(-1.0, 0.0).is_err());
        assert!(RepulsiveConfig::new(1.0, 1.5).is_err());
        assert!(RepulsiveConfig::new(1.0, 1.0).is_ok());
    }
}
