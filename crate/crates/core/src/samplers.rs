//! Markov chain samplers over particle systems.
//!
//! Each step function moves a single particle. `run_chain` sweeps all
//! particles in index order per iteration, always using the freshest positions
//! and cached log-densities of the other particles.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::proposals::{
    checked_gradient, reflect_pinball, repulsion, rw_propose, LangevinKernel, RandomWalkKernel, RepulsiveConfig,
};
use crate::target::Target;

/// N points in D dimensions, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleVector {
    n: usize,
    dim: usize,
    data: Vec<f64>,
}

impl ParticleVector {
    pub fn new(n: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || dim == 0 {
            return Err(Error::DegeneratePopulation("need at least one particle and one dimension".into()));
        }
        if data.len() != n * dim {
            return Err(Error::DimensionMismatch { expected: n * dim, got: data.len() });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegeneratePopulation("particle coordinates must be finite".into()));
        }
        Ok(Self { n, dim, data })
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map_or(0, Vec::len);
        if let Some(p) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
        }
        Self::new(points.len(), dim, points.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn set_point(&mut self, i: usize, x: &[f64]) {
        self.data[i * self.dim..(i + 1) * self.dim].copy_from_slice(x);
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + Clone {
        self.data.chunks_exact(self.dim)
    }

    pub fn to_points(&self) -> Vec<Vec<f64>> {
        self.points().map(<[f64]>::to_vec).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for p in self.points() {
            for (a, b) in m.iter_mut().zip(p) {
                *a += b;
            }
        }
        m.iter_mut().for_each(|v| *v /= self.n as f64);
        m
    }
}

/// The other particles seen by particle `skip`, with cached log π values.
#[derive(Debug, Clone, Copy)]
pub struct Others<'a> {
    points: &'a [f64],
    log_density: &'a [f64],
    dim: usize,
    skip: Option<usize>,
}

impl<'a> Others<'a> {
    pub fn new(points: &'a [f64], log_density: &'a [f64], dim: usize, skip: Option<usize>) -> Self {
        debug_assert_eq!(points.len(), log_density.len() * dim);
        Self { points, log_density, dim, skip }
    }

    pub fn of(particles: &'a ParticleVector, log_density: &'a [f64], i: usize) -> Self {
        Self::new(particles.as_slice(), log_density, particles.dim(), Some(i))
    }

    pub fn none() -> Self {
        Self { points: &[], log_density: &[], dim: 1, skip: None }
    }

    pub fn len(&self) -> usize {
        let n = self.log_density.len();
        match self.skip {
            Some(s) if s < n => n - 1,
            _ => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self) -> impl Iterator<Item = &'a [f64]> + Clone {
        let (points, dim, skip) = (self.points, self.dim, self.skip);
        (0..self.log_density.len())
            .filter(move |&j| Some(j) != skip)
            .map(move |j| &points[j * dim..(j + 1) * dim])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'a [f64], f64)> + Clone {
        let (points, ld, dim, skip) = (self.points, self.log_density, self.dim, self.skip);
        (0..ld.len())
            .filter(move |&j| Some(j) != skip)
            .map(move |j| (&points[j * dim..(j + 1) * dim], ld[j]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    AcceptedStage1,
    AcceptedStage2,
    Rejected,
}

impl Stage {
    pub fn accepted(self) -> bool {
        self != Stage::Rejected
    }
}

/// Propose/Correction tallies of the repulsive samplers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectionCounters {
    pub accepted_at_propose: u64,
    pub accepted_at_correction: u64,
}

impl CorrectionCounters {
    pub fn add(&mut self, other: CorrectionCounters) {
        self.accepted_at_propose += other.accepted_at_propose;
        self.accepted_at_correction += other.accepted_at_correction;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub new_point: Vec<f64>,
    pub new_log_density: f64,
    /// Gradient at `new_point`, when the sampler computed it.
    pub new_grad: Option<Vec<f64>>,
    pub stage: Stage,
    /// Increments from this step.
    pub counters: CorrectionCounters,
}

impl StepOutcome {
    fn stay(state: &[f64], log_pi: f64, grad: Option<&[f64]>, counters: CorrectionCounters) -> Self {
        Self {
            new_point: state.to_vec(),
            new_log_density: log_pi,
            new_grad: grad.map(<[f64]>::to_vec),
            stage: Stage::Rejected,
            counters,
        }
    }

    fn moved(stage: Stage, point: Vec<f64>, log_pi: f64, grad: Option<Vec<f64>>, counters: CorrectionCounters) -> Self {
        Self { new_point: point, new_log_density: log_pi, new_grad: grad, stage, counters }
    }
}

/// Metropolis test: accept with probability min{1, exp(log_ratio)}. NaN rejects.
#[inline]
pub fn metropolis_accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    let u: f64 = rng.random();
    log_ratio >= 0.0 || u < log_ratio.exp()
}

/// log(1 − eᵃ) for a ≤ 0.
#[inline]
pub fn ln_one_minus_exp(a: f64) -> f64 {
    if a > -std::f64::consts::LN_2 {
        (-a.exp_m1()).ln()
    } else {
        (-a.exp()).ln_1p()
    }
}

fn check_current(state: &[f64], log_pi: f64) -> Result<()> {
    if log_pi == f64::NEG_INFINITY || log_pi.is_nan() {
        return Err(Error::InvalidCurrentState { state: state.to_vec() });
    }
    Ok(())
}

/// Metropolis-Hastings decision for a given candidate `phi`.
///
/// `log_q_ratio` is log q(φ,θ) − log q(θ,φ); zero for symmetric kernels.
pub fn mh_transition<T: Target + ?Sized, R: Rng + ?Sized>(
    target: &T,
    state: &[f64],
    log_pi: f64,
    phi: Vec<f64>,
    log_q_ratio: f64,
    rng: &mut R,
) -> Result<StepOutcome> {
    check_current(state, log_pi)?;
    let lp = target.log_density(&phi);
    if metropolis_accept(lp - log_pi + log_q_ratio, rng) {
        Ok(StepOutcome::moved(Stage::AcceptedStage1, phi, lp, None, CorrectionCounters::default()))
    } else {
        Ok(StepOutcome::stay(state, log_pi, None, CorrectionCounters::default()))
    }
}

/// One random-walk Metropolis-Hastings step.
pub fn mh_step<T: Target + ?Sized, R: Rng + ?Sized>(
    target: &T,
    q1: &RandomWalkKernel,
    state: &[f64],
    log_pi: f64,
    rng: &mut R,
) -> Result<StepOutcome> {
    check_current(state, log_pi)?;
    let phi = rw_propose(state, q1, rng);
    mh_transition(target, state, log_pi, phi, 0.0, rng)
}

/// One Metropolis-adjusted Langevin step. `grad` is the gradient at `state`
/// if already known.
pub fn mala_step<T: Target + ?Sized, R: Rng + ?Sized>(
    target: &T,
    kernel: &LangevinKernel,
    state: &[f64],
    log_pi: f64,
    grad: Option<&[f64]>,
    rng: &mut R,
) -> Result<StepOutcome> {
    check_current(state, log_pi)?;
    let owned;
    let g = match grad {
        Some(g) => g,
        None => {
            owned = checked_gradient(target, state)?;
            &owned
        }
    };
    let phi = kernel.propose_with_grad(state, g, rng);
    let lp = target.log_density(&phi);
    if lp == f64::NEG_INFINITY {
        return Ok(StepOutcome::stay(state, log_pi, Some(g), CorrectionCounters::default()));
    }
    let g_phi = checked_gradient(target, &phi)?;
    let log_ratio = lp - log_pi + kernel.log_transition_with_grad(&phi, &g_phi, state)
        - kernel.log_transition_with_grad(state, g, &phi);
    if metropolis_accept(log_ratio, rng) {
        Ok(StepOutcome::moved(Stage::AcceptedStage1, phi, lp, Some(g_phi), CorrectionCounters::default()))
    } else {
        Ok(StepOutcome::stay(state, log_pi, Some(g), CorrectionCounters::default()))
    }
}

/// Second-stage move of delayed rejection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SecondStage {
    /// ϑ drawn from the first-stage kernel centered at θ.
    RandomWalk,
    /// ϑ ~ N(φ + ½h∇log π(φ), hI).
    Langevin(LangevinKernel),
    /// ϑ is θ reflected across the line through φ and its nearest other particle.
    Pinball,
    /// No second attempt; reduces to plain Metropolis-Hastings.
    Disabled,
}

/// One two-stage delayed-rejection step with a random-walk first stage.
pub fn dra_step<T: Target + ?Sized, R: Rng + ?Sized>(
    target: &T,
    q1: &RandomWalkKernel,
    q2: &SecondStage,
    state: &[f64],
    log_pi: f64,
    others: &Others<'_>,
    rng: &mut R,
) -> Result<StepOutcome> {
    check_current(state, log_pi)?;
    if *q2 == SecondStage::Pinball && (state.len() != 2 || others.is_empty()) {
        return Err(if state.len() != 2 {
            Error::UnsupportedDimension(state.len())
        } else {
            Error::InvalidKernel("pinball reflection needs at least one other particle".into())
        });
    }
    let none = CorrectionCounters::default();
    let phi = rw_propose(state, q1, rng);
    let lp_phi = target.log_density(&phi);
    let log_a1 = (lp_phi - log_pi).min(0.0);
    if metropolis_accept(log_a1, rng) {
        return Ok(StepOutcome::moved(Stage::AcceptedStage1, phi, lp_phi, None, none));
    }

    // ϑ and log q2(ϑ,φ,θ) − log q2(θ,φ,ϑ)
    let (theta2, log_q2_ratio) = match q2 {
        SecondStage::Disabled => return Ok(StepOutcome::stay(state, log_pi, None, none)),
        SecondStage::RandomWalk => (rw_propose(state, q1, rng), 0.0),
        SecondStage::Langevin(k) => {
            if lp_phi == f64::NEG_INFINITY {
                return Ok(StepOutcome::stay(state, log_pi, None, none));
            }
            let g = checked_gradient(target, &phi)?;
            let t2 = k.propose_with_grad(&phi, &g, rng);
            let r = k.log_transition_with_grad(&phi, &g, state) - k.log_transition_with_grad(&phi, &g, &t2);
            (t2, r)
        }
        SecondStage::Pinball => match reflect_pinball(state, &phi, others.points()) {
            Ok(t2) => (t2, 0.0),
            Err(Error::DegenerateLine) => return Ok(StepOutcome::stay(state, log_pi, None, none)),
            Err(e) => return Err(e),
        },
    };

    let lp2 = target.log_density(&theta2);
    if lp2 == f64::NEG_INFINITY {
        return Ok(StepOutcome::stay(state, log_pi, None, none));
    }
    let ln_rej_theta = ln_one_minus_exp(log_a1);
    if ln_rej_theta == f64::NEG_INFINITY {
        return Err(Error::Invariant("first-stage acceptance was 1 but the proposal was rejected"));
    }
    let ln_rej_theta2 = ln_one_minus_exp((lp_phi - lp2).min(0.0));
    let log_alpha2 = lp2 + q1.log_transition(&theta2, &phi) + log_q2_ratio + ln_rej_theta2
        - (log_pi + q1.log_transition(state, &phi) + ln_rej_theta);
    if metropolis_accept(log_alpha2, rng) {
        Ok(StepOutcome::moved(Stage::AcceptedStage2, theta2, lp2, None, none))
    } else {
        Ok(StepOutcome::stay(state, log_pi, None, none))
    }
}

/// Repulsion terms R(θ), R(φ) and the resulting full stage-1 acceptance.
struct RepulsiveStage1 {
    phi: Vec<f64>,
    lp_phi: f64,
    r_theta: f64,
    r_phi: f64,
}

impl RepulsiveStage1 {
    fn log_pi_r(lp: f64, r: f64) -> f64 {
        if lp == f64::NEG_INFINITY {
            lp
        } else {
            lp + r
        }
    }

    /// log of min{1, ρ*}·min{1, e^{R(x)−R(φ)}}: the chance a first stage from `x` moves to φ.
    fn log_full_accept(&self, lp_x: f64, r_x: f64) -> f64 {
        let screen = (Self::log_pi_r(self.lp_phi, self.r_phi) - Self::log_pi_r(lp_x, r_x)).min(0.0);
        if screen == f64::NEG_INFINITY {
            return screen;
        }
        screen + (r_x - self.r_phi).min(0.0)
    }
}

fn repulsive_first_stage<T: Target + ?Sized, R: Rng + ?Sized>(
    target: &T,
    q1: &RandomWalkKernel,
    state: &[f64],
    log_pi: f64,
    others: &Others<'_>,
    cfg: &RepulsiveConfig,
    counters: &mut CorrectionCounters,
    rng: &mut R,
) -> (RepulsiveStage1, bool) {
    let phi = rw_propose(state, q1, rng);
    let lp_phi = target.log_density(&phi);
    let r_theta = repulsion(state, others.iter(), cfg);
    let r_phi = if lp_phi == f64::NEG_INFINITY { 0.0 } else { repulsion(&phi, others.iter(), cfg) };
    let st = RepulsiveStage1 { phi, lp_phi, r_theta, r_phi };
    let screen = RepulsiveStage1::log_pi_r(lp_phi, r_phi) - RepulsiveStage1::log_pi_r(log_pi, r_theta);
    if !metropolis_accept(screen, rng) {
        return (st, false);
    }
    counters.accepted_at_propose += 1;
    if !metropolis_accept(r_theta - r_phi, rng) {
        return (st, false);
    }
    counters.accepted_at_correction += 1;
    (st, true)
}

/// Metropolis-Hastings with the repulsive proposal: a screening test against
/// π^R followed by a correction test against π.
pub fn mh_rp_step<T: Target + ?Sized, R: Rng + ?Sized>(
    target: &T,
    q1: &RandomWalkKernel,
    state: &[f64],
    log_pi: f64,
    others: &Others<'_>,
    cfg: &RepulsiveConfig,
    rng: &mut R,
) -> Result<StepOutcome> {
    check_current(state, log_pi)?;
    let mut counters = CorrectionCounters::default();
    let (st, ok) = repulsive_first_stage(target, q1, state, log_pi, others, cfg, &mut counters, rng);
    if ok {
        Ok(StepOutcome::moved(Stage::AcceptedStage1, st.phi, st.lp_phi, None, counters))
    } else {
        Ok(StepOutcome::stay(state, log_pi, None, counters))
    }
}

/// Two-stage pinball sampler step.
///
/// Stage 1 is the repulsive Metropolis-Hastings move. After a rejection at
/// either test, the reflected point ϑ is screened with
///
/// ```text
/// ρ₂* = π^R(ϑ) q₁(ϑ,φ) [1 − a₁(ϑ,φ)] / (π^R(θ) q₁(θ,φ) [1 − a₁(θ,φ)])
/// ```
///
/// where a₁ is the full stage-1 acceptance probability, and then corrected
/// with min{1, π(ϑ)π^R(θ) / (π(θ)π^R(ϑ))}. The composite kernel satisfies
/// detailed balance with respect to π.
#[allow(clippy::too_many_arguments)]
pub fn pinball_step<T: Target + ?Sized, R: Rng + ?Sized>(
    target: &T,
    q1: &RandomWalkKernel,
    state: &[f64],
    log_pi: f64,
    others: &Others<'_>,
    cfg: &RepulsiveConfig,
    stage2: bool,
    rng: &mut R,
) -> Result<StepOutcome> {
    check_current(state, log_pi)?;
    if state.len() != 2 {
        return Err(Error::UnsupportedDimension(state.len()));
    }
    if others.is_empty() {
        return Err(Error::InvalidKernel("pinball sampler needs at least two particles".into()));
    }
    let mut counters = CorrectionCounters::default();
    let (st, ok) = repulsive_first_stage(target, q1, state, log_pi, others, cfg, &mut counters, rng);
    if ok {
        return Ok(StepOutcome::moved(Stage::AcceptedStage1, st.phi, st.lp_phi, None, counters));
    }
    if !stage2 {
        return Ok(StepOutcome::stay(state, log_pi, None, counters));
    }
    let theta2 = match reflect_pinball(state, &st.phi, others.points()) {
        Ok(t) => t,
        Err(Error::DegenerateLine) => return Ok(StepOutcome::stay(state, log_pi, None, counters)),
        Err(e) => return Err(e),
    };
    let lp2 = target.log_density(&theta2);
    if lp2 == f64::NEG_INFINITY {
        return Ok(StepOutcome::stay(state, log_pi, None, counters));
    }
    let r2 = repulsion(&theta2, others.iter(), cfg);
    let ln_rej_theta = ln_one_minus_exp(st.log_full_accept(log_pi, st.r_theta));
    if ln_rej_theta == f64::NEG_INFINITY {
        return Err(Error::Invariant("first-stage acceptance was 1 but the proposal was rejected"));
    }
    let ln_rej_theta2 = ln_one_minus_exp(st.log_full_accept(lp2, r2));
    let screen = RepulsiveStage1::log_pi_r(lp2, r2) + q1.log_transition(&theta2, &st.phi) + ln_rej_theta2
        - (RepulsiveStage1::log_pi_r(log_pi, st.r_theta) + q1.log_transition(state, &st.phi) + ln_rej_theta);
    if !metropolis_accept(screen, rng) {
        return Ok(StepOutcome::stay(state, log_pi, None, counters));
    }
    counters.accepted_at_propose += 1;
    if !metropolis_accept(st.r_theta - r2, rng) {
        return Ok(StepOutcome::stay(state, log_pi, None, counters));
    }
    counters.accepted_at_correction += 1;
    Ok(StepOutcome::moved(Stage::AcceptedStage2, theta2, lp2, None, counters))
}

/// Sampler selection as named in configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SamplerSpec {
    Mha { s: f64 },
    Mala { h: f64 },
    DraRw { s: f64 },
    DraLp { s: f64, h: f64 },
    DraPinball { s: f64 },
    MhRp { s: f64, xi: f64 },
    Ps { s: f64, xi: f64 },
}

impl SamplerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Mha { .. } => "mha",
            Self::Mala { .. } => "mala",
            Self::DraRw { .. } => "dra-rw",
            Self::DraLp { .. } => "dra-lp",
            Self::DraPinball { .. } => "dra-pinball",
            Self::MhRp { .. } => "mh-rp",
            Self::Ps { .. } => "ps",
        }
    }

    /// A label carrying the tuning values, e.g. `mha(s=4)`.
    pub fn label(&self) -> String {
        match self {
            Self::Mha { s } | Self::DraRw { s } | Self::DraPinball { s } => format!("{}(s={s})", self.name()),
            Self::Mala { h } => format!("mala(h={h})"),
            Self::DraLp { s, h } => format!("dra-lp(s={s},h={h})"),
            Self::MhRp { s, xi } | Self::Ps { s, xi } => format!("{}(s={s},xi={xi})", self.name()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        Sampler::from_spec(self).map(|_| ())
    }

    pub fn needs_gradient(&self) -> bool {
        matches!(self, Self::Mala { .. } | Self::DraLp { .. })
    }

    pub fn xi(&self) -> Option<f64> {
        match self {
            Self::MhRp { xi, .. } | Self::Ps { xi, .. } => Some(*xi),
            _ => None,
        }
    }

    pub fn with_xi(&self, new_xi: f64) -> Self {
        match self {
            Self::MhRp { s, .. } => Self::MhRp { s: *s, xi: new_xi },
            Self::Ps { s, .. } => Self::Ps { s: *s, xi: new_xi },
            other => other.clone(),
        }
    }
}

/// A sampler with validated kernels.
#[derive(Debug, Clone)]
pub enum Sampler {
    Mh { q1: RandomWalkKernel },
    Mala { kernel: LangevinKernel },
    Dra { q1: RandomWalkKernel, q2: SecondStage },
    MhRp { q1: RandomWalkKernel, cfg: RepulsiveConfig },
    Pinball { q1: RandomWalkKernel, cfg: RepulsiveConfig, stage2: bool },
}

impl Sampler {
    pub fn from_spec(spec: &SamplerSpec) -> Result<Self> {
        let rw = RandomWalkKernel::isotropic;
        let rep = |xi: f64| RepulsiveConfig::new(xi, 0.0);
        Ok(match *spec {
            SamplerSpec::Mha { s } => Self::Mh { q1: rw(s)? },
            SamplerSpec::Mala { h } => Self::Mala { kernel: LangevinKernel::new(h)? },
            SamplerSpec::DraRw { s } => Self::Dra { q1: rw(s)?, q2: SecondStage::RandomWalk },
            SamplerSpec::DraLp { s, h } => Self::Dra { q1: rw(s)?, q2: SecondStage::Langevin(LangevinKernel::new(h)?) },
            SamplerSpec::DraPinball { s } => Self::Dra { q1: rw(s)?, q2: SecondStage::Pinball },
            SamplerSpec::MhRp { s, xi } => Self::MhRp { q1: rw(s)?, cfg: rep(xi)? },
            SamplerSpec::Ps { s, xi } => Self::Pinball { q1: rw(s)?, cfg: rep(xi)?, stage2: true },
        })
    }

    /// Rescale π(θⱼ) inside the repulsion by exp(−offset); no effect on other samplers.
    pub fn with_log_scale_offset(mut self, offset: f64) -> Self {
        if let Self::MhRp { cfg, .. } | Self::Pinball { cfg, .. } = &mut self {
            cfg.log_scale_offset = offset;
        }
        self
    }

    pub fn caches_gradient(&self) -> bool {
        matches!(self, Self::Mala { .. })
    }

    pub fn needs_gradient(&self) -> bool {
        matches!(self, Self::Mala { .. } | Self::Dra { q2: SecondStage::Langevin(_), .. })
    }

    pub fn uses_others(&self) -> bool {
        matches!(self, Self::MhRp { .. } | Self::Pinball { .. } | Self::Dra { q2: SecondStage::Pinball, .. })
    }

    pub fn is_planar_only(&self) -> bool {
        matches!(self, Self::Pinball { .. } | Self::Dra { q2: SecondStage::Pinball, .. })
    }

    /// Check that the sampler can run on this target with `n` particles.
    pub fn check_compatible(&self, dim: usize, n: usize, has_gradient: bool) -> Result<()> {
        if self.needs_gradient() && !has_gradient {
            return Err(Error::GradientUnavailable);
        }
        if self.is_planar_only() && dim != 2 {
            return Err(Error::UnsupportedDimension(dim));
        }
        if self.uses_others() && n < 2 {
            return Err(Error::InvalidKernel("this sampler needs at least two particles".into()));
        }
        Ok(())
    }

    pub fn step<T: Target + ?Sized, R: Rng + ?Sized>(
        &self,
        target: &T,
        state: &[f64],
        log_pi: f64,
        grad: Option<&[f64]>,
        others: &Others<'_>,
        rng: &mut R,
    ) -> Result<StepOutcome> {
        match self {
            Self::Mh { q1 } => mh_step(target, q1, state, log_pi, rng),
            Self::Mala { kernel } => mala_step(target, kernel, state, log_pi, grad, rng),
            Self::Dra { q1, q2 } => dra_step(target, q1, q2, state, log_pi, others, rng),
            Self::MhRp { q1, cfg } => mh_rp_step(target, q1, state, log_pi, others, cfg, rng),
            Self::Pinball { q1, cfg, stage2 } => pinball_step(target, q1, state, log_pi, others, cfg, *stage2, rng),
        }
    }
}

/// Stop after a number of iterations, a wall-clock time, or whichever comes first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budget {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seconds: Option<f64>,
}

impl Budget {
    pub fn iterations(n: usize) -> Self {
        Self { iterations: Some(n), seconds: None }
    }

    pub fn seconds(s: f64) -> Self {
        Self { iterations: None, seconds: Some(s) }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.iterations, self.seconds) {
            (None, None) => Err(Error::config("budget", "set iterations, seconds, or both")),
            (_, Some(s)) if !(s > 0.0 && s.is_finite()) => {
                Err(Error::config("budget.seconds", format!("must be positive, got {s}")))
            }
            _ => Ok(()),
        }
    }

    /// Whether iteration `done` (already completed) exhausts the budget.
    pub fn exhausted(&self, done: usize, started: &Instant) -> bool {
        if self.iterations.is_some_and(|n| done >= n) {
            return true;
        }
        self.seconds.is_some_and(|s| started.elapsed().as_secs_f64() >= s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceLevel {
    /// Mean series and tallies only.
    #[default]
    Summary,
    /// Also every particle vector and every step's stage.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainOptions {
    pub burn_in: usize,
    pub trace: TraceLevel,
}

impl Default for ChainOptions {
    fn default() -> Self {
        Self { burn_in: 500, trace: TraceLevel::Summary }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub stage1: u64,
    pub stage2: u64,
    pub rejected: u64,
}

impl StageCounts {
    pub fn record(&mut self, s: Stage) {
        match s {
            Stage::AcceptedStage1 => self.stage1 += 1,
            Stage::AcceptedStage2 => self.stage2 += 1,
            Stage::Rejected => self.rejected += 1,
        }
    }

    pub fn attempts(&self) -> u64 {
        self.stage1 + self.stage2 + self.rejected
    }

    pub fn accepted(&self) -> u64 {
        self.stage1 + self.stage2
    }
}

/// Everything the diagnostics need from one chain run.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace {
    pub algorithm: String,
    pub n_particles: usize,
    pub dim: usize,
    /// Completed iterations T.
    pub iterations: usize,
    pub burn_in: usize,
    pub initial: ParticleVector,
    pub final_state: ParticleVector,
    /// Per-iteration particle means, T × D row-major.
    pub means: Vec<f64>,
    /// Particle vectors after each iteration, initial state first (full traces only).
    pub states: Vec<ParticleVector>,
    /// Stage of every particle step, T × N (full traces only).
    pub stages: Vec<Stage>,
    pub stage_counts: StageCounts,
    pub counters: CorrectionCounters,
    pub wall_clock_seconds: f64,
}

impl ChainTrace {
    /// Start an empty trace at `init`.
    pub fn start(algorithm: impl Into<String>, init: &ParticleVector, opts: &ChainOptions) -> Self {
        Self {
            algorithm: algorithm.into(),
            n_particles: init.n(),
            dim: init.dim(),
            iterations: 0,
            burn_in: opts.burn_in,
            initial: init.clone(),
            final_state: init.clone(),
            means: Vec::new(),
            states: if opts.trace == TraceLevel::Full { vec![init.clone()] } else { Vec::new() },
            stages: Vec::new(),
            stage_counts: StageCounts::default(),
            counters: CorrectionCounters::default(),
            wall_clock_seconds: 0.0,
        }
    }

    pub fn is_full(&self) -> bool {
        !self.states.is_empty()
    }

    /// Append one completed sweep.
    pub fn push_iteration(&mut self, particles: &ParticleVector, stages: &[Stage]) {
        self.iterations += 1;
        self.means.extend(particles.mean());
        for s in stages {
            self.stage_counts.record(*s);
        }
        if self.is_full() {
            self.states.push(particles.clone());
            self.stages.extend_from_slice(stages);
        }
        self.final_state = particles.clone();
    }

    /// Mean series of one coordinate.
    pub fn mean_series(&self, coord: usize) -> Vec<f64> {
        self.means.iter().skip(coord).step_by(self.dim).copied().collect()
    }
}

/// Evaluate log π at every particle, failing on any zero-density point.
pub fn initial_log_densities<T: Target + ?Sized>(target: &T, init: &ParticleVector) -> Result<Vec<f64>> {
    if init.dim() != target.dim() {
        return Err(Error::DimensionMismatch { expected: target.dim(), got: init.dim() });
    }
    init.points()
        .map(|p| {
            let lp = target.log_density(p);
            if lp == f64::NEG_INFINITY || lp.is_nan() {
                Err(Error::InvalidCurrentState { state: p.to_vec() })
            } else {
                Ok(lp)
            }
        })
        .collect()
}

/// Run a particle chain until the budget is spent.
pub fn run_chain<T: Target + ?Sized, R: Rng + ?Sized>(
    spec: &SamplerSpec,
    target: &T,
    init: &ParticleVector,
    budget: &Budget,
    opts: &ChainOptions,
    rng: &mut R,
) -> Result<ChainTrace> {
    budget.validate()?;
    let sampler = Sampler::from_spec(spec)?;
    sampler.check_compatible(target.dim(), init.n(), target.has_gradient())?;
    let mut log_pi = initial_log_densities(target, init)?;
    let mut grads: Vec<Option<Vec<f64>>> = if sampler.caches_gradient() {
        init.points().map(|p| checked_gradient(target, p).map(Some)).collect::<Result<_>>()?
    } else {
        vec![None; init.n()]
    };

    let started = Instant::now();
    let mut trace = ChainTrace::start(spec.name(), init, opts);
    let mut particles = init.clone();
    let mut stages = vec![Stage::Rejected; init.n()];
    while !budget.exhausted(trace.iterations, &started) {
        for i in 0..particles.n() {
            let out = {
                let others = Others::of(&particles, &log_pi, i);
                sampler.step(target, particles.point(i), log_pi[i], grads[i].as_deref(), &others, rng)?
            };
            if out.stage.accepted() {
                particles.set_point(i, &out.new_point);
                log_pi[i] = out.new_log_density;
                grads[i] = out.new_grad;
            }
            stages[i] = out.stage;
            trace.counters.add(out.counters);
        }
        trace.push_iteration(&particles, &stages);
    }
    trace.wall_clock_seconds = started.elapsed().as_secs_f64();
    Ok(trace)
}
