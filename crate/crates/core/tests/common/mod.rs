#![allow(dead_code)]

use statrs::distribution::{ContinuousCDF, Normal};

/// One-sample Kolmogorov-Smirnov statistic.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic p-value of the one-sample KS statistic `d` with `n` points.
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = 2.0 * if k % 2 == 1 { 1.0 } else { -1.0 } * (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Total variation distance between two count vectors.
pub fn tv_distance(a: &[u64], b: &[u64]) -> f64 {
    let (sa, sb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    0.5 * a.iter().zip(b).map(|(x, y)| (*x as f64 / sa - *y as f64 / sb).abs()).sum::<f64>()
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

use hybridmc::samplers::{run_chain, Budget, ChainOptions, Others, ParticleVector, Sampler, SamplerSpec, Stage, TraceLevel};
use hybridmc::target::{make_gaussian_mixture, GaussianMixture, GaussianMixtureSpec, Target};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn standard_normal(dim: usize) -> GaussianMixture {
    make_gaussian_mixture(&GaussianMixtureSpec::standard_normal(dim)).unwrap()
}

pub fn toy() -> GaussianMixture {
    make_gaussian_mixture(&GaussianMixtureSpec::two_mode_toy()).unwrap()
}

/// Final particles of `runs` independent runs of `sweeps` sweeps, each started
/// from `particles` independent draws of a standard normal.
pub fn replicate_draws(spec: &SamplerSpec, dim: usize, seed: u64, runs: usize, particles: usize, sweeps: usize) -> Vec<Vec<f64>> {
    let target = standard_normal(dim);
    let opts = ChainOptions { burn_in: 0, trace: TraceLevel::Summary };
    (0..runs)
        .flat_map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003).wrapping_add(r as u64));
            let init: Vec<Vec<f64>> = (0..particles).map(|_| target.sample(&mut rng)).collect();
            let init = ParticleVector::from_points(&init).unwrap();
            run_chain(spec, &target, &init, &Budget::iterations(sweeps), &opts, &mut rng).unwrap().final_state.to_points()
        })
        .collect()
}

/// One-step moves of particle 0 from `start` on the toy target, with nine
/// fixed companions.
pub struct Moves {
    /// Rejections, then the four quadrants of the displacement.
    pub cells: [u64; 5],
    pub dx: Vec<f64>,
}

pub fn one_step_moves(sampler: &Sampler, start: [f64; 2], seed: u64, moves: usize) -> Moves {
    let t = toy();
    let mut pts = vec![start.to_vec()];
    pts.extend((1..10).map(|j| vec![0.7 * j as f64 - 1.0, 5.5 - 0.6 * j as f64]));
    let pop = ParticleVector::from_points(&pts).unwrap();
    let lp: Vec<f64> = pop.points().map(|p| t.log_density(p)).collect();
    let others = Others::of(&pop, &lp, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = Moves { cells: [0; 5], dx: Vec::with_capacity(moves) };
    for _ in 0..moves {
        let out = sampler.step(&t, pop.point(0), lp[0], None, &others, &mut rng).unwrap();
        let d = [out.new_point[0] - start[0], out.new_point[1] - start[1]];
        if out.stage == Stage::Rejected {
            m.cells[0] += 1;
        } else {
            m.cells[1 + usize::from(d[0] >= 0.0) + 2 * usize::from(d[1] >= 0.0)] += 1;
        }
        m.dx.push(d[0]);
    }
    m
}

pub const COLLAPSE_STARTS: [[f64; 2]; 5] = [[0.0, 0.0], [5.0, 5.0], [2.5, 2.5], [-1.0, 3.0], [7.0, 1.0]];

/// Largest TV and KS distances between `sampler` and random-walk MH (s = 4)
/// over the collapse starting points.
pub fn collapse_distances(sampler: &Sampler, moves: usize) -> (f64, f64) {
    let mh = Sampler::Mh { q1: hybridmc::proposals::RandomWalkKernel::isotropic(4.0).unwrap() };
    COLLAPSE_STARTS.iter().enumerate().fold((0.0f64, 0.0f64), |(tv, ks), (k, start)| {
        let a = one_step_moves(sampler, *start, 100 + k as u64, moves);
        let b = one_step_moves(&mh, *start, 200 + k as u64, moves);
        (tv.max(tv_distance(&a.cells, &b.cells)), ks.max(ks_two_sample(&a.dx, &b.dx)))
    })
}
