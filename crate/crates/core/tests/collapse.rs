//! Samplers with their extra machinery switched off must move exactly like
//! random-walk Metropolis-Hastings.

mod common;

use common::collapse_distances;
use hybridmc::proposals::{RandomWalkKernel, RepulsiveConfig};
use hybridmc::samplers::{Sampler, SecondStage};

const MOVES: usize = 100_000;

fn assert_collapses(sampler: Sampler) {
    let (tv, ks) = collapse_distances(&sampler, MOVES);
    assert!(tv < 0.02, "TV = {tv}");
    assert!(ks < 0.02, "KS = {ks}");
}

fn rw() -> RandomWalkKernel {
    RandomWalkKernel::isotropic(4.0).unwrap()
}

#[test]
fn dra_without_second_stage_is_mh() {
    assert_collapses(Sampler::Dra { q1: rw(), q2: SecondStage::Disabled });
}

#[test]
fn mh_rp_without_repulsion_is_mh() {
    assert_collapses(Sampler::MhRp { q1: rw(), cfg: RepulsiveConfig::off() });
}

#[test]
fn pinball_sampler_without_repulsion_or_second_stage_is_mh() {
    assert_collapses(Sampler::Pinball { q1: rw(), cfg: RepulsiveConfig::off(), stage2: false });
}

#[test]
fn collapse_check_detects_a_different_kernel() {
    let wider = Sampler::Mh { q1: RandomWalkKernel::isotropic(6.0).unwrap() };
    let (tv, ks) = collapse_distances(&wider, 20_000);
    assert!(tv > 0.02 || ks > 0.02, "TV = {tv}, KS = {ks}");
}

#[test]
fn repulsion_off_rejects_nothing_at_correction() {
    use hybridmc::samplers::{Others, ParticleVector};
    use hybridmc::target::Target;
    use rand::SeedableRng;
    let s = Sampler::MhRp { q1: rw(), cfg: RepulsiveConfig::off() };
    let t = common::toy();
    let pop = ParticleVector::from_points(&[vec![1.0, 1.0], vec![1.2, 0.9], vec![4.0, 5.0]]).unwrap();
    let lp: Vec<f64> = pop.points().map(|p| t.log_density(p)).collect();
    let others = Others::of(&pop, &lp, 0);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10_000 {
        let c = s.step(&t, pop.point(0), lp[0], None, &others, &mut rng).unwrap().counters;
        assert_eq!(c.accepted_at_propose, c.accepted_at_correction);
    }
}
