//! Strict JSON experiment configuration.

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pmc::PmcVariant;
use crate::samplers::{Budget, ParticleVector, Sampler, SamplerSpec};
use crate::target::{param, GaussianMixture, GaussianMixtureSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TargetConfig {
    /// The equal-weight two-mode mixture at (0,0) and (5,5).
    Toy,
    StandardNormal { dim: usize },
    GaussianMixture(GaussianMixtureSpec),
}

impl Default for TargetConfig {
    fn default() -> Self {
        Self::Toy
    }
}

impl TargetConfig {
    pub fn mixture_spec(&self) -> GaussianMixtureSpec {
        match self {
            Self::Toy => GaussianMixtureSpec::two_mode_toy(),
            Self::StandardNormal { dim } => GaussianMixtureSpec::standard_normal(*dim),
            Self::GaussianMixture(spec) => spec.clone(),
        }
    }

    pub fn build(&self) -> Result<GaussianMixture> {
        GaussianMixture::new(&self.mixture_spec())
    }

    /// Mean of the mixture.
    pub fn mean(&self) -> Vec<f64> {
        let spec = self.mixture_spec();
        let dim = spec.means.first().map_or(0, Vec::len);
        let mut m = vec![0.0; dim];
        for (w, mu) in spec.weights.iter().zip(&spec.means) {
            for (a, b) in m.iter_mut().zip(mu) {
                *a += w * b;
            }
        }
        m
    }
}

/// How the initial particles are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitConfig {
    /// Independent draws from the target mixture.
    #[default]
    Target,
    /// Particle i drawn from mixture component i mod K.
    Stratified,
    /// Every particle drawn from one component.
    Component { component: usize },
    /// Isotropic normal around a point.
    Normal { mean: Vec<f64>, sd: f64 },
}

impl InitConfig {
    pub fn draw<R: Rng + ?Sized>(&self, target: &GaussianMixture, n: usize, rng: &mut R) -> Result<ParticleVector> {
        let k = target.n_components();
        let points: Vec<Vec<f64>> = match self {
            Self::Target => (0..n).map(|_| target.sample(rng)).collect(),
            Self::Stratified => (0..n).map(|i| target.sample_component(i % k, rng)).collect(),
            Self::Component { component } => (0..n).map(|_| target.sample_component(*component, rng)).collect(),
            Self::Normal { mean, sd } => (0..n)
                .map(|_| mean.iter().map(|m| m + sd * rng.sample::<f64, _>(rand_distr::StandardNormal)).collect())
                .collect(),
        };
        ParticleVector::from_points(&points)
    }

    fn validate(&self, components: usize, dim: usize) -> Result<()> {
        match self {
            Self::Component { component } if *component >= components => Err(Error::config(
                "init.component",
                format!("component {component} out of range for {components} components"),
            )),
            Self::Normal { mean, .. } if mean.len() != dim => {
                Err(Error::config("init.mean", format!("expected length {dim}, got {}", mean.len())))
            }
            Self::Normal { sd, .. } if !(*sd > 0.0 && sd.is_finite()) => {
                Err(Error::config("init.sd", "must be positive"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    #[serde(default = "default_window")]
    pub mode_window: usize,
    #[serde(default = "default_pmc_window")]
    pub pmc_mode_window: usize,
    #[serde(default = "default_bias")]
    pub bias: f64,
}

fn default_window() -> usize {
    50
}
fn default_pmc_window() -> usize {
    5
}
fn default_bias() -> f64 {
    3.51
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { mode_window: default_window(), pmc_mode_window: default_pmc_window(), bias: default_bias() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PmcConfig {
    pub variant: PmcVariant,
    pub k: f64,
    #[serde(default = "default_pmc_xi")]
    pub xi: f64,
    #[serde(default = "default_nu")]
    pub nu: f64,
    /// Hole-and-estimate draws per iteration; defaults to the particle count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default = "default_pmc_burn_in")]
    pub burn_in: usize,
}

fn default_pmc_xi() -> f64 {
    1e-5
}
fn default_nu() -> f64 {
    0.3
}
fn default_pmc_burn_in() -> usize {
    100
}

impl PmcConfig {
    pub fn label(&self) -> String {
        match self.variant {
            PmcVariant::Plain => format!("pmc(k={})", self.k),
            PmcVariant::Repulsive => format!("pmc-r(k={},xi={},nu={})", self.k, self.xi, self.nu),
        }
    }
}

/// One block of the mixture-posterior update scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockConfig {
    /// Parameter names, drawn from mu1, mu2, sigma1, sigma2, lambda.
    pub params: Vec<String>,
    /// Random-walk variance.
    pub s: f64,
    /// Langevin step.
    pub h: f64,
    #[serde(default)]
    pub xi: f64,
}

impl BlockConfig {
    pub fn indices(&self) -> Result<Vec<usize>> {
        self.params
            .iter()
            .map(|p| {
                param::NAMES
                    .iter()
                    .position(|n| n == p)
                    .ok_or_else(|| Error::config("aerosol.blocks.params", format!("unknown parameter `{p}`")))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthParams {
    pub n: usize,
    pub lambda: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AerosolConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthParams>,
    #[serde(default = "default_subsample")]
    pub subsample: usize,
    #[serde(default = "default_aerosol_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_blocks")]
    pub blocks: Vec<BlockConfig>,
    /// Central credible level.
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// Scale for π(θⱼ) inside the repulsion; defaults to the largest initial log-density.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_scale_offset: Option<f64>,
}

fn default_subsample() -> usize {
    2000
}
fn default_aerosol_burn_in() -> usize {
    1000
}
fn default_level() -> f64 {
    0.95
}
fn default_bins() -> usize {
    40
}

pub fn default_blocks() -> Vec<BlockConfig> {
    let block = |params: &[&str], v: f64, xi: f64| BlockConfig {
        params: params.iter().map(|s| s.to_string()).collect(),
        s: v,
        h: v,
        xi,
    };
    vec![
        block(&["mu1", "mu2"], 25e-4, 1e-48),
        block(&["sigma1", "sigma2"], 2.25e-4, 1e-48),
        block(&["lambda"], 1e-4, 0.0),
    ]
}

impl Default for AerosolConfig {
    fn default() -> Self {
        Self {
            data: None,
            synth: None,
            subsample: default_subsample(),
            burn_in: default_aerosol_burn_in(),
            blocks: default_blocks(),
            level: default_level(),
            bins: default_bins(),
            log_scale_offset: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub target: TargetConfig,
    /// Optional check on the target dimension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default)]
    pub samplers: Vec<SamplerSpec>,
    #[serde(default)]
    pub pmc: Vec<PmcConfig>,
    pub particles: usize,
    pub budget: Budget,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub init: InitConfig,
    #[serde(default)]
    pub thresholds: Thresholds,
    /// Expected value for H and the biased-estimate count; defaults to the target mean.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expectation: Option<Vec<f64>>,
    /// Worker threads; defaults to the available parallelism.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Write measured run times; defaults to on only for wall-clock budgets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_wall_clock: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aerosol: Option<AerosolConfig>,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
}

fn default_burn_in() -> usize {
    500
}
fn default_replicates() -> usize {
    1
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    /// A toy-target config with the defaults filled in.
    pub fn toy(samplers: Vec<SamplerSpec>, particles: usize, budget: Budget) -> Self {
        Self {
            target: TargetConfig::Toy,
            dim: None,
            samplers,
            pmc: Vec::new(),
            particles,
            budget,
            burn_in: default_burn_in(),
            replicates: default_replicates(),
            base_seed: 0,
            init: InitConfig::default(),
            thresholds: Thresholds::default(),
            expectation: None,
            workers: None,
            record_wall_clock: None,
            aerosol: None,
            out_dir: default_out(),
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(s);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(if path == "." { "<root>".to_string() } else { path }, e.inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn expectation(&self) -> Vec<f64> {
        self.expectation.clone().unwrap_or_else(|| self.target.mean())
    }

    pub fn records_wall_clock(&self) -> bool {
        self.record_wall_clock.unwrap_or(self.budget.seconds.is_some())
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < 1 {
            return Err(Error::config("replicates", "must be at least 1"));
        }
        if self.particles < 1 {
            return Err(Error::config("particles", "must be at least 1"));
        }
        self.budget.validate()?;
        if self.budget.iterations == Some(0) {
            return Err(Error::config("budget.iterations", "must be positive"));
        }
        if self.workers == Some(0) {
            return Err(Error::config("workers", "must be positive"));
        }
        let th = &self.thresholds;
        if th.mode_window == 0 || th.pmc_mode_window == 0 {
            return Err(Error::config("thresholds", "detection windows must be positive"));
        }
        if !(th.bias > 0.0 && th.bias.is_finite()) {
            return Err(Error::config("thresholds.bias", "must be positive"));
        }
        let spec = self.target.mixture_spec();
        let target = GaussianMixture::new(&spec).map_err(|e| Error::config("target", e.to_string()))?;
        let dim = target_dim(&spec);
        if let Some(d) = self.dim {
            if d != dim {
                return Err(Error::config("dim", format!("target has dimension {dim}, config says {d}")));
            }
        }
        if let Some(e) = &self.expectation {
            if e.len() != dim {
                return Err(Error::config("expectation", format!("expected length {dim}, got {}", e.len())));
            }
        }
        self.init.validate(target.n_components(), dim)?;
        for (i, s) in self.samplers.iter().enumerate() {
            let key = format!("samplers[{i}]");
            let sampler = Sampler::from_spec(s).map_err(|e| Error::config(&key, e.to_string()))?;
            if self.aerosol.is_none() {
                sampler
                    .check_compatible(dim, self.particles, true)
                    .map_err(|e| Error::config(&key, e.to_string()))?;
            }
        }
        for (i, p) in self.pmc.iter().enumerate() {
            let key = format!("pmc[{i}]");
            if !(p.k > 1.0 && p.k.is_finite()) {
                return Err(Error::config(format!("{key}.k"), "must exceed 1"));
            }
            crate::proposals::RepulsiveConfig::new(p.xi, p.nu).map_err(|e| Error::config(&key, e.to_string()))?;
            if p.m.is_some_and(|m| m < self.particles) {
                return Err(Error::config(format!("{key}.m"), "must be at least the particle count"));
            }
            if self.particles < 2 {
                return Err(Error::config("particles", "population Monte Carlo needs at least two particles"));
            }
        }
        if let Some(a) = &self.aerosol {
            a.validate()?;
        }
        Ok(())
    }
}

fn target_dim(spec: &GaussianMixtureSpec) -> usize {
    spec.means.first().map_or(0, Vec::len)
}

impl AerosolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.subsample == 0 {
            return Err(Error::config("aerosol.subsample", "must be positive"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::config("aerosol.level", "must lie in (0, 1)"));
        }
        if self.bins == 0 {
            return Err(Error::config("aerosol.bins", "must be positive"));
        }
        if self.blocks.is_empty() {
            return Err(Error::config("aerosol.blocks", "at least one block is required"));
        }
        let mut seen = [false; 5];
        for b in &self.blocks {
            for i in b.indices()? {
                if seen[i] {
                    return Err(Error::config("aerosol.blocks", format!("`{}` appears twice", param::NAMES[i])));
                }
                seen[i] = true;
            }
            for (key, v) in [("s", b.s), ("h", b.h)] {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::config(format!("aerosol.blocks.{key}"), "must be positive"));
                }
            }
            if !(b.xi >= 0.0 && b.xi.is_finite()) {
                return Err(Error::config("aerosol.blocks.xi", "must be finite and nonnegative"));
            }
        }
        if let Some(s) = &self.synth {
            s.validate()?;
        }
        Ok(())
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("synth.n", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::config("synth.lambda", "must lie in [0, 1]"));
        }
        for (key, v) in [("sigma1", self.sigma1), ("sigma2", self.sigma2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("synth.{key}"), "must be positive"));
            }
        }
        for (key, v) in [("mu1", self.mu1), ("mu2", self.mu2)] {
            if !v.is_finite() {
                return Err(Error::config(format!("synth.{key}"), "must be finite"));
            }
        }
        Ok(())
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    ExperimentConfig::from_json_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"samplers":[{"algorithm":"mha","s":4}],"particles":10,"budget":{"iterations":1000}}"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::from_json_str(MINIMAL).unwrap();
        assert_eq!(cfg.burn_in, 500);
        assert_eq!(cfg.thresholds.bias, 3.51);
        assert_eq!(cfg.thresholds.mode_window, 50);
        assert_eq!(cfg.target, TargetConfig::Toy);
        assert_eq!(cfg.expectation(), vec![2.5, 2.5]);
        assert!(!cfg.records_wall_clock());
    }

    #[test]
    fn negative_budget_names_the_key() {
        let bad = MINIMAL.replace(r#"{"iterations":1000}"#, r#"{"seconds":-3}"#);
        match ExperimentConfig::from_json_str(&bad) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "budget.seconds"),
            other => panic!("{other:?}"),
        }
        let bad = MINIMAL.replace("1000", "-1000");
        match ExperimentConfig::from_json_str(&bad) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "budget.iterations"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = MINIMAL.replace(r#""particles":10"#, r#""particles":10,"partciles":3"#);
        assert!(matches!(ExperimentConfig::from_json_str(&bad), Err(Error::Config { .. })));
        let bad = MINIMAL.replace(r#""s":4"#, r#""s":4,"h":1"#);
        match ExperimentConfig::from_json_str(&bad) {
            Err(Error::Config { key, .. }) => assert!(key.starts_with("samplers"), "{key}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn round_trip_is_identity() {
        let mut cfg = ExperimentConfig::from_json_str(MINIMAL).unwrap();
        cfg.pmc.push(PmcConfig { variant: PmcVariant::Repulsive, k: 2.5, xi: 1e-5, nu: 0.3, m: Some(50), burn_in: 100 });
        cfg.particles = 50;
        cfg.aerosol = Some(AerosolConfig::default());
        cfg.init = InitConfig::Normal { mean: vec![0.0, 1.0], sd: 0.5 };
        let again = ExperimentConfig::from_json_str(&cfg.to_json_string().unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn explicit_mixture_target() {
        let s = r#"{"target":{"kind":"gaussian-mixture","weights":[1.0],"means":[[1.0]],"covariances":[[[2.0]]]},
                    "samplers":[{"algorithm":"mala","h":0.5}],"particles":3,"budget":{"seconds":1.5}}"#;
        let cfg = ExperimentConfig::from_json_str(s).unwrap();
        assert_eq!(cfg.expectation(), vec![1.0]);
        assert!(cfg.records_wall_clock());
    }

    #[test]
    fn semantic_checks() {
        let pinball_1d = r#"{"target":{"kind":"standard-normal","dim":1},"samplers":[{"algorithm":"ps","s":1,"xi":0}],
                             "particles":10,"budget":{"iterations":10}}"#;
        assert!(matches!(ExperimentConfig::from_json_str(pinball_1d), Err(Error::Config { .. })));
        let zero = MINIMAL.replace(r#""particles":10"#, r#""particles":10,"replicates":0"#);
        assert!(matches!(ExperimentConfig::from_json_str(&zero), Err(Error::Config { .. })));
        let wrong_dim = MINIMAL.replace(r#""particles":10"#, r#""particles":10,"dim":3"#);
        assert!(matches!(ExperimentConfig::from_json_str(&wrong_dim), Err(Error::Config { .. })));
        let small_m = r#"{"pmc":[{"variant":"pmc-r","k":2.5,"m":10}],"particles":50,"budget":{"iterations":10}}"#;
        assert!(matches!(ExperimentConfig::from_json_str(small_m), Err(Error::Config { .. })));
    }
}
