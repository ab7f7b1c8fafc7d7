//! Experiment orchestration: configs, seeded replicate farms, the ξ scan,
//! mode-detection campaigns, the particle-size application and reports.

pub mod aerosol;
pub mod bench;
pub mod config;
pub mod report;

pub use aerosol::{
    load_aerosol_data, parse_aerosol_data, run_aerosol_experiment, synth_aerosol, AerosolDataset, AerosolOutcome,
    AerosolRun, ParameterSummary,
};
pub use bench::{
    mode_detection_campaign, replicate_seed, rng_for_seed, run_benchmark, run_benchmark_with, tune_xi_scan,
    Algorithm, AlgorithmSummary, BenchOutcome, DetectionResult, ReplicateFailure, XiPoint,
};
pub use config::{load_config, AerosolConfig, BlockConfig, ExperimentConfig, InitConfig, PmcConfig, SynthParams, TargetConfig};
pub use report::{emit_report, Command, ReportFormat, Summary};
