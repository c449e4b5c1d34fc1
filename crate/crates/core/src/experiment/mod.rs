//! Configuration, seeded batch orchestration and output files for the four
//! experiment commands.
//!
//! Every command writes into `<output_dir>/<command>/`:
//!
//! * `pressure-sweep`, `metric-comparison`: `series.csv` (per-step mean and
//!   95% half-width of the tracked measure per configuration), `runs.csv`
//!   (every report field for every run and step), `stats.json`, and
//!   `state/` with one resumable file per finished run.
//! * `markov-estimate`: `transition.json`, `l_evolvability.csv`,
//!   `niches.csv`, `stats.json`.
//! * `dissimila-scan`: `dissimila.csv` sorted by ascending `r_star`, `stats.json`.
//!
//! A resolved `config.toml` is echoed next to the outputs. Results depend
//! only on the configuration and seed, never on the worker count.

mod commands;
mod config;
mod runner;

pub use commands::{
    command_dir, dissimila_scan, markov_estimate, metric_comparison, pressure_sweep, DissimilaRow,
    DissimilaStats, GroupSummary, LEvolvabilityRow, MarkovStats, MetricComparisonStats, PressureSweepStats,
};
pub use config::{
    DissimilaSettings, EnvironmentSpec, ExperimentConfig, MarkovSettings, Measure, MetricComparisonSettings,
    PressureSweepSettings, Profile, WalkSettings,
};
pub use runner::{run_batch, run_seed, BatchEntry, RunOutcome};
