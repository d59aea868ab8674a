//! Experiment harness for dyadic-lab: configuration, sweeps, regression fits
//! and deterministic CSV/JSON reports.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod decomp_runs;
pub mod invariants;
pub mod report;
pub mod representation;
pub mod sweeps;

use anyhow::Result;

pub use config::ExperimentConfig;
pub use report::RunOutput;

pub const COMMANDS: &[&str] = &[
    "a2-sweep",
    "complexity-sweep",
    "two-weight",
    "weak11",
    "carleson",
    "corona",
    "jn",
    "representation",
    "invariants",
];

/// Runs a subcommand by name and returns what it would write.
pub fn run_command(command: &str, cfg: &ExperimentConfig) -> Result<RunOutput> {
    Ok(match command {
        "a2-sweep" => sweeps::run_a2_sweep(cfg)?.output(cfg),
        "complexity-sweep" => sweeps::run_complexity_sweep(cfg)?.output(cfg),
        "two-weight" => sweeps::run_two_weight(cfg)?.output(cfg),
        "weak11" => sweeps::run_weak11(cfg)?.output(cfg),
        "carleson" => decomp_runs::run_carleson(cfg)?.output(cfg),
        "corona" => decomp_runs::run_corona(cfg)?.output(cfg),
        "jn" => decomp_runs::run_jn(cfg)?.output(cfg),
        "representation" => representation::run_representation(cfg)?.output(cfg),
        "invariants" => invariants::run_invariant_suite(cfg).output(cfg),
        other => anyhow::bail!("unknown command {other}"),
    })
}
