//! Experiment orchestration for the zero-range-process verification lab.
//!
//! An experiment is described by a single JSON [`config::ExperimentConfig`],
//! runs deterministically from a master seed (independently of the worker
//! count), and produces an [`report::ExperimentReport`] emitted as a CSV row
//! table, a JSON summary and a plain-text digest. Every acceptance-style
//! check is normalized to `observed <= bound` so pass/fail flags can be
//! recomputed from the emitted rows alone.

pub mod config;
pub mod experiments;
pub mod report;

pub use config::{ExperimentConfig, ExperimentKind};
pub use experiments::{run_experiment, run_experiment_with_workers};
pub use report::{CheckResult, ExperimentReport, StatRow};
