//! Experiment drivers. Each driver maps a validated config to rows and
//! normalized checks; trials parallelize over a rayon pool but aggregation is
//! always sequential in trial order, so results are independent of the
//! worker count.

use std::time::Instant;

use zrp_core::error::Result;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::report::{CheckResult, ExperimentReport, StatRow};

pub mod bg;
pub mod fluctuation;
pub mod homogenize;
pub mod hydro;
pub mod suite;

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub(crate) fn std_err(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return f64::INFINITY;
    }
    let m = mean(v);
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64;
    (var / v.len() as f64).sqrt()
}

/// Check that `|mean(samples) - expected| <= 3 SE (+ extra)`.
pub(crate) fn three_se_check(
    name: impl Into<String>,
    samples: &[f64],
    expected: f64,
    extra_allowance: f64,
) -> CheckResult {
    let m = mean(samples);
    let se = std_err(samples);
    CheckResult::new(name, (m - expected).abs(), 3.0 * se + extra_allowance)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> ExperimentReport {
    let start = Instant::now();
    let outcome = cfg.validate().and_then(|_| dispatch(cfg));
    let (rows, checks, failure) = match outcome {
        Ok((rows, checks)) => (rows, checks, None),
        Err(e) => (Vec::new(), Vec::new(), Some(e.to_string())),
    };
    ExperimentReport {
        config: cfg.clone(),
        rows,
        checks,
        wall_seconds: start.elapsed().as_secs_f64(),
        failure,
    }
}

/// Run inside a dedicated pool of `workers` threads (`None`: the global
/// pool). Emitted CSV/JSON bytes do not depend on the worker count.
pub fn run_experiment_with_workers(
    cfg: &ExperimentConfig,
    workers: Option<usize>,
) -> ExperimentReport {
    match workers {
        None => run_experiment(cfg),
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map(|pool| pool.install(|| run_experiment(cfg)))
            .unwrap_or_else(|e| ExperimentReport {
                config: cfg.clone(),
                rows: Vec::new(),
                checks: Vec::new(),
                wall_seconds: 0.0,
                failure: Some(format!("thread pool: {e}")),
            }),
    }
}

fn dispatch(cfg: &ExperimentConfig) -> Result<(Vec<StatRow>, Vec<CheckResult>)> {
    match cfg.kind {
        ExperimentKind::Hydro => hydro::run(cfg),
        ExperimentKind::Fluctuation => fluctuation::run(cfg),
        ExperimentKind::BoltzmannGibbs => bg::run(cfg),
        ExperimentKind::Homogenize => homogenize::run(cfg),
        ExperimentKind::PropertySuite => suite::run(cfg),
    }
}
