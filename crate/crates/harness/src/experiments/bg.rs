//! Boltzmann-Gibbs experiment: second-moment decay, in the scale, of the
//! time-integrated fluctuation of local observables after projecting out the
//! density field.
//!
//! Three observables run in every trial: the density itself (whose projected
//! remainder vanishes identically, an exactness audit), the jump-rate
//! observable `g(eta(x))` and the environment-weighted rate
//! `a_1(theta_x omega) g(eta(x))`.

use rayon::prelude::*;
use zrp_core::dynamics::simulate;
use zrp_core::environment::Environment;
use zrp_core::error::Result;
use zrp_core::fields::{
    projection_stats, DensityObservable, EnvRateObservable, LocalObservable, RateObservable,
};
use zrp_core::lattice::TorusGrid;
use zrp_core::measures::{sample_equilibrium, FugacityTables};
use zrp_core::seeding::mix;

use crate::config::ExperimentConfig;
use crate::experiments::{mean, std_err};
use crate::report::{CheckResult, StatRow};

const OBS_NAMES: [&str; 3] = ["density", "rate", "env_rate"];

pub fn run(cfg: &ExperimentConfig) -> Result<(Vec<StatRow>, Vec<CheckResult>)> {
    let tables = FugacityTables::new(cfg.g.clone(), 1e-12)?;
    let rho = cfg.rho;
    let g_fn = cfg.primary_test_function();

    let mut rows = Vec::new();
    // mean square and its standard error per (n, observable)
    let mut msq: Vec<[f64; 3]> = Vec::new();
    let mut msq_se: Vec<[f64; 3]> = Vec::new();
    let mut density_max: f64 = 0.0;

    for &n in &cfg.n_values {
        let grid = TorusGrid::new(cfg.d, n)?;
        let env = Environment::sample(
            cfg.env,
            grid,
            mix(cfg.master_seed, &[super::hydro::ENV_LABEL, n as u64]),
        )?;
        let weights = g_fn.grid_values(grid)?;
        let observables: [Box<dyn LocalObservable + Sync>; 3] = [
            Box::new(DensityObservable { rho }),
            Box::new(RateObservable { g: cfg.g.clone() }),
            Box::new(EnvRateObservable {
                g: cfg.g.clone(),
                axis: 0,
            }),
        ];

        let trials: Vec<(u64, [f64; 3])> = (0..cfg.trials as u64)
            .into_par_iter()
            .map(|i| -> Result<(u64, [f64; 3])> {
                let trial_seed = mix(cfg.master_seed, &[n as u64, i]);
                let eta0 = sample_equilibrium(&tables, rho, grid, mix(trial_seed, &[1]))?;
                let traj = simulate(&eta0, &env, &cfg.g, cfg.t_end, mix(trial_seed, &[2]))?;
                let mut stats = [0.0; 3];
                for (k, obs) in observables.iter().enumerate() {
                    stats[k] =
                        projection_stats(&traj, &env, &weights, obs.as_ref(), rho, &tables)?
                            .remainder;
                }
                Ok((trial_seed, stats))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut sq = [Vec::new(), Vec::new(), Vec::new()];
        for (trial_seed, stats) in &trials {
            for (k, name) in OBS_NAMES.iter().enumerate() {
                rows.push(StatRow {
                    n,
                    seed: *trial_seed,
                    statistic: format!("bg_{name}"),
                    value: stats[k],
                });
                sq[k].push(stats[k] * stats[k]);
            }
            density_max = density_max.max(stats[0].abs());
        }
        let mut m = [0.0; 3];
        let mut se = [0.0; 3];
        for k in 0..3 {
            m[k] = mean(&sq[k]);
            se[k] = std_err(&sq[k]);
            rows.push(StatRow {
                n,
                seed: cfg.master_seed,
                statistic: format!("bg_{}_msq", OBS_NAMES[k]),
                value: m[k],
            });
        }
        msq.push(m);
        msq_se.push(se);
    }

    let mut checks = Vec::new();
    // the density observable projects to exactly zero
    checks.push(CheckResult::new("bg_density_exactly_zero", density_max, 0.0));

    // decay: largest scale has at most half the second moment of the smallest
    if cfg.n_values.len() >= 2 {
        let first = 0;
        let last = cfg.n_values.len() - 1;
        for k in 1..3 {
            checks.push(CheckResult::new(
                format!(
                    "bg_{}_halving_n{}_over_n{}",
                    OBS_NAMES[k],
                    cfg.n_values[last],
                    cfg.n_values[first]
                ),
                msq[last][k] / msq[first][k],
                0.5,
            ));
        }
        // nonincreasing along consecutive scales, within Monte Carlo slack
        for w in 0..cfg.n_values.len() - 1 {
            for k in 1..3 {
                let rel_se = 3.0 * (msq_se[w][k] / msq[w][k] + msq_se[w + 1][k] / msq[w][k]);
                checks.push(CheckResult::new(
                    format!(
                        "bg_{}_nonincreasing_n{}_to_n{}",
                        OBS_NAMES[k],
                        cfg.n_values[w],
                        cfg.n_values[w + 1]
                    ),
                    msq[w + 1][k] / msq[w][k],
                    1.0 + rel_se,
                ));
            }
        }
    }
    Ok((rows, checks))
}
