//! Equilibrium fluctuation experiment: stationary runs verifying
//!
//! * the static covariance of the fluctuation field against
//!   `chi(rho) N^-d sum G H`,
//! * the Dynkin martingale identities `E[M_T] = 0`,
//!   `E[M_T^2] = E[<M>_T]`,
//! * the quadratic-variation rate against its homogenized limit
//!   `2 phi(rho) int grad G . A grad G` (both jump channels of every bond
//!   count, which the stationary covariance forces),
//! * the lag covariance against the semigroup prediction
//!   `chi(rho) < exp(t phi'(rho) div A grad) G, G >`,
//! * the exact second moment of the corrected-minus-plain field gap.

use rayon::prelude::*;
use zrp_core::dynamics::simulate;
use zrp_core::environment::Environment;
use zrp_core::error::Result;
use zrp_core::fields::{fluctuation_pairing, martingale_track, Normalization};
use zrp_core::homogenization::effective_matrix;
use zrp_core::lattice::TorusGrid;
use zrp_core::measures::{sample_equilibrium, FugacityTables};
use zrp_core::pde::semigroup_apply;
use zrp_core::resolvent::{corrected_test_function, SolveOptions};
use zrp_core::seeding::mix;

use crate::config::ExperimentConfig;
use crate::experiments::{mean, three_se_check};
use crate::report::{CheckResult, StatRow};

struct TrialStats {
    seed: u64,
    y0_g: f64,
    y0_h: f64,
    yt_g: f64,
    y0_gap: f64,
    martingale: f64,
    quadratic_variation: f64,
}

pub fn run(cfg: &ExperimentConfig) -> Result<(Vec<StatRow>, Vec<CheckResult>)> {
    let tables = FugacityTables::new(cfg.g.clone(), 1e-12)?;
    let rho = cfg.rho;
    let chi = tables.occupancy_variance(rho)?;
    let phi = tables.mean_jump_rate(rho)?;
    let phi_prime = tables.phi_prime(rho)?;
    let g_fn = cfg.primary_test_function();
    let h_fn = cfg.secondary_test_function();

    let n_ref = if cfg.d == 1 { 1 << 12 } else { 32 };
    let grid_ref = TorusGrid::new(cfg.d, n_ref)?;
    let env_ref = Environment::sample(
        cfg.env,
        grid_ref,
        mix(cfg.master_seed, &[super::hydro::ENV_REF_LABEL]),
    )?;
    let a = effective_matrix(&env_ref, 1e-10)?;

    // quadratic variation rate limit: both jump channels of every bond
    // contribute, hence twice the homogenized Dirichlet energy
    let qv_limit = 2.0 * phi * g_fn.dirichlet_energy(&a);

    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for &n in &cfg.n_values {
        let grid = TorusGrid::new(cfg.d, n)?;
        let env = Environment::sample(
            cfg.env,
            grid,
            mix(cfg.master_seed, &[super::hydro::ENV_LABEL, n as u64]),
        )?;
        let g_vals = g_fn.grid_values(grid)?;
        let h_vals = h_fn.grid_values(grid)?;
        let corrected =
            corrected_test_function(&g_fn, cfg.lambda, &env, &a, SolveOptions::with_tol(1e-11))?;

        let trials: Vec<TrialStats> = (0..cfg.trials as u64)
            .into_par_iter()
            .map(|i| -> Result<TrialStats> {
                let trial_seed = mix(cfg.master_seed, &[n as u64, i]);
                let eta0 = sample_equilibrium(&tables, rho, grid, mix(trial_seed, &[1]))?;
                let traj = simulate(&eta0, &env, &cfg.g, cfg.t_end, mix(trial_seed, &[2]))?;
                let track = martingale_track(
                    &traj,
                    &env,
                    &cfg.g,
                    &corrected,
                    Normalization::Fluctuation { rho },
                    &[cfg.t_end],
                )?;
                let fin = traj.final_configuration(grid);
                Ok(TrialStats {
                    seed: trial_seed,
                    y0_g: fluctuation_pairing(&eta0, &g_vals, rho),
                    y0_h: fluctuation_pairing(&eta0, &h_vals, rho),
                    yt_g: fluctuation_pairing(&fin, &g_vals, rho),
                    y0_gap: fluctuation_pairing(&eta0, &g_vals, rho)
                        - fluctuation_pairing(&eta0, &corrected.u, rho),
                    martingale: track.martingale[0],
                    quadratic_variation: track.quadratic_variation[0],
                })
            })
            .collect::<Result<Vec<_>>>()?;

        for t in &trials {
            for (stat, value) in [
                ("y0_g", t.y0_g),
                ("yt_g", t.yt_g),
                ("martingale_t", t.martingale),
                ("qv_t", t.quadratic_variation),
            ] {
                rows.push(StatRow {
                    n,
                    seed: t.seed,
                    statistic: stat.into(),
                    value,
                });
            }
        }

        // (a) static covariance, two (G, H) pairs
        let gg: Vec<f64> = trials.iter().map(|t| t.y0_g * t.y0_g).collect();
        let gh: Vec<f64> = trials.iter().map(|t| t.y0_g * t.y0_h).collect();
        checks.push(three_se_check(
            format!("static_cov_gg_n{n}"),
            &gg,
            chi * g_vals.inner_0n(&g_vals),
            0.0,
        ));
        checks.push(three_se_check(
            format!("static_cov_gh_n{n}"),
            &gh,
            chi * g_vals.inner_0n(&h_vals),
            0.0,
        ));

        // (b) martingale identities
        let m: Vec<f64> = trials.iter().map(|t| t.martingale).collect();
        checks.push(three_se_check(format!("martingale_mean_n{n}"), &m, 0.0, 0.0));
        let m2_minus_qv: Vec<f64> = trials
            .iter()
            .map(|t| t.martingale * t.martingale - t.quadratic_variation)
            .collect();
        checks.push(three_se_check(
            format!("martingale_qv_identity_n{n}"),
            &m2_minus_qv,
            0.0,
            0.0,
        ));

        // (c) quadratic variation rate vs homogenized limit (10% + 3 SE)
        let qv_rate: Vec<f64> = trials
            .iter()
            .map(|t| t.quadratic_variation / cfg.t_end)
            .collect();
        checks.push(three_se_check(
            format!("qv_rate_n{n}"),
            &qv_rate,
            qv_limit,
            0.10 * qv_limit,
        ));
        rows.push(StatRow {
            n,
            seed: cfg.master_seed,
            statistic: "qv_rate_mean".into(),
            value: mean(&qv_rate),
        });
        rows.push(StatRow {
            n,
            seed: cfg.master_seed,
            statistic: "qv_rate_limit".into(),
            value: qv_limit,
        });

        // (d) lag covariance vs the semigroup prediction
        let lag: Vec<f64> = trials.iter().map(|t| t.yt_g * t.y0_g).collect();
        let evolved = semigroup_apply(&g_fn, cfg.t_end, phi_prime, &a).grid_values(grid)?;
        checks.push(three_se_check(
            format!("lag_cov_n{n}"),
            &lag,
            chi * evolved.inner_0n(&g_vals),
            0.0,
        ));

        // corrected-vs-plain proximity: exact second moment
        let gaps: Vec<f64> = trials.iter().map(|t| t.y0_gap * t.y0_gap).collect();
        let exact = chi * corrected.gap_norm0(&g_vals).powi(2);
        checks.push(three_se_check(
            format!("corrected_gap_moment_n{n}"),
            &gaps,
            exact,
            1e-12,
        ));
        rows.push(StatRow {
            n,
            seed: cfg.master_seed,
            statistic: "corrected_gap_norm0".into(),
            value: corrected.gap_norm0(&g_vals),
        });
    }
    Ok((rows, checks))
}
