//! Hydrodynamic-limit experiment: profile-started microscopic runs against
//! the macroscopic diffusion solution with the homogenized matrix.
//!
//! For each scale `N`, `trials` independent trajectories start from the
//! local-equilibrium product measure of the initial profile and run in one
//! quenched environment realization. The trial-averaged occupancy profile is
//! box-smoothed over radius `floor(box_epsilon N)` and compared, site by
//! site, with the finite-volume solution driven by the effective matrix of
//! the same environment law.

use rayon::prelude::*;
use zrp_core::dynamics::simulate;
use zrp_core::environment::Environment;
use zrp_core::error::Result;
use zrp_core::homogenization::effective_matrix;
use zrp_core::lattice::TorusGrid;
use zrp_core::measures::{sample_profile, FugacityTables, PhiTable};
use zrp_core::pde::{cfl_limit, solve_hydrodynamic, DensityField};
use zrp_core::seeding::mix;

use crate::config::ExperimentConfig;
use crate::report::{CheckResult, StatRow};

pub(crate) const ENV_REF_LABEL: u64 = 0xA11CE;
pub(crate) const ENV_LABEL: u64 = 0xE27;

pub fn run(cfg: &ExperimentConfig) -> Result<(Vec<StatRow>, Vec<CheckResult>)> {
    let tables = FugacityTables::new(cfg.g.clone(), 1e-12)?;
    let profile = cfg.profile();

    // profile bounds, for the phi table range and CFL estimate
    let probe = TorusGrid::new(cfg.d, 64.min(1 << (12 / cfg.d)))?;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for idx in probe.site_indices() {
        let u = probe.position(idx);
        let v = profile.value(&u[..cfg.d]);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let phi = PhiTable::build(&tables, (2.0 * hi + 2.0).max(4.0), 401)?;

    // homogenized matrix from a large quenched realization of the same law
    let n_ref = if cfg.d == 1 { 1 << 12 } else { 32 };
    let grid_ref = TorusGrid::new(cfg.d, n_ref)?;
    let env_ref = Environment::sample(cfg.env, grid_ref, mix(cfg.master_seed, &[ENV_REF_LABEL]))?;
    let a = effective_matrix(&env_ref, 1e-10)?;

    // macroscopic reference solution
    let dx = 2.0 / cfg.pde_cells as f64;
    let dt = 0.4 * cfl_limit(&a, &phi, lo, hi, dx, cfg.d);
    let pde = solve_hydrodynamic(
        &|u| profile.value(u),
        &a,
        &phi,
        cfg.t_end,
        cfg.pde_cells,
        dt,
        5,
    )?;
    let final_snap = pde.times.len() - 1;

    let mut rows = Vec::new();
    let mut l2_errors = Vec::new();
    for &n in &cfg.n_values {
        let grid = TorusGrid::new(cfg.d, n)?;
        let env = Environment::sample(cfg.env, grid, mix(cfg.master_seed, &[ENV_LABEL, n as u64]))?;
        let finals: Vec<(u64, Vec<u32>)> = (0..cfg.trials as u64)
            .into_par_iter()
            .map(|i| -> Result<(u64, Vec<u32>)> {
                let trial_seed = mix(cfg.master_seed, &[n as u64, i]);
                let eta0 = sample_profile(
                    &tables,
                    &|u| profile.value(u),
                    grid,
                    mix(trial_seed, &[1]),
                )?;
                let traj = simulate(&eta0, &env, &cfg.g, cfg.t_end, mix(trial_seed, &[2]))?;
                Ok((trial_seed, traj.final_configuration(grid).occupancies().to_vec()))
            })
            .collect::<Result<Vec<_>>>()?;

        // sequential aggregation in trial order
        let mut mean_occ = vec![0.0f64; grid.sites()];
        for (trial_seed, occ) in &finals {
            let total: u64 = occ.iter().map(|&k| k as u64).sum();
            rows.push(StatRow {
                n,
                seed: *trial_seed,
                statistic: "final_total".into(),
                value: total as f64,
            });
            for (m, &k) in mean_occ.iter_mut().zip(occ) {
                *m += k as f64;
            }
        }
        for m in mean_occ.iter_mut() {
            *m /= cfg.trials as f64;
        }

        let (l2, sup) = smoothed_errors(cfg, grid, &mean_occ, &pde, final_snap);
        rows.push(StatRow {
            n,
            seed: cfg.master_seed,
            statistic: "l2_error".into(),
            value: l2,
        });
        rows.push(StatRow {
            n,
            seed: cfg.master_seed,
            statistic: "sup_error".into(),
            value: sup,
        });
        l2_errors.push(l2);
    }

    let mut checks = Vec::new();
    for (k, w) in l2_errors.windows(2).enumerate() {
        checks.push(CheckResult::new(
            format!(
                "l2_error_decreasing_n{}_to_n{}",
                cfg.n_values[k],
                cfg.n_values[k + 1]
            ),
            w[1] / w[0],
            1.0,
        ));
    }
    checks.push(CheckResult::new(
        format!("l2_error_final_n{}", cfg.n_values.last().unwrap()),
        *l2_errors.last().unwrap(),
        0.05,
    ));
    Ok((rows, checks))
}

/// Box-smooth the trial-averaged occupancy profile and compare with the PDE
/// snapshot at the site positions; returns `(l2, sup)` in the discrete norms.
fn smoothed_errors(
    cfg: &ExperimentConfig,
    grid: TorusGrid,
    mean_occ: &[f64],
    pde: &DensityField,
    snap: usize,
) -> (f64, f64) {
    let d = cfg.d;
    let l = ((cfg.box_epsilon * grid.scale() as f64).floor() as usize).max(1);
    let side = grid.side() as i64;
    let vol = (2 * l + 1).pow(d as u32) as f64;
    let nd = (grid.scale() as f64).powi(d as i32);

    let mut l2 = 0.0;
    let mut sup = 0.0f64;
    for x in grid.site_indices() {
        let c = grid.coords_of(x);
        let mut acc = 0.0;
        let mut offsets = vec![-(l as i64); d];
        'outer: loop {
            let mut coords = [0usize; zrp_core::lattice::MAX_DIM];
            for axis in 0..d {
                coords[axis] = (c[axis] as i64 + offsets[axis]).rem_euclid(side) as usize;
            }
            acc += mean_occ[grid.index_of(&coords[..d])];
            for axis in 0..d {
                offsets[axis] += 1;
                if offsets[axis] <= l as i64 {
                    continue 'outer;
                }
                offsets[axis] = -(l as i64);
            }
            break;
        }
        let smoothed = acc / vol;
        let u = grid.position(x);
        let reference = pde.value_at(snap, &u[..d]);
        let diff = smoothed - reference;
        l2 += diff * diff;
        sup = sup.max(diff.abs());
    }
    ((l2 / nd).sqrt(), sup)
}
