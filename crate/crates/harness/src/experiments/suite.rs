//! Compact, CLI-runnable audits of every module invariant: lattice geometry,
//! environment laws, fugacity identities, detailed balance, conservation,
//! coupling order, resolvent certificates, homogenization oracles, PDE
//! behavior and field statistics. Each audit is normalized to
//! `observed <= bound`.

use zrp_core::dynamics::{
    coupled_simulate, reversibility_residual, simulate, Configuration,
};
use zrp_core::environment::{Environment, EnvironmentModel};
use zrp_core::error::Result;
use zrp_core::fields::{
    additive_functional, bg_statistic, fluctuation_pairing, replacement_statistic,
    DensityObservable, RateObservable,
};
use zrp_core::homogenization::{effective_matrix, harmonic_mean_oracle_1d, HomogenizedMatrix};
use zrp_core::lattice::{Direction, GridFunction, TorusGrid};
use zrp_core::measures::{
    canonical_vs_grand, sample_equilibrium, FugacityTables, PhiTable, RateFunction,
};
use zrp_core::pde::{cfl_limit, semigroup_apply, solve_hydrodynamic};
use zrp_core::resolvent::{solve_resolvent, SolveOptions};
use zrp_core::seeding::{mix, unit_f64};
use zrp_core::testfn::FourierSeries;

use crate::config::{nonlinear_rate, ExperimentConfig};
use crate::report::{CheckResult, StatRow};

const PI: f64 = std::f64::consts::PI;

fn two_point() -> EnvironmentModel {
    EnvironmentModel::IidTwoPoint {
        a_low: 1.0,
        a_high: 2.0,
        p_high: 0.5,
    }
}

fn nonlinear_rate_2() -> RateFunction {
    RateFunction::tabulate(|n| 2.0 * n as f64 - n as f64 / (n as f64 + 1.0), 64, 2.0)
        .expect("valid rate table")
}

pub fn run(cfg: &ExperimentConfig) -> Result<(Vec<StatRow>, Vec<CheckResult>)> {
    let seed = cfg.master_seed;
    let mut checks = Vec::new();

    // lattice: neighbor symmetry and interpolation exactness
    {
        let mut violations = 0usize;
        for (d, n) in [(1usize, 8usize), (2, 3), (3, 2)] {
            let grid = TorusGrid::new(d, n)?;
            for x in grid.site_indices() {
                for (y, dir) in grid.neighbors(x)? {
                    if grid.step(y, dir.reversed()) != x {
                        violations += 1;
                    }
                }
            }
        }
        checks.push(CheckResult::new("lattice_neighbor_symmetry", violations as f64, 0.0));

        let grid = TorusGrid::new(2, 4)?;
        let f = GridFunction::from_fn(grid, |u| 0.3 * u[0] - 0.7 * u[1] + 0.1);
        let mut worst: f64 = 0.0;
        for idx in grid.site_indices() {
            let u = grid.position(idx);
            worst = worst.max((f.multilinear_at(&u[..2]) - f.value(idx)).abs());
        }
        checks.push(CheckResult::new("lattice_interpolation_exact_at_sites", worst, 1e-12));

        // Riemann consistency of the discrete L2 norm
        let errs: Vec<f64> = [8usize, 64]
            .iter()
            .map(|&n| {
                let g = TorusGrid::new(1, n).unwrap();
                let f = GridFunction::from_fn(g, |u| u[0] * u[0]);
                (f.norm0().powi(2) - 0.4).abs()
            })
            .collect();
        checks.push(CheckResult::new("lattice_riemann_trend", errs[1] / errs[0], 0.5));
    }

    // environment: determinism, ellipticity, law of large numbers
    {
        let grid = TorusGrid::new(1, 1 << 12)?;
        let a = Environment::sample(two_point(), grid, mix(seed, &[10]))?;
        let b = Environment::sample(two_point(), grid, mix(seed, &[10]))?;
        let identical = (0..grid.sites()).all(|x| a.conductance(x, 0) == b.conductance(x, 0));
        checks.push(CheckResult::new(
            "env_deterministic",
            if identical { 0.0 } else { 1.0 },
            0.0,
        ));
        checks.push(CheckResult::new(
            "env_ellipticity",
            if a.check_ellipticity().is_ok() { 0.0 } else { 1.0 },
            0.0,
        ));
        let frac = (0..grid.sites())
            .filter(|&x| a.conductance(x, 0) == 2.0)
            .count() as f64
            / grid.sites() as f64;
        checks.push(CheckResult::new("env_two_point_fraction", (frac - 0.5).abs(), 0.025));
    }

    // measures: fugacity identity, inversion, sampler goodness of fit
    {
        let mut worst_id: f64 = 0.0;
        let mut worst_inv: f64 = 0.0;
        for rate in [RateFunction::Linear, nonlinear_rate(), nonlinear_rate_2()] {
            let t = FugacityTables::new(rate, 1e-12)?;
            for rho in [0.2, 0.5, 1.0, 2.0] {
                let alpha = t.fugacity(rho)?;
                worst_id = worst_id.max((t.mean_jump_rate(rho)? - alpha).abs());
            }
            for alpha in [0.1, 0.8, 1.7] {
                let rho = t.density(alpha)?;
                worst_inv = worst_inv.max((t.fugacity(rho)? - alpha).abs());
            }
        }
        checks.push(CheckResult::new("fugacity_identity", worst_id, 1e-8));
        checks.push(CheckResult::new("fugacity_inversion", worst_inv, 1e-8));

        let t = FugacityTables::new(RateFunction::Linear, 1e-12)?;
        let grid = TorusGrid::new(1, 1 << 13)?;
        let eta = sample_equilibrium(&t, 1.0, grid, mix(seed, &[11]))?;
        let pmf = t.marginal_pmf(1.0)?;
        let bins = 9usize;
        let m = grid.sites() as f64;
        let mut observed = vec![0.0f64; bins + 1];
        for &k in eta.occupancies() {
            observed[(k as usize).min(bins)] += 1.0;
        }
        let mut expected = vec![0.0f64; bins + 1];
        for (k, &p) in pmf.iter().enumerate() {
            expected[k.min(bins)] += p * m;
        }
        let chi2: f64 = observed
            .iter()
            .zip(&expected)
            .filter(|(_, &e)| e > 0.0)
            .map(|(&o, &e)| (o - e) * (o - e) / e)
            .sum();
        // significance 0.01 with 9 degrees of freedom
        checks.push(CheckResult::new("sampler_chi_squared", chi2, 21.666));

        // equivalence of ensembles: gap(K) * K stays bounded
        let g = nonlinear_rate();
        let t = FugacityTables::new(g.clone(), 1e-12)?;
        let h = |occ: &[u32]| g.g(occ[0]);
        let mut scaled = Vec::new();
        for k in 2..=6usize {
            let c = canonical_vs_grand(&h, k, 1, k as u32, &t)?;
            scaled.push(c.gap * k as f64);
        }
        let head = scaled[0].max(scaled[1]);
        let tail = scaled[2..].iter().fold(0.0f64, |m, &v| m.max(v));
        checks.push(CheckResult::new("ensemble_gap_bounded", tail / head, 2.0));
    }

    // dynamics: detailed balance, conservation, coupling order
    {
        let grid = TorusGrid::new(1, 8)?;
        let models = [two_point(), EnvironmentModel::IidUniform { eps0: 0.5 }];
        let mut worst: f64 = 0.0;
        for (ei, model) in models.iter().enumerate() {
            let env = Environment::sample(*model, grid, mix(seed, &[12, ei as u64]))?;
            for (gi, g) in [RateFunction::Linear, nonlinear_rate()].iter().enumerate() {
                let mut checked = 0;
                let mut k = 0u64;
                while checked < 1000 {
                    k += 1;
                    let occ: Vec<u32> = (0..16)
                        .map(|i| {
                            (unit_f64(mix(seed, &[13, ei as u64, gi as u64, k, i])) * 5.0) as u32
                        })
                        .collect();
                    let eta = Configuration::new(occ);
                    let x = (unit_f64(mix(seed, &[14, k])) * 16.0) as usize;
                    if eta.occupancy(x) == 0 {
                        continue;
                    }
                    let dir = Direction::decode((k % 2) as u8);
                    worst = worst.max(reversibility_residual(&eta, x, dir, &env, g)?.abs());
                    checked += 1;
                }
            }
        }
        let env = Environment::sample(two_point(), grid, mix(seed, &[12, 0]))?;
        checks.push(CheckResult::new("detailed_balance_residual", worst, 1e-12));

        let t = FugacityTables::new(RateFunction::Linear, 1e-12)?;
        let eta0 = sample_equilibrium(&t, 1.0, grid, mix(seed, &[15]))?;
        let traj = simulate(&eta0, &env, &RateFunction::Linear, 0.02, mix(seed, &[16]))?;
        traj.validate(grid)?;
        let conserved = traj.final_configuration(grid).total() == eta0.total();
        checks.push(CheckResult::new(
            "particle_conservation",
            if conserved { 0.0 } else { 1.0 },
            0.0,
        ));

        let mut order_violations = 0usize;
        let mut audited_events = 0usize;
        for s in 0..100u64 {
            let lower = sample_equilibrium(&t, 0.5, grid, mix(seed, &[17, s]))?;
            let upper = Configuration::new(
                lower
                    .occupancies()
                    .iter()
                    .enumerate()
                    .map(|(i, &k)| k + ((s + i as u64) % 2) as u32)
                    .collect(),
            );
            let c = coupled_simulate(&lower, &upper, &env, &RateFunction::Linear, 0.02, s)?;
            match c.audit_ordering(grid) {
                Ok(n) => audited_events += n,
                Err(_) => order_violations += 1,
            }
        }
        checks.push(CheckResult::new("coupling_order_audit", order_violations as f64, 0.0));
        checks.push(CheckResult::new(
            "coupling_audit_events",
            if audited_events > 500 { 0.0 } else { 1.0 },
            0.0,
        ));
    }

    // resolvent: certificates on 100+ instances, corrected-function
    // convergence sweep, self-adjointness
    {
        let grid = TorusGrid::new(1, 8)?;
        let mut cert_failures = 0usize;
        for s in 0..34u64 {
            let env = Environment::sample(two_point(), grid, mix(seed, &[18, s]))?;
            for &lambda in &[0.5, 1.0, 2.0] {
                let rhs = GridFunction::new(
                    grid,
                    (0..grid.sites())
                        .map(|i| 2.0 * unit_f64(mix(seed, &[19, s, i as u64])) - 1.0)
                        .collect(),
                )?;
                let sol = solve_resolvent(&env, lambda, &rhs, SolveOptions::with_tol(1e-11))?;
                if !sol.certificates(&env).all_hold(1e-8) {
                    cert_failures += 1;
                }
            }
        }
        checks.push(CheckResult::new("resolvent_certificates", cert_failures as f64, 0.0));

        // corrected test functions converge toward the test function
        let g_fn = FourierSeries::constant(1, 1.0).with_mode(&[1], 0.5, 0.0);
        let a = HomogenizedMatrix::isotropic(1, 4.0 / 3.0, 0.5);
        let mut gaps = Vec::new();
        for n in [16usize, 32, 64, 128] {
            let grid_n = TorusGrid::new(1, n)?;
            let g_vals = g_fn.grid_values(grid_n)?;
            let mut acc = 0.0;
            for s in 0..5u64 {
                let env = Environment::sample(two_point(), grid_n, mix(seed, &[28, s]))?;
                let sol = zrp_core::resolvent::corrected_test_function(
                    &g_fn,
                    1.0,
                    &env,
                    &a,
                    SolveOptions::with_tol(1e-12),
                )?;
                acc += sol.gap_norm0(&g_vals);
            }
            gaps.push(acc / 5.0);
        }
        let monotone = gaps.windows(2).all(|w| w[1] < w[0]);
        checks.push(CheckResult::new(
            "corrected_function_gap_decreasing",
            if monotone { 0.0 } else { 1.0 },
            0.0,
        ));

        let env = Environment::sample(two_point(), grid, mix(seed, &[20]))?;
        let u = GridFunction::new(
            grid,
            (0..16).map(|i| unit_f64(mix(seed, &[21, i]))).collect(),
        )?;
        let v = GridFunction::new(
            grid,
            (0..16).map(|i| unit_f64(mix(seed, &[22, i]))).collect(),
        )?;
        let lu = env.apply_laplacian(&u);
        let lv = env.apply_laplacian(&v);
        checks.push(CheckResult::new(
            "laplacian_self_adjoint",
            (u.inner_0n(&lv) - lu.inner_0n(&v)).abs(),
            1e-8,
        ));
    }

    // homogenization oracles
    {
        let grid = TorusGrid::new(1, 256)?;
        let env = Environment::sample(EnvironmentModel::Constant { a: 1.7 }, grid, 0)?;
        let a = effective_matrix(&env, 1e-12)?;
        checks.push(CheckResult::new(
            "homog_constant_exact",
            (a.entry(0, 0) - 1.7).abs(),
            1e-10,
        ));
        let env = Environment::sample(two_point(), grid, mix(seed, &[23]))?;
        let a = effective_matrix(&env, 1e-12)?;
        let oracle = harmonic_mean_oracle_1d(&env)?;
        checks.push(CheckResult::new(
            "homog_ring_oracle",
            (a.entry(0, 0) - oracle).abs() / oracle,
            1e-8,
        ));
        let env = Environment::sample(
            EnvironmentModel::PeriodicCheckerboard {
                a_even: 1.0,
                a_odd: 2.0,
            },
            grid,
            0,
        )?;
        let a = effective_matrix(&env, 1e-12)?;
        checks.push(CheckResult::new(
            "homog_checkerboard",
            (a.entry(0, 0) - 4.0 / 3.0).abs(),
            1e-8,
        ));
    }

    // PDE and semigroup
    {
        let t = FugacityTables::new(RateFunction::Linear, 1e-12)?;
        let phi = PhiTable::build(&t, 4.0, 161)?;
        let a = HomogenizedMatrix::isotropic(1, 1.0, 1.0);
        let cells = 512usize; // dx = 1/256
        let dx = 2.0 / cells as f64;
        let dt = 0.4 * cfl_limit(&a, &phi, 0.5, 1.5, dx, 1);
        let rho0 = |u: &[f64]| 1.0 + 0.5 * (PI * u[0]).cos();
        let f = solve_hydrodynamic(&rho0, &a, &phi, 0.05, cells, dt, 4)?;
        let decay = (-PI * PI * 0.05).exp();
        let mut sup: f64 = 0.0;
        let mut max_principle = 0usize;
        for idx in 0..f.cells() {
            let u = f.cell_position(idx);
            let exact = 1.0 + 0.5 * decay * (PI * u[0]).cos();
            sup = sup.max((f.final_snapshot()[idx] - exact).abs());
        }
        for snap in &f.snapshots {
            for &v in snap {
                if !(0.5 - 1e-12..=1.5 + 1e-12).contains(&v) {
                    max_principle += 1;
                }
            }
        }
        checks.push(CheckResult::new("pde_heat_error", sup, 1e-3));
        checks.push(CheckResult::new(
            "pde_mass_drift",
            (f.mass.last().unwrap() - f.mass[0]).abs() / f.mass[0],
            1e-10,
        ));
        checks.push(CheckResult::new("pde_max_principle", max_principle as f64, 0.0));

        // weak-solution residual decreasing under refinement
        let test = zrp_core::testfn::SpaceTimeTest::steady(
            FourierSeries::zero(1).with_mode(&[1], 1.0, 0.0),
        );
        let mut residuals = Vec::new();
        for (cells, snaps) in [(64usize, 30usize), (128, 60), (256, 120)] {
            let dx: f64 = 2.0 / cells as f64;
            let dt = 0.25 * dx * dx / 2.0;
            let field = solve_hydrodynamic(&rho0, &a, &phi, 0.05, cells, dt, snaps)?;
            residuals.push(zrp_core::pde::weak_residual(&field, &rho0, &test, &a, &phi));
        }
        let decreasing = residuals[1] < residuals[0] && residuals[2] < residuals[1];
        checks.push(CheckResult::new(
            "pde_weak_residual_refines",
            if decreasing { 0.0 } else { 1.0 },
            0.0,
        ));

        let g = FourierSeries::zero(1).with_mode(&[1], 1.0, 0.0);
        let evolved = semigroup_apply(&g, 1.0, 1.0, &a);
        checks.push(CheckResult::new(
            "semigroup_mode_decay",
            (evolved.terms()[0].cos_amp - (-PI * PI).exp()).abs(),
            1e-14,
        ));
    }

    // fields: exact projections and replacement statistic
    {
        let grid = TorusGrid::new(1, 8)?;
        let env = Environment::sample(two_point(), grid, mix(seed, &[24]))?;
        let g_rate = nonlinear_rate();
        let tables = FugacityTables::new(g_rate.clone(), 1e-12)?;
        let weights = FourierSeries::zero(1)
            .with_mode(&[1], 1.0, 0.0)
            .grid_values(grid)?;
        let eta0 = sample_equilibrium(&tables, 1.0, grid, mix(seed, &[25]))?;
        let traj = simulate(&eta0, &env, &g_rate, 0.01, mix(seed, &[26]))?;
        let density = DensityObservable { rho: 1.0 };
        let zero = bg_statistic(&traj, &env, &weights, &density, 1.0, &tables)?;
        checks.push(CheckResult::new("bg_density_zero", zero.abs(), 0.0));
        let rate_obs = RateObservable { g: g_rate.clone() };
        let stats = additive_functional(&traj, &env, &weights, &rate_obs, 1.0, &tables)?;
        let bg = bg_statistic(&traj, &env, &weights, &rate_obs, 1.0, &tables)?;
        checks.push(CheckResult::new(
            "additive_functional_identity",
            (stats.functional - stats.projection - bg).abs(),
            0.0,
        ));

        let lin_tables = FugacityTables::new(RateFunction::Linear, 1e-12)?;
        let lin_phi = PhiTable::build(&lin_tables, 8.0, 161)?;
        let flat = zrp_core::dynamics::TrajectoryRecord {
            initial: Configuration::new(vec![2; 16]),
            events: vec![],
            horizon: 0.25,
            seed: 0,
        };
        let v = replacement_statistic(&flat, &env, &RateFunction::Linear, &lin_phi, 0.25)?;
        checks.push(CheckResult::new("replacement_constant_config", v.abs(), 1e-9));

        // static covariance quick check
        let chi = tables.occupancy_variance(1.0)?;
        let trials = 3000u64;
        let mut acc = Vec::with_capacity(trials as usize);
        for s in 0..trials {
            let eta = sample_equilibrium(&tables, 1.0, grid, mix(seed, &[27, s]))?;
            let y = fluctuation_pairing(&eta, &weights, 1.0);
            acc.push(y * y);
        }
        let mc = acc.iter().sum::<f64>() / trials as f64;
        let expect = chi * weights.inner_0n(&weights);
        let se = {
            let m = mc;
            (acc.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
                / (trials as f64 - 1.0)
                / trials as f64)
                .sqrt()
        };
        checks.push(CheckResult::new(
            "static_covariance_quick",
            (mc - expect).abs(),
            3.0 * se,
        ));
    }

    // determinism: a nested experiment emits identical bytes for one worker
    // and four workers
    {
        let mut mini = ExperimentConfig::default_for(crate::config::ExperimentKind::Homogenize);
        mini.n_values = vec![32, 64];
        mini.env_seeds = 3;
        mini.master_seed = mix(seed, &[29]);
        let a = crate::experiments::run_experiment_with_workers(&mini, Some(1));
        let b = crate::experiments::run_experiment_with_workers(&mini, Some(4));
        let identical = a.failure.is_none()
            && b.failure.is_none()
            && a.csv_bytes() == b.csv_bytes()
            && a.json_bytes().ok() == b.json_bytes().ok();
        checks.push(CheckResult::new(
            "report_bytes_worker_independent",
            if identical { 0.0 } else { 1.0 },
            0.0,
        ));
    }

    Ok((Vec::new(), checks))
}
