//! Resolvent solves `(lambda - L) u = rhs` for the weighted graph Laplacian
//! of an environment, and the corrected test functions built from them.
//!
//! The operator is symmetric positive definite for `lambda > 0`, so plain
//! conjugate gradients converge without preconditioning; an optional Jacobi
//! preconditioner is available for stiff environments. Every solution is
//! certified post hoc against the resolvent estimates
//!
//! * `||u||_{0,N} <= ||rhs||_{0,N} / lambda`
//! * `N^-d sum_bonds p(x,y) [u(y)-u(x)]^2 <= ||rhs||_{0,N}^2 / lambda`
//! * `||u||_inf <= ||rhs||_inf / lambda` and the componentwise maximum
//!   principle `min rhs/lambda <= u <= max rhs/lambda`.

use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::homogenization::HomogenizedMatrix;
use crate::lattice::{Direction, GridFunction, TorusGrid};
use crate::testfn::FourierSeries;

/// Weighted graph Laplacian `(L u)(x) = sum_y p(x,y)[u(y) - u(x)]`.
pub fn apply_laplacian(env: &Environment, u: &GridFunction) -> GridFunction {
    env.apply_laplacian(u)
}

#[derive(Clone, Copy, Debug)]
pub struct SolveOptions {
    /// Absolute tolerance on the residual in `||.||_{0,N}`.
    pub tol: f64,
    pub max_iterations: usize,
    /// Jacobi (diagonal) preconditioning.
    pub jacobi: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-10,
            max_iterations: 200_000,
            jacobi: false,
        }
    }
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        SolveOptions {
            tol,
            ..Default::default()
        }
    }
}

/// A certified resolvent solve.
#[derive(Clone, Debug)]
pub struct ResolventSolution {
    pub u: GridFunction,
    pub lambda: f64,
    pub rhs: GridFunction,
    pub residual_norm0: f64,
    pub iterations: usize,
}

/// Observed value / bound pairs for the a-priori resolvent estimates.
#[derive(Clone, Copy, Debug)]
pub struct ResolventCertificates {
    /// `||u||_{0,N}` vs `lambda^-1 ||rhs||_{0,N}`.
    pub l2: (f64, f64),
    /// Bond Dirichlet energy `N^-d sum_bonds p [du]^2` vs `lambda^-1 ||rhs||_{0,N}^2`.
    pub dirichlet: (f64, f64),
    /// `||u||_inf` vs `lambda^-1 ||rhs||_inf`.
    pub sup: (f64, f64),
    /// `(min u, max u)` vs `(lambda^-1 min rhs, lambda^-1 max rhs)`.
    pub range_u: (f64, f64),
    pub range_bound: (f64, f64),
}

impl ResolventCertificates {
    /// All four estimates hold up to a relative slack (for solver tolerance).
    pub fn all_hold(&self, rel_slack: f64) -> bool {
        let pad = |b: f64| b.abs() * rel_slack + 1e-13;
        self.l2.0 <= self.l2.1 + pad(self.l2.1)
            && self.dirichlet.0 <= self.dirichlet.1 + pad(self.dirichlet.1)
            && self.sup.0 <= self.sup.1 + pad(self.sup.1)
            && self.range_u.0 >= self.range_bound.0 - pad(self.range_bound.0)
            && self.range_u.1 <= self.range_bound.1 + pad(self.range_bound.1)
    }
}

impl ResolventSolution {
    pub fn certificates(&self, env: &Environment) -> ResolventCertificates {
        let grid = self.u.grid;
        let nd = (grid.scale() as f64).powi(grid.dim() as i32);
        let mut dirichlet = 0.0;
        for x in grid.site_indices() {
            for axis in 0..grid.dim() {
                let y = grid.neighbor(x, axis, true);
                let du = self.u.values[y] - self.u.values[x];
                dirichlet += env.bond_rate(x, axis) * du * du;
            }
        }
        dirichlet /= nd;
        let rhs0 = self.rhs.norm0();
        let (min_u, max_u) = self
            .u
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let (min_r, max_r) = self
            .rhs
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        ResolventCertificates {
            l2: (self.u.norm0(), rhs0 / self.lambda),
            dirichlet: (dirichlet, rhs0 * rhs0 / self.lambda),
            sup: (self.u.sup_norm(), self.rhs.sup_norm() / self.lambda),
            range_u: (min_u, max_u),
            range_bound: (min_r / self.lambda, max_r / self.lambda),
        }
    }

    /// `||u - g||_{0,N}` against another grid function (e.g. the plain test
    /// function under a corrected one).
    pub fn gap_norm0(&self, g: &GridFunction) -> f64 {
        let nd = (self.u.grid.scale() as f64).powi(self.u.grid.dim() as i32);
        let sum: f64 = self
            .u
            .values
            .iter()
            .zip(&g.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        (sum / nd).sqrt()
    }

    /// Solve metadata as JSON (the solution itself exports as grid CSV).
    pub fn metadata_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&serde_json::json!({
            "lambda": self.lambda,
            "iterations": self.iterations,
            "residual_norm0": self.residual_norm0,
            "d": self.u.grid.dim(),
            "n": self.u.grid.scale(),
        }))?)
    }
}

/// Conjugate gradients for a symmetric positive (semi-)definite operator,
/// matrix-free. Convergence is measured in the `||.||_{0,N}` norm of the
/// residual. `project_mean` restricts the solve to mean-zero functions (used
/// for the singular corrector problem).
#[allow(clippy::too_many_arguments)]
pub(crate) fn cg_spd(
    sites: usize,
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    tol_norm0: f64,
    max_iterations: usize,
    grid: TorusGrid,
    project_mean: bool,
    inv_diag: Option<&[f64]>,
) -> Result<(Vec<f64>, usize)> {
    let nd = (grid.scale() as f64).powi(grid.dim() as i32);
    let norm0 = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / nd).sqrt();
    let project = |v: &mut [f64]| {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.iter_mut().for_each(|x| *x -= mean);
    };

    let mut x = vec![0.0; sites];
    let mut r = b.to_vec();
    if project_mean {
        project(&mut r);
    }
    let mut z = match inv_diag {
        Some(m) => r.iter().zip(m).map(|(ri, mi)| ri * mi).collect(),
        None => r.clone(),
    };
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; sites];

    for iter in 0..max_iterations {
        if norm0(&r) <= tol_norm0 {
            return Ok((x, iter));
        }
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(Error::Convergence {
                residual: norm0(&r),
                iterations: iter,
            });
        }
        let alpha = rz / pap;
        for i in 0..sites {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if project_mean && iter % 32 == 31 {
            project(&mut x);
            project(&mut r);
        }
        match inv_diag {
            Some(m) => {
                for i in 0..sites {
                    z[i] = r[i] * m[i];
                }
            }
            None => z.copy_from_slice(&r),
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..sites {
            p[i] = z[i] + beta * p[i];
        }
    }
    if norm0(&r) <= tol_norm0 {
        return Ok((x, max_iterations));
    }
    Err(Error::Convergence {
        residual: norm0(&r),
        iterations: max_iterations,
    })
}

/// Solve `(lambda - L) u = rhs` by conjugate gradients; deterministic given
/// the inputs, with the residual certified in `||.||_{0,N}`.
pub fn solve_resolvent(
    env: &Environment,
    lambda: f64,
    rhs: &GridFunction,
    opts: SolveOptions,
) -> Result<ResolventSolution> {
    if !(lambda > 0.0) {
        return Err(Error::usage("resolvent requires lambda > 0"));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::usage("tolerance must be positive"));
    }
    let grid = rhs.grid;
    if grid != env.grid() {
        return Err(Error::usage("rhs grid does not match environment grid"));
    }
    let sites = grid.sites();
    let d = grid.dim();
    let apply = |u: &[f64], out: &mut [f64]| {
        for x in 0..sites {
            let mut acc = lambda * u[x];
            for dir in Direction::all(d) {
                let y = grid.step(x, dir);
                acc -= env.jump_rate(x, dir) * (u[y] - u[x]);
            }
            out[x] = acc;
        }
    };
    let inv_diag: Option<Vec<f64>> = opts.jacobi.then(|| {
        (0..sites)
            .map(|x| 1.0 / (lambda + env.incident_rate_sum(x)))
            .collect()
    });
    let (u, iterations) = cg_spd(
        sites,
        apply,
        &rhs.values,
        opts.tol,
        opts.max_iterations,
        grid,
        false,
        inv_diag.as_deref(),
    )?;

    // recompute the certified residual
    let mut res = vec![0.0; sites];
    apply(&u, &mut res);
    let nd = (grid.scale() as f64).powi(d as i32);
    let residual_norm0 = (res
        .iter()
        .zip(&rhs.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / nd)
        .sqrt();

    Ok(ResolventSolution {
        u: GridFunction { grid, values: u },
        lambda,
        rhs: rhs.clone(),
        residual_norm0,
        iterations,
    })
}

/// Corrected test function: solve `(lambda - L) u = lambda G - div(A grad G)`
/// with the right-hand side assembled from analytic derivatives of `G`.
pub fn corrected_test_function(
    g: &FourierSeries,
    lambda: f64,
    env: &Environment,
    a: &HomogenizedMatrix,
    opts: SolveOptions,
) -> Result<ResolventSolution> {
    if a.dim() != env.grid().dim() {
        return Err(Error::usage("matrix dimension does not match grid"));
    }
    let rhs = g.resolvent_rhs(env.grid(), lambda, a)?;
    solve_resolvent(env, lambda, &rhs, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::EnvironmentModel;
    use crate::seeding;

    fn random_env(d: usize, n: usize, seed: u64) -> Environment {
        Environment::sample(
            EnvironmentModel::IidUniform { eps0: 0.5 },
            TorusGrid::new(d, n).unwrap(),
            seed,
        )
        .unwrap()
    }

    fn random_grid_fn(grid: TorusGrid, seed: u64) -> GridFunction {
        let values = (0..grid.sites())
            .map(|i| 2.0 * seeding::unit_f64(seeding::mix(seed, &[i as u64])) - 1.0)
            .collect();
        GridFunction::new(grid, values).unwrap()
    }

    #[test]
    fn laplacian_annihilates_constants_and_sums_to_zero() {
        let env = random_env(2, 4, 3);
        let c = GridFunction::constant(env.grid(), 4.2);
        let lc = apply_laplacian(&env, &c);
        assert!(lc.values.iter().all(|v| v.abs() < 1e-9));

        let u = random_grid_fn(env.grid(), 11);
        let lu = apply_laplacian(&env, &u);
        let total: f64 = lu.values.iter().sum();
        assert!(total.abs() < 1e-7 * env.grid().sites() as f64);
    }

    #[test]
    fn cosine_is_eigenfunction_for_constant_env() {
        // L cos(pi x) = -4 N^2 a sin^2(pi/2N) cos(pi x), exactly.
        let n = 8usize;
        let a = 1.7;
        let env = Environment::sample(
            EnvironmentModel::Constant { a },
            TorusGrid::new(1, n).unwrap(),
            0,
        )
        .unwrap();
        let u = GridFunction::from_fn(env.grid(), |p| (std::f64::consts::PI * p[0]).cos());
        let lu = apply_laplacian(&env, &u);
        let mu = 4.0 * (n * n) as f64 * (std::f64::consts::PI / (2.0 * n as f64)).sin().powi(2);
        for x in env.grid().site_indices() {
            assert!(
                (lu.values[x] + a * mu * u.values[x]).abs() < 1e-9,
                "site {x}"
            );
        }
    }

    #[test]
    fn laplacian_is_self_adjoint() {
        let env = random_env(2, 3, 9);
        let u = random_grid_fn(env.grid(), 1);
        let v = random_grid_fn(env.grid(), 2);
        let lu = apply_laplacian(&env, &u);
        let lv = apply_laplacian(&env, &v);
        assert!((u.inner_0n(&lv) - lu.inner_0n(&v)).abs() < 1e-8);
    }

    #[test]
    fn constant_rhs_gives_constant_over_lambda() {
        let env = random_env(1, 8, 4);
        let rhs = GridFunction::constant(env.grid(), 3.0);
        let sol = solve_resolvent(&env, 1.5, &rhs, SolveOptions::with_tol(1e-12)).unwrap();
        for &v in &sol.u.values {
            assert!((v - 2.0).abs() < 1e-10);
        }
        let cert = sol.certificates(&env);
        assert!(cert.all_hold(1e-9));
    }

    #[test]
    fn certificates_hold_on_random_instances() {
        for seed in 0..20u64 {
            for &lambda in &[0.5, 1.0, 2.0] {
                let env = random_env(1, 8, 100 + seed);
                let rhs = random_grid_fn(env.grid(), 200 + seed);
                let sol = solve_resolvent(&env, lambda, &rhs, SolveOptions::with_tol(1e-11))
                    .unwrap();
                assert!(sol.residual_norm0 <= 1e-10);
                let cert = sol.certificates(&env);
                assert!(cert.all_hold(1e-8), "seed {seed} lambda {lambda}: {cert:?}");
            }
        }
    }

    #[test]
    fn jacobi_agrees_with_plain() {
        let env = random_env(2, 4, 77);
        let rhs = random_grid_fn(env.grid(), 78);
        let a = solve_resolvent(&env, 1.0, &rhs, SolveOptions::with_tol(1e-12)).unwrap();
        let b = solve_resolvent(
            &env,
            1.0,
            &rhs,
            SolveOptions {
                tol: 1e-12,
                jacobi: true,
                ..Default::default()
            },
        )
        .unwrap();
        let diff: f64 = a
            .u
            .values
            .iter()
            .zip(&b.u.values)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-9);
    }

    #[test]
    fn iteration_cap_reports_convergence_error() {
        let env = random_env(1, 16, 5);
        let rhs = random_grid_fn(env.grid(), 6);
        let r = solve_resolvent(
            &env,
            0.5,
            &rhs,
            SolveOptions {
                tol: 1e-13,
                max_iterations: 2,
                jacobi: false,
            },
        );
        assert!(matches!(r, Err(Error::Convergence { .. })));
    }

    #[test]
    fn corrected_constant_function_is_unchanged() {
        let env = random_env(1, 8, 3);
        let a = HomogenizedMatrix::isotropic(1, 1.0, 0.5);
        let g = FourierSeries::constant(1, 2.0);
        let sol = corrected_test_function(&g, 1.0, &env, &a, SolveOptions::with_tol(1e-12)).unwrap();
        for &v in &sol.u.values {
            assert!((v - 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn neumann_dominance_for_large_lambda() {
        // || u - rhs/lambda ||_{0,N} = O(lambda^{-2}), so the gap to the
        // leading Neumann term shrinks as lambda grows.
        let env = random_env(1, 16, 8);
        let rhs = random_grid_fn(env.grid(), 9);
        let mut gaps = Vec::new();
        for &lambda in &[10.0, 100.0, 1000.0] {
            let sol = solve_resolvent(&env, lambda, &rhs, SolveOptions::with_tol(1e-12)).unwrap();
            let gap: f64 = sol
                .u
                .values
                .iter()
                .zip(&rhs.values)
                .map(|(u, r)| (u - r / lambda) * (u - r / lambda))
                .sum::<f64>();
            gaps.push(gap.sqrt());
        }
        assert!(gaps[1] < gaps[0] && gaps[2] < gaps[1], "{gaps:?}");
    }
}
