//! Convergence of corrected test functions and of their jump-channel energy
//! toward the homogenized limits, across scales and environment seeds.

use zrp_core::environment::{Environment, EnvironmentModel};
use zrp_core::homogenization::{effective_matrix, harmonic_mean_oracle_1d, HomogenizedMatrix};
use zrp_core::lattice::{Direction, TorusGrid};
use zrp_core::resolvent::{corrected_test_function, SolveOptions};
use zrp_core::testfn::FourierSeries;

fn two_point() -> EnvironmentModel {
    EnvironmentModel::IidTwoPoint {
        a_low: 1.0,
        a_high: 2.0,
        p_high: 0.5,
    }
}

/// Exact effective conductance of the iid two-point law in d = 1: the
/// harmonic mean of the distribution.
fn exact_a() -> f64 {
    1.0 / (0.5 / 1.0 + 0.5 / 2.0)
}

#[test]
fn corrected_functions_converge_to_the_test_function() {
    // || G_N^lambda - G ||_{0,N} strictly decreasing along N, averaged over
    // five environment seeds (d = 1, G = 1 + cos(pi u)/2).
    let g = FourierSeries::constant(1, 1.0).with_mode(&[1], 0.5, 0.0);
    let a = HomogenizedMatrix::isotropic(1, exact_a(), 0.5);
    let lambda = 1.0;
    let mut gaps = Vec::new();
    for n in [16usize, 32, 64, 128] {
        let grid = TorusGrid::new(1, n).unwrap();
        let g_vals = g.grid_values(grid).unwrap();
        let mut acc = 0.0;
        for seed in 0..5u64 {
            let env = Environment::sample(two_point(), grid, 100 + seed).unwrap();
            let sol =
                corrected_test_function(&g, lambda, &env, &a, SolveOptions::with_tol(1e-12))
                    .unwrap();
            acc += sol.gap_norm0(&g_vals);
        }
        gaps.push(acc / 5.0);
    }
    for w in gaps.windows(2) {
        assert!(w[1] < w[0], "gap not strictly decreasing: {gaps:?}");
    }
}

#[test]
fn jump_channel_energy_converges_to_twice_the_homogenized_energy() {
    // The expected quadratic variation rate of the corrected fluctuation
    // martingale is phi(rho) * N^-d * sum over ordered jump channels of
    // p [dG^lambda]^2. Both channels of every bond contribute, so the limit
    // is 2 phi(rho) int grad G . A grad G du; the factor two is forced by the
    // stationary covariance (fluctuation-dissipation), and the energy of the
    // corrected function (corrector oscillations included) converges to the
    // homogenized energy.
    let g = FourierSeries::zero(1).with_mode(&[1], 1.0, 0.0);
    let a = HomogenizedMatrix::isotropic(1, exact_a(), 0.5);
    let target = 2.0 * g.dirichlet_energy(&a); // phi(1) = 1 for g(k) = k
    let lambda = 1.0;
    let mut errs = Vec::new();
    for n in [16usize, 32, 64, 128] {
        let grid = TorusGrid::new(1, n).unwrap();
        let nd = grid.scale() as f64;
        let mut acc = 0.0;
        for seed in 0..5u64 {
            let env = Environment::sample(two_point(), grid, 200 + seed).unwrap();
            let sol =
                corrected_test_function(&g, lambda, &env, &a, SolveOptions::with_tol(1e-12))
                    .unwrap();
            let w = &sol.u;
            let mut channel_energy = 0.0;
            for x in grid.site_indices() {
                for dir in Direction::all(1) {
                    let y = grid.step(x, dir);
                    let dw = w.values[y] - w.values[x];
                    channel_energy += env.jump_rate(x, dir) * dw * dw;
                }
            }
            acc += channel_energy / nd;
        }
        errs.push((acc / 5.0 - target).abs());
    }
    assert!(
        errs.last().unwrap() < &(0.05 * target),
        "channel energy off target: errs {errs:?} target {target}"
    );
    assert!(
        errs.last().unwrap() < &errs[0],
        "no convergence trend: {errs:?}"
    );
}

#[test]
fn effective_matrix_feeds_back_consistently() {
    // The homogenized A computed from a large realization agrees with the
    // distributional value and keeps the corrected-function gap small.
    let grid = TorusGrid::new(1, 1 << 11).unwrap();
    let env = Environment::sample(two_point(), grid, 4242).unwrap();
    let a = effective_matrix(&env, 1e-12).unwrap();
    let oracle = harmonic_mean_oracle_1d(&env).unwrap();
    assert!((a.entry(0, 0) - oracle).abs() < 1e-8);
    assert!((a.entry(0, 0) - exact_a()).abs() < 0.02);

    let g = FourierSeries::constant(1, 1.0).with_mode(&[1], 0.5, 0.0);
    let small = TorusGrid::new(1, 128).unwrap();
    let env_small = Environment::sample(two_point(), small, 77).unwrap();
    let g_vals = g.grid_values(small).unwrap();
    let sol =
        corrected_test_function(&g, 1.0, &env_small, &a, SolveOptions::with_tol(1e-12)).unwrap();
    assert!(sol.gap_norm0(&g_vals) < 0.05);
}
