//! Effective diffusion matrix of an environment via the periodic corrector
//! problem.
//!
//! For each axis `i` the corrector is the periodic grid function chi_i
//! minimizing the Dirichlet energy of the tilted field `x_i + chi_i`. The
//! effective matrix is the normalized bond-energy cross form of the corrected
//! gradients,
//!
//! `A_ij = (2N)^-d sum_{x,k} N^2 a_k(x) [d_ik/N + D_k chi_i] [d_jk/N + D_k chi_j]`,
//!
//! symmetric by construction and equal to the bond conductance itself when
//! the environment is constant (the corrector vanishes).

use serde::{Deserialize, Serialize};

use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::lattice::MAX_DIM;
use crate::resolvent::cg_spd;
use crate::seeding;

/// Effective (homogenized) diffusion matrix with its ellipticity certificate
/// and provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomogenizedMatrix {
    #[serde(rename = "A")]
    rows: Vec<Vec<f64>>,
    pub epsilon0: f64,
    pub method: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub seeds: Vec<u64>,
}

impl HomogenizedMatrix {
    pub fn new(rows: Vec<Vec<f64>>, epsilon0: f64, method: &str, n: usize, seeds: Vec<u64>) -> Self {
        HomogenizedMatrix {
            rows,
            epsilon0,
            method: method.to_string(),
            n,
            seeds,
        }
    }

    /// Diagonal matrix `value * I`, e.g. for constant environments or tests.
    pub fn isotropic(d: usize, value: f64, epsilon0: f64) -> Self {
        let rows = (0..d)
            .map(|i| (0..d).map(|j| if i == j { value } else { 0.0 }).collect())
            .collect();
        HomogenizedMatrix {
            rows,
            epsilon0,
            method: "exact".to_string(),
            n: 0,
            seeds: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn quadratic_form(&self, xi: &[f64]) -> f64 {
        let d = self.dim();
        let mut acc = 0.0;
        for i in 0..d {
            for j in 0..d {
                acc += xi[i] * self.rows[i][j] * xi[j];
            }
        }
        acc
    }

    /// `k . A k` for an integer wave vector (used by Fourier machinery).
    pub fn mode_energy(&self, k: &[i32; MAX_DIM]) -> f64 {
        let d = self.dim();
        let mut acc = 0.0;
        for i in 0..d {
            for j in 0..d {
                acc += k[i] as f64 * self.rows[i][j] * k[j] as f64;
            }
        }
        acc
    }

    /// Upper bound on the largest eigenvalue (max absolute row sum).
    pub fn spectral_bound(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let d = self.dim();
        (0..d).all(|i| (0..d).all(|j| (self.rows[i][j] - self.rows[j][i]).abs() <= tol))
    }

    /// Check the coerciveness band `eps0 |xi|^2 <= xi.A xi <= |xi|^2/eps0` on
    /// the canonical basis and a deterministic set of random directions.
    pub fn certify_ellipticity(&self, slack: f64) -> Result<()> {
        let d = self.dim();
        let mut dirs: Vec<Vec<f64>> = (0..d)
            .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        for t in 0..32u64 {
            let mut v: Vec<f64> = (0..d)
                .map(|j| seeding::unit_f64(seeding::mix(0xE11, &[t, j as u64])) - 0.5)
                .collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-9 {
                v.iter_mut().for_each(|x| *x /= norm);
                dirs.push(v);
            }
        }
        for xi in &dirs {
            let q = self.quadratic_form(xi);
            let norm_sq: f64 = xi.iter().map(|x| x * x).sum();
            if q < self.epsilon0 * norm_sq - slack || q > norm_sq / self.epsilon0 + slack {
                return Err(Error::config(format!(
                    "quadratic form {q} outside ellipticity band [{}, {}]",
                    self.epsilon0 * norm_sq,
                    norm_sq / self.epsilon0
                )));
            }
        }
        if !self.is_symmetric(slack) {
            return Err(Error::config("matrix not symmetric"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Solve the periodic corrector problem for every axis and assemble the
/// effective matrix. `tol` is the relative residual tolerance of the inner
/// conjugate-gradient solves.
pub fn effective_matrix(env: &Environment, tol: f64) -> Result<HomogenizedMatrix> {
    let grid = env.grid();
    let d = grid.dim();
    let sites = grid.sites();
    let n = grid.scale() as f64;

    // Correctors: (-L) chi_i = -rhs_i with rhs_i(x) = N [a_i(x - e_i) - a_i(x)].
    let mut correctors: Vec<Vec<f64>> = Vec::with_capacity(d);
    for axis in 0..d {
        let mut b = vec![0.0; sites];
        let mut norm_sq = 0.0;
        for x in 0..sites {
            let prev = grid.neighbor(x, axis, false);
            let v = n * (env.conductance(prev, axis) - env.conductance(x, axis));
            // (-L) chi = -b
            b[x] = -v;
            norm_sq += v * v;
        }
        if norm_sq == 0.0 {
            correctors.push(vec![0.0; sites]);
            continue;
        }
        let target = tol * (norm_sq / n.powi(d as i32)).sqrt();
        let apply_neg_l = |u: &[f64], out: &mut [f64]| {
            for x in 0..sites {
                let mut acc = 0.0;
                for ax in 0..d {
                    let up = grid.neighbor(x, ax, true);
                    let dn = grid.neighbor(x, ax, false);
                    acc += env.bond_rate(x, ax) * (u[up] - u[x]);
                    acc += env.bond_rate(dn, ax) * (u[dn] - u[x]);
                }
                out[x] = -acc;
            }
        };
        let (chi, _iters) = cg_spd(
            sites,
            apply_neg_l,
            &b,
            target,
            40 * sites + 200,
            grid,
            true,
            None,
        )?;
        correctors.push(chi);
    }

    // Corrected gradients g_i(x,k) = delta_ik / N + chi_i(x+e_k) - chi_i(x).
    let vol = sites as f64;
    let mut rows = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in i..d {
            let mut acc = 0.0;
            for x in 0..sites {
                for k in 0..d {
                    let up = grid.neighbor(x, k, true);
                    let gi = if i == k { 1.0 / n } else { 0.0 } + correctors[i][up]
                        - correctors[i][x];
                    let gj = if j == k { 1.0 / n } else { 0.0 } + correctors[j][up]
                        - correctors[j][x];
                    acc += n * n * env.conductance(x, k) * gi * gj;
                }
            }
            rows[i][j] = acc / vol;
            rows[j][i] = rows[i][j];
        }
    }

    Ok(HomogenizedMatrix {
        rows,
        epsilon0: env.epsilon0(),
        method: "periodic-corrector".to_string(),
        n: grid.scale(),
        seeds: vec![env.seed()],
    })
}

/// Exact effective conductance of a 1-d ring: the harmonic mean of the bond
/// conductances. Independent oracle for `effective_matrix` in d = 1.
pub fn harmonic_mean_oracle_1d(env: &Environment) -> Result<f64> {
    let grid = env.grid();
    if grid.dim() != 1 {
        return Err(Error::usage("harmonic-mean oracle only applies in d = 1"));
    }
    let inv_sum: f64 = grid
        .site_indices()
        .map(|x| 1.0 / env.conductance(x, 0))
        .sum();
    Ok(grid.sites() as f64 / inv_sum)
}
