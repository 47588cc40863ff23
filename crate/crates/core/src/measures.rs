//! The interaction rate `g`, fugacity/partition machinery, exact samplers for
//! the grand-canonical product measures, and canonical-ensemble comparisons.
//!
//! The product measure with fugacity `alpha` has marginals
//! `P(k) = alpha^k / (g(k)! Z(alpha))` with `g(k)! = g(1)...g(k)`. Linear
//! growth of `g` makes `Z` entire, with a certifiable factorial-type tail, so
//! every moment here is a truncated series with controlled error:
//! `density(alpha)`, its monotone inverse `fugacity(rho)`, the mean jump rate
//! `phi(rho) = E[g]` and the occupancy variance `chi(rho)`.
//!
//! The keystone identity `phi(rho) = fugacity(rho)` (the telescoped series
//! `sum g(k) alpha^k / g(k)! = alpha Z`) is deliberately *not* used in the
//! computation: `phi` is always evaluated through the `E[g]` series so the
//! identity stays an independent cross-check.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dynamics::Configuration;
use crate::error::{Error, Result};
use crate::lattice::TorusGrid;
use crate::seeding;

/// Interaction rate `g: N0 -> R+` with linear growth
/// `n / c0 <= g(n) <= c0 n`. Tabulated rates continue past the table with the
/// proportional tail `g(n) = g(K) n / K`, which preserves the growth band and
/// monotonicity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateFunction {
    Linear,
    Table {
        values: Vec<f64>,
        c0: f64,
        non_decreasing: bool,
        #[serde(default)]
        lipschitz: Option<f64>,
    },
}

impl RateFunction {
    /// Tabulate `g` on `0..len` and derive the flags.
    pub fn tabulate(g: impl Fn(u32) -> f64, len: usize, c0: f64) -> Result<Self> {
        if len < 2 {
            return Err(Error::config("rate table needs at least g(0), g(1)"));
        }
        let values: Vec<f64> = (0..len as u32).map(g).collect();
        let non_decreasing = values.windows(2).all(|w| w[1] >= w[0]);
        let lipschitz = values
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .fold(0.0f64, f64::max);
        let rf = RateFunction::Table {
            values,
            c0,
            non_decreasing,
            lipschitz: Some(lipschitz),
        };
        rf.validate()?;
        Ok(rf)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            RateFunction::Linear => Ok(()),
            RateFunction::Table { values, c0, non_decreasing, .. } => {
                if values.is_empty() || values[0] != 0.0 {
                    return Err(Error::config("rate table must start with g(0) = 0"));
                }
                if !(*c0 >= 1.0) {
                    return Err(Error::config("linear-growth constant c0 must be >= 1"));
                }
                for (n, &v) in values.iter().enumerate().skip(1) {
                    let n = n as f64;
                    if !(v >= n / c0 - 1e-12 && v <= c0 * n + 1e-12) {
                        return Err(Error::config(format!(
                            "g({n}) = {v} violates linear growth with c0 = {c0}"
                        )));
                    }
                }
                if *non_decreasing && values.windows(2).any(|w| w[1] < w[0]) {
                    return Err(Error::config("non_decreasing flag set but table decreases"));
                }
                Ok(())
            }
        }
    }

    #[inline]
    pub fn g(&self, n: u32) -> f64 {
        match self {
            RateFunction::Linear => n as f64,
            RateFunction::Table { values, .. } => {
                let len = values.len();
                if (n as usize) < len {
                    values[n as usize]
                } else {
                    // proportional linear tail
                    values[len - 1] * n as f64 / (len - 1) as f64
                }
            }
        }
    }

    pub fn c0(&self) -> f64 {
        match self {
            RateFunction::Linear => 1.0,
            RateFunction::Table { c0, .. } => *c0,
        }
    }

    pub fn non_decreasing(&self) -> bool {
        match self {
            RateFunction::Linear => true,
            RateFunction::Table { non_decreasing, .. } => *non_decreasing,
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            RateFunction::Linear => 1.0,
            RateFunction::Table { values, lipschitz, .. } => lipschitz.unwrap_or_else(|| {
                values
                    .windows(2)
                    .map(|w| (w[1] - w[0]).abs())
                    .fold(0.0f64, f64::max)
            }),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let rf: RateFunction = serde_json::from_str(s)?;
        rf.validate()?;
        Ok(rf)
    }
}

#[derive(Clone, Copy, Debug)]
struct SeriesMoments {
    z: f64,
    mean: f64,
    second: f64,
    g_mean: f64,
}

/// Fugacity/partition machinery for one rate function.
///
/// All evaluations are truncated series with the factorial tail bound below
/// `tol`; the inverse map `fugacity(rho)` is a monotone bisection to `tol`.
#[derive(Clone, Debug)]
pub struct FugacityTables {
    rate: RateFunction,
    tol: f64,
    k_cap: usize,
    alpha_max: f64,
}

impl FugacityTables {
    pub fn new(rate: RateFunction, tol: f64) -> Result<Self> {
        rate.validate()?;
        if !(tol > 0.0) {
            return Err(Error::usage("tolerance must be positive"));
        }
        Ok(FugacityTables {
            rate,
            tol,
            k_cap: 200_000,
            alpha_max: 1e9,
        })
    }

    pub fn rate(&self) -> &RateFunction {
        &self.rate
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    fn series(&self, alpha: f64) -> Result<SeriesMoments> {
        debug_assert!(alpha >= 0.0);
        let mut term = 1.0f64; // alpha^k / g(k)!
        let mut z = 1.0;
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        let mut sg = 0.0;
        let mut k = 0u32;
        loop {
            if (k as usize) >= self.k_cap {
                return Err(Error::resource(format!(
                    "fugacity series for alpha = {alpha} exceeded {} terms",
                    self.k_cap
                )));
            }
            k += 1;
            let gk = self.rate.g(k);
            term *= alpha / gk;
            let kf = k as f64;
            z += term;
            s1 += kf * term;
            s2 += kf * kf * term;
            sg += gk * term;
            // factorial-type tail: once the term ratio is below 1/2 the
            // remaining mass (with any polynomial weight used here) is
            // geometrically dominated.
            let ratio = alpha / self.rate.g(k + 1);
            if ratio < 0.5 {
                let tail = term * ratio / (1.0 - ratio);
                if tail * (kf + 2.0) * (kf + 2.0) < self.tol * 1e-3 * z {
                    break;
                }
            }
        }
        Ok(SeriesMoments {
            z,
            mean: s1 / z,
            second: s2 / z,
            g_mean: sg / z,
        })
    }

    /// Normalizing constant `Z(alpha)`.
    pub fn partition(&self, alpha: f64) -> Result<f64> {
        self.check_alpha(alpha)?;
        Ok(self.series(alpha)?.z)
    }

    /// Mean occupancy `rho(alpha)`; strictly increasing in `alpha`.
    pub fn density(&self, alpha: f64) -> Result<f64> {
        self.check_alpha(alpha)?;
        Ok(self.series(alpha)?.mean)
    }

    /// `E[g]` under the fugacity-`alpha` marginal, by the direct series.
    pub fn mean_jump_rate_at_alpha(&self, alpha: f64) -> Result<f64> {
        self.check_alpha(alpha)?;
        Ok(self.series(alpha)?.g_mean)
    }

    fn check_alpha(&self, alpha: f64) -> Result<()> {
        if !(0.0..=self.alpha_max).contains(&alpha) {
            return Err(Error::usage(format!(
                "fugacity {alpha} outside supported range [0, {}]",
                self.alpha_max
            )));
        }
        Ok(())
    }

    /// Inverse map `alpha(rho)` by monotone bisection to the table tolerance.
    pub fn fugacity(&self, rho: f64) -> Result<f64> {
        if !(rho >= 0.0) || !rho.is_finite() {
            return Err(Error::usage(format!("density {rho} must be >= 0")));
        }
        if rho == 0.0 {
            return Ok(0.0);
        }
        // bracket by doubling; linear growth guarantees rho(alpha) -> inf
        let mut hi = rho.max(1.0);
        while self.density(hi)? < rho {
            hi *= 2.0;
            if hi > self.alpha_max {
                return Err(Error::usage(format!(
                    "density {rho} unreachable below fugacity cap {}",
                    self.alpha_max
                )));
            }
        }
        let mut lo = 0.0;
        while hi - lo > self.tol * hi.max(1.0) {
            let mid = 0.5 * (lo + hi);
            if self.density(mid)? < rho {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// `phi(rho) = E[g(occupancy)]` at density `rho`, via the `E[g]` series
    /// (not the telescoped identity, which tests verify independently).
    pub fn mean_jump_rate(&self, rho: f64) -> Result<f64> {
        let alpha = self.fugacity(rho)?;
        self.mean_jump_rate_at_alpha(alpha)
    }

    /// Static occupancy variance `chi(rho)`, by the direct second-moment
    /// series (no numerical differentiation).
    pub fn occupancy_variance(&self, rho: f64) -> Result<f64> {
        let alpha = self.fugacity(rho)?;
        let m = self.series(alpha)?;
        Ok(m.second - m.mean * m.mean)
    }

    /// `phi'(rho)` through the exact fluctuation identity
    /// `d rho / d alpha = chi / alpha`, so `phi' = alpha / chi`.
    pub fn phi_prime(&self, rho: f64) -> Result<f64> {
        if rho == 0.0 {
            return Ok(self.rate.g(1));
        }
        let alpha = self.fugacity(rho)?;
        let m = self.series(alpha)?;
        let chi = m.second - m.mean * m.mean;
        Ok(alpha / chi)
    }

    /// Truncated, renormalized marginal pmf at fugacity `alpha`.
    pub fn marginal_pmf(&self, alpha: f64) -> Result<Vec<f64>> {
        self.check_alpha(alpha)?;
        let mut probs = vec![1.0f64];
        let mut term = 1.0;
        let mut k = 0u32;
        loop {
            if probs.len() >= self.k_cap {
                return Err(Error::resource("pmf truncation cap exceeded"));
            }
            k += 1;
            term *= alpha / self.rate.g(k);
            probs.push(term);
            let ratio = alpha / self.rate.g(k + 1);
            if ratio < 0.5 && term * ratio / (1.0 - ratio) < self.tol * 1e-3 {
                break;
            }
        }
        let z: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= z);
        Ok(probs)
    }
}

fn draw_from_pmf(pmf: &[f64], u: f64) -> u32 {
    let mut acc = 0.0;
    for (k, &p) in pmf.iter().enumerate() {
        acc += p;
        if u < acc {
            return k as u32;
        }
    }
    (pmf.len() - 1) as u32
}

/// Iid sites with the equilibrium marginal at density `rho`; deterministic in
/// the seed.
pub fn sample_equilibrium(
    tables: &FugacityTables,
    rho: f64,
    grid: TorusGrid,
    seed: u64,
) -> Result<Configuration> {
    let alpha = tables.fugacity(rho)?;
    let pmf = tables.marginal_pmf(alpha)?;
    let mut rng = seeding::stream_rng(seed, &[0x5a17]);
    let occ = (0..grid.sites())
        .map(|_| draw_from_pmf(&pmf, rand::Rng::random::<f64>(&mut rng)))
        .collect();
    Ok(Configuration::new(occ))
}

/// Independent sites with site-dependent density `rho0(u)`: the
/// local-equilibrium product measure associated to the profile.
pub fn sample_profile(
    tables: &FugacityTables,
    rho0: &dyn Fn(&[f64]) -> f64,
    grid: TorusGrid,
    seed: u64,
) -> Result<Configuration> {
    let mut rng = seeding::stream_rng(seed, &[0x5a17]);
    let mut cache: HashMap<u64, Vec<f64>> = HashMap::new();
    let mut occ = Vec::with_capacity(grid.sites());
    for idx in grid.site_indices() {
        let u = grid.position(idx);
        let r = rho0(&u[..grid.dim()]);
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::config(format!(
                "profile value {r} at site {idx} must be a finite nonnegative density"
            )));
        }
        let pmf = match cache.entry(r.to_bits()) {
            std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::hash_map::Entry::Vacant(e) => {
                let alpha = tables.fugacity(r)?;
                e.insert(tables.marginal_pmf(alpha)?)
            }
        };
        occ.push(draw_from_pmf(pmf, rand::Rng::random::<f64>(&mut rng)));
    }
    Ok(Configuration::new(occ))
}

/// Canonical (fixed total) vs grand-canonical expectation of a local
/// observable on a `K^d`-site box, both exact.
#[derive(Clone, Copy, Debug)]
pub struct EnsembleComparison {
    pub canonical: f64,
    pub grand: f64,
    pub gap: f64,
}

const ENUMERATION_CAP: f64 = 5e7;

fn compositions_count(n: u64, m: u64) -> f64 {
    // C(n + m - 1, m - 1) in floating point, just for the resource guard
    let mut c = 1.0f64;
    for i in 0..(m - 1) {
        c *= (n + i + 1) as f64 / (i + 1) as f64;
    }
    c
}

/// Enumerate every occupancy vector of `m` sites with total `n`, calling the
/// visitor with the configuration and its canonical weight `prod 1/g(k)!`.
fn enumerate_canonical(
    m: usize,
    n: u32,
    inv_gfact: &[f64],
    occ: &mut Vec<u32>,
    weight: f64,
    visit: &mut impl FnMut(&[u32], f64),
) {
    if occ.len() == m - 1 {
        occ.push(n);
        visit(occ, weight * inv_gfact[n as usize]);
        occ.pop();
        return;
    }
    for k in 0..=n {
        occ.push(k);
        enumerate_canonical(m, n - k, inv_gfact, occ, weight * inv_gfact[k as usize], visit);
        occ.pop();
    }
}

fn canonical_expectation(
    h: &impl Fn(&[u32]) -> f64,
    m: usize,
    n: u32,
    inv_gfact: &[f64],
) -> (f64, f64) {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut occ = Vec::with_capacity(m);
    enumerate_canonical(m, n, inv_gfact, &mut occ, 1.0, &mut |occ, w| {
        num += w * h(occ);
        den += w;
    });
    (num, den)
}

/// Compare the canonical expectation of `h` on a box of `k_side^d` sites with
/// `n_particles` total against the grand-canonical expectation at the matched
/// density `n / K^d`. The canonical measure conditions the product measure on
/// the total (the fugacity cancels); the grand side decomposes over the exact
/// distribution of the box total.
pub fn canonical_vs_grand(
    h: &impl Fn(&[u32]) -> f64,
    k_side: usize,
    d: usize,
    n_particles: u32,
    tables: &FugacityTables,
) -> Result<EnsembleComparison> {
    if k_side == 0 || d == 0 || d > 3 {
        return Err(Error::usage("box requires k_side >= 1 and 1 <= d <= 3"));
    }
    let m = k_side.pow(d as u32);
    if compositions_count(n_particles as u64, m as u64) > ENUMERATION_CAP {
        return Err(Error::resource(format!(
            "canonical enumeration of {n_particles} particles on {m} sites too large"
        )));
    }

    let rho_star = n_particles as f64 / m as f64;
    let alpha = tables.fugacity(rho_star)?;
    let pmf = tables.marginal_pmf(alpha)?;

    // exact distribution of the box total: m-fold convolution of the marginal
    let mut total_pmf = vec![1.0f64];
    for _ in 0..m {
        let mut next = vec![0.0; total_pmf.len() + pmf.len() - 1];
        for (i, &a) in total_pmf.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in pmf.iter().enumerate() {
                next[i + j] += a * b;
            }
        }
        total_pmf = next;
    }

    // Totals with negligible probability are dropped from the decomposition;
    // the omitted mass is below tol and h has linear growth on the box.
    let weight_floor = tables.tol * 1e-3 / total_pmf.len() as f64;
    let n_max = total_pmf.len() - 1;
    let mut inv_gfact = vec![1.0f64; n_max.max(n_particles as usize) + 1];
    for k in 1..inv_gfact.len() {
        inv_gfact[k] = inv_gfact[k - 1] / tables.rate.g(k as u32);
    }

    let mut budget = 0.0;
    for (n, &w) in total_pmf.iter().enumerate() {
        if w >= weight_floor {
            budget += compositions_count(n as u64, m as u64);
        }
    }
    if budget > ENUMERATION_CAP {
        return Err(Error::resource(
            "grand-canonical decomposition enumeration too large",
        ));
    }

    let (num, den) = canonical_expectation(h, m, n_particles, &inv_gfact);
    let canonical = num / den;

    let mut grand = 0.0;
    let mut mass = 0.0;
    for (n, &w) in total_pmf.iter().enumerate() {
        if w < weight_floor {
            continue;
        }
        let (num, den) = canonical_expectation(h, m, n as u32, &inv_gfact);
        grand += w * num / den;
        mass += w;
    }
    let grand = grand / mass;

    Ok(EnsembleComparison {
        canonical,
        grand,
        gap: (canonical - grand).abs(),
    })
}

/// Dense interpolation table for `phi`, for use inside PDE cell updates and
/// box-average statistics: cubic Hermite pieces with the exact derivative
/// `phi' = alpha/chi` at the nodes, extended linearly past `rho_max`.
#[derive(Clone, Debug)]
pub struct PhiTable {
    step: f64,
    vals: Vec<f64>,
    derivs: Vec<f64>,
}

impl PhiTable {
    pub fn build(tables: &FugacityTables, rho_max: f64, samples: usize) -> Result<Self> {
        if !(rho_max > 0.0) || samples < 2 {
            return Err(Error::usage("PhiTable needs rho_max > 0 and >= 2 samples"));
        }
        let step = rho_max / (samples - 1) as f64;
        let mut vals = Vec::with_capacity(samples);
        let mut derivs = Vec::with_capacity(samples);
        for j in 0..samples {
            let rho = j as f64 * step;
            vals.push(tables.mean_jump_rate(rho)?);
            derivs.push(tables.phi_prime(rho)?);
        }
        Ok(PhiTable { step, vals, derivs })
    }

    pub fn rho_max(&self) -> f64 {
        self.step * (self.vals.len() - 1) as f64
    }

    pub fn phi(&self, rho: f64) -> f64 {
        if rho <= 0.0 {
            return self.vals[0] + self.derivs[0] * rho;
        }
        let top = self.rho_max();
        if rho >= top {
            let last = self.vals.len() - 1;
            return self.vals[last] + self.derivs[last] * (rho - top);
        }
        let j = (rho / self.step) as usize;
        let j = j.min(self.vals.len() - 2);
        let t = (rho - j as f64 * self.step) / self.step;
        let (v0, v1) = (self.vals[j], self.vals[j + 1]);
        let (d0, d1) = (self.derivs[j] * self.step, self.derivs[j + 1] * self.step);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * v0
            + (t3 - 2.0 * t2 + t) * d0
            + (-2.0 * t3 + 3.0 * t2) * v1
            + (t3 - t2) * d1
    }

    pub fn phi_prime(&self, rho: f64) -> f64 {
        if rho <= 0.0 {
            return self.derivs[0];
        }
        let top = self.rho_max();
        if rho >= top {
            return *self.derivs.last().unwrap();
        }
        let j = ((rho / self.step) as usize).min(self.vals.len() - 2);
        let t = (rho - j as f64 * self.step) / self.step;
        let (v0, v1) = (self.vals[j], self.vals[j + 1]);
        let (d0, d1) = (self.derivs[j] * self.step, self.derivs[j + 1] * self.step);
        let t2 = t * t;
        let dv = (6.0 * t2 - 6.0 * t) * v0
            + (3.0 * t2 - 4.0 * t + 1.0) * d0
            + ((-6.0) * t2 + 6.0 * t) * v1
            + (3.0 * t2 - 2.0 * t) * d1;
        dv / self.step
    }

    /// Max of `phi'` over `[lo, hi]`, padded for CFL safety.
    pub fn max_phi_prime(&self, lo: f64, hi: f64) -> f64 {
        let mut m: f64 = 0.0;
        let steps = 64;
        for i in 0..=steps {
            let rho = lo + (hi - lo) * i as f64 / steps as f64;
            m = m.max(self.phi_prime(rho).abs());
        }
        m * 1.01
    }
}
