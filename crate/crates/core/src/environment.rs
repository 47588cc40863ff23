//! Random bond conductances and the induced jump rates.
//!
//! An environment assigns one conductance `a` to every unordered bond
//! `(x, x + e_i/N)` of the torus, drawn inside the ellipticity band
//! `[eps0, 1/eps0]`. The walk jumps across a bond at rate `N^2 a`, the same in
//! both directions, so symmetry of the rates is structural: there is exactly
//! one stored number per bond.
//!
//! Conductances are derived by hashing `(seed, integer bond coordinates,
//! axis)`, which makes fields reproducible, order-independent and
//! shift-covariant in the stream-indexing sense.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Direction, GridFunction, TorusGrid};
use crate::seeding;

/// Conductance law for one bond; all variants are stationary and produce
/// values inside the model's ellipticity band.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum EnvironmentModel {
    Constant { a: f64 },
    /// Iid uniform on `[eps0, 1/eps0]`.
    IidUniform { eps0: f64 },
    /// Iid two-point: `a_high` with probability `p_high`, else `a_low`.
    IidTwoPoint { a_low: f64, a_high: f64, p_high: f64 },
    /// Deterministic alternation by parity of the bond's base-site
    /// coordinates; periodic, ergodic, and exactly solvable in d = 1.
    PeriodicCheckerboard { a_even: f64, a_odd: f64 },
}

impl EnvironmentModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            EnvironmentModel::Constant { a } => {
                if !(a > 0.0) || !a.is_finite() {
                    return Err(Error::config("constant conductance must be positive"));
                }
            }
            EnvironmentModel::IidUniform { eps0 } => {
                if !(eps0 > 0.0 && eps0 <= 1.0) {
                    return Err(Error::config(
                        "IidUniform requires 0 < eps0 <= 1 so that [eps0, 1/eps0] is nonempty",
                    ));
                }
            }
            EnvironmentModel::IidTwoPoint {
                a_low,
                a_high,
                p_high,
            } => {
                if !(a_low > 0.0 && a_high >= a_low) {
                    return Err(Error::config("IidTwoPoint requires 0 < a_low <= a_high"));
                }
                if !(0.0..=1.0).contains(&p_high) {
                    return Err(Error::config("IidTwoPoint requires p_high in [0,1]"));
                }
            }
            EnvironmentModel::PeriodicCheckerboard { a_even, a_odd } => {
                if !(a_even > 0.0 && a_odd > 0.0) {
                    return Err(Error::config("checkerboard conductances must be positive"));
                }
            }
        }
        Ok(())
    }

    /// Certified ellipticity parameter: every conductance the model can
    /// produce lies in `[eps0, 1/eps0]`.
    pub fn epsilon0(&self) -> f64 {
        let (lo, hi) = self.range();
        (lo).min(1.0 / hi)
    }

    fn range(&self) -> (f64, f64) {
        match *self {
            EnvironmentModel::Constant { a } => (a, a),
            EnvironmentModel::IidUniform { eps0 } => (eps0, 1.0 / eps0),
            EnvironmentModel::IidTwoPoint { a_low, a_high, .. } => (a_low, a_high),
            EnvironmentModel::PeriodicCheckerboard { a_even, a_odd } => {
                (a_even.min(a_odd), a_even.max(a_odd))
            }
        }
    }

    /// Conductance of the bond based at integer coordinates `coords` along
    /// `axis`. Pure function of `(model, seed, coords, axis)`; this is the
    /// stream-indexing contract that shift-covariance tests rely on.
    pub fn bond_conductance(&self, seed: u64, coords: &[usize], axis: usize) -> f64 {
        match *self {
            EnvironmentModel::Constant { a } => a,
            EnvironmentModel::IidUniform { eps0 } => {
                let u = seeding::unit_f64(Self::bond_hash(seed, coords, axis));
                eps0 + (1.0 / eps0 - eps0) * u
            }
            EnvironmentModel::IidTwoPoint {
                a_low,
                a_high,
                p_high,
            } => {
                let u = seeding::unit_f64(Self::bond_hash(seed, coords, axis));
                if u < p_high {
                    a_high
                } else {
                    a_low
                }
            }
            EnvironmentModel::PeriodicCheckerboard { a_even, a_odd } => {
                let parity: usize = coords.iter().sum::<usize>() % 2;
                if parity == 0 {
                    a_even
                } else {
                    a_odd
                }
            }
        }
    }

    fn bond_hash(seed: u64, coords: &[usize], axis: usize) -> u64 {
        let mut labels = [0u64; 4];
        for (i, &c) in coords.iter().enumerate() {
            labels[i] = c as u64;
        }
        labels[3] = axis as u64 + 1;
        seeding::mix(seed, &labels)
    }
}

/// A sampled realization of bond conductances on one torus.
#[derive(Clone, Debug)]
pub struct Environment {
    grid: TorusGrid,
    model: EnvironmentModel,
    seed: u64,
    /// One entry per bond, indexed `site * d + axis` for the bond
    /// `(site, site + e_axis/N)`.
    conductance: Vec<f64>,
}

impl Environment {
    /// Deterministic function of `(model, grid, seed)`.
    pub fn sample(model: EnvironmentModel, grid: TorusGrid, seed: u64) -> Result<Self> {
        model.validate()?;
        let d = grid.dim();
        let mut conductance = Vec::with_capacity(grid.sites() * d);
        for idx in grid.site_indices() {
            let c = grid.coords_of(idx);
            for axis in 0..d {
                conductance.push(model.bond_conductance(seed, &c[..d], axis));
            }
        }
        Ok(Environment {
            grid,
            model,
            seed,
            conductance,
        })
    }

    #[inline]
    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn model(&self) -> EnvironmentModel {
        self.model
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn epsilon0(&self) -> f64 {
        self.model.epsilon0()
    }

    /// Number of stored bonds, `d * (2N)^d`.
    pub fn bonds(&self) -> usize {
        self.conductance.len()
    }

    /// Conductance of the bond `(site, site + e_axis/N)`.
    #[inline]
    pub fn conductance(&self, site: usize, axis: usize) -> f64 {
        self.conductance[site * self.grid.dim() + axis]
    }

    /// Jump rate `N^2 a` across the bond `(site, site + e_axis/N)`.
    #[inline]
    pub fn bond_rate(&self, site: usize, axis: usize) -> f64 {
        let n = self.grid.scale() as f64;
        n * n * self.conductance(site, axis)
    }

    /// Jump rate out of `site` in a signed direction. Negative directions
    /// read the bond stored at the neighboring site, so reversal symmetry
    /// across a bond is exact by construction.
    #[inline]
    pub fn jump_rate(&self, site: usize, dir: Direction) -> f64 {
        let axis = dir.axis as usize;
        if dir.positive {
            self.bond_rate(site, axis)
        } else {
            self.bond_rate(self.grid.neighbor(site, axis, false), axis)
        }
    }

    /// Sum of the `2d` incident jump rates at a site.
    #[inline]
    pub fn incident_rate_sum(&self, site: usize) -> f64 {
        let mut s = 0.0;
        for dir in Direction::all(self.grid.dim()) {
            s += self.jump_rate(site, dir);
        }
        s
    }

    /// Weighted graph Laplacian applied to a grid function:
    /// `(L u)(x) = sum_y p(x,y) [u(y) - u(x)]`.
    pub fn apply_laplacian(&self, u: &GridFunction) -> GridFunction {
        debug_assert_eq!(u.grid, self.grid);
        let g = self.grid;
        let mut out = vec![0.0; g.sites()];
        for x in g.site_indices() {
            let ux = u.values[x];
            let mut acc = 0.0;
            for dir in Direction::all(g.dim()) {
                let y = g.step(x, dir);
                acc += self.jump_rate(x, dir) * (u.values[y] - ux);
            }
            out[x] = acc;
        }
        GridFunction { grid: g, values: out }
    }

    /// Certify every stored conductance against the ellipticity band.
    pub fn check_ellipticity(&self) -> Result<()> {
        let eps0 = self.epsilon0();
        let hi = 1.0 / eps0;
        for (i, &a) in self.conductance.iter().enumerate() {
            if !(a >= eps0 && a <= hi) {
                return Err(Error::config(format!(
                    "bond {i} conductance {a} outside [{eps0}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    /// Dump as CSV with a JSON header line carrying model, seed and grid.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        let header = serde_json::json!({
            "model": self.model,
            "seed": self.seed,
            "d": self.grid.dim(),
            "n": self.grid.scale(),
        });
        writeln!(w, "# {header}")?;
        writeln!(w, "bond_id,site_index,direction,conductance")?;
        let d = self.grid.dim();
        for (bond_id, &a) in self.conductance.iter().enumerate() {
            let site = bond_id / d;
            let axis = bond_id % d;
            writeln!(w, "{bond_id},{site},{axis},{a}")?;
        }
        Ok(())
    }

    pub fn read_csv(r: &mut impl BufRead) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::parse("empty environment file"))??;
        let json = header
            .strip_prefix("# ")
            .ok_or_else(|| Error::parse("missing JSON header line"))?;
        #[derive(Deserialize)]
        struct Header {
            model: EnvironmentModel,
            seed: u64,
            d: usize,
            n: usize,
        }
        let h: Header = serde_json::from_str(json)?;
        let grid = TorusGrid::new(h.d, h.n)?;
        let mut conductance = vec![f64::NAN; grid.sites() * h.d];
        for line in lines {
            let line = line?;
            if line.starts_with("bond_id") || line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let bond_id: usize = parts
                .next()
                .ok_or_else(|| Error::parse("missing bond_id"))?
                .parse()
                .map_err(|e| Error::parse(format!("bond_id: {e}")))?;
            let a: f64 = parts
                .next_back()
                .ok_or_else(|| Error::parse("missing conductance"))?
                .parse()
                .map_err(|e| Error::parse(format!("conductance: {e}")))?;
            if bond_id >= conductance.len() {
                return Err(Error::parse(format!("bond id {bond_id} out of range")));
            }
            conductance[bond_id] = a;
        }
        if conductance.iter().any(|a| a.is_nan()) {
            return Err(Error::parse("environment file is missing bonds"));
        }
        let env = Environment {
            grid,
            model: h.model,
            seed: h.seed,
            conductance,
        };
        env.check_ellipticity()?;
        Ok(env)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid1(n: usize) -> TorusGrid {
        TorusGrid::new(1, n).unwrap()
    }

    #[test]
    fn constant_model() {
        let env = Environment::sample(EnvironmentModel::Constant { a: 1.0 }, grid1(4), 9).unwrap();
        assert!(env.conductance.iter().all(|&a| a == 1.0));
        // every rate = c * N^2
        let env =
            Environment::sample(EnvironmentModel::Constant { a: 2.5 }, grid1(3), 9).unwrap();
        for x in env.grid().site_indices() {
            for dir in Direction::all(1) {
                assert_eq!(env.jump_rate(x, dir), 2.5 * 9.0);
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let model = EnvironmentModel::IidUniform { eps0: 0.5 };
        let a = Environment::sample(model, grid1(32), 1234).unwrap();
        let b = Environment::sample(model, grid1(32), 1234).unwrap();
        assert_eq!(a.conductance, b.conductance);
        let c = Environment::sample(model, grid1(32), 1235).unwrap();
        assert_ne!(a.conductance, c.conductance);
    }

    #[test]
    fn two_point_law_of_large_numbers() {
        let model = EnvironmentModel::IidTwoPoint {
            a_low: 1.0,
            a_high: 2.0,
            p_high: 0.5,
        };
        let env = Environment::sample(model, grid1(1 << 14), 7).unwrap();
        let frac =
            env.conductance.iter().filter(|&&a| a == 2.0).count() as f64 / env.bonds() as f64;
        assert!((frac - 0.5).abs() < 0.02, "fraction {frac}");
    }

    #[test]
    fn bond_symmetry() {
        let model = EnvironmentModel::IidUniform { eps0: 0.25 };
        let env = Environment::sample(model, TorusGrid::new(2, 3).unwrap(), 77).unwrap();
        let g = env.grid();
        for x in g.site_indices() {
            for dir in Direction::all(2) {
                let y = g.step(x, dir);
                assert_eq!(env.jump_rate(x, dir), env.jump_rate(y, dir.reversed()));
            }
        }
    }

    #[test]
    fn explicit_ring_rates() {
        // d=1, N=2: rate from site 0 rightwards is 4 * a_0.
        let model = EnvironmentModel::IidUniform { eps0: 0.5 };
        let env = Environment::sample(model, grid1(2), 3).unwrap();
        let a0 = env.conductance(0, 0);
        let right = Direction { axis: 0, positive: true };
        assert!((env.jump_rate(0, right) - 4.0 * a0).abs() < 1e-15);
    }

    #[test]
    fn ellipticity_certified() {
        for model in [
            EnvironmentModel::IidUniform { eps0: 0.3 },
            EnvironmentModel::IidTwoPoint {
                a_low: 0.5,
                a_high: 1.5,
                p_high: 0.25,
            },
            EnvironmentModel::PeriodicCheckerboard {
                a_even: 1.0,
                a_odd: 2.0,
            },
        ] {
            let env = Environment::sample(model, grid1(64), 5).unwrap();
            env.check_ellipticity().unwrap();
            let eps0 = model.epsilon0();
            let n2 = 64.0 * 64.0;
            for x in env.grid().site_indices() {
                for dir in Direction::all(1) {
                    let p = env.jump_rate(x, dir);
                    assert!(p >= eps0 * n2 - 1e-12 && p <= n2 / eps0 + 1e-9);
                }
            }
        }
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(EnvironmentModel::IidUniform { eps0: 1.5 }.validate().is_err());
        assert!(EnvironmentModel::IidUniform { eps0: 0.0 }.validate().is_err());
        assert!(EnvironmentModel::IidTwoPoint {
            a_low: 2.0,
            a_high: 1.0,
            p_high: 0.5
        }
        .validate()
        .is_err());
        assert!(EnvironmentModel::IidTwoPoint {
            a_low: 1.0,
            a_high: 2.0,
            p_high: 1.5
        }
        .validate()
        .is_err());
        assert!(EnvironmentModel::Constant { a: -1.0 }.validate().is_err());
    }

    #[test]
    fn shift_covariance_of_streams() {
        // Sampling with shifted coordinate labels reproduces the shifted field.
        let model = EnvironmentModel::IidTwoPoint {
            a_low: 1.0,
            a_high: 2.0,
            p_high: 0.5,
        };
        let g = TorusGrid::new(2, 4).unwrap();
        let seed = 99;
        let env = Environment::sample(model, g, seed).unwrap();
        let shift = [3usize, 5usize];
        for idx in g.site_indices() {
            let c = g.coords_of(idx);
            let shifted = [(c[0] + shift[0]) % g.side(), (c[1] + shift[1]) % g.side()];
            for axis in 0..2 {
                let direct = model.bond_conductance(seed, &shifted, axis);
                let via_env = env.conductance(g.index_of(&shifted), axis);
                assert_eq!(direct, via_env);
            }
        }
    }

    #[test]
    fn checkerboard_alternates() {
        let model = EnvironmentModel::PeriodicCheckerboard {
            a_even: 1.0,
            a_odd: 2.0,
        };
        let env = Environment::sample(model, grid1(4), 0).unwrap();
        for x in 0..8 {
            let expect = if x % 2 == 0 { 1.0 } else { 2.0 };
            assert_eq!(env.conductance(x, 0), expect);
        }
    }

    #[test]
    fn csv_roundtrip() {
        let model = EnvironmentModel::IidUniform { eps0: 0.5 };
        let env = Environment::sample(model, TorusGrid::new(2, 2).unwrap(), 21).unwrap();
        let mut buf = Vec::new();
        env.write_csv(&mut buf).unwrap();
        let back = Environment::read_csv(&mut buf.as_slice()).unwrap();
        assert_eq!(env.conductance, back.conductance);
        assert_eq!(env.seed(), back.seed());
        assert_eq!(env.model(), back.model());
    }
}
