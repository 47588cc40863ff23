//! Discrete torus geometry and grid function spaces.
//!
//! The torus at scale `N` in dimension `d` has `(2N)^d` sites with spacing
//! `1/N`, embedded in `U^d = [-1,1]^d` with periodic wrap: along each axis the
//! site coordinates are `-1 + 1/N, -1 + 2/N, ..., 1`. Sites are addressed by a
//! flat row-major index; integer coordinates are the source of truth and the
//! map to `U^d` is applied only at interpolation/output time.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 3;

/// Axis plus orientation; `encode`/`decode` pack it into one byte for event logs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Direction {
    pub axis: u8,
    pub positive: bool,
}

impl Direction {
    #[inline]
    pub fn encode(self) -> u8 {
        self.axis * 2 + self.positive as u8
    }

    #[inline]
    pub fn decode(code: u8) -> Self {
        Direction {
            axis: code / 2,
            positive: code % 2 == 1,
        }
    }

    /// The `2d` directions in a fixed order: `-e_1, +e_1, -e_2, ...`.
    pub fn all(d: usize) -> impl Iterator<Item = Direction> {
        (0..2 * d as u8).map(Direction::decode)
    }

    pub fn reversed(self) -> Self {
        Direction {
            axis: self.axis,
            positive: !self.positive,
        }
    }
}

/// Discrete torus with `(2N)^d` sites and periodic nearest-neighbor adjacency.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusGrid {
    d: usize,
    n: usize,
}

impl TorusGrid {
    pub fn new(d: usize, n: usize) -> Result<Self> {
        if d == 0 || d > MAX_DIM {
            return Err(Error::usage(format!("dimension {d} outside 1..={MAX_DIM}")));
        }
        if n == 0 {
            return Err(Error::usage("scale parameter N must be positive"));
        }
        let side = 2 * n;
        let sites = side.checked_pow(d as u32).filter(|&s| s <= 1 << 28);
        if sites.is_none() {
            return Err(Error::resource(format!("grid (2*{n})^{d} too large")));
        }
        Ok(TorusGrid { d, n })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    /// The scale parameter `N`.
    #[inline]
    pub fn scale(&self) -> usize {
        self.n
    }

    /// Sites per axis, `2N`.
    #[inline]
    pub fn side(&self) -> usize {
        2 * self.n
    }

    #[inline]
    pub fn sites(&self) -> usize {
        self.side().pow(self.d as u32)
    }

    /// Lattice spacing `1/N`.
    #[inline]
    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    #[inline]
    fn stride(&self, axis: usize) -> usize {
        self.side().pow((self.d - 1 - axis) as u32)
    }

    pub fn index_of(&self, coords: &[usize]) -> usize {
        debug_assert_eq!(coords.len(), self.d);
        let side = self.side();
        let mut idx = 0;
        for &c in coords.iter() {
            debug_assert!(c < side);
            idx = idx * side + c;
        }
        idx
    }

    /// Integer coordinates of a site; entries beyond `dim()` are zero.
    pub fn coords_of(&self, mut idx: usize) -> [usize; MAX_DIM] {
        debug_assert!(idx < self.sites());
        let side = self.side();
        let mut c = [0usize; MAX_DIM];
        for axis in (0..self.d).rev() {
            c[axis] = idx % side;
            idx /= side;
        }
        c
    }

    /// Position of a site in `U^d`; integer coordinate `k` maps to `-1 + (k+1)/N`.
    pub fn position(&self, idx: usize) -> [f64; MAX_DIM] {
        let c = self.coords_of(idx);
        let mut u = [0.0; MAX_DIM];
        for axis in 0..self.d {
            u[axis] = (c[axis] + 1) as f64 / self.n as f64 - 1.0;
        }
        u
    }

    /// Neighbor of `idx` one step along `axis`, with periodic wrap.
    #[inline]
    pub fn neighbor(&self, idx: usize, axis: usize, positive: bool) -> usize {
        let side = self.side();
        let stride = self.stride(axis);
        let coord = (idx / stride) % side;
        let next = if positive {
            if coord + 1 == side {
                0
            } else {
                coord + 1
            }
        } else if coord == 0 {
            side - 1
        } else {
            coord - 1
        };
        idx - coord * stride + next * stride
    }

    #[inline]
    pub fn step(&self, idx: usize, dir: Direction) -> usize {
        self.neighbor(idx, dir.axis as usize, dir.positive)
    }

    /// The `2d` neighbors of a site, with multiplicity when the torus wraps
    /// onto itself (side 2).
    pub fn neighbors(&self, idx: usize) -> Result<Vec<(usize, Direction)>> {
        if idx >= self.sites() {
            return Err(Error::usage(format!(
                "site index {idx} out of range (grid has {} sites)",
                self.sites()
            )));
        }
        Ok(Direction::all(self.d)
            .map(|dir| (self.step(idx, dir), dir))
            .collect())
    }

    pub fn site_indices(&self) -> std::ops::Range<usize> {
        0..self.sites()
    }
}

/// Real-valued function on the sites of a [`TorusGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    pub grid: TorusGrid,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.sites() {
            return Err(Error::usage(format!(
                "expected {} values, got {}",
                grid.sites(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::usage("grid function values must be finite"));
        }
        Ok(GridFunction { grid, values })
    }

    pub fn constant(grid: TorusGrid, c: f64) -> Self {
        GridFunction {
            grid,
            values: vec![c; grid.sites()],
        }
    }

    pub fn from_fn(grid: TorusGrid, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = grid
            .site_indices()
            .map(|i| {
                let u = grid.position(i);
                f(&u[..grid.dim()])
            })
            .collect();
        GridFunction { grid, values }
    }

    #[inline]
    pub fn value(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    /// `||f||_{0,N}`: square root of `N^{-d} sum f(x)^2`.
    pub fn norm0(&self) -> f64 {
        self.norms().0
    }

    /// `||f||_{1,N}`, which adds the discrete gradient energy; the double sum
    /// over ordered site pairs counts each bond twice.
    pub fn norm1(&self) -> f64 {
        self.norms().1
    }

    pub fn norms(&self) -> (f64, f64) {
        let g = self.grid;
        let nd = (g.scale() as f64).powi(g.dim() as i32);
        let n2 = (g.scale() as f64) * (g.scale() as f64);
        let mut sq = 0.0;
        let mut grad = 0.0;
        for x in g.site_indices() {
            let fx = self.values[x];
            sq += fx * fx;
            for dir in Direction::all(g.dim()) {
                let diff = self.values[g.step(x, dir)] - fx;
                grad += n2 * diff * diff;
            }
        }
        let norm0_sq = sq / nd;
        (norm0_sq.sqrt(), (norm0_sq + grad / nd).sqrt())
    }

    pub fn inner_0n(&self, other: &GridFunction) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        let nd = (self.grid.scale() as f64).powi(self.grid.dim() as i32);
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / nd
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Evaluate the order-0 or order-1 interpolant at `u` in `U^d`.
    pub fn interpolate(&self, order: u8, u: &[f64]) -> Result<f64> {
        match order {
            0 => Ok(self.piecewise_constant_at(u)),
            1 => Ok(self.multilinear_at(u)),
            _ => Err(Error::usage("interpolation order must be 0 or 1")),
        }
    }

    /// Piecewise-constant interpolant: the value at the nearest site, on
    /// half-open cells of side `1/N` centered at the sites.
    pub fn piecewise_constant_at(&self, u: &[f64]) -> f64 {
        let g = self.grid;
        let side = g.side();
        let n = g.scale() as f64;
        let mut idx = 0;
        for axis in 0..g.dim() {
            // Site k covers [u_k - 1/2N, u_k + 1/2N) with u_k = -1 + (k+1)/N.
            let k = (n * (u[axis] + 1.0) - 0.5).floor() as i64;
            let k = k.rem_euclid(side as i64) as usize;
            idx = idx * side + k;
        }
        self.values[idx]
    }

    /// Continuous multilinear interpolant on grid cells; exact at the sites
    /// and exact for multilinear functions on each cell.
    pub fn multilinear_at(&self, u: &[f64]) -> f64 {
        let g = self.grid;
        let side = g.side();
        let n = g.scale() as f64;
        let d = g.dim();
        let mut base = [0usize; MAX_DIM];
        let mut frac = [0.0f64; MAX_DIM];
        for axis in 0..d {
            // Site coordinate in lattice units: t = N(u+1) - 1.
            let t = n * (u[axis] + 1.0) - 1.0;
            let k = t.floor();
            frac[axis] = t - k;
            base[axis] = (k as i64).rem_euclid(side as i64) as usize;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut weight = 1.0;
            let mut idx = 0;
            for axis in 0..d {
                let hi = (corner >> axis) & 1 == 1;
                let c = if hi {
                    let c = base[axis] + 1;
                    if c == side {
                        0
                    } else {
                        c
                    }
                } else {
                    base[axis]
                };
                weight *= if hi { frac[axis] } else { 1.0 - frac[axis] };
                idx = idx * side + c;
            }
            acc += weight * self.values[idx];
        }
        acc
    }

    /// CSV serialization: `site_index, coordinate_1..d, value`.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        let d = self.grid.dim();
        write!(w, "site_index")?;
        for axis in 0..d {
            write!(w, ",coordinate_{}", axis + 1)?;
        }
        writeln!(w, ",value")?;
        for idx in self.grid.site_indices() {
            let u = self.grid.position(idx);
            write!(w, "{idx}")?;
            for coord in u.iter().take(d) {
                write!(w, ",{coord}")?;
            }
            writeln!(w, ",{}", self.values[idx])?;
        }
        Ok(())
    }

    pub fn read_csv(grid: TorusGrid, r: &mut impl BufRead) -> Result<Self> {
        let mut values = vec![f64::NAN; grid.sites()];
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let idx: usize = parts
                .next()
                .ok_or_else(|| Error::parse("missing site_index"))?
                .trim()
                .parse()
                .map_err(|e| Error::parse(format!("site_index: {e}")))?;
            let value: f64 = parts
                .next_back()
                .ok_or_else(|| Error::parse("missing value"))?
                .trim()
                .parse()
                .map_err(|e| Error::parse(format!("value: {e}")))?;
            if idx >= values.len() {
                return Err(Error::parse(format!("site index {idx} out of range")));
            }
            values[idx] = value;
        }
        GridFunction::new(grid, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_neighbors_wrap() {
        // d=1, N=2: four sites on a ring.
        let g = TorusGrid::new(1, 2).unwrap();
        let nb: Vec<usize> = g.neighbors(0).unwrap().iter().map(|&(y, _)| y).collect();
        assert_eq!(nb.len(), 2);
        assert!(nb.contains(&1) && nb.contains(&3));

        let g = TorusGrid::new(1, 4).unwrap();
        let nb: Vec<usize> = g.neighbors(7).unwrap().iter().map(|&(y, _)| y).collect();
        assert!(nb.contains(&6) && nb.contains(&0));
    }

    #[test]
    fn full_wrap_multiplicity_at_n1() {
        let g = TorusGrid::new(2, 1).unwrap();
        assert_eq!(g.sites(), 4);
        for x in g.site_indices() {
            let nb = g.neighbors(x).unwrap();
            assert_eq!(nb.len(), 4);
        }
    }

    #[test]
    fn neighbor_symmetry() {
        for (d, n) in [(1, 4), (2, 3), (3, 2)] {
            let g = TorusGrid::new(d, n).unwrap();
            for x in g.site_indices() {
                for (y, dir) in g.neighbors(x).unwrap() {
                    assert_eq!(g.step(y, dir.reversed()), x);
                    let back: Vec<usize> =
                        g.neighbors(y).unwrap().iter().map(|&(z, _)| z).collect();
                    assert!(back.contains(&x));
                }
            }
        }
    }

    #[test]
    fn neighbors_are_at_spacing_distance() {
        let g = TorusGrid::new(2, 4).unwrap();
        let h = g.spacing();
        for x in g.site_indices() {
            for (y, _) in g.neighbors(x).unwrap() {
                let ux = g.position(x);
                let uy = g.position(y);
                // periodic sum-norm distance
                let dist: f64 = (0..2)
                    .map(|a| {
                        let raw = (ux[a] - uy[a]).abs();
                        raw.min(2.0 - raw)
                    })
                    .sum();
                assert!((dist - h).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn index_coordinate_roundtrip() {
        let g = TorusGrid::new(3, 2).unwrap();
        for idx in g.site_indices() {
            let c = g.coords_of(idx);
            assert_eq!(g.index_of(&c[..3]), idx);
        }
    }

    #[test]
    fn invalid_site_is_usage_error() {
        let g = TorusGrid::new(1, 2).unwrap();
        assert!(matches!(g.neighbors(4), Err(Error::Usage(_))));
    }

    #[test]
    fn constant_norms() {
        for (d, n, c) in [(1, 4, 2.5), (2, 3, -1.0), (3, 2, 0.75)] {
            let g = TorusGrid::new(d, n).unwrap();
            let f = GridFunction::constant(g, c);
            let (n0, n1) = f.norms();
            let expect = c.abs() * 2f64.powf(d as f64 / 2.0);
            assert!((n0 - expect).abs() < 1e-12);
            assert!((n1 - n0).abs() < 1e-12);
        }
    }

    #[test]
    fn indicator_norm() {
        let g = TorusGrid::new(1, 4).unwrap();
        let mut v = vec![0.0; g.sites()];
        v[3] = 1.0;
        let f = GridFunction::new(g, v).unwrap();
        assert!((f.norm0() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn norms_match_direct_sums() {
        // Independent oracle: direct summation with explicit loops.
        let g = TorusGrid::new(1, 2).unwrap();
        let vals = vec![0.3, -1.2, 2.0, 0.7];
        let f = GridFunction::new(g, vals.clone()).unwrap();
        let n = 2.0f64;
        let mut sq = 0.0;
        let mut grad = 0.0;
        for x in 0..4usize {
            sq += vals[x] * vals[x];
            for y in [(x + 1) % 4, (x + 3) % 4] {
                grad += n * n * (vals[y] - vals[x]) * (vals[y] - vals[x]);
            }
        }
        let (n0, n1) = f.norms();
        assert!((n0 - (sq / n).sqrt()).abs() < 1e-14);
        assert!((n1 - ((sq + grad) / n).sqrt()).abs() < 1e-14);
        assert!(n1 >= n0);
    }

    #[test]
    fn norm0_is_riemann_sum_of_l2() {
        // Trigonometric polynomials are summed exactly by the uniform grid.
        for n in [4, 16, 64] {
            let g = TorusGrid::new(1, n).unwrap();
            let f = GridFunction::from_fn(g, |u| {
                1.0 + 0.5 * (std::f64::consts::PI * u[0]).cos()
            });
            assert!((f.norm0().powi(2) - 2.25).abs() < 1e-12);
        }
        // For F with a derivative kink at the periodic seam the quadrature
        // error decays like C/N^2; check the empirical decrease.
        let integral = 0.4; // int_{-1}^{1} u^4 du
        let mut errs = Vec::new();
        for n in [8, 16, 32, 64] {
            let g = TorusGrid::new(1, n).unwrap();
            let f = GridFunction::from_fn(g, |u| u[0] * u[0]);
            errs.push((f.norm0().powi(2) - integral).abs());
        }
        for w in errs.windows(2) {
            assert!(w[1] < w[0], "Riemann error not decreasing: {errs:?}");
        }
        assert!(errs[errs.len() - 1] < 1e-3);
    }

    #[test]
    fn interpolation_constant_and_sites() {
        let g = TorusGrid::new(2, 4).unwrap();
        let f = GridFunction::constant(g, 3.25);
        for u in [[-0.9, 0.1], [0.0, 0.0], [1.0, -1.0], [0.37, 0.81]] {
            assert_eq!(f.piecewise_constant_at(&u), 3.25);
            assert!((f.multilinear_at(&u) - 3.25).abs() < 1e-12);
        }
        // exactness at sites
        let h = GridFunction::from_fn(g, |u| u[0] * 0.5 - u[1] * 0.25 + 0.1);
        for idx in g.site_indices() {
            let u = g.position(idx);
            assert!((h.multilinear_at(&u[..2]) - h.value(idx)).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_reproduction_1d() {
        let g = TorusGrid::new(1, 2).unwrap();
        // f linear in the site coordinate: f(u) = 2u on sites
        let f = GridFunction::from_fn(g, |u| 2.0 * u[0]);
        // between sites -0.5 and 0.0 the interpolant must reproduce the line
        for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let u = -0.5 + t * 0.5;
            assert!((f.multilinear_at(&[u]) - 2.0 * u).abs() < 1e-12);
        }
    }

    #[test]
    fn multilinear_midpoint_2d() {
        // Cell with corner values (0,0,0,4): midpoint value 1 by the direct
        // multilinear formula (each corner weight 1/4).
        let g = TorusGrid::new(2, 1).unwrap();
        // sites at u in {0,1}^2; the cell [0,1]^2 has midpoint (1/2,1/2)
        let vals = vec![0.0, 0.0, 0.0, 4.0];
        let f = GridFunction::new(g, vals).unwrap();
        let v = f.multilinear_at(&[0.5, 0.5]);
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn piecewise_constant_cells() {
        let g = TorusGrid::new(1, 2).unwrap();
        let f = GridFunction::new(g, vec![10.0, 20.0, 30.0, 40.0]).unwrap();
        // site 0 at -0.5 covers [-0.75, -0.25)
        assert_eq!(f.piecewise_constant_at(&[-0.5]), 10.0);
        assert_eq!(f.piecewise_constant_at(&[-0.26]), 10.0);
        assert_eq!(f.piecewise_constant_at(&[-0.25]), 20.0);
        // wrap: u = -1 is the same point as u = 1 (site 3)
        assert_eq!(f.piecewise_constant_at(&[1.0]), 40.0);
        assert_eq!(f.piecewise_constant_at(&[-1.0]), 40.0);
    }

    #[test]
    fn csv_roundtrip() {
        let g = TorusGrid::new(2, 2).unwrap();
        let f = GridFunction::from_fn(g, |u| u[0] + 3.0 * u[1]);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let back = GridFunction::read_csv(g, &mut buf.as_slice()).unwrap();
        assert_eq!(f, back);
    }
}
