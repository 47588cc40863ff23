//! Smooth test functions on `U^d = [-1,1]^d` as finite Fourier expansions.
//!
//! Plane-wave modes `cos(pi k . u)`, `sin(pi k . u)` are eigenfunctions of
//! every constant-coefficient operator `div(A grad)`, so analytic gradients,
//! Hessian contractions, `L^2(U^d)` inner products and heat semigroups are all
//! exact. These expansions serve as initial profiles, resolvent test
//! functions and field pairings throughout the crate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::homogenization::HomogenizedMatrix;
use crate::lattice::{GridFunction, TorusGrid, MAX_DIM};

const PI: f64 = std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierTerm {
    pub k: [i32; MAX_DIM],
    pub cos_amp: f64,
    pub sin_amp: f64,
}

/// Finite Fourier expansion `sum_k cos_amp cos(pi k.u) + sin_amp sin(pi k.u)`.
///
/// Terms are kept canonical: the first nonzero component of each `k` is
/// positive and wave vectors are unique, so `L^2` pairings reduce to
/// coefficient sums.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierSeries {
    d: usize,
    terms: Vec<FourierTerm>,
}

impl FourierSeries {
    pub fn new(d: usize, terms: Vec<FourierTerm>) -> Result<Self> {
        if d == 0 || d > MAX_DIM {
            return Err(Error::usage(format!("dimension {d} outside 1..={MAX_DIM}")));
        }
        let mut s = FourierSeries { d, terms: Vec::new() };
        for t in terms {
            s.push_term(t);
        }
        Ok(s)
    }

    pub fn zero(d: usize) -> Self {
        FourierSeries { d, terms: Vec::new() }
    }

    pub fn constant(d: usize, c: f64) -> Self {
        let mut s = Self::zero(d);
        s.push_term(FourierTerm {
            k: [0; MAX_DIM],
            cos_amp: c,
            sin_amp: 0.0,
        });
        s
    }

    /// Add `cos_amp cos(pi k.u) + sin_amp sin(pi k.u)`; builder style.
    pub fn with_mode(mut self, k: &[i32], cos_amp: f64, sin_amp: f64) -> Self {
        let mut kk = [0i32; MAX_DIM];
        kk[..k.len().min(MAX_DIM)].copy_from_slice(&k[..k.len().min(MAX_DIM)]);
        self.push_term(FourierTerm {
            k: kk,
            cos_amp,
            sin_amp,
        });
        self
    }

    fn push_term(&mut self, mut t: FourierTerm) {
        // canonicalize: flip k so its first nonzero entry is positive
        if let Some(first) = t.k.iter().find(|&&v| v != 0) {
            if *first < 0 {
                for v in t.k.iter_mut() {
                    *v = -*v;
                }
                t.sin_amp = -t.sin_amp;
            }
        } else {
            t.sin_amp = 0.0;
        }
        if let Some(existing) = self.terms.iter_mut().find(|e| e.k == t.k) {
            existing.cos_amp += t.cos_amp;
            existing.sin_amp += t.sin_amp;
        } else {
            self.terms.push(t);
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn terms(&self) -> &[FourierTerm] {
        &self.terms
    }

    #[inline]
    fn phase(&self, k: &[i32; MAX_DIM], u: &[f64]) -> f64 {
        let mut p = 0.0;
        for axis in 0..self.d {
            p += k[axis] as f64 * u[axis];
        }
        PI * p
    }

    pub fn value(&self, u: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let p = self.phase(&t.k, u);
                t.cos_amp * p.cos() + t.sin_amp * p.sin()
            })
            .sum()
    }

    pub fn gradient(&self, u: &[f64]) -> [f64; MAX_DIM] {
        let mut g = [0.0; MAX_DIM];
        for t in &self.terms {
            let p = self.phase(&t.k, u);
            let radial = -t.cos_amp * p.sin() + t.sin_amp * p.cos();
            for axis in 0..self.d {
                g[axis] += PI * t.k[axis] as f64 * radial;
            }
        }
        g
    }

    /// `div(A grad f)(u)` for a constant matrix `A`; exact modewise.
    pub fn laplacian_a(&self, u: &[f64], a: &HomogenizedMatrix) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let kak = a.mode_energy(&t.k);
                let p = self.phase(&t.k, u);
                -PI * PI * kak * (t.cos_amp * p.cos() + t.sin_amp * p.sin())
            })
            .sum()
    }

    /// Exact `L^2(U^d)` inner product with another expansion.
    pub fn l2_inner(&self, other: &FourierSeries) -> f64 {
        debug_assert_eq!(self.d, other.d);
        let vol = 2f64.powi(self.d as i32);
        let mut acc = 0.0;
        for t in &self.terms {
            if let Some(o) = other.terms.iter().find(|o| o.k == t.k) {
                if t.k.iter().all(|&v| v == 0) {
                    acc += vol * t.cos_amp * o.cos_amp;
                } else {
                    acc += 0.5 * vol * (t.cos_amp * o.cos_amp + t.sin_amp * o.sin_amp);
                }
            }
        }
        acc
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.l2_inner(self)
    }

    /// Exact `int_U grad f . A grad f du`.
    pub fn dirichlet_energy(&self, a: &HomogenizedMatrix) -> f64 {
        let vol = 2f64.powi(self.d as i32);
        self.terms
            .iter()
            .map(|t| {
                let kak = a.mode_energy(&t.k);
                PI * PI * kak * (t.cos_amp * t.cos_amp + t.sin_amp * t.sin_amp) * 0.5 * vol
            })
            .sum()
    }

    /// Apply the semigroup `exp(t c div(A grad))`: mode `k` decays by
    /// `exp(-t c pi^2 k.Ak)`.
    pub fn heat_semigroup(&self, t: f64, c: f64, a: &HomogenizedMatrix) -> FourierSeries {
        let terms = self
            .terms
            .iter()
            .map(|term| {
                let decay = (-t * c * PI * PI * a.mode_energy(&term.k)).exp();
                FourierTerm {
                    k: term.k,
                    cos_amp: term.cos_amp * decay,
                    sin_amp: term.sin_amp * decay,
                }
            })
            .collect();
        FourierSeries { d: self.d, terms }
    }

    /// Restriction to the sites of a torus grid.
    pub fn grid_values(&self, grid: TorusGrid) -> Result<GridFunction> {
        if grid.dim() != self.d {
            return Err(Error::usage("grid dimension mismatch"));
        }
        Ok(GridFunction::from_fn(grid, |u| self.value(u)))
    }

    /// `lambda f - div(A grad f)` restricted to the grid; the right-hand side
    /// of the resolvent problem for corrected test functions.
    pub fn resolvent_rhs(
        &self,
        grid: TorusGrid,
        lambda: f64,
        a: &HomogenizedMatrix,
    ) -> Result<GridFunction> {
        if grid.dim() != self.d {
            return Err(Error::usage("grid dimension mismatch"));
        }
        Ok(GridFunction::from_fn(grid, |u| {
            lambda * self.value(u) - self.laplacian_a(u, a)
        }))
    }
}

/// Time modulation for space-time test functions of class `C^{1,2}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeWeight {
    Constant,
    ExpDecay { rate: f64 },
}

impl TimeWeight {
    pub fn value(&self, s: f64) -> f64 {
        match *self {
            TimeWeight::Constant => 1.0,
            TimeWeight::ExpDecay { rate } => (-rate * s).exp(),
        }
    }

    pub fn deriv(&self, s: f64) -> f64 {
        match *self {
            TimeWeight::Constant => 0.0,
            TimeWeight::ExpDecay { rate } => -rate * (-rate * s).exp(),
        }
    }
}

/// Separable `C^{1,2}` test function `G(s,u) = T(s) X(u)` with analytic
/// derivatives, as required by weak-solution residual evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeTest {
    pub space: FourierSeries,
    pub time: TimeWeight,
}

impl SpaceTimeTest {
    pub fn steady(space: FourierSeries) -> Self {
        SpaceTimeTest {
            space,
            time: TimeWeight::Constant,
        }
    }

    pub fn value(&self, s: f64, u: &[f64]) -> f64 {
        self.time.value(s) * self.space.value(u)
    }

    pub fn time_deriv(&self, s: f64, u: &[f64]) -> f64 {
        self.time.deriv(s) * self.space.value(u)
    }

    pub fn laplacian_a(&self, s: f64, u: &[f64], a: &HomogenizedMatrix) -> f64 {
        self.time.value(s) * self.space.laplacian_a(u, a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id1() -> HomogenizedMatrix {
        HomogenizedMatrix::isotropic(1, 1.0, 1.0)
    }

    #[test]
    fn single_mode_values() {
        let g = FourierSeries::constant(1, 1.0).with_mode(&[1], 0.5, 0.0);
        assert!((g.value(&[0.0]) - 1.5).abs() < 1e-15);
        assert!((g.value(&[1.0]) - 0.5).abs() < 1e-15);
        let grad = g.gradient(&[0.5]);
        assert!((grad[0] + 0.5 * PI).abs() < 1e-12);
    }

    #[test]
    fn laplacian_is_modewise() {
        let a = HomogenizedMatrix::isotropic(1, 2.0, 1.0);
        let g = FourierSeries::zero(1).with_mode(&[3], 0.0, 1.0);
        for u in [0.1, -0.7, 0.95] {
            let expect = -PI * PI * 9.0 * 2.0 * (3.0 * PI * u).sin();
            assert!((g.laplacian_a(&[u], &a) - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn inner_products() {
        let g = FourierSeries::zero(1).with_mode(&[1], 1.0, 0.0);
        let h = FourierSeries::zero(1).with_mode(&[2], 0.0, 1.0);
        assert!((g.l2_inner(&g) - 1.0).abs() < 1e-15); // int cos^2(pi u) du = 1
        assert!(g.l2_inner(&h).abs() < 1e-15);
        let c = FourierSeries::constant(1, 3.0);
        assert!((c.l2_norm_sq() - 18.0).abs() < 1e-15); // 9 * vol
    }

    #[test]
    fn negative_wave_vectors_canonicalize() {
        let a = FourierSeries::zero(2).with_mode(&[-1, 2], 0.4, 0.3);
        let b = FourierSeries::zero(2).with_mode(&[1, -2], 0.4, -0.3);
        assert_eq!(a, b);
        // values agree with the raw definition
        let u = [0.3, -0.8];
        let p = PI * (-u[0] + 2.0 * u[1]);
        let expect = 0.4 * p.cos() + 0.3 * p.sin();
        assert!((a.value(&u) - expect).abs() < 1e-12);
    }

    #[test]
    fn dirichlet_energy_single_mode() {
        let g = FourierSeries::zero(1).with_mode(&[1], 1.0, 0.0);
        assert!((g.dirichlet_energy(&id1()) - PI * PI).abs() < 1e-12);
    }

    #[test]
    fn semigroup_identity_and_decay() {
        let g = FourierSeries::constant(1, 1.0).with_mode(&[1], 1.0, 0.0);
        let same = g.heat_semigroup(0.0, 1.0, &id1());
        assert_eq!(g, same);
        // G = cos(pi u), cA = 1, t = 1 -> e^{-pi^2} cos(pi u)
        let h = FourierSeries::zero(1)
            .with_mode(&[1], 1.0, 0.0)
            .heat_semigroup(1.0, 1.0, &id1());
        assert!((h.terms()[0].cos_amp - (-PI * PI).exp()).abs() < 1e-15);
    }
}
