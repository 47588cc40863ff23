//! Macroscopic diffusion equation `d_t rho = div(A grad phi(rho))` on the
//! periodic box `U^d`, plus the weak-solution residual and the exact
//! constant-coefficient semigroup used by fluctuation comparisons.
//!
//! The solver is an explicit conservative finite-volume scheme: each face
//! carries the flux `A (phi(rho_+) - phi(rho_-)) / dx`, so mass is conserved
//! to rounding and the scheme is monotone under the CFL condition
//! `dt <= dx^2 / (2 d lambda_max(A) max phi')`, which is enforced, not
//! assumed. The PDE grid is independent of the particle scale `N`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::homogenization::HomogenizedMatrix;
use crate::lattice::MAX_DIM;
use crate::measures::PhiTable;
use crate::testfn::{FourierSeries, SpaceTimeTest};

/// Snapshots of the density on a periodic cell grid.
#[derive(Clone, Debug)]
pub struct DensityField {
    pub dim: usize,
    pub cells_per_axis: usize,
    pub dx: f64,
    pub dt: f64,
    pub times: Vec<f64>,
    pub snapshots: Vec<Vec<f64>>,
    /// `dx^d  sum rho` at each stored time.
    pub mass: Vec<f64>,
}

impl DensityField {
    pub fn cells(&self) -> usize {
        self.cells_per_axis.pow(self.dim as u32)
    }

    /// Center of a cell, row-major indexing.
    pub fn cell_position(&self, mut idx: usize) -> [f64; MAX_DIM] {
        let mut u = [0.0; MAX_DIM];
        for axis in (0..self.dim).rev() {
            let c = idx % self.cells_per_axis;
            idx /= self.cells_per_axis;
            u[axis] = -1.0 + (c as f64 + 0.5) * self.dx;
        }
        u
    }

    pub fn final_snapshot(&self) -> &[f64] {
        self.snapshots.last().unwrap()
    }

    /// Piecewise-constant evaluation of a stored snapshot at `u`.
    pub fn value_at(&self, snapshot: usize, u: &[f64]) -> f64 {
        let m = self.cells_per_axis;
        let mut idx = 0;
        for axis in 0..self.dim {
            let t = (u[axis] + 1.0) / self.dx;
            let c = (t.floor() as i64).rem_euclid(m as i64) as usize;
            idx = idx * m + c;
        }
        self.snapshots[snapshot][idx]
    }

    /// Run metadata as JSON, companion to the CSV export.
    pub fn metadata_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&serde_json::json!({
            "dim": self.dim,
            "cells_per_axis": self.cells_per_axis,
            "dx": self.dx,
            "dt": self.dt,
            "snapshots": self.times.len(),
            "t_end": self.times.last().copied().unwrap_or(0.0),
            "mass_initial": self.mass.first().copied().unwrap_or(0.0),
            "mass_final": self.mass.last().copied().unwrap_or(0.0),
        }))?)
    }

    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        write!(w, "t")?;
        for axis in 0..self.dim {
            write!(w, ",coordinate_{}", axis + 1)?;
        }
        writeln!(w, ",value")?;
        for (snap, t) in self.times.iter().enumerate() {
            for idx in 0..self.cells() {
                let u = self.cell_position(idx);
                write!(w, "{t}")?;
                for coord in u.iter().take(self.dim) {
                    write!(w, ",{coord}")?;
                }
                writeln!(w, ",{}", self.snapshots[snap][idx])?;
            }
        }
        Ok(())
    }
}

/// Largest stable time step for the explicit scheme.
pub fn cfl_limit(
    a: &HomogenizedMatrix,
    phi: &PhiTable,
    rho_lo: f64,
    rho_hi: f64,
    dx: f64,
    d: usize,
) -> f64 {
    dx * dx / (2.0 * d as f64 * a.spectral_bound() * phi.max_phi_prime(rho_lo, rho_hi))
}

/// Explicit conservative finite-volume solve of
/// `d_t rho = div(A grad phi(rho))`, `rho(0) = rho0`, on the periodic grid
/// with `cells_per_axis^d` cells. Refuses to run outside the CFL band.
/// `snapshots` is the target number of stored time slices (initial and final
/// are always stored).
pub fn solve_hydrodynamic(
    rho0: &dyn Fn(&[f64]) -> f64,
    a: &HomogenizedMatrix,
    phi: &PhiTable,
    t_end: f64,
    cells_per_axis: usize,
    dt: f64,
    snapshots: usize,
) -> Result<DensityField> {
    let d = a.dim();
    if d == 0 || d > MAX_DIM {
        return Err(Error::usage("dimension outside 1..=3"));
    }
    if cells_per_axis < 2 {
        return Err(Error::usage("need at least 2 cells per axis"));
    }
    if !(t_end > 0.0) || !(dt > 0.0) {
        return Err(Error::usage("t_end and dt must be positive"));
    }
    // Cross-diffusion terms are outside the scheme's scope; require the
    // matrix to be (numerically) diagonal beyond d = 1.
    if d > 1 {
        let min_diag = (0..d).map(|i| a.entry(i, i)).fold(f64::INFINITY, f64::min);
        for i in 0..d {
            for j in 0..d {
                if i != j && a.entry(i, j).abs() > 1e-8 * min_diag {
                    return Err(Error::config(
                        "off-diagonal diffusion entries are not supported by the scheme",
                    ));
                }
            }
        }
    }

    let m = cells_per_axis;
    let cells = m.pow(d as u32);
    let dx = 2.0 / m as f64;

    let mut rho = vec![0.0; cells];
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    {
        // initial cell values at centers
        let proto = DensityField {
            dim: d,
            cells_per_axis: m,
            dx,
            dt,
            times: vec![],
            snapshots: vec![],
            mass: vec![],
        };
        for (idx, r) in rho.iter_mut().enumerate() {
            let u = proto.cell_position(idx);
            *r = rho0(&u[..d]);
            if !(*r >= 0.0) || !r.is_finite() {
                return Err(Error::config(format!(
                    "initial density {r} at cell {idx} must be finite and nonnegative"
                )));
            }
            lo = lo.min(*r);
            hi = hi.max(*r);
        }
    }

    let dt_max = cfl_limit(a, phi, lo, hi, dx, d);
    if dt > dt_max {
        return Err(Error::config(format!(
            "dt = {dt} violates the CFL bound {dt_max:.3e} for this problem"
        )));
    }

    let steps = (t_end / dt).ceil() as usize;
    let dt_eff = t_end / steps as f64;
    let stride = (steps / snapshots.max(2).saturating_sub(1)).max(1);

    let stride_of = |axis: usize| m.pow((d - 1 - axis) as u32);
    let dxd = dx.powi(d as i32);
    let mass_of = |r: &[f64]| dxd * r.iter().sum::<f64>();

    let mut times = vec![0.0];
    let mut snaps = vec![rho.clone()];
    let mut masses = vec![mass_of(&rho)];

    let mut phi_buf = vec![0.0; cells];
    let coef = dt_eff / (dx * dx);
    for step in 1..=steps {
        for (i, &r) in rho.iter().enumerate() {
            phi_buf[i] = phi.phi(r);
        }
        for idx in 0..cells {
            let mut acc = 0.0;
            for axis in 0..d {
                let s = stride_of(axis);
                let c = (idx / s) % m;
                let up = idx - c * s + ((c + 1) % m) * s;
                let dn = idx - c * s + ((c + m - 1) % m) * s;
                acc += a.entry(axis, axis)
                    * (phi_buf[up] - 2.0 * phi_buf[idx] + phi_buf[dn]);
            }
            rho[idx] += coef * acc;
        }
        if step % stride == 0 || step == steps {
            times.push(step as f64 * dt_eff);
            snaps.push(rho.clone());
            masses.push(mass_of(&rho));
        }
    }

    Ok(DensityField {
        dim: d,
        cells_per_axis: m,
        dx,
        dt: dt_eff,
        times,
        snapshots: snaps,
        mass: masses,
    })
}

/// Defect of the weak formulation for a stored density field and a separable
/// `C^{1,2}` test function:
/// `| int_0^T int { rho d_s G + phi(rho) div(A grad G) } du ds + int rho0 G(0) - int rho(T) G(T) |`.
/// Space integrals are cell sums, the time integral is a trapezoid over the
/// stored snapshots.
pub fn weak_residual(
    field: &DensityField,
    rho0: &dyn Fn(&[f64]) -> f64,
    g: &SpaceTimeTest,
    a: &HomogenizedMatrix,
    phi: &PhiTable,
) -> f64 {
    let d = field.dim;
    let cells = field.cells();
    let dxd = field.dx.powi(d as i32);

    let interior = |snap: usize, t: f64| -> f64 {
        let mut acc = 0.0;
        for idx in 0..cells {
            let u = field.cell_position(idx);
            let r = field.snapshots[snap][idx];
            acc += r * g.time_deriv(t, &u[..d]) + phi.phi(r) * g.laplacian_a(t, &u[..d], a);
        }
        acc * dxd
    };

    let mut time_integral = 0.0;
    for w in 0..field.times.len() - 1 {
        let (t0, t1) = (field.times[w], field.times[w + 1]);
        time_integral += 0.5 * (t1 - t0) * (interior(w, t0) + interior(w + 1, t1));
    }

    let mut boundary = 0.0;
    let t_end = *field.times.last().unwrap();
    for idx in 0..cells {
        let u = field.cell_position(idx);
        boundary += rho0(&u[..d]) * g.value(0.0, &u[..d]);
        boundary -= field.final_snapshot()[idx] * g.value(t_end, &u[..d]);
    }
    boundary *= dxd;

    (time_integral + boundary).abs()
}

/// The semigroup `exp(t c div(A grad))` acting on a band-limited function:
/// exact modewise decay.
pub fn semigroup_apply(
    g: &FourierSeries,
    t: f64,
    c: f64,
    a: &HomogenizedMatrix,
) -> FourierSeries {
    g.heat_semigroup(t, c, a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{FugacityTables, RateFunction};

    const PI: f64 = std::f64::consts::PI;

    fn linear_phi() -> PhiTable {
        let t = FugacityTables::new(RateFunction::Linear, 1e-12).unwrap();
        PhiTable::build(&t, 4.0, 161).unwrap()
    }

    fn ident(a: f64) -> HomogenizedMatrix {
        HomogenizedMatrix::isotropic(1, a, 1.0_f64.min(1.0 / a))
    }

    #[test]
    fn constants_are_stationary() {
        let phi = linear_phi();
        let a = ident(1.0);
        let f = solve_hydrodynamic(&|_| 1.3, &a, &phi, 0.01, 32, 1e-4, 3).unwrap();
        for snap in &f.snapshots {
            assert!(snap.iter().all(|&v| (v - 1.3).abs() < 1e-13));
        }
    }

    #[test]
    fn heat_kernel_exact_solution() {
        // g(k)=k so phi(rho)=rho: rho0 = 1 + cos(pi u)/2 evolves to
        // 1 + exp(-a pi^2 t) cos(pi u)/2.
        let phi = linear_phi();
        let a_val = 1.0;
        let a = ident(a_val);
        let t_end = 0.05;
        let cells = 256;
        let dx: f64 = 2.0 / cells as f64;
        let dt = 0.4 * dx * dx / 2.0;
        let rho0 = |u: &[f64]| 1.0 + 0.5 * (PI * u[0]).cos();
        let f = solve_hydrodynamic(&rho0, &a, &phi, t_end, cells, dt, 5).unwrap();
        let decay = (-a_val * PI * PI * t_end).exp();
        let mut sup = 0.0f64;
        for idx in 0..f.cells() {
            let u = f.cell_position(idx);
            let exact = 1.0 + 0.5 * decay * (PI * u[0]).cos();
            sup = sup.max((f.final_snapshot()[idx] - exact).abs());
        }
        assert!(sup < 1e-3, "sup error {sup}");
        // mass conservation
        let drift = (f.mass.last().unwrap() - f.mass[0]).abs() / f.mass[0];
        assert!(drift < 1e-12, "mass drift {drift}");
    }

    #[test]
    fn convergence_order_at_least_two_in_dx() {
        let phi = linear_phi();
        let a = ident(1.0);
        let t_end = 0.02;
        let rho0 = |u: &[f64]| 1.0 + 0.5 * (PI * u[0]).cos();
        let mut errs = Vec::new();
        for cells in [64usize, 128, 256] {
            let dx: f64 = 2.0 / cells as f64;
            let dt = 0.25 * dx * dx / 2.0;
            let f = solve_hydrodynamic(&rho0, &a, &phi, t_end, cells, dt, 2).unwrap();
            let decay = (-PI * PI * t_end).exp();
            let mut sup = 0.0f64;
            for idx in 0..f.cells() {
                let u = f.cell_position(idx);
                let exact = 1.0 + 0.5 * decay * (PI * u[0]).cos();
                sup = sup.max((f.final_snapshot()[idx] - exact).abs());
            }
            errs.push(sup);
        }
        // halving dx with dt ~ dx^2 should at least halve the error
        assert!(errs[1] < 0.55 * errs[0], "{errs:?}");
        assert!(errs[2] < 0.55 * errs[1], "{errs:?}");
    }

    #[test]
    fn maximum_principle() {
        let phi = linear_phi();
        let a = ident(1.5);
        let rho0 = |u: &[f64]| 1.0 + 0.5 * (PI * u[0]).sin() + 0.2 * (2.0 * PI * u[0]).cos();
        let cells = 128;
        let dx: f64 = 2.0 / cells as f64;
        let dt = 0.4 * dx * dx / (2.0 * 1.5);
        let f = solve_hydrodynamic(&rho0, &a, &phi, 0.05, cells, dt, 8).unwrap();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in &f.snapshots[0] {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        for snap in &f.snapshots {
            for &v in snap {
                assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn cfl_violation_is_refused() {
        let phi = linear_phi();
        let a = ident(1.0);
        let r = solve_hydrodynamic(&|_| 1.0, &a, &phi, 0.1, 64, 1.0, 2);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn semigroup_matches_solver_for_linear_phi() {
        let phi = linear_phi();
        let a = ident(1.0);
        let t_end = 0.05;
        let g0 = FourierSeries::constant(1, 1.0).with_mode(&[1], 0.5, 0.0);
        let evolved = semigroup_apply(&g0, t_end, 1.0, &a);
        let cells = 1024;
        let dx: f64 = 2.0 / cells as f64;
        let dt = 0.1 * dx * dx / 2.0;
        let f = solve_hydrodynamic(&|u| g0.value(u), &a, &phi, t_end, cells, dt, 2).unwrap();
        let mut sup = 0.0f64;
        for idx in 0..f.cells() {
            let u = f.cell_position(idx);
            sup = sup.max((f.final_snapshot()[idx] - evolved.value(&u[..1])).abs());
        }
        assert!(sup < 1e-6, "sup {sup}");
    }

    #[test]
    fn weak_residual_detects_wrong_fields() {
        let phi = linear_phi();
        let a = ident(1.0);
        let rho0 = |u: &[f64]| 1.0 + 0.5 * (PI * u[0]).cos();
        let test = SpaceTimeTest::steady(FourierSeries::zero(1).with_mode(&[1], 1.0, 0.0));

        // constant field, time-independent G: both integrands vanish
        let fc = solve_hydrodynamic(&|_| 0.8, &a, &phi, 0.02, 64, 1e-4, 6).unwrap();
        let r0 = weak_residual(&fc, &|_| 0.8, &test, &a, &phi);
        assert!(r0 < 1e-10, "constant residual {r0}");

        // computed solution: residual small and decreasing under refinement
        let mut res = Vec::new();
        for (cells, snaps) in [(64usize, 40), (128, 80)] {
            let dx: f64 = 2.0 / cells as f64;
            let dt = 0.25 * dx * dx / 2.0;
            let f = solve_hydrodynamic(&rho0, &a, &phi, 0.05, cells, dt, snaps).unwrap();
            res.push(weak_residual(&f, &rho0, &test, &a, &phi));
        }
        assert!(res[1] < 0.6 * res[0], "no refinement decrease: {res:?}");

        // negative control: a spatially perturbed field is detected (a
        // constant shift would be weakly invisible here because phi is linear
        // and G has zero mean, so perturb with the test mode itself)
        let f = {
            let cells = 128usize;
            let dx: f64 = 2.0 / cells as f64;
            let dt = 0.25 * dx * dx / 2.0;
            let mut f = solve_hydrodynamic(&rho0, &a, &phi, 0.05, cells, dt, 80).unwrap();
            for snap in f.snapshots.iter_mut() {
                for (idx, v) in snap.iter_mut().enumerate() {
                    let u = -1.0 + (idx as f64 + 0.5) * dx;
                    *v += 0.1 * (PI * u).cos();
                }
            }
            f
        };
        let bad = weak_residual(&f, &rho0, &test, &a, &phi);
        assert!(bad > 0.02, "perturbed residual {bad} not bounded away from 0");
        assert!(bad > 20.0 * res[1]);
    }

    #[test]
    fn csv_export_has_all_cells() {
        let phi = linear_phi();
        let a = ident(1.0);
        let f = solve_hydrodynamic(&|_| 1.0, &a, &phi, 0.01, 8, 1e-4, 2).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + f.times.len() * f.cells());
    }
}
