//! Functionals of trajectories: empirical measures, density fluctuation
//! fields, Dynkin martingales with their predictable quadratic variation,
//! the Boltzmann-Gibbs projection statistic, the block-average replacement
//! statistic and additive functionals.
//!
//! Everything here replays exact event logs: integrands are piecewise
//! constant between events and all time integrals are exact sums, updated in
//! `O(1)` (or `O(box)`) per event. No quadrature error enters any statistic.
//!
//! Pairings and normalizations:
//! * empirical: `N^-d sum_x eta(x) w(x)`
//! * fluctuation: `N^-d/2 sum_x (eta(x) - rho) w(x)`
//!
//! with `w` either a test function restricted to the grid or its corrected
//! (resolvent) version. The martingale attached to a corrected weight `w` is
//! `M_t = field_t - field_0 - int_0^t norm * sum_x g(eta_s(x)) (L w)(x) ds`
//! with predictable quadratic variation summing `rate * (jump increment)^2`
//! over both jump channels of every bond.

use std::io::Write;

use crate::dynamics::{Configuration, TrajectoryRecord};
use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::lattice::{Direction, GridFunction, TorusGrid, MAX_DIM};
use crate::measures::{FugacityTables, PhiTable, RateFunction};
use crate::resolvent::ResolventSolution;

/// Which pairing a sampled field path carries.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FieldKind {
    Empirical,
    CorrectedEmpirical,
    Fluctuation,
    CorrectedFluctuation,
}

impl std::fmt::Display for FieldKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FieldKind::Empirical => "empirical",
            FieldKind::CorrectedEmpirical => "corrected_empirical",
            FieldKind::Fluctuation => "fluctuation",
            FieldKind::CorrectedFluctuation => "corrected_fluctuation",
        };
        f.write_str(s)
    }
}

/// `N^-d sum_x eta(x) w(x)`.
pub fn empirical_pairing(eta: &Configuration, w: &GridFunction) -> f64 {
    let nd = (w.grid.scale() as f64).powi(w.grid.dim() as i32);
    eta.occupancies()
        .iter()
        .zip(&w.values)
        .map(|(&k, &v)| k as f64 * v)
        .sum::<f64>()
        / nd
}

/// `N^-d/2 sum_x (eta(x) - rho) w(x)`.
pub fn fluctuation_pairing(eta: &Configuration, w: &GridFunction, rho: f64) -> f64 {
    let nd = (w.grid.scale() as f64).powi(w.grid.dim() as i32);
    eta.occupancies()
        .iter()
        .zip(&w.values)
        .map(|(&k, &v)| (k as f64 - rho) * v)
        .sum::<f64>()
        / nd.sqrt()
}

/// All four pairings of one configuration against a test function and its
/// corrected version.
#[derive(Clone, Copy, Debug)]
pub struct FieldValues {
    pub empirical: f64,
    pub corrected_empirical: f64,
    pub fluctuation: f64,
    pub corrected_fluctuation: f64,
}

pub fn evaluate_fields(
    eta: &Configuration,
    w: &GridFunction,
    w_corrected: &GridFunction,
    rho: f64,
) -> FieldValues {
    FieldValues {
        empirical: empirical_pairing(eta, w),
        corrected_empirical: empirical_pairing(eta, w_corrected),
        fluctuation: fluctuation_pairing(eta, w, rho),
        corrected_fluctuation: fluctuation_pairing(eta, w_corrected, rho),
    }
}

/// One pairing sampled along a trajectory at given times.
#[derive(Clone, Debug)]
pub struct FieldSample {
    pub kind: FieldKind,
    pub label: String,
    pub lambda: Option<f64>,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl FieldSample {
    pub fn write_csv(&self, trial_seed: u64, w: &mut impl Write) -> Result<()> {
        writeln!(w, "trial_seed,time,kind,test_fn,value")?;
        for (t, v) in self.times.iter().zip(&self.values) {
            writeln!(w, "{trial_seed},{t},{},{},{v}", self.kind, self.label)?;
        }
        Ok(())
    }
}

/// Sample one pairing at the given (sorted, within-horizon) times; the path
/// is cadlag, so a sample at an event time sees the post-jump state.
#[allow(clippy::too_many_arguments)]
pub fn sample_field_path(
    traj: &TrajectoryRecord,
    grid: TorusGrid,
    w: &GridFunction,
    kind: FieldKind,
    rho: f64,
    label: &str,
    lambda: Option<f64>,
    times: &[f64],
) -> Result<FieldSample> {
    validate_sample_times(times, traj.horizon)?;
    let nd = (grid.scale() as f64).powi(grid.dim() as i32);
    let mut raw: f64 = traj
        .initial
        .occupancies()
        .iter()
        .zip(&w.values)
        .map(|(&k, &v)| k as f64 * v)
        .sum();
    let w_total: f64 = w.values.iter().sum();
    let to_value = |raw: f64| match kind {
        FieldKind::Empirical | FieldKind::CorrectedEmpirical => raw / nd,
        FieldKind::Fluctuation | FieldKind::CorrectedFluctuation => {
            (raw - rho * w_total) / nd.sqrt()
        }
    };

    let mut values = Vec::with_capacity(times.len());
    let mut cursor = 0usize;
    let mut rp = traj.replay(grid);
    while let Some(step) = rp.next_step() {
        while cursor < times.len() && times[cursor] < step.time {
            values.push(to_value(raw));
            cursor += 1;
        }
        raw += w.values[step.to] - w.values[step.from];
    }
    while cursor < times.len() {
        values.push(to_value(raw));
        cursor += 1;
    }
    Ok(FieldSample {
        kind,
        label: label.to_string(),
        lambda,
        times: times.to_vec(),
        values,
    })
}

fn validate_sample_times(times: &[f64], horizon: f64) -> Result<()> {
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::usage("sample times must be sorted"));
    }
    if times.iter().any(|&t| t < 0.0 || t > horizon) {
        return Err(Error::usage("sample times must lie in [0, horizon]"));
    }
    Ok(())
}

/// Normalization of a martingale track: density pairing (`N^-d`) or
/// fluctuation pairing (`N^-d/2`, centered at `rho`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Normalization {
    Density,
    Fluctuation { rho: f64 },
}

/// Dynkin martingale of a corrected pairing along one trajectory, with its
/// running predictable quadratic variation, sampled at fixed times.
#[derive(Clone, Debug)]
pub struct MartingaleTrack {
    pub normalization: Normalization,
    pub lambda: f64,
    pub seed: u64,
    pub times: Vec<f64>,
    pub field: Vec<f64>,
    pub drift_integral: Vec<f64>,
    pub martingale: Vec<f64>,
    pub quadratic_variation: Vec<f64>,
}

impl MartingaleTrack {
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(
            w,
            "trial_seed,time,field,drift_integral,martingale,quadratic_variation"
        )?;
        for i in 0..self.times.len() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                self.seed,
                self.times[i],
                self.field[i],
                self.drift_integral[i],
                self.martingale[i],
                self.quadratic_variation[i]
            )?;
        }
        Ok(())
    }
}

/// Track the Dynkin martingale of the corrected pairing `corrected.u` along
/// `traj`. Drift and quadratic variation are integrated exactly between
/// events with `O(1)` per-event updates.
pub fn martingale_track(
    traj: &TrajectoryRecord,
    env: &Environment,
    g: &RateFunction,
    corrected: &ResolventSolution,
    normalization: Normalization,
    sample_times: &[f64],
) -> Result<MartingaleTrack> {
    validate_sample_times(sample_times, traj.horizon)?;
    let grid = env.grid();
    let w = &corrected.u;
    if w.grid != grid {
        return Err(Error::usage("corrected function grid mismatch"));
    }
    let d = grid.dim();
    let nd = (grid.scale() as f64).powi(d as i32);
    let (field_norm, drift_norm, qv_norm) = match normalization {
        Normalization::Density => (1.0 / nd, 1.0 / nd, 1.0 / (nd * nd)),
        Normalization::Fluctuation { .. } => (1.0 / nd.sqrt(), 1.0 / nd.sqrt(), 1.0 / nd),
    };
    let rho = match normalization {
        Normalization::Density => 0.0,
        Normalization::Fluctuation { rho } => rho,
    };

    // per-site data: (L w)(x) and the jump-channel energy
    // q(x) = sum_dir p(x,dir) [w(y) - w(x)]^2
    let lap = env.apply_laplacian(w);
    let q: Vec<f64> = (0..grid.sites())
        .map(|x| {
            let mut acc = 0.0;
            for dir in Direction::all(d) {
                let y = grid.step(x, dir);
                let dw = w.values[y] - w.values[x];
                acc += env.jump_rate(x, dir) * dw * dw;
            }
            acc
        })
        .collect();

    let occ0 = traj.initial.occupancies();
    let w_total: f64 = w.values.iter().sum();
    let mut raw: f64 = occ0
        .iter()
        .zip(&w.values)
        .map(|(&k, &v)| k as f64 * v)
        .sum();
    let mut s_drift: f64 = occ0
        .iter()
        .enumerate()
        .map(|(x, &k)| g.g(k) * lap.values[x])
        .sum();
    let mut s_qv: f64 = occ0
        .iter()
        .enumerate()
        .map(|(x, &k)| g.g(k) * q[x])
        .sum();

    let to_field = |raw: f64| (raw - rho * w_total) * field_norm;
    let field0 = to_field(raw);

    let mut times = Vec::with_capacity(sample_times.len());
    let mut field = Vec::with_capacity(sample_times.len());
    let mut drift_integral = Vec::with_capacity(sample_times.len());
    let mut martingale = Vec::with_capacity(sample_times.len());
    let mut quadratic_variation = Vec::with_capacity(sample_times.len());

    let mut drift_acc = 0.0;
    let mut qv_acc = 0.0;
    let mut t_prev = 0.0;
    let mut cursor = 0usize;

    let record =
        |t: f64, raw: f64, drift_acc: f64, qv_acc: f64, times: &mut Vec<f64>, field: &mut Vec<f64>, drift_integral: &mut Vec<f64>, martingale: &mut Vec<f64>, quadratic_variation: &mut Vec<f64>| {
            let fv = to_field(raw);
            times.push(t);
            field.push(fv);
            drift_integral.push(drift_acc * drift_norm);
            martingale.push(fv - field0 - drift_acc * drift_norm);
            quadratic_variation.push(qv_acc * qv_norm);
        };

    let mut rp = traj.replay(grid);
    loop {
        let step = rp.next_step();
        let t_next = step.map_or(traj.horizon, |s| s.time);
        while cursor < sample_times.len() && sample_times[cursor] < t_next {
            let ts = sample_times[cursor];
            record(
                ts,
                raw,
                drift_acc + s_drift * (ts - t_prev),
                qv_acc + s_qv * (ts - t_prev),
                &mut times,
                &mut field,
                &mut drift_integral,
                &mut martingale,
                &mut quadratic_variation,
            );
            cursor += 1;
        }
        match step {
            Some(s) => {
                drift_acc += s_drift * (s.time - t_prev);
                qv_acc += s_qv * (s.time - t_prev);
                t_prev = s.time;
                // post-jump occupancies are already applied in the replay
                let occ = rp.config();
                let (x, y) = (s.from, s.to);
                let gx_new = g.g(occ.occupancy(x));
                let gx_old = g.g(occ.occupancy(x) + 1);
                let gy_new = g.g(occ.occupancy(y));
                let gy_old = g.g(occ.occupancy(y) - 1);
                s_drift += (gx_new - gx_old) * lap.values[x] + (gy_new - gy_old) * lap.values[y];
                s_qv += (gx_new - gx_old) * q[x] + (gy_new - gy_old) * q[y];
                raw += w.values[y] - w.values[x];
            }
            None => {
                // flush samples exactly at the horizon
                while cursor < sample_times.len() {
                    let ts = sample_times[cursor];
                    record(
                        ts,
                        raw,
                        drift_acc + s_drift * (ts - t_prev),
                        qv_acc + s_qv * (ts - t_prev),
                        &mut times,
                        &mut field,
                        &mut drift_integral,
                        &mut martingale,
                        &mut quadratic_variation,
                    );
                    cursor += 1;
                }
                break;
            }
        }
    }

    Ok(MartingaleTrack {
        normalization,
        lambda: corrected.lambda,
        seed: traj.seed,
        times,
        field,
        drift_integral,
        martingale,
        quadratic_variation,
    })
}

/// A local observable `f(theta_x omega, tau_x eta)` depending on the
/// environment and the occupancies in a sup-norm window of the given radius.
pub trait LocalObservable {
    fn radius(&self) -> usize;
    /// Value given the occupancy window around `x` in row-major box order
    /// (length `(2 radius + 1)^d`).
    fn eval_window(&self, env: &Environment, x: usize, window: &[u32]) -> f64;
    fn lipschitz(&self) -> f64;
    /// Exact centering `E_nu_rho[f(x, .)]` when known in closed form.
    fn exact_centering(&self, _env: &Environment, _x: usize, _rho: f64) -> Option<f64> {
        None
    }
    /// Exact density slope `d/d rho E[int f d nu_rho]` when known.
    fn exact_density_slope(&self) -> Option<f64> {
        None
    }
}

/// `f(x, eta) = eta(x) - rho`: its own projection, so the remainder
/// statistic vanishes identically.
pub struct DensityObservable {
    pub rho: f64,
}

impl LocalObservable for DensityObservable {
    fn radius(&self) -> usize {
        0
    }
    fn eval_window(&self, _env: &Environment, _x: usize, window: &[u32]) -> f64 {
        window[0] as f64 - self.rho
    }
    fn lipschitz(&self) -> f64 {
        1.0
    }
    fn exact_centering(&self, _env: &Environment, _x: usize, _rho: f64) -> Option<f64> {
        Some(0.0)
    }
    fn exact_density_slope(&self) -> Option<f64> {
        Some(1.0)
    }
}

/// `f(x, eta) = g(eta(x))`: the jump intensity observable.
pub struct RateObservable {
    pub g: RateFunction,
}

impl LocalObservable for RateObservable {
    fn radius(&self) -> usize {
        0
    }
    fn eval_window(&self, _env: &Environment, _x: usize, window: &[u32]) -> f64 {
        self.g.g(window[0])
    }
    fn lipschitz(&self) -> f64 {
        self.g.lipschitz()
    }
}

/// `f(x, eta) = a_axis(theta_x omega) g(eta(x))`: an environment-weighted
/// jump intensity.
pub struct EnvRateObservable {
    pub g: RateFunction,
    pub axis: usize,
}

impl LocalObservable for EnvRateObservable {
    fn radius(&self) -> usize {
        0
    }
    fn eval_window(&self, env: &Environment, x: usize, window: &[u32]) -> f64 {
        env.conductance(x, self.axis) * self.g.g(window[0])
    }
    fn lipschitz(&self) -> f64 {
        self.g.lipschitz() / self.env_lipschitz_scale()
    }
}

impl EnvRateObservable {
    fn env_lipschitz_scale(&self) -> f64 {
        1.0
    }
}

fn window_len(d: usize, r: usize) -> usize {
    (2 * r + 1).pow(d as u32)
}

fn fill_window(grid: TorusGrid, occ: &[u32], x: usize, r: usize, buf: &mut Vec<u32>) {
    buf.clear();
    if r == 0 {
        buf.push(occ[x]);
        return;
    }
    let d = grid.dim();
    let side = grid.side() as i64;
    let c = grid.coords_of(x);
    let mut offsets = vec![-(r as i64); d];
    'outer: loop {
        let mut coords = [0usize; MAX_DIM];
        for axis in 0..d {
            coords[axis] = (c[axis] as i64 + offsets[axis]).rem_euclid(side) as usize;
        }
        buf.push(occ[grid.index_of(&coords[..d])]);
        for axis in (0..d).rev() {
            offsets[axis] += 1;
            if offsets[axis] <= r as i64 {
                continue 'outer;
            }
            offsets[axis] = -(r as i64);
        }
        break;
    }
}

/// Exact centering of an observable under the truncated product marginal:
/// sums `f` over all window occupancy vectors weighted by the pmf product.
fn product_measure_centering(
    f: &dyn LocalObservable,
    env: &Environment,
    grid: TorusGrid,
    x: usize,
    pmf: &[f64],
) -> Result<f64> {
    let wl = window_len(grid.dim(), f.radius());
    let states = (pmf.len() as f64).powi(wl as i32);
    if states > 2e6 {
        return Err(Error::resource(format!(
            "product-measure centering over {wl} window sites with {} occupancy levels is too large",
            pmf.len()
        )));
    }
    let mut window = vec![0u32; wl];
    let mut acc = 0.0;
    // odometer over the window occupancy vectors
    loop {
        let weight: f64 = window.iter().map(|&k| pmf[k as usize]).product();
        acc += weight * f.eval_window(env, x, &window);
        let mut pos = 0;
        loop {
            if pos == wl {
                return Ok(acc);
            }
            window[pos] += 1;
            if (window[pos] as usize) < pmf.len() {
                break;
            }
            window[pos] = 0;
            pos += 1;
        }
    }
}

/// Projection of a local observable on the density field along a trajectory.
///
/// * `functional` is `int_0^T N^{-d/2} sum_x G(x) (f(x,eta_s) - E[f]) ds`
/// * `projection` is `slope * int_0^T N^{-d/2} sum_x G(x)(eta_s(x)-rho) ds`
/// * `remainder = functional - projection` is the Boltzmann-Gibbs statistic:
///   the time-integrated fluctuation left after removing the density part.
#[derive(Clone, Copy, Debug)]
pub struct ProjectionStats {
    pub functional: f64,
    pub projection: f64,
    pub remainder: f64,
    pub slope: f64,
}

/// Replay a trajectory accumulating the additive functional of `f` and its
/// density projection. The centering is the exact product-measure expectation
/// per site; the slope is the observable's exact value when declared, else a
/// central difference of the site-averaged centering in `rho`.
pub fn projection_stats(
    traj: &TrajectoryRecord,
    env: &Environment,
    weights: &GridFunction,
    f: &dyn LocalObservable,
    rho: f64,
    tables: &FugacityTables,
) -> Result<ProjectionStats> {
    let grid = env.grid();
    let d = grid.dim();
    let r = f.radius();
    if 2 * r + 1 > grid.side() {
        return Err(Error::usage("observable support exceeds the torus"));
    }

    // per-site centering
    let alpha = tables.fugacity(rho)?;
    let pmf = tables.marginal_pmf(alpha)?;
    let sites = grid.sites();
    let mut centering = vec![0.0; sites];
    for x in 0..sites {
        centering[x] = match f.exact_centering(env, x, rho) {
            Some(c) => c,
            None => product_measure_centering(f, env, grid, x, &pmf)?,
        };
    }

    // density slope of the (environment-averaged) centering
    let slope = match f.exact_density_slope() {
        Some(s) => s,
        None => {
            let h = (1e-3f64).min(rho * 0.5).max(1e-6);
            let site_avg = |rho_h: f64| -> Result<f64> {
                let pmf_h = tables.marginal_pmf(tables.fugacity(rho_h)?)?;
                let mut acc = 0.0;
                for x in 0..sites {
                    acc += product_measure_centering(f, env, grid, x, &pmf_h)?;
                }
                Ok(acc / sites as f64)
            };
            (site_avg(rho + h)? - site_avg(rho - h)?) / (2.0 * h)
        }
    };

    // initial sums; B uses the same per-term expression shape as the density
    // observable so that the two accumulators agree bitwise in that case.
    let occ = traj.initial.occupancies().to_vec();
    let mut win = Vec::new();
    let mut a_sum = 0.0; // sum_x G(x) (f(x,eta) - centering(x))
    let mut b_sum = 0.0; // sum_x G(x) (eta(x) - rho)
    for x in 0..sites {
        fill_window(grid, &occ, x, r, &mut win);
        a_sum += weights.values[x] * (f.eval_window(env, x, &win) - centering[x]);
        b_sum += weights.values[x] * (occ[x] as f64 - rho);
    }

    let mut int_a = 0.0;
    let mut int_b = 0.0;
    let mut t_prev = 0.0;

    let mut rp = traj.replay(grid);
    let mut affected: Vec<usize> = Vec::new();
    let mut old_vals: Vec<f64> = Vec::new();
    loop {
        let step = rp.next_step();
        let t_next = step.map_or(traj.horizon, |s| s.time);
        int_a += a_sum * (t_next - t_prev);
        int_b += b_sum * (t_next - t_prev);
        t_prev = t_next;
        let Some(s) = step else { break };
        let occ_now = rp.config().occupancies();
        // affected sites: windows covering the source or the destination
        affected.clear();
        if r == 0 {
            affected.push(s.from);
            affected.push(s.to);
        } else {
            collect_box(grid, s.from, r, &mut affected);
            collect_box(grid, s.to, r, &mut affected);
            affected.sort_unstable();
            affected.dedup();
        }
        // pre-jump values: reconstruct by undoing the jump in a scratch copy
        old_vals.clear();
        for &z in &affected {
            // occupancies before the event
            let mut prev_window = Vec::new();
            fill_window_with_override(
                grid,
                occ_now,
                z,
                r,
                s.from,
                occ_now[s.from] + 1,
                s.to,
                occ_now[s.to] - 1,
                &mut prev_window,
            );
            old_vals.push(f.eval_window(env, z, &prev_window));
        }
        for (i, &z) in affected.iter().enumerate() {
            fill_window(grid, occ_now, z, r, &mut win);
            let new_val = f.eval_window(env, z, &win);
            a_sum += weights.values[z] * (new_val - old_vals[i]);
        }
        // density accumulator: identical expression shape at source and
        // destination ((k_new - rho) - (k_old - rho))
        let from_new = occ_now[s.from] as f64;
        let to_new = occ_now[s.to] as f64;
        b_sum += weights.values[s.from] * ((from_new - rho) - ((from_new + 1.0) - rho));
        b_sum += weights.values[s.to] * ((to_new - rho) - ((to_new - 1.0) - rho));
    }

    let nd = (grid.scale() as f64).powi(d as i32);
    let norm = 1.0 / nd.sqrt();
    let functional = norm * int_a;
    let projection = slope * (norm * int_b);
    Ok(ProjectionStats {
        functional,
        projection,
        remainder: functional - projection,
        slope,
    })
}

fn collect_box(grid: TorusGrid, center: usize, r: usize, out: &mut Vec<usize>) {
    let d = grid.dim();
    let side = grid.side() as i64;
    let c = grid.coords_of(center);
    let mut offsets = vec![-(r as i64); d];
    'outer: loop {
        let mut coords = [0usize; MAX_DIM];
        for axis in 0..d {
            coords[axis] = (c[axis] as i64 + offsets[axis]).rem_euclid(side) as usize;
        }
        out.push(grid.index_of(&coords[..d]));
        for axis in (0..d).rev() {
            offsets[axis] += 1;
            if offsets[axis] <= r as i64 {
                continue 'outer;
            }
            offsets[axis] = -(r as i64);
        }
        break;
    }
}

#[allow(clippy::too_many_arguments)]
fn fill_window_with_override(
    grid: TorusGrid,
    occ: &[u32],
    x: usize,
    r: usize,
    site_a: usize,
    val_a: u32,
    site_b: usize,
    val_b: u32,
    buf: &mut Vec<u32>,
) {
    fill_window(grid, occ, x, r, buf);
    if r == 0 {
        if x == site_a {
            buf[0] = val_a;
        } else if x == site_b {
            buf[0] = val_b;
        }
        return;
    }
    // locate overridden sites inside the window, if covered
    let d = grid.dim();
    let side = grid.side() as i64;
    let c = grid.coords_of(x);
    for (site, val) in [(site_a, val_a), (site_b, val_b)] {
        let sc = grid.coords_of(site);
        let mut inside = true;
        let mut flat = 0usize;
        for axis in 0..d {
            let mut diff = sc[axis] as i64 - c[axis] as i64;
            diff = (diff + side / 2).rem_euclid(side) - side / 2;
            if diff.abs() > r as i64 {
                inside = false;
                break;
            }
            flat = flat * (2 * r + 1) + (diff + r as i64) as usize;
        }
        if inside {
            buf[flat] = val;
        }
    }
}

/// Boltzmann-Gibbs statistic: the remainder of the density projection,
/// `int_0^T N^{-d/2} sum_x G(x) V_f(x, eta_s) ds` with
/// `V_f = f - E[f] - slope (eta(x) - rho)`.
pub fn bg_statistic(
    traj: &TrajectoryRecord,
    env: &Environment,
    weights: &GridFunction,
    f: &dyn LocalObservable,
    rho: f64,
    tables: &FugacityTables,
) -> Result<f64> {
    Ok(projection_stats(traj, env, weights, f, rho, tables)?.remainder)
}

/// Additive functional of `f` paired with its projected comparator; the
/// difference of the two returned integrals is the Boltzmann-Gibbs statistic
/// by construction (bit-for-bit).
pub fn additive_functional(
    traj: &TrajectoryRecord,
    env: &Environment,
    weights: &GridFunction,
    f: &dyn LocalObservable,
    rho: f64,
    tables: &FugacityTables,
) -> Result<ProjectionStats> {
    projection_stats(traj, env, weights, f, rho, tables)
}

/// Block-replacement statistic
/// `int_0^T N^-d sum_x | avg_box g - phi(avg_box eta) | ds` with box radius
/// `l = floor(epsilon N)`, maintained exactly with per-event box updates:
/// how far block averages of the jump intensity sit from `phi` of the block
/// density.
pub fn replacement_statistic(
    traj: &TrajectoryRecord,
    env: &Environment,
    g: &RateFunction,
    phi: &PhiTable,
    epsilon: f64,
) -> Result<f64> {
    let grid = env.grid();
    let d = grid.dim();
    let l = (epsilon * grid.scale() as f64).floor() as usize;
    if l == 0 {
        return Err(Error::usage(
            "epsilon N must be at least 1 for the block average",
        ));
    }
    if 2 * l + 1 > grid.side() {
        return Err(Error::usage("block exceeds the torus"));
    }
    let sites = grid.sites();
    let vol = (2 * l + 1).pow(d as u32) as f64;

    // box sums of occupancies and of g(occupancy)
    let occ0 = traj.initial.occupancies();
    let mut box_n = vec![0i64; sites];
    let mut box_g = vec![0.0f64; sites];
    let mut box_sites = Vec::new();
    for x in 0..sites {
        box_sites.clear();
        collect_box(grid, x, l, &mut box_sites);
        for &z in &box_sites {
            box_n[x] += occ0[z] as i64;
            box_g[x] += g.g(occ0[z]);
        }
    }
    let term = |bn: i64, bg: f64| (bg / vol - phi.phi(bn as f64 / vol)).abs();
    let mut v: Vec<f64> = (0..sites).map(|x| term(box_n[x], box_g[x])).collect();
    let mut v_sum: f64 = v.iter().sum();

    let mut integral = 0.0;
    let mut t_prev = 0.0;
    let mut stamp = vec![0u32; sites];
    let mut generation = 0u32;
    let mut touched = Vec::new();
    let mut boxes = Vec::new();
    let mut events_seen = 0usize;

    let mut rp = traj.replay(grid);
    loop {
        let step = rp.next_step();
        let t_next = step.map_or(traj.horizon, |s| s.time);
        integral += v_sum * (t_next - t_prev);
        t_prev = t_next;
        let Some(s) = step else { break };
        let occ_now = rp.config().occupancies();
        let dg_from = g.g(occ_now[s.from]) - g.g(occ_now[s.from] + 1);
        let dg_to = g.g(occ_now[s.to]) - g.g(occ_now[s.to] - 1);

        generation += 1;
        touched.clear();
        for (center, dn, dg) in [(s.from, -1i64, dg_from), (s.to, 1i64, dg_to)] {
            boxes.clear();
            collect_box(grid, center, l, &mut boxes);
            for &z in &boxes {
                if stamp[z] != generation {
                    stamp[z] = generation;
                    touched.push(z);
                    v_sum -= v[z];
                }
                box_n[z] += dn;
                box_g[z] += dg;
            }
        }
        for &z in &touched {
            v[z] = term(box_n[z], box_g[z]);
            v_sum += v[z];
        }
        events_seen += 1;
        if events_seen.is_multiple_of(1 << 16) {
            v_sum = v.iter().sum();
        }
    }

    let nd = (grid.scale() as f64).powi(d as i32);
    Ok(integral / nd)
}
