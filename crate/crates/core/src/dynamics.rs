//! Exact continuous-time simulation of the zero-range process.
//!
//! The process is event-driven: the total jump intensity is
//! `W = sum_x g(eta(x)) r(x)` with `r(x)` the sum of the `2d` incident bond
//! rates, inter-event times are exponential with rate `W`, the jumping site is
//! chosen proportionally to `g(eta(x)) r(x)` through a binary intensity tree,
//! and the direction proportionally to the bond rates. No time discretization
//! enters anywhere; trajectories are exact event logs and time integrals
//! against them are exact piecewise-constant sums.
//!
//! The monotone ("basic") coupling shares bond clocks between an ordered pair
//! of configurations: events are generated at the upper copy's rates and the
//! lower copy moves with probability `g(eta(x)) / g(eta'(x))`, which preserves
//! both marginal laws and the partial order when `g` is non-decreasing.

use std::io::Write;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::lattice::{Direction, TorusGrid};
use crate::measures::RateFunction;

/// Occupation numbers on the torus with a cached particle total.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Configuration {
    occ: Vec<u32>,
    total: u64,
}

impl Configuration {
    pub fn new(occ: Vec<u32>) -> Self {
        let total = occ.iter().map(|&k| k as u64).sum();
        Configuration { occ, total }
    }

    pub fn empty(sites: usize) -> Self {
        Configuration {
            occ: vec![0; sites],
            total: 0,
        }
    }

    #[inline]
    pub fn occupancy(&self, x: usize) -> u32 {
        self.occ[x]
    }

    pub fn occupancies(&self) -> &[u32] {
        &self.occ
    }

    #[inline]
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn sites(&self) -> usize {
        self.occ.len()
    }

    /// Pointwise partial order `self <= other`.
    pub fn dominated_by(&self, other: &Configuration) -> bool {
        self.occ.len() == other.occ.len()
            && self.occ.iter().zip(&other.occ).all(|(a, b)| a <= b)
    }

    /// Move one particle from `from` to `to`; the caller guarantees a
    /// particle is present (trajectory replay enforces it).
    #[inline]
    pub fn apply_jump(&mut self, from: usize, to: usize) {
        assert!(self.occ[from] > 0, "jump from empty site {from}");
        self.occ[from] -= 1;
        self.occ[to] += 1;
    }

    /// Total jump intensity `sum_x g(eta(x)) r(x)`; the recomputable check
    /// for the cached intensities maintained during simulation.
    pub fn total_intensity(&self, env: &Environment, g: &RateFunction) -> f64 {
        self.occ
            .iter()
            .enumerate()
            .filter(|(_, &k)| k > 0)
            .map(|(x, &k)| g.g(k) * env.incident_rate_sum(x))
            .sum()
    }
}

/// One jump event: absolute time, source site, packed direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub time: f64,
    pub site: u32,
    pub dir: u8,
}

/// An exact realization of the process on `[0, horizon]`.
#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub initial: Configuration,
    pub events: Vec<Event>,
    pub horizon: f64,
    pub seed: u64,
}

impl TrajectoryRecord {
    pub fn replay(&self, grid: TorusGrid) -> Replay<'_> {
        Replay {
            traj: self,
            grid,
            config: self.initial.clone(),
            cursor: 0,
            time: 0.0,
        }
    }

    pub fn final_configuration(&self, grid: TorusGrid) -> Configuration {
        let mut rp = self.replay(grid);
        while rp.next_step().is_some() {}
        rp.into_config()
    }

    /// Event times strictly increasing in `(0, horizon]` and replay never
    /// drives an occupancy negative.
    pub fn validate(&self, grid: TorusGrid) -> Result<()> {
        let mut prev = 0.0;
        for e in &self.events {
            if !(e.time > prev && e.time <= self.horizon) {
                return Err(Error::usage(format!(
                    "event time {} not strictly increasing within (0, {}]",
                    e.time, self.horizon
                )));
            }
            prev = e.time;
        }
        let mut config = self.initial.clone();
        for e in &self.events {
            let from = e.site as usize;
            if config.occupancy(from) == 0 {
                return Err(Error::usage(format!("replay drains empty site {from}")));
            }
            let to = grid.step(from, Direction::decode(e.dir));
            config.apply_jump(from, to);
        }
        Ok(())
    }

    /// CSV export with a JSON header line: `event_index, time, source_site,
    /// direction`.
    pub fn write_csv(&self, grid: TorusGrid, model_json: &serde_json::Value, w: &mut impl Write) -> Result<()> {
        let header = serde_json::json!({
            "model": model_json,
            "seed": self.seed,
            "n": grid.scale(),
            "d": grid.dim(),
            "horizon": self.horizon,
            "events": self.events.len(),
        });
        writeln!(w, "# {header}")?;
        writeln!(w, "event_index,time,source_site,direction")?;
        for (i, e) in self.events.iter().enumerate() {
            writeln!(w, "{i},{},{},{}", e.time, e.site, e.dir)?;
        }
        Ok(())
    }
}

/// Step-by-step replay of a trajectory; integrals against the path are exact
/// piecewise-constant sums between events.
pub struct Replay<'a> {
    traj: &'a TrajectoryRecord,
    grid: TorusGrid,
    config: Configuration,
    cursor: usize,
    time: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct JumpStep {
    pub time: f64,
    pub from: usize,
    pub to: usize,
}

impl<'a> Replay<'a> {
    #[inline]
    pub fn config(&self) -> &Configuration {
        &self.config
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn horizon(&self) -> f64 {
        self.traj.horizon
    }

    /// Apply the next event and return it, or `None` past the last event.
    #[inline]
    pub fn next_step(&mut self) -> Option<JumpStep> {
        let e = self.traj.events.get(self.cursor)?;
        self.cursor += 1;
        let from = e.site as usize;
        let to = self.grid.step(from, Direction::decode(e.dir));
        self.config.apply_jump(from, to);
        self.time = e.time;
        Some(JumpStep {
            time: e.time,
            from,
            to,
        })
    }

    pub fn into_config(self) -> Configuration {
        self.config
    }
}

/// Complete binary tree over per-site intensities: `O(log n)` weight updates
/// and proportional selection.
struct IntensityTree {
    base: usize,
    node: Vec<f64>,
}

impl IntensityTree {
    fn new(weights: &[f64]) -> Self {
        let mut base = 1;
        while base < weights.len() {
            base *= 2;
        }
        let mut node = vec![0.0; 2 * base];
        node[base..base + weights.len()].copy_from_slice(weights);
        for i in (1..base).rev() {
            node[i] = node[2 * i] + node[2 * i + 1];
        }
        IntensityTree { base, node }
    }

    #[inline]
    fn total(&self) -> f64 {
        self.node[1]
    }

    #[inline]
    fn update(&mut self, i: usize, w: f64) {
        let mut idx = self.base + i;
        self.node[idx] = w;
        while idx > 1 {
            idx /= 2;
            self.node[idx] = self.node[2 * idx] + self.node[2 * idx + 1];
        }
    }

    /// Site whose cumulative weight interval contains `target in [0, total)`.
    fn select(&self, mut target: f64) -> usize {
        let mut idx = 1;
        while idx < self.base {
            let left = self.node[2 * idx];
            if target < left {
                idx *= 2;
            } else {
                target -= left;
                idx = 2 * idx + 1;
            }
        }
        let mut site = idx - self.base;
        // guard against landing on a zero leaf through rounding at the edges
        if self.node[idx] <= 0.0 {
            site = self
                .node
                .iter()
                .skip(self.base)
                .position(|&w| w > 0.0)
                .unwrap_or(0);
        }
        site
    }
}

#[inline]
fn exp_step(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    let u: f64 = rng.random();
    let dt = -(1.0 - u).ln() / rate;
    if dt > 0.0 {
        dt
    } else {
        f64::MIN_POSITIVE / rate.max(1.0)
    }
}

fn pick_direction(env: &Environment, x: usize, d: usize, u: f64) -> Direction {
    let total = env.incident_rate_sum(x);
    let mut target = u * total;
    let mut last = Direction::decode(0);
    for dir in Direction::all(d) {
        let w = env.jump_rate(x, dir);
        if target < w {
            return dir;
        }
        target -= w;
        last = dir;
    }
    last
}

/// Statistically exact event-driven realization on `[0, horizon]`,
/// deterministic in the seed. Particle count is conserved at every event.
pub fn simulate(
    initial: &Configuration,
    env: &Environment,
    g: &RateFunction,
    horizon: f64,
    seed: u64,
) -> Result<TrajectoryRecord> {
    if !(horizon > 0.0) {
        return Err(Error::usage("horizon must be positive"));
    }
    let grid = env.grid();
    if initial.sites() != grid.sites() {
        return Err(Error::usage("configuration does not match environment grid"));
    }
    let d = grid.dim();
    let sites = grid.sites();
    let incident: Vec<f64> = (0..sites).map(|x| env.incident_rate_sum(x)).collect();
    let mut occ = initial.clone();
    let weights: Vec<f64> = (0..sites)
        .map(|x| g.g(occ.occupancy(x)) * incident[x])
        .collect();
    let mut tree = IntensityTree::new(&weights);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::new();
    let mut t = 0.0;

    loop {
        let w_tot = tree.total();
        if w_tot <= 0.0 {
            break;
        }
        t += exp_step(&mut rng, w_tot);
        if t > horizon {
            break;
        }
        let x = tree.select(rng.random::<f64>() * w_tot);
        let dir = pick_direction(env, x, d, rng.random());
        let y = grid.step(x, dir);
        occ.apply_jump(x, y);
        events.push(Event {
            time: t,
            site: x as u32,
            dir: dir.encode(),
        });
        tree.update(x, g.g(occ.occupancy(x)) * incident[x]);
        tree.update(y, g.g(occ.occupancy(y)) * incident[y]);
    }

    Ok(TrajectoryRecord {
        initial: initial.clone(),
        events,
        horizon,
        seed,
    })
}

/// Exact generator application
/// `(L F)(eta) = sum_{x,dir} p(x,y) g(eta(x)) [F(eta^{x,y}) - F(eta)]`.
pub fn generator_apply(
    f: &dyn Fn(&Configuration) -> f64,
    eta: &Configuration,
    env: &Environment,
    g: &RateFunction,
) -> f64 {
    let grid = env.grid();
    let d = grid.dim();
    let f_eta = f(eta);
    let mut scratch = eta.clone();
    let mut acc = 0.0;
    for x in 0..eta.sites() {
        let k = eta.occupancy(x);
        if k == 0 {
            continue;
        }
        let gx = g.g(k);
        for dir in Direction::all(d) {
            let y = grid.step(x, dir);
            scratch.apply_jump(x, y);
            acc += env.jump_rate(x, dir) * gx * (f(&scratch) - f_eta);
            scratch.apply_jump(y, x);
        }
    }
    acc
}

/// Detailed-balance residual across one bond, normalized by the forward flux.
///
/// Uses `nu(eta^{xy}) / nu(eta) = g(eta(x)) / g(eta(y)+1)`, the
/// fugacity-free ratio of the product-measure weights, so the residual is
/// zero up to rounding precisely because the bond rates are symmetric.
pub fn reversibility_residual(
    eta: &Configuration,
    x: usize,
    dir: Direction,
    env: &Environment,
    g: &RateFunction,
) -> Result<f64> {
    if eta.occupancy(x) == 0 {
        return Err(Error::usage(format!("site {x} holds no particle")));
    }
    let grid = env.grid();
    let y = grid.step(x, dir);
    let p_xy = env.jump_rate(x, dir);
    let p_yx = env.jump_rate(y, dir.reversed());
    Ok(residual_with_rates(
        eta.occupancy(x),
        eta.occupancy(y),
        p_xy,
        p_yx,
        g,
    ))
}

/// Detailed-balance residual with explicit (possibly asymmetric) rates;
/// negative controls perturb `p_yx`.
pub fn residual_with_rates(
    eta_x: u32,
    eta_y: u32,
    p_xy: f64,
    p_yx: f64,
    g: &RateFunction,
) -> f64 {
    let forward = g.g(eta_x) * p_xy;
    let ratio = g.g(eta_x) / g.g(eta_y + 1);
    let backward = ratio * g.g(eta_y + 1) * p_yx;
    (forward - backward) / forward.abs().max(f64::MIN_POSITIVE)
}

/// One event of the coupled pair; `both` tells whether the lower copy moved
/// together with the upper copy.
#[derive(Clone, Copy, Debug)]
pub struct CoupledEvent {
    pub time: f64,
    pub site: u32,
    pub dir: u8,
    pub both: bool,
}

#[derive(Clone, Debug)]
pub struct CoupledTrajectory {
    pub initial_lower: Configuration,
    pub initial_upper: Configuration,
    pub events: Vec<CoupledEvent>,
    pub horizon: f64,
    pub seed: u64,
}

impl CoupledTrajectory {
    /// Replay both copies, checking `lower <= upper` after every event;
    /// returns the number of events audited.
    pub fn audit_ordering(&self, grid: TorusGrid) -> Result<usize> {
        let mut lower = self.initial_lower.clone();
        let mut upper = self.initial_upper.clone();
        for (i, e) in self.events.iter().enumerate() {
            let from = e.site as usize;
            let to = grid.step(from, Direction::decode(e.dir));
            if e.both {
                lower.apply_jump(from, to);
            }
            upper.apply_jump(from, to);
            if !lower.dominated_by(&upper) {
                return Err(Error::usage(format!("ordering broken at event {i}")));
            }
        }
        Ok(self.events.len())
    }

    pub fn final_configurations(&self, grid: TorusGrid) -> (Configuration, Configuration) {
        let mut lower = self.initial_lower.clone();
        let mut upper = self.initial_upper.clone();
        for e in &self.events {
            let from = e.site as usize;
            let to = grid.step(from, Direction::decode(e.dir));
            if e.both {
                lower.apply_jump(from, to);
            }
            upper.apply_jump(from, to);
        }
        (lower, upper)
    }
}

/// Basic coupling of an ordered pair under non-decreasing `g`: marginal laws
/// are preserved exactly (thinning) and the order `lower <= upper` holds
/// after every event by construction.
pub fn coupled_simulate(
    lower0: &Configuration,
    upper0: &Configuration,
    env: &Environment,
    g: &RateFunction,
    horizon: f64,
    seed: u64,
) -> Result<CoupledTrajectory> {
    if !(horizon > 0.0) {
        return Err(Error::usage("horizon must be positive"));
    }
    if !g.non_decreasing() {
        return Err(Error::usage(
            "monotone coupling requires a non-decreasing interaction rate",
        ));
    }
    if !lower0.dominated_by(upper0) {
        return Err(Error::usage("initial configurations are not ordered"));
    }
    let grid = env.grid();
    if lower0.sites() != grid.sites() {
        return Err(Error::usage("configuration does not match environment grid"));
    }
    let d = grid.dim();
    let sites = grid.sites();
    let incident: Vec<f64> = (0..sites).map(|x| env.incident_rate_sum(x)).collect();
    let mut lower = lower0.clone();
    let mut upper = upper0.clone();
    let weights: Vec<f64> = (0..sites)
        .map(|x| g.g(upper.occupancy(x)) * incident[x])
        .collect();
    let mut tree = IntensityTree::new(&weights);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::new();
    let mut t = 0.0;

    loop {
        let w_tot = tree.total();
        if w_tot <= 0.0 {
            break;
        }
        t += exp_step(&mut rng, w_tot);
        if t > horizon {
            break;
        }
        let x = tree.select(rng.random::<f64>() * w_tot);
        let dir = pick_direction(env, x, d, rng.random());
        let y = grid.step(x, dir);
        // lower copy accepts with probability g(eta(x)) / g(eta'(x));
        // equality of occupancies gives ratio exactly 1, so the copies can
        // never split when equal.
        let ratio = g.g(lower.occupancy(x)) / g.g(upper.occupancy(x));
        let both = rng.random::<f64>() < ratio;
        if both {
            lower.apply_jump(x, y);
        }
        upper.apply_jump(x, y);
        debug_assert!(
            lower.occupancy(x) <= upper.occupancy(x)
                && lower.occupancy(y) <= upper.occupancy(y)
        );
        events.push(CoupledEvent {
            time: t,
            site: x as u32,
            dir: dir.encode(),
            both,
        });
        tree.update(x, g.g(upper.occupancy(x)) * incident[x]);
        tree.update(y, g.g(upper.occupancy(y)) * incident[y]);
    }

    Ok(CoupledTrajectory {
        initial_lower: lower0.clone(),
        initial_upper: upper0.clone(),
        events,
        horizon,
        seed,
    })
}

/// Box average `eta^l(x) = (2l+1)^{-d} sum_{|y|<=l} eta(x+y)` with periodic
/// wrap; `|y|` is the componentwise (sup-norm) box of side `2l+1`.
pub fn local_average(
    eta: &Configuration,
    grid: TorusGrid,
    x: usize,
    l: usize,
) -> Result<f64> {
    if 2 * l + 1 > grid.side() {
        return Err(Error::usage(format!(
            "box side {} exceeds torus side {}",
            2 * l + 1,
            grid.side()
        )));
    }
    if x >= grid.sites() {
        return Err(Error::usage(format!("site {x} out of range")));
    }
    let d = grid.dim();
    let side = grid.side() as i64;
    let c = grid.coords_of(x);
    let mut sum = 0u64;
    let mut offsets = vec![-(l as i64); d];
    'outer: loop {
        let mut coords = [0usize; crate::lattice::MAX_DIM];
        for axis in 0..d {
            coords[axis] = (c[axis] as i64 + offsets[axis]).rem_euclid(side) as usize;
        }
        sum += eta.occupancy(grid.index_of(&coords[..d])) as u64;
        for axis in 0..d {
            offsets[axis] += 1;
            if offsets[axis] <= l as i64 {
                continue 'outer;
            }
            offsets[axis] = -(l as i64);
        }
        break;
    }
    Ok(sum as f64 / (2 * l + 1).pow(d as u32) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::EnvironmentModel;
    use crate::measures::{sample_equilibrium, FugacityTables};
    use crate::seeding;

    fn const_env(d: usize, n: usize, a: f64) -> Environment {
        Environment::sample(EnvironmentModel::Constant { a }, TorusGrid::new(d, n).unwrap(), 0)
            .unwrap()
    }

    fn random_env(d: usize, n: usize, seed: u64) -> Environment {
        Environment::sample(
            EnvironmentModel::IidTwoPoint {
                a_low: 1.0,
                a_high: 2.0,
                p_high: 0.5,
            },
            TorusGrid::new(d, n).unwrap(),
            seed,
        )
        .unwrap()
    }

    fn random_config(sites: usize, max: u32, seed: u64) -> Configuration {
        Configuration::new(
            (0..sites)
                .map(|i| {
                    (seeding::unit_f64(seeding::mix(seed, &[i as u64])) * (max + 1) as f64) as u32
                })
                .collect(),
        )
    }

    #[test]
    fn empty_configuration_never_moves() {
        let env = const_env(1, 4, 1.0);
        let traj = simulate(&Configuration::empty(8), &env, &RateFunction::Linear, 1.0, 7)
            .unwrap();
        assert!(traj.events.is_empty());
    }

    #[test]
    fn particles_conserved_and_times_increasing() {
        let env = random_env(1, 8, 3);
        let eta0 = random_config(16, 3, 5);
        let total0 = eta0.total();
        let traj = simulate(&eta0, &env, &RateFunction::Linear, 0.01, 11).unwrap();
        traj.validate(env.grid()).unwrap();
        let final_cfg = traj.final_configuration(env.grid());
        assert_eq!(final_cfg.total(), total0);
        assert!(!traj.events.is_empty());
    }

    #[test]
    fn single_walker_event_count() {
        // One particle, g(1) = 1, constant env: events on [0,T] are Poisson
        // with mean 2d c N^2 T.
        let c = 1.5;
        let n = 4;
        let env = const_env(1, n, c);
        let t_end = 0.25;
        let mean_expect = 2.0 * c * (n * n) as f64 * t_end;
        let trials = 400;
        let mut counts = Vec::new();
        for s in 0..trials {
            let mut occ = vec![0u32; 8];
            occ[3] = 1;
            let traj = simulate(
                &Configuration::new(occ),
                &env,
                &RateFunction::Linear,
                t_end,
                1000 + s,
            )
            .unwrap();
            counts.push(traj.events.len() as f64);
        }
        let mean = counts.iter().sum::<f64>() / trials as f64;
        let se = (mean_expect / trials as f64).sqrt();
        assert!(
            (mean - mean_expect).abs() < 3.0 * se,
            "mean {mean} vs {mean_expect} (se {se})"
        );
    }

    #[test]
    fn simulation_is_deterministic() {
        let env = random_env(1, 8, 1);
        let eta0 = random_config(16, 2, 2);
        let a = simulate(&eta0, &env, &RateFunction::Linear, 0.02, 33).unwrap();
        let b = simulate(&eta0, &env, &RateFunction::Linear, 0.02, 33).unwrap();
        assert_eq!(a.events.len(), b.events.len());
        assert!(a
            .events
            .iter()
            .zip(&b.events)
            .all(|(x, y)| x == y));
    }

    #[test]
    fn intensity_rate_bound() {
        // per-event total intensity <= c0 * particles * 2d * eps0^{-1} N^2
        let env = random_env(1, 8, 9);
        let g = RateFunction::Linear;
        let eta = random_config(16, 4, 13);
        let w = eta.total_intensity(&env, &g);
        let bound = g.c0()
            * eta.total() as f64
            * 2.0
            * (env.grid().scale() * env.grid().scale()) as f64
            / env.epsilon0();
        assert!(w <= bound * (1.0 + 1e-12), "{w} > {bound}");
    }

    #[test]
    fn generator_on_conserved_quantity_vanishes() {
        let env = random_env(1, 4, 21);
        let eta = random_config(8, 3, 17);
        let v = generator_apply(
            &|c: &Configuration| c.total() as f64,
            &eta,
            &env,
            &RateFunction::Linear,
        );
        assert!(v.abs() < 1e-9);
    }

    #[test]
    fn generator_on_site_occupancy_expands_exactly() {
        // F = eta(x0): L F = sum_y p(y,x0) g(eta(y)) - g(eta(x0)) sum_y p(x0,y)
        let env = random_env(1, 4, 22);
        let g = RateFunction::Linear;
        let eta = random_config(8, 3, 23);
        let x0 = 2usize;
        let grid = env.grid();
        let got = generator_apply(
            &|c: &Configuration| c.occupancy(x0) as f64,
            &eta,
            &env,
            &g,
        );
        let mut expect = 0.0;
        for dir in Direction::all(1) {
            let y = grid.step(x0, dir);
            expect += env.jump_rate(y, dir.reversed()) * g.g(eta.occupancy(y));
            expect -= env.jump_rate(x0, dir) * g.g(eta.occupancy(x0));
        }
        assert!((got - expect).abs() < 1e-9, "{got} vs {expect}");
    }

    #[test]
    fn generator_matches_bruteforce_on_quadratic() {
        // Independent oracle: exhaustive enumeration of all jump channels for
        // F = eta(0)^2 on a tiny ring.
        let env = random_env(1, 2, 31);
        let g = RateFunction::Linear;
        let eta = Configuration::new(vec![2, 0, 1, 3]);
        let f = |c: &Configuration| (c.occupancy(0) as f64).powi(2);
        let got = generator_apply(&f, &eta, &env, &g);

        let grid = env.grid();
        let mut expect = 0.0;
        for x in 0..4usize {
            if eta.occupancy(x) == 0 {
                continue;
            }
            for dir in Direction::all(1) {
                let y = grid.step(x, dir);
                let mut nu = eta.clone();
                nu.apply_jump(x, y);
                expect += env.jump_rate(x, dir) * g.g(eta.occupancy(x)) * (f(&nu) - f(&eta));
            }
        }
        assert!((got - expect).abs() < 1e-10);
    }

    #[test]
    fn detailed_balance_residual_vanishes() {
        let env = random_env(1, 8, 41);
        let g = RateFunction::Linear;
        for seed in 0..200u64 {
            let eta = random_config(16, 4, 100 + seed);
            let x = (seeding::unit_f64(seeding::mix(seed, &[1])) * 16.0) as usize;
            if eta.occupancy(x) == 0 {
                continue;
            }
            let dir = Direction::decode((seed % 2) as u8);
            let r = reversibility_residual(&eta, x, dir, &env, &g).unwrap();
            assert!(r.abs() < 1e-12, "residual {r}");
        }
    }

    #[test]
    fn poisson_weight_ratio_matches_pmf() {
        // g(k)=k, eta(x)=2, eta(y)=0: weight ratio 2/1 equals the Poisson pmf
        // ratio P(1)P(1) / (P(2)P(0)).
        let t = FugacityTables::new(RateFunction::Linear, 1e-12).unwrap();
        let pmf = t.marginal_pmf(0.7).unwrap();
        let lhs = RateFunction::Linear.g(2) / RateFunction::Linear.g(1);
        let rhs = (pmf[2] * pmf[0]) / (pmf[1] * pmf[1]);
        assert!((lhs - 1.0 / rhs).abs() < 1e-9, "{lhs} vs {}", 1.0 / rhs);
    }

    #[test]
    fn asymmetric_rates_break_detailed_balance() {
        let g = RateFunction::Linear;
        let r = residual_with_rates(2, 1, 1.0, 1.25, &g);
        assert!(r.abs() > 0.1);
    }

    #[test]
    fn empty_site_is_precondition_violation() {
        let env = random_env(1, 4, 5);
        let eta = Configuration::empty(8);
        let r = reversibility_residual(
            &eta,
            0,
            Direction { axis: 0, positive: true },
            &env,
            &RateFunction::Linear,
        );
        assert!(matches!(r, Err(Error::Usage(_))));
    }

    #[test]
    fn coupling_identical_starts_stay_identical() {
        let env = random_env(1, 4, 51);
        let eta = random_config(8, 2, 52);
        let c = coupled_simulate(&eta, &eta, &env, &RateFunction::Linear, 0.05, 53).unwrap();
        assert!(c.events.iter().all(|e| e.both));
        let (lo, hi) = c.final_configurations(env.grid());
        assert_eq!(lo, hi);
    }

    #[test]
    fn coupling_preserves_order_from_empty() {
        let env = random_env(1, 8, 61);
        let lower = Configuration::empty(16);
        let upper = random_config(16, 3, 62);
        let c = coupled_simulate(&lower, &upper, &env, &RateFunction::Linear, 0.02, 63).unwrap();
        let audited = c.audit_ordering(env.grid()).unwrap();
        assert_eq!(audited, c.events.len());
        assert!(!c.events.is_empty());
        // lower stays empty: g(0) = 0 means the lower copy can never move
        let (lo, _) = c.final_configurations(env.grid());
        assert_eq!(lo.total(), 0);
    }

    #[test]
    fn coupling_rejects_bad_inputs() {
        let env = random_env(1, 4, 71);
        let a = Configuration::new(vec![1, 0, 0, 0, 0, 0, 0, 0]);
        let b = Configuration::new(vec![0, 1, 0, 0, 0, 0, 0, 0]);
        assert!(coupled_simulate(&a, &b, &env, &RateFunction::Linear, 0.1, 1).is_err());
        let dec =
            RateFunction::Table {
                values: vec![0.0, 2.0, 1.9, 2.5],
                c0: 2.0,
                non_decreasing: false,
                lipschitz: None,
            };
        assert!(coupled_simulate(&a, &a, &env, &dec, 0.1, 1).is_err());
    }

    #[test]
    fn coupled_upper_mean_dominates() {
        // E[h(eta_t)] <= E[h(eta'_t)] for h = total particles paired by seed.
        let env = random_env(1, 4, 81);
        let t = FugacityTables::new(RateFunction::Linear, 1e-10).unwrap();
        let mut diffs = Vec::new();
        for s in 0..60u64 {
            let lower = sample_equilibrium(&t, 0.5, env.grid(), 9000 + s).unwrap();
            let upper = Configuration::new(
                lower.occupancies().iter().map(|&k| k + (s % 2) as u32).collect(),
            );
            let c = coupled_simulate(&lower, &upper, &env, &RateFunction::Linear, 0.02, s)
                .unwrap();
            c.audit_ordering(env.grid()).unwrap();
            let (lo, hi) = c.final_configurations(env.grid());
            diffs.push(hi.total() as f64 - lo.total() as f64);
        }
        assert!(diffs.iter().all(|&d| d >= 0.0));
    }

    #[test]
    fn local_average_constants_and_oracle() {
        let grid = TorusGrid::new(1, 4).unwrap();
        let eta = Configuration::new(vec![2; 8]);
        assert_eq!(local_average(&eta, grid, 3, 2).unwrap(), 2.0);
        let eta = Configuration::new(vec![0, 1, 2, 3, 4, 5, 6, 7]);
        assert_eq!(local_average(&eta, grid, 5, 0).unwrap(), 5.0);
        // x=0, l=1: mean of sites 7,0,1 with wrap
        let direct = (7.0 + 0.0 + 1.0) / 3.0;
        assert_eq!(local_average(&eta, grid, 0, 1).unwrap(), direct);
        // oversized box
        assert!(local_average(&eta, grid, 0, 4).is_err());
    }

    #[test]
    fn local_average_2d_wraps() {
        let grid = TorusGrid::new(2, 2).unwrap();
        let eta = Configuration::new((0..16).map(|i| i as u32).collect());
        let direct: f64 = {
            // box l=1 around site (0,0): rows {3,0,1} x cols {3,0,1}
            let mut s = 0.0;
            for dr in [-1i64, 0, 1] {
                for dc in [-1i64, 0, 1] {
                    let r = dr.rem_euclid(4) as usize;
                    let c = dc.rem_euclid(4) as usize;
                    s += (r * 4 + c) as f64;
                }
            }
            s / 9.0
        };
        assert_eq!(local_average(&eta, grid, 0, 1).unwrap(), direct);
    }

    #[test]
    fn trajectory_csv_export() {
        let env = random_env(1, 4, 1);
        let eta0 = random_config(8, 2, 2);
        let traj = simulate(&eta0, &env, &RateFunction::Linear, 0.01, 3).unwrap();
        let mut buf = Vec::new();
        let model = serde_json::to_value(env.model()).unwrap();
        traj.write_csv(env.grid(), &model, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("# {"));
        assert!(header.contains("\"horizon\":0.01"));
        assert_eq!(lines.next().unwrap(), "event_index,time,source_site,direction");
        assert_eq!(lines.count(), traj.events.len());
    }

    #[test]
    fn stationarity_of_equilibrium_moments() {
        // Starting from nu_rho, occupancy moments at time T match time 0
        // within Monte Carlo error.
        let env = random_env(1, 4, 91);
        let g = RateFunction::Linear;
        let t = FugacityTables::new(g.clone(), 1e-10).unwrap();
        let rho = 1.0;
        let trials = 300u64;
        let mut m0 = 0.0;
        let mut m1 = 0.0;
        for s in 0..trials {
            let eta0 = sample_equilibrium(&t, rho, env.grid(), 7000 + s).unwrap();
            let traj = simulate(&eta0, &env, &g, 0.02, 300 + s).unwrap();
            let fin = traj.final_configuration(env.grid());
            m0 += eta0.occupancy(0) as f64;
            m1 += fin.occupancy(0) as f64;
        }
        m0 /= trials as f64;
        m1 /= trials as f64;
        let se = (rho / trials as f64).sqrt();
        assert!((m1 - rho).abs() < 3.5 * se, "final mean {m1}");
        assert!((m0 - rho).abs() < 3.5 * se, "initial mean {m0}");
    }
}
