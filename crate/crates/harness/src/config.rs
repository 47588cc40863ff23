//! Experiment configuration: one JSON document drives a whole run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use zrp_core::environment::EnvironmentModel;
use zrp_core::error::{Error, Result};
use zrp_core::measures::RateFunction;
use zrp_core::testfn::FourierSeries;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Profile-started runs against the macroscopic diffusion solution.
    Hydro,
    /// Stationary runs: static covariance, martingale identities, quadratic
    /// variation rate and lag covariance against the semigroup.
    Fluctuation,
    /// Decay of the projected local-observable statistic in the scale.
    BoltzmannGibbs,
    /// Effective matrix with a seed-stability table.
    Homogenize,
    /// Compact module invariant audits.
    PropertySuite,
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ExperimentKind::Hydro => "hydro",
            ExperimentKind::Fluctuation => "fluctuation",
            ExperimentKind::BoltzmannGibbs => "boltzmann_gibbs",
            ExperimentKind::Homogenize => "homogenize",
            ExperimentKind::PropertySuite => "property_suite",
        };
        f.write_str(s)
    }
}

fn default_d() -> usize {
    1
}
fn default_n_values() -> Vec<usize> {
    vec![32, 64, 128]
}
fn default_g() -> RateFunction {
    RateFunction::Linear
}
fn default_env() -> EnvironmentModel {
    EnvironmentModel::IidTwoPoint {
        a_low: 1.0,
        a_high: 2.0,
        p_high: 0.5,
    }
}
fn default_rho() -> f64 {
    1.0
}
fn default_lambda() -> f64 {
    1.0
}
fn default_t_end() -> f64 {
    0.02
}
fn default_trials() -> usize {
    200
}
fn default_seed() -> u64 {
    20260808
}
fn default_box_epsilon() -> f64 {
    0.05
}
fn default_pde_cells() -> usize {
    512
}
fn default_env_seeds() -> usize {
    10
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default = "default_d")]
    pub d: usize,
    /// Particle scales, ascending.
    #[serde(default = "default_n_values")]
    pub n_values: Vec<usize>,
    #[serde(default = "default_g")]
    pub g: RateFunction,
    #[serde(default = "default_env")]
    pub env: EnvironmentModel,
    /// Equilibrium density for stationary experiments.
    #[serde(default = "default_rho")]
    pub rho: f64,
    /// Initial profile for hydro experiments; defaults to
    /// `1 + sin(pi u)/2` when absent.
    #[serde(default)]
    pub rho0: Option<FourierSeries>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_seed")]
    pub master_seed: u64,
    /// Box-smoothing width as a fraction of N for hydro comparisons.
    #[serde(default = "default_box_epsilon")]
    pub box_epsilon: f64,
    #[serde(default = "default_pde_cells")]
    pub pde_cells: usize,
    /// Test functions; experiment-specific defaults are used when empty.
    #[serde(default)]
    pub test_functions: Vec<FourierSeries>,
    /// Environment seeds per scale for homogenize runs.
    #[serde(default = "default_env_seeds")]
    pub env_seeds: usize,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn default_for(kind: ExperimentKind) -> Self {
        let mut cfg = ExperimentConfig {
            kind,
            d: default_d(),
            n_values: default_n_values(),
            g: default_g(),
            env: default_env(),
            rho: default_rho(),
            rho0: None,
            lambda: default_lambda(),
            t_end: default_t_end(),
            trials: default_trials(),
            master_seed: default_seed(),
            box_epsilon: default_box_epsilon(),
            pde_cells: default_pde_cells(),
            test_functions: Vec::new(),
            env_seeds: default_env_seeds(),
            out_dir: None,
        };
        match kind {
            ExperimentKind::Hydro => {
                cfg.t_end = 0.05;
            }
            ExperimentKind::Fluctuation => {
                cfg.n_values = vec![128];
                cfg.trials = 500;
            }
            ExperimentKind::BoltzmannGibbs => {
                cfg.n_values = vec![32, 128];
                cfg.trials = 300;
                cfg.g = nonlinear_rate();
            }
            ExperimentKind::Homogenize => {
                cfg.n_values = vec![1 << 8, 1 << 10, 1 << 12];
                cfg.trials = 1;
            }
            ExperimentKind::PropertySuite => {
                cfg.n_values = vec![8];
                cfg.trials = 1;
            }
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d > 3 {
            return Err(Error::config("d must be 1, 2 or 3"));
        }
        if self.n_values.is_empty() {
            return Err(Error::config("n_values must be nonempty"));
        }
        if self.n_values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("n_values must be strictly ascending"));
        }
        self.g.validate()?;
        self.env.validate()?;
        if !(self.rho >= 0.0) {
            return Err(Error::config("rho must be nonnegative"));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::config("lambda must be positive"));
        }
        if !(self.t_end > 0.0) {
            return Err(Error::config("t_end must be positive"));
        }
        if self.trials == 0 {
            return Err(Error::config("trials must be at least 1"));
        }
        if !(self.box_epsilon > 0.0 && self.box_epsilon <= 0.5) {
            return Err(Error::config("box_epsilon must lie in (0, 0.5]"));
        }
        if self.pde_cells < 8 {
            return Err(Error::config("pde_cells must be at least 8"));
        }
        if self.env_seeds == 0 {
            return Err(Error::config("env_seeds must be at least 1"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Default profile for hydro runs: `1 + sin(pi u_1)/2`.
    pub fn profile(&self) -> FourierSeries {
        self.rho0.clone().unwrap_or_else(|| {
            let mut k = vec![0i32; self.d];
            k[0] = 1;
            FourierSeries::constant(self.d, 1.0).with_mode(&k, 0.0, 0.5)
        })
    }

    /// Primary test function: `cos(pi u_1)` unless configured.
    pub fn primary_test_function(&self) -> FourierSeries {
        self.test_functions.first().cloned().unwrap_or_else(|| {
            let mut k = vec![0i32; self.d];
            k[0] = 1;
            FourierSeries::zero(self.d).with_mode(&k, 1.0, 0.0)
        })
    }

    /// Secondary test function: `sin(2 pi u_1)` unless configured.
    pub fn secondary_test_function(&self) -> FourierSeries {
        self.test_functions.get(1).cloned().unwrap_or_else(|| {
            let mut k = vec![0i32; self.d];
            k[0] = 2;
            FourierSeries::zero(self.d).with_mode(&k, 0.0, 1.0)
        })
    }
}

/// A nonlinear non-decreasing tabulated rate with linear growth, the default
/// for projection-decay experiments (the linear rate projects to zero
/// identically, which verifies nothing).
pub fn nonlinear_rate() -> RateFunction {
    RateFunction::tabulate(|n| n as f64 + n as f64 / (n as f64 + 1.0), 64, 1.5)
        .expect("valid rate table")
}
