//! Experiment reports: row tables, normalized checks, byte-stable emission
//! and the recomputation audit.
//!
//! Every check is of the form `observed <= bound`, and both numbers are also
//! emitted as CSV rows (`check_observed:<name>`, `check_bound:<name>`), so
//! the pass/fail flags in the JSON summary can be recomputed from the CSV
//! alone. Wall time appears only in the human digest; CSV and JSON bytes are
//! a pure function of the config and master seed.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use zrp_core::error::{Error, Result};

use crate::config::ExperimentConfig;

pub const REPORT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// One scalar statistic, traceable to `(scale, trial seed)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatRow {
    pub n: usize,
    pub seed: u64,
    pub statistic: String,
    pub value: f64,
}

/// A normalized acceptance check: passes iff `observed <= bound`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub observed: f64,
    pub bound: f64,
    pub passed: bool,
}

impl CheckResult {
    pub fn new(name: impl Into<String>, observed: f64, bound: f64) -> Self {
        CheckResult {
            name: name.into(),
            observed,
            bound,
            passed: observed <= bound,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub rows: Vec<StatRow>,
    pub checks: Vec<CheckResult>,
    /// Wall-clock seconds; digest only, never in CSV/JSON.
    pub wall_seconds: f64,
    /// Partial results carry the error that stopped the run.
    pub failure: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct JsonSummary {
    version: String,
    config: ExperimentConfig,
    failure: Option<String>,
    passed: bool,
    checks: Vec<CheckResult>,
    row_count: usize,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.failure.is_none() && self.checks.iter().all(|c| c.passed)
    }

    /// CSV table: one row per `(n, seed, statistic)`, then the check rows.
    /// Byte-stable for identical inputs.
    pub fn csv_bytes(&self) -> Vec<u8> {
        let mut s = String::from("n,seed,statistic,value\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{}", r.n, r.seed, r.statistic, r.value);
        }
        for c in &self.checks {
            let _ = writeln!(
                s,
                "0,{},check_observed:{},{}",
                self.config.master_seed, c.name, c.observed
            );
            let _ = writeln!(
                s,
                "0,{},check_bound:{},{}",
                self.config.master_seed, c.name, c.bound
            );
        }
        s.into_bytes()
    }

    pub fn json_bytes(&self) -> Result<Vec<u8>> {
        let summary = JsonSummary {
            version: REPORT_VERSION.to_string(),
            config: self.config.clone(),
            failure: self.failure.clone(),
            passed: self.passed(),
            checks: self.checks.clone(),
            row_count: self.rows.len(),
        };
        let mut bytes = serde_json::to_vec_pretty(&summary)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn digest(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "experiment {} | seed {} | {} rows | wall {:.2}s",
            self.config.kind,
            self.config.master_seed,
            self.rows.len(),
            self.wall_seconds
        );
        if let Some(f) = &self.failure {
            let _ = writeln!(s, "FAILURE: {f}");
        }
        for c in &self.checks {
            let _ = writeln!(
                s,
                "  [{}] {}: observed {:.6e} <= bound {:.6e}",
                if c.passed { "pass" } else { "FAIL" },
                c.name,
                c.observed,
                c.bound
            );
        }
        let _ = writeln!(s, "overall: {}", if self.passed() { "PASS" } else { "FAIL" });
        s
    }

    /// Emit `report.csv`, `summary.json` and `digest.txt` into a directory.
    pub fn write_all(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.csv"), self.csv_bytes())?;
        std::fs::write(dir.join("summary.json"), self.json_bytes()?)?;
        std::fs::write(dir.join("digest.txt"), self.digest())?;
        Ok(())
    }
}

/// Recompute the pass/fail flags from emitted CSV text and compare against
/// the JSON summary; returns `(check name, flags consistent)` per check.
pub fn recompute_from_csv(csv_text: &str, json_text: &str) -> Result<Vec<(String, bool)>> {
    let summary: JsonSummary = serde_json::from_str(json_text)?;
    let mut observed = std::collections::BTreeMap::new();
    let mut bounds = std::collections::BTreeMap::new();
    for line in csv_text.lines().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(4, ',');
        let (_n, _seed) = (parts.next(), parts.next());
        let Some(stat) = parts.next() else { continue };
        let Some(value) = parts.next() else { continue };
        let value: f64 = value
            .parse()
            .map_err(|e| Error::parse(format!("bad value in CSV: {e}")))?;
        if let Some(name) = stat.strip_prefix("check_observed:") {
            observed.insert(name.to_string(), value);
        } else if let Some(name) = stat.strip_prefix("check_bound:") {
            bounds.insert(name.to_string(), value);
        }
    }
    let mut out = Vec::new();
    for c in &summary.checks {
        let recomputed = match (observed.get(&c.name), bounds.get(&c.name)) {
            (Some(&o), Some(&b)) => Some(o <= b),
            _ => None,
        };
        out.push((c.name.clone(), recomputed == Some(c.passed)));
    }
    Ok(out)
}
