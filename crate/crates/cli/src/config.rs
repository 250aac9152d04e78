//! Run configuration: one TOML file, every default materialized.

use std::path::{Path, PathBuf};

use atomsqueeze::bragg::{BeamSplitterSearch, MirrorSearch, SolverSettings};
use atomsqueeze::optimize::OptimizerSettings;
use atomsqueeze::search::linspace;
use atomsqueeze::spin_io::QuadratureSettings;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Worker threads; 0 lets the pool pick.
    pub workers: usize,
    pub seed: u64,
    pub sweep: SweepConfig,
    pub moments: MomentsConfig,
    pub solver: SolverSettings,
    pub beam_splitter: BeamSplitterSearch,
    pub mirror: MirrorSearch,
    pub quadrature: QuadratureSettings,
    pub optimizer: OptimizerSettings,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub n_atoms: u32,
    /// Momentum widths in ħk, each strictly positive.
    pub dp: Vec<f64>,
    /// Add the single-node `q = 0` series (reported with `dp = 0`).
    pub rest_node: bool,
    /// Beam-splitter peak Rabi frequencies in ω_r.
    pub omega0: Vec<f64>,
    /// Atom numbers of the particle-number sweep.
    pub n_list: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MomentsConfig {
    /// Samples of the `ξ(μ)` curve, including `μ = 0`.
    pub points: usize,
    /// Curve extends to this multiple of the squeezing-optimal twist.
    pub span: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            workers: 0,
            seed: 20_240_607,
            sweep: SweepConfig::default(),
            moments: MomentsConfig::default(),
            solver: SolverSettings::default(),
            beam_splitter: BeamSplitterSearch::default(),
            mirror: MirrorSearch::default(),
            quadrature: QuadratureSettings::default(),
            optimizer: OptimizerSettings::default(),
            output: OutputConfig::default(),
        }
    }
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_atoms: 20_000,
            dp: vec![0.01, 0.05, 0.1],
            rest_node: true,
            omega0: linspace(4.0, 12.0, 17),
            n_list: vec![100, 1_000, 10_000, 20_000],
        }
    }
}

impl Default for MomentsConfig {
    fn default() -> Self {
        Self { points: 201, span: 3.0 }
    }
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {source}")]
    Parse { path: PathBuf, source: Box<toml::de::Error> },
    #[error("{0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        toml::from_str(&text).map_err(|e| ConfigError::Parse { path: path.into(), source: Box::new(e) })
    }

    /// Series widths in sweep order: rest node first, then `dp`.
    pub fn widths(&self) -> Vec<Option<f64>> {
        let rest = self.sweep.rest_node.then_some(None);
        rest.into_iter().chain(self.sweep.dp.iter().map(|&w| Some(w))).collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return invalid(format!(
                "schema_version {} not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        let s = &self.sweep;
        validate_widths(&s.dp)?;
        if s.dp.is_empty() && !s.rest_node {
            return invalid("no momentum-width series: dp is empty and rest_node is false");
        }
        strictly_increasing("sweep.omega0", &s.omega0)?;
        if s.omega0.iter().any(|&r| !(r > 0.0) || !r.is_finite()) {
            return invalid("sweep.omega0 values must be finite and > 0");
        }
        if s.n_atoms == 0 {
            return invalid("sweep.n_atoms must be >= 1");
        }
        let ns: Vec<f64> = s.n_list.iter().map(|&n| n as f64).collect();
        strictly_increasing("sweep.n_list", &ns)?;
        if s.n_list[0] == 0 {
            return invalid("sweep.n_list values must be >= 1");
        }
        if self.moments.points < 2 || !(self.moments.span > 0.0) {
            return invalid("moments.points must be >= 2 and moments.span > 0");
        }
        self.solver.validate().map_err(|e| ConfigError::Invalid(format!("solver: {e}")))?;
        let bs = &self.beam_splitter;
        if !(bs.tau_lo > 0.0) || !(bs.tau_hi > bs.tau_lo) || bs.scan_points < 2 || !(bs.balance_tol > 0.0) {
            return invalid("beam_splitter: need 0 < tau_lo < tau_hi, scan_points >= 2, balance_tol > 0");
        }
        let q = &self.quadrature;
        if q.nodes == 0 || !(q.span_widths > 0.0) || !(q.clip_tol > 0.0) {
            return invalid("quadrature: need nodes >= 1, span_widths > 0, clip_tol > 0");
        }
        let o = &self.optimizer;
        if o.twist_grid_points < 3 || !(o.twist_rel_tol > 0.0) || !(o.rabi_tol > 0.0) {
            return invalid("optimizer: need twist_grid_points >= 3 and tolerances > 0");
        }
        Ok(())
    }
}

pub fn validate_widths(dp: &[f64]) -> Result<(), ConfigError> {
    if dp.contains(&0.0) {
        return invalid("dp = 0 is not a momentum width; use the single-node q=0 mode explicitly (rest_node)");
    }
    if dp.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
        return invalid("dp values must be finite and > 0");
    }
    strictly_increasing("sweep.dp", dp)
}

fn strictly_increasing(name: &str, xs: &[f64]) -> Result<(), ConfigError> {
    if xs.is_empty() {
        return invalid(format!("{name} must not be empty"));
    }
    if xs.windows(2).any(|w| !(w[1] > w[0])) {
        return invalid(format!("{name} must be strictly increasing"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = toml::to_string(&cfg).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file_keeps_other_defaults() {
        let cfg: RunConfig = toml::from_str("[sweep]\nomega0 = [5.0, 6.0]\n").unwrap();
        assert_eq!(cfg.sweep.omega0, vec![5.0, 6.0]);
        assert_eq!(cfg.sweep.n_atoms, 20_000);
        assert_eq!(cfg.solver, SolverSettings::default());
    }

    #[test]
    fn zero_width_is_rejected() {
        let mut cfg = RunConfig::default();
        cfg.sweep.dp = vec![0.0, 0.05];
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("use the single-node q=0 mode explicitly"), "{msg}");
    }

    #[test]
    fn unsorted_grid_is_rejected() {
        let mut cfg = RunConfig::default();
        cfg.sweep.omega0 = vec![6.0, 5.0];
        assert!(cfg.validate().is_err());
        cfg.sweep.omega0 = vec![];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[sweep]\nomega = [5.0]\n").is_err());
    }

    #[test]
    fn rest_node_comes_first() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.widths(), vec![None, Some(0.01), Some(0.05), Some(0.1)]);
    }
}
