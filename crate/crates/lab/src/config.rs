//! Experiment configuration: a TOML file merged with command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::LabError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Simulate,
    CollapseScaling,
    StationaryTail,
    Diffusivity,
    SpiralSweep,
    AuditBounds,
    KernelTable,
    Hm,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::Simulate,
        Experiment::CollapseScaling,
        Experiment::StationaryTail,
        Experiment::Diffusivity,
        Experiment::SpiralSweep,
        Experiment::AuditBounds,
        Experiment::KernelTable,
        Experiment::Hm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::CollapseScaling => "collapse-scaling",
            Experiment::StationaryTail => "stationary-tail",
            Experiment::Diffusivity => "diffusivity",
            Experiment::SpiralSweep => "spiral-sweep",
            Experiment::AuditBounds => "audit-bounds",
            Experiment::KernelTable => "kernel-table",
            Experiment::Hm => "hm",
        }
    }

    /// Parameter keys the experiment reads.
    fn allowed(self) -> &'static [&'static str] {
        match self {
            Experiment::Simulate => &["init", "steps", "thin"],
            Experiment::CollapseScaling => &["d_list", "replicas", "r_stop", "max_steps", "threshold", "delta"],
            Experiment::StationaryTail => &["init", "steps", "burn_in"],
            Experiment::Diffusivity => &["steps", "replicas", "thin", "bootstrap"],
            Experiment::SpiralSweep => &["n_list"],
            Experiment::AuditBounds => &["samples", "radius"],
            Experiment::KernelTable => &["radius"],
            Experiment::Hm => &["init"],
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self, LabError> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| LabError::Schema(format!("unknown experiment '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Experiment parameters. Unset keys fall back to per-experiment defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thin: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_list: Option<Vec<i64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicas: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_stop: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<usize>,
}

impl Params {
    fn set_keys(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        macro_rules! check {
            ($($f:ident),*) => { $( if self.$f.is_some() { out.push(stringify!($f)); } )* };
        }
        check!(
            init, steps, thin, d_list, replicas, r_stop, max_steps, threshold, delta, burn_in, bootstrap, n_list,
            samples, radius
        );
        out
    }

    /// Fields set in `other` replace those here.
    pub fn merge(&mut self, other: Params) {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(
            init, steps, thin, d_list, replicas, r_stop, max_steps, threshold, delta, burn_in, bootstrap, n_list,
            samples, radius
        );
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub format: Format,
    #[serde(default)]
    pub params: Params,
}

fn default_n() -> usize {
    3
}

fn default_output() -> PathBuf {
    PathBuf::from("hatlab-out")
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        ExperimentConfig {
            experiment,
            n: default_n(),
            seed: 0,
            output: default_output(),
            format: Format::Csv,
            params: Params::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, LabError> {
        toml::from_str(text).map_err(|e| LabError::Schema(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, LabError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of SHA-256 over the canonical TOML form, output path left out.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = PathBuf::new();
        let digest = Sha256::digest(c.to_toml().as_bytes());
        hex::encode(&digest[..8])
    }

    /// Checks keys and values against the experiment's schema.
    pub fn validate(&self) -> Result<(), LabError> {
        let allowed = self.experiment.allowed();
        for key in self.params.set_keys() {
            if !allowed.contains(&key) {
                return Err(LabError::Schema(format!(
                    "'{key}' is not a parameter of {}",
                    self.experiment
                )));
            }
        }
        let p = &self.params;
        let bad = |msg: &str| Err(LabError::Schema(format!("{}: {msg}", self.experiment)));
        let needs_pairs = matches!(
            self.experiment,
            Experiment::Simulate | Experiment::CollapseScaling | Experiment::Diffusivity
        );
        if needs_pairs && self.n < 2 {
            return bad("n must be at least 2");
        }
        if self.n == 0 || self.n > 64 {
            return bad("n must lie in 1..=64");
        }
        if p.steps == Some(0) || p.thin == Some(0) || p.replicas == Some(0) || p.max_steps == Some(0) {
            return bad("counts must be positive");
        }
        if let Some(d) = &p.d_list {
            if d.is_empty() || d.iter().any(|&v| v < 1 || v > 1 << 20) {
                return bad("d_list entries must lie in 1..=2^20");
            }
        }
        if let Some(l) = &p.n_list {
            if l.is_empty() || l.iter().any(|&v| v == 0 || v > 400) {
                return bad("n_list entries must lie in 1..=400");
            }
        }
        if p.r_stop.is_some_and(|v| !(v >= 0.0)) || p.threshold.is_some_and(|v| !(v > 0.0)) {
            return bad("r_stop must be nonnegative and threshold positive");
        }
        if p.delta.is_some_and(|v| !(v > 0.0 && v < 1.0)) {
            return bad("delta must lie in (0, 1)");
        }
        if p.burn_in.is_some_and(|v| !(0.0..1.0).contains(&v)) {
            return bad("burn_in must lie in [0, 1)");
        }
        if p.radius
            .is_some_and(|r| !(hat_core::potential::MIN_RADIUS..=hat_core::potential::MAX_RADIUS).contains(&r))
        {
            return bad("radius must lie in 4..=4096");
        }
        if p.bootstrap == Some(0) || p.samples == Some(0) {
            return bad("bootstrap and samples must be positive");
        }
        if self.experiment == Experiment::Diffusivity && p.replicas.unwrap_or(4) < 2 {
            return bad("diffusivity needs at least two replicas for its interval");
        }
        Ok(())
    }
}
