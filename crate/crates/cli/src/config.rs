//! Experiment configuration, read from a single JSON document.

use std::path::{Path, PathBuf};

use latefusion::KernelSpec;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Algorithm {
    AMkkm,
    SbKkm,
    Mkkm,
    LfGam,
    LfLam,
}

impl Algorithm {
    pub fn uses_lambda(self) -> bool {
        matches!(self, Algorithm::LfGam | Algorithm::LfLam)
    }

    pub fn uses_tau(self) -> bool {
        self == Algorithm::LfLam
    }
}

pub fn default_lambda_grid() -> Vec<f64> {
    (-5..=5).map(|e| 2f64.powi(e)).collect()
}

pub fn default_tau_fraction_grid() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

fn default_restarts() -> usize {
    50
}

fn default_eps0() -> f64 {
    1e-4
}

fn default_max_iter() -> usize {
    100
}

fn yes() -> bool {
    true
}

/// Paths are resolved against the config file's directory when relative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// One CSV per view, rows are samples.
    #[serde(default)]
    pub feature_files: Vec<PathBuf>,
    /// One precomputed kernel per view, `.csv` or `.bin`.
    #[serde(default)]
    pub kernel_files: Vec<PathBuf>,
    pub label_file: PathBuf,
    /// One spec per feature file, or a single spec shared by all views.
    #[serde(default)]
    pub kernel_specs: Vec<KernelSpec>,
    pub algorithm: Algorithm,
    #[serde(default = "default_lambda_grid")]
    pub lambda_grid: Vec<f64>,
    #[serde(default = "default_tau_fraction_grid")]
    pub tau_fraction_grid: Vec<f64>,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_eps0")]
    pub eps0: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub seed: u64,
    /// Centre and normalise every kernel.
    #[serde(default = "yes")]
    pub preprocess: bool,
    #[serde(default)]
    pub retain_iterates: bool,
    #[serde(default = "yes")]
    pub row_normalize: bool,
    /// Number of clusters; the number of distinct labels when absent.
    #[serde(default)]
    pub k: Option<usize>,
    /// Worker threads; the rayon default when absent. Never affects results,
    /// so it is left out of serialised snapshots.
    #[serde(default, skip_serializing)]
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Reads and validates a config, resolving relative paths against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut config = Self::from_json(&text)?;
        if let Some(dir) = path.parent() {
            config.resolve_paths(dir);
        }
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.feature_files.iter_mut().for_each(fix);
        self.kernel_files.iter_mut().for_each(fix);
        fix(&mut self.label_file);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// Kernel spec for feature view `p`.
    pub fn spec_for(&self, p: usize) -> KernelSpec {
        if self.kernel_specs.len() == 1 {
            self.kernel_specs[0]
        } else {
            self.kernel_specs[p]
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(HarnessError::Config(m));
        match (self.feature_files.is_empty(), self.kernel_files.is_empty()) {
            (true, true) => return err("give feature_files or kernel_files".into()),
            (false, false) => {
                return err("feature_files and kernel_files are mutually exclusive".into())
            }
            (false, true) => {
                let s = self.kernel_specs.len();
                if s != 1 && s != self.feature_files.len() {
                    return err(format!(
                        "{} kernel_specs for {} feature files; give one per view or exactly one",
                        s,
                        self.feature_files.len()
                    ));
                }
                for spec in &self.kernel_specs {
                    spec.validate().or_else(|e| err(e.to_string()))?;
                }
            }
            (true, false) => {
                if !self.kernel_specs.is_empty() {
                    return err("kernel_specs apply to feature_files only".into());
                }
            }
        }
        if self.restarts == 0 {
            return err("restarts must be at least 1".into());
        }
        if !(self.eps0 > 0.0) || self.max_iter == 0 {
            return err("eps0 must be > 0 and max_iter >= 1".into());
        }
        if self.algorithm.uses_lambda() {
            if self.lambda_grid.is_empty() {
                return err("lambda_grid is empty".into());
            }
            if let Some(l) = self
                .lambda_grid
                .iter()
                .find(|l| !(**l >= 0.0 && l.is_finite()))
            {
                return err(format!("lambda {l} must be finite and >= 0"));
            }
        }
        if self.algorithm.uses_tau() {
            if self.tau_fraction_grid.is_empty() {
                return err("tau_fraction_grid is empty".into());
            }
            if let Some(t) = self
                .tau_fraction_grid
                .iter()
                .find(|t| !(**t > 0.0 && **t <= 1.0))
            {
                return err(format!("tau fraction {t} must lie in (0, 1]"));
            }
        }
        if self.k == Some(0) {
            return err("k must be at least 1".into());
        }
        if self.threads == Some(0) {
            return err("threads must be at least 1".into());
        }
        Ok(())
    }
}
