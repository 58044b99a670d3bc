//! Synthetic blob datasets on disk.

use std::path::{Path, PathBuf};

use latefusion::synth::{make_synthetic, SyntheticSpec};
use latefusion::KernelSpec;

use crate::config::{Algorithm, ExperimentConfig};
use crate::error::{HarnessError, Result};
use crate::io::{write_labels, write_matrix_csv};

/// Files written by [`write_synthetic`].
#[derive(Debug, Clone)]
pub struct SyntheticFiles {
    pub feature_files: Vec<PathBuf>,
    pub label_file: PathBuf,
    /// `config.json` running `lf_lam` on the features with Gaussian kernels.
    pub config_file: PathBuf,
}

/// Writes `view_<p>.csv` for every view, `labels.csv` and a starter
/// `config.json` into `out_dir`.
pub fn write_synthetic(spec: &SyntheticSpec, out_dir: &Path) -> Result<SyntheticFiles> {
    let data = make_synthetic::<f64>(spec).map_err(|e| HarnessError::Config(e.to_string()))?;
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let mut feature_files = Vec::new();
    for (p, view) in data.views.iter().enumerate() {
        let path = out_dir.join(format!("view_{p}.csv"));
        write_matrix_csv(&path, view.data())?;
        feature_files.push(path);
    }
    let label_file = out_dir.join("labels.csv");
    write_labels(&label_file, &data.labels)?;

    let config = ExperimentConfig {
        feature_files: (0..data.views.len())
            .map(|p| PathBuf::from(format!("view_{p}.csv")))
            .collect(),
        kernel_files: Vec::new(),
        label_file: PathBuf::from("labels.csv"),
        kernel_specs: vec![KernelSpec::Gaussian {
            sigma: spec.separation,
        }],
        algorithm: Algorithm::LfLam,
        lambda_grid: crate::config::default_lambda_grid(),
        tau_fraction_grid: crate::config::default_tau_fraction_grid(),
        restarts: 50,
        eps0: 1e-4,
        max_iter: 100,
        seed: spec.seed,
        preprocess: true,
        retain_iterates: false,
        row_normalize: true,
        k: Some(spec.k),
        threads: None,
    };
    let config_file = out_dir.join("config.json");
    std::fs::write(&config_file, config.to_json() + "\n")
        .map_err(|e| HarnessError::io(&config_file, e))?;
    Ok(SyntheticFiles {
        feature_files,
        label_file,
        config_file,
    })
}
