use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use latefusion::analysis::generalization_bound;
use latefusion::synth::SyntheticSpec;
use latefusion_cli::bench::{bench_scaling, BenchOptions};
use latefusion_cli::io::{write_kernel_bin, write_matrix_csv};
use latefusion_cli::{
    emit_results, load_dataset, run_on_dataset, write_synthetic, Algorithm, ExperimentConfig,
    HarnessError,
};

#[derive(Parser)]
#[command(
    name = "latefusion",
    version,
    about = "Late fusion multi-view clustering experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelFormat {
    Bin,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Compute kernels from the feature files of a config.
    Kernels {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "bin")]
        format: KernelFormat,
    },
    /// Run an experiment grid and write results.json, cells.csv and traces.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Write a synthetic multi-view blob dataset.
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        noise_view: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2.0)]
        separation: f64,
        #[arg(long, default_value_t = 1.0)]
        spread: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the generalisation bound.
    Bound {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        delta: f64,
    },
    /// Time solver iterations over a range of sample counts.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "500,1000,2000,4000")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        m: usize,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Flags that replace the config field of the same name.
#[derive(clap::Args, Default)]
struct Overrides {
    #[arg(long, value_enum)]
    algorithm: Option<Algorithm>,
    #[arg(long, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    tau_fraction_grid: Option<Vec<f64>>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    eps0: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    preprocess: Option<bool>,
    #[arg(long)]
    retain_iterates: Option<bool>,
    #[arg(long)]
    row_normalize: Option<bool>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
}

impl Overrides {
    fn apply(self, c: &mut ExperimentConfig) {
        if let Some(v) = self.algorithm {
            c.algorithm = v;
        }
        if let Some(v) = self.lambda_grid {
            c.lambda_grid = v;
        }
        if let Some(v) = self.tau_fraction_grid {
            c.tau_fraction_grid = v;
        }
        if let Some(v) = self.restarts {
            c.restarts = v;
        }
        if let Some(v) = self.eps0 {
            c.eps0 = v;
        }
        if let Some(v) = self.max_iter {
            c.max_iter = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.preprocess {
            c.preprocess = v;
        }
        if let Some(v) = self.retain_iterates {
            c.retain_iterates = v;
        }
        if let Some(v) = self.row_normalize {
            c.row_normalize = v;
        }
        if self.k.is_some() {
            c.k = self.k;
        }
        if self.threads.is_some() {
            c.threads = self.threads;
        }
    }
}

fn execute(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Kernels {
            config,
            out,
            format,
        } => {
            let config = ExperimentConfig::load(&config)?;
            if config.feature_files.is_empty() {
                return Err(HarnessError::Config("kernels needs feature_files".into()));
            }
            let data = load_dataset(&config)?;
            std::fs::create_dir_all(&out).map_err(|e| HarnessError::io(&out, e))?;
            for (p, k) in data.kernels.iter().enumerate() {
                let path = match format {
                    KernelFormat::Bin => out.join(format!("kernel_{p}.bin")),
                    KernelFormat::Csv => out.join(format!("kernel_{p}.csv")),
                };
                match format {
                    KernelFormat::Bin => write_kernel_bin(&path, k.values())?,
                    KernelFormat::Csv => write_matrix_csv(&path, k.values())?,
                }
                println!("{}", path.display());
            }
        }
        Command::Run {
            config,
            out,
            overrides,
        } => {
            let mut config = ExperimentConfig::load(&config)?;
            overrides.apply(&mut config);
            config.validate()?;
            let data = load_dataset(&config)?;
            let record = run_on_dataset(&config, &data)?;
            emit_results(&record, &out)?;
            if record.successful_cells() == 0 {
                let first = record
                    .cells
                    .iter()
                    .find_map(|c| c.error.clone())
                    .unwrap_or_default();
                return Err(HarnessError::AllCellsFailed(first));
            }
            if let (Some(a), Some(o)) = (record.best_by_acc, record.best_by_objective) {
                println!(
                    "cells {} failed {} | best by acc: cell {} acc {:.4} nmi {:.4} purity {:.4} | best by objective: cell {} acc {:.4}",
                    record.cells.len(),
                    record.failed_cells,
                    a.cell,
                    a.acc,
                    a.nmi,
                    a.purity,
                    o.cell,
                    o.acc
                );
            }
        }
        Command::Synth {
            n,
            k,
            m,
            noise_view,
            seed,
            separation,
            spread,
            out,
        } => {
            let spec = SyntheticSpec {
                separation,
                spread,
                ..SyntheticSpec::new(n, k, m, noise_view, seed)
            };
            let files = write_synthetic(&spec, &out)?;
            println!("{}", files.config_file.display());
        }
        Command::Bound { n, m, k, delta } => {
            let v = generalization_bound(n, m, k, delta)
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            println!("{v}");
        }
        Command::Bench {
            sizes,
            m,
            k,
            repeats,
            seed,
        } => {
            let opts = BenchOptions {
                m,
                k,
                repeats,
                seed,
                ..Default::default()
            };
            let report = bench_scaling(&sizes, &opts)?;
            println!("n,seconds_per_iteration");
            for p in &report.points {
                println!("{},{:e}", p.n, p.seconds_per_iteration);
            }
            println!(
                "# slope {:e} s/sample, r_squared {:.4}",
                report.slope, report.r_squared
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
