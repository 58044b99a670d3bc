//! Grid execution.
//!
//! A grid is `solve units × restarts`. A solve unit is whatever the
//! algorithm computes before rounding: one λ for `lf_gam`, one (λ, τ) pair
//! for `lf_lam`, one view for `sb_kkm`, a single unit otherwise. Every unit
//! is solved once; each of its cells then rounds the embedding with a single
//! k-means++ restart seeded from `(seed, cell index)`. Cells are numbered
//! unit-major and results are collected in that order, so the record does not
//! depend on the number of threads.

use std::time::Instant;

use latefusion::analysis::gap_trace;
use latefusion::{
    average_kernel, base_partitions, lf_mvc_gam, lloyd_round, mkkm, regularizer_partition, score,
    tau_from_fraction, top_k_eigvecs, FusionResult, LloydOptions, LocalProblem, Partition, Scores,
    SolverOptions, NMI_CONVENTION,
};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Algorithm, ExperimentConfig};
use crate::error::{HarnessError, Result};
use crate::io::{load_dataset, Dataset};

/// Seed of grid cell `index`: the first word of stream `index` of a ChaCha
/// generator keyed by `seed`.
pub fn cell_seed(seed: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng.next_u64()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub obj1: f64,
    pub obj2: f64,
    pub obj3: f64,
}

/// Per-iteration objective and bound chain of one fusion solve, labelled by
/// the first cell that used it.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveTrace {
    pub cell: usize,
    pub rows: Vec<TraceRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellRecord {
    pub index: usize,
    pub lambda: Option<f64>,
    pub tau_fraction: Option<f64>,
    pub tau: Option<usize>,
    pub view: Option<usize>,
    pub restart: usize,
    pub restart_seed: u64,
    pub acc: Option<f64>,
    pub nmi: Option<f64>,
    pub purity: Option<f64>,
    /// k-means inertia of the rounding.
    pub inertia: Option<f64>,
    /// Final objective of the solver that produced the embedding, if any.
    pub objective_final: Option<f64>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub error: Option<String>,
    /// Solve time shared by the unit plus this cell's rounding. Kept out of
    /// `results.json`, which must be reproducible byte for byte.
    #[serde(skip)]
    pub wall_time_ms: f64,
}

impl CellRecord {
    pub fn scores(&self) -> Option<Scores> {
        Some(Scores {
            acc: self.acc?,
            nmi: self.nmi?,
            purity: self.purity?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Selection {
    pub cell: usize,
    pub acc: f64,
    pub nmi: f64,
    pub purity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub nmi_convention: &'static str,
    pub cells: Vec<CellRecord>,
    pub failed_cells: usize,
    /// Highest ACC; this is what reported tables use and it peeks at labels.
    pub best_by_acc: Option<Selection>,
    /// Lowest k-means inertia; chosen without labels.
    pub best_by_objective: Option<Selection>,
    /// Mean and sample standard deviation over successful cells.
    pub mean: Option<Scores>,
    pub std: Option<Scores>,
    #[serde(skip)]
    pub traces: Vec<SolveTrace>,
}

impl RunRecord {
    pub fn successful_cells(&self) -> usize {
        self.cells.len() - self.failed_cells
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("record serialises")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct UnitKey {
    lambda: Option<f64>,
    tau_fraction: Option<f64>,
    view: Option<usize>,
}

struct Embedding {
    f: Partition<f64>,
    tau: Option<usize>,
    objective: Option<f64>,
    iterations: Option<usize>,
    converged: Option<bool>,
    trace: Option<Vec<TraceRow>>,
    solve_ms: f64,
}

fn units(config: &ExperimentConfig, m: usize) -> Vec<UnitKey> {
    let none = UnitKey {
        lambda: None,
        tau_fraction: None,
        view: None,
    };
    match config.algorithm {
        Algorithm::AMkkm | Algorithm::Mkkm => vec![none],
        Algorithm::SbKkm => (0..m)
            .map(|p| UnitKey {
                view: Some(p),
                ..none
            })
            .collect(),
        Algorithm::LfGam => config
            .lambda_grid
            .iter()
            .map(|&l| UnitKey {
                lambda: Some(l),
                ..none
            })
            .collect(),
        Algorithm::LfLam => config
            .lambda_grid
            .iter()
            .flat_map(|&l| {
                config.tau_fraction_grid.iter().map(move |&t| UnitKey {
                    lambda: Some(l),
                    tau_fraction: Some(t),
                    view: None,
                })
            })
            .collect(),
    }
}

/// Work shared by every unit of a run.
enum Shared {
    None,
    Global {
        partitions: Vec<Partition<f64>>,
        regularizer: Partition<f64>,
    },
    Local(LocalProblem<f64>),
}

fn prepare(config: &ExperimentConfig, data: &Dataset, k: usize) -> latefusion::Result<Shared> {
    Ok(match config.algorithm {
        Algorithm::LfGam => Shared::Global {
            partitions: base_partitions(&data.kernels, k)?,
            regularizer: regularizer_partition(&data.kernels, k)?,
        },
        Algorithm::LfLam => Shared::Local(LocalProblem::new(&data.kernels, k)?),
        _ => Shared::None,
    })
}

fn fusion_trace(
    run: &FusionResult<f64>,
    partitions: &[Partition<f64>],
) -> latefusion::Result<Vec<TraceRow>> {
    let gaps = gap_trace(run, partitions)?;
    Ok(gaps
        .rows
        .iter()
        .zip(&run.objective_trace)
        .enumerate()
        .map(|(iteration, (g, &objective))| TraceRow {
            iteration,
            objective,
            obj1: g.obj1,
            obj2: g.obj2,
            obj3: g.obj3,
        })
        .collect())
}

fn from_fusion(
    run: FusionResult<f64>,
    partitions: &[Partition<f64>],
    tau: Option<usize>,
) -> latefusion::Result<Embedding> {
    let trace = if run.iterates.is_some() {
        Some(fusion_trace(&run, partitions)?)
    } else {
        None
    };
    Ok(Embedding {
        objective: Some(run.final_objective()),
        iterations: Some(run.iterations),
        converged: Some(run.converged),
        f: run.f,
        tau,
        trace,
        solve_ms: 0.0,
    })
}

fn plain(f: Partition<f64>) -> Embedding {
    Embedding {
        f,
        tau: None,
        objective: None,
        iterations: None,
        converged: None,
        trace: None,
        solve_ms: 0.0,
    }
}

fn solve_unit(
    config: &ExperimentConfig,
    data: &Dataset,
    shared: &Shared,
    key: UnitKey,
    k: usize,
) -> latefusion::Result<Embedding> {
    let start = Instant::now();
    let opts = SolverOptions {
        eps0: config.eps0,
        max_iter: config.max_iter,
        retain_iterates: config.retain_iterates,
    };
    let mut out = match (config.algorithm, shared) {
        (Algorithm::AMkkm, _) => plain(top_k_eigvecs(&average_kernel(&data.kernels)?, k)?),
        (Algorithm::SbKkm, _) => plain(top_k_eigvecs(
            &data.kernels[key.view.expect("view unit")],
            k,
        )?),
        (Algorithm::Mkkm, _) => {
            let state = mkkm(&data.kernels, k, config.eps0, config.max_iter)?;
            Embedding {
                objective: state.objective_trace.last().copied(),
                iterations: Some(state.iterations),
                converged: Some(state.converged),
                ..plain(state.h)
            }
        }
        (
            Algorithm::LfGam,
            Shared::Global {
                partitions,
                regularizer,
            },
        ) => {
            let run = lf_mvc_gam(
                partitions,
                regularizer,
                key.lambda.expect("lambda unit"),
                &opts,
            )?;
            from_fusion(run, partitions, None)?
        }
        (Algorithm::LfLam, Shared::Local(problem)) => {
            let tau = tau_from_fraction(problem.n(), key.tau_fraction.expect("tau unit"))?;
            let aggregates = problem.aggregates(tau)?;
            let run = problem.solve_with(&aggregates, key.lambda.expect("lambda unit"), &opts)?;
            from_fusion(run, problem.partitions(), Some(tau))?
        }
        _ => unreachable!("shared state matches the algorithm"),
    };
    out.solve_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(out)
}

fn run_cell(
    config: &ExperimentConfig,
    data: &Dataset,
    key: UnitKey,
    unit: &std::result::Result<Embedding, String>,
    index: usize,
    restart: usize,
    k: usize,
) -> CellRecord {
    let restart_seed = cell_seed(config.seed, index);
    let mut cell = CellRecord {
        index,
        lambda: key.lambda,
        tau_fraction: key.tau_fraction,
        tau: None,
        view: key.view,
        restart,
        restart_seed,
        acc: None,
        nmi: None,
        purity: None,
        inertia: None,
        objective_final: None,
        iterations: None,
        converged: None,
        error: None,
        wall_time_ms: 0.0,
    };
    let emb = match unit {
        Ok(e) => e,
        Err(msg) => {
            cell.error = Some(msg.clone());
            return cell;
        }
    };
    cell.tau = emb.tau;
    cell.objective_final = emb.objective;
    cell.iterations = emb.iterations;
    cell.converged = emb.converged;
    let start = Instant::now();
    let opts = LloydOptions {
        restarts: 1,
        seed: restart_seed,
        row_normalize: config.row_normalize,
    };
    match lloyd_round(&emb.f, k, &opts)
        .and_then(|r| Ok((score(&r.labels, &data.truth)?, r.inertia)))
    {
        Ok((s, inertia)) => {
            cell.acc = Some(s.acc);
            cell.nmi = Some(s.nmi);
            cell.purity = Some(s.purity);
            cell.inertia = Some(inertia);
        }
        Err(e) => cell.error = Some(e.to_string()),
    }
    cell.wall_time_ms = emb.solve_ms + start.elapsed().as_secs_f64() * 1e3;
    cell
}

fn select(
    cells: &[CellRecord],
    better: impl Fn(&CellRecord, &CellRecord) -> bool,
) -> Option<Selection> {
    let mut best: Option<&CellRecord> = None;
    for c in cells.iter().filter(|c| c.error.is_none()) {
        if best.is_none_or(|b| better(c, b)) {
            best = Some(c);
        }
    }
    best.map(|c| Selection {
        cell: c.index,
        acc: c.acc.expect("successful cell"),
        nmi: c.nmi.expect("successful cell"),
        purity: c.purity.expect("successful cell"),
    })
}

fn mean_std(cells: &[CellRecord]) -> (Option<Scores>, Option<Scores>) {
    let scores: Vec<Scores> = cells.iter().filter_map(CellRecord::scores).collect();
    if scores.is_empty() {
        return (None, None);
    }
    let n = scores.len() as f64;
    let stat = |get: fn(&Scores) -> f64| {
        let mean = scores.iter().map(get).sum::<f64>() / n;
        let var = if scores.len() > 1 {
            scores.iter().map(|s| (get(s) - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        (mean, var.sqrt())
    };
    let (acc, nmi, purity) = (stat(|s| s.acc), stat(|s| s.nmi), stat(|s| s.purity));
    (
        Some(Scores {
            acc: acc.0,
            nmi: nmi.0,
            purity: purity.0,
        }),
        Some(Scores {
            acc: acc.1,
            nmi: nmi.1,
            purity: purity.1,
        }),
    )
}

/// Runs the grid on an already loaded dataset.
pub fn run_on_dataset(config: &ExperimentConfig, data: &Dataset) -> Result<RunRecord> {
    config.validate()?;
    let k = config.k.unwrap_or_else(|| data.truth.n_clusters());
    let work = || {
        let keys = units(config, data.m());
        let shared = prepare(config, data, k).map_err(|e| e.to_string());
        let solved: Vec<std::result::Result<Embedding, String>> = keys
            .par_iter()
            .map(|&key| match &shared {
                Ok(s) => solve_unit(config, data, s, key, k).map_err(|e| e.to_string()),
                Err(msg) => Err(msg.clone()),
            })
            .collect();
        let r = config.restarts;
        let cells: Vec<CellRecord> = (0..keys.len() * r)
            .into_par_iter()
            .map(|index| {
                run_cell(
                    config,
                    data,
                    keys[index / r],
                    &solved[index / r],
                    index,
                    index % r,
                    k,
                )
            })
            .collect();
        let traces = solved
            .iter()
            .enumerate()
            .filter_map(|(u, s)| {
                s.as_ref().ok()?.trace.as_ref().map(|rows| SolveTrace {
                    cell: u * r,
                    rows: rows.clone(),
                })
            })
            .collect();
        (cells, traces)
    };
    let (cells, traces) = match config.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let failed_cells = cells.iter().filter(|c| c.error.is_some()).count();
    let best_by_acc = select(&cells, |c, b| c.acc > b.acc);
    let best_by_objective = select(&cells, |c, b| c.inertia < b.inertia);
    let (mean, std) = mean_std(&cells);
    Ok(RunRecord {
        config: config.clone(),
        n: data.n(),
        m: data.m(),
        k,
        nmi_convention: NMI_CONVENTION,
        cells,
        failed_cells,
        best_by_acc,
        best_by_objective,
        mean,
        std,
        traces,
    })
}

/// Loads the dataset named by `config` and runs its grid. Solver failures
/// are recorded per cell; the caller decides what an all-failed grid means.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunRecord> {
    let data = load_dataset(config)?;
    run_on_dataset(config, &data)
}
