//! Local alignment: each sample aligns partitions only over its τ nearest
//! neighbours.
//!
//! With the neighbour selector of sample `i` written as a diagonal 0/1 matrix,
//! the sum over samples of the selected rows of `H_p` is `D_p H_p`, where
//! `D_p = diag(counts_p)` holds how often each sample is someone's neighbour
//! (see [`NeighborAggregate`]). The local objective is therefore the global one
//! with `H_p` replaced by `D_p H_p` and `M` by `D_avg M`, and one sweep still
//! costs O(m n k²).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::global::ConsensusUpdate;
use super::{update_beta, AlignmentProblem, FusionResult, RotationSet, SolverOptions, ViewWeights};
use crate::error::{Error, Result};
use crate::kernel::{average_kernel, check_views, KernelMatrix};
use crate::linalg::{procrustes, scale_rows};
use crate::partition::{
    base_partitions, neighbor_aggregate, regularizer_partition, tau_from_fraction,
    NeighborAggregate, NeighborSource, Partition, PartitionKind,
};
use crate::scalar::Real;

/// Hyperparameters of the local solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalFusionConfig {
    pub lambda: f64,
    /// Neighbourhood size as a fraction of `n`, in `(0, 1]`.
    pub tau_fraction: f64,
    pub eps0: f64,
    pub max_iter: usize,
    #[serde(default)]
    pub retain_iterates: bool,
}

impl Default for LocalFusionConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            tau_fraction: 0.5,
            eps0: 1e-4,
            max_iter: 100,
            retain_iterates: false,
        }
    }
}

impl LocalFusionConfig {
    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            eps0: self.eps0,
            max_iter: self.max_iter,
            retain_iterates: self.retain_iterates,
        }
    }
}

/// Neighbour counts for every view and for the average kernel, plus the
/// count-weighted regulariser `M̃ = D_avg M`.
#[derive(Debug, Clone)]
pub struct LocalAggregates<T: Real> {
    pub per_view: Vec<NeighborAggregate>,
    pub average_view: NeighborAggregate,
    pub m_tilde: DMatrix<T>,
}

impl<T: Real> LocalAggregates<T> {
    /// Assembles aggregates from neighbour counts computed elsewhere.
    pub fn from_counts(
        per_view: Vec<NeighborAggregate>,
        average_view: NeighborAggregate,
        regularizer: &Partition<T>,
    ) -> Result<Self> {
        if average_view.counts.len() != regularizer.n() {
            return Err(Error::InvalidShape(
                "average counts do not match the regulariser".into(),
            ));
        }
        let m_tilde = scale_rows(regularizer.matrix(), &average_view.as_weights::<T>());
        Ok(LocalAggregates {
            per_view,
            average_view,
            m_tilde,
        })
    }

    fn weighted_partitions(&self, partitions: &[Partition<T>]) -> Result<Vec<DMatrix<T>>> {
        if partitions.len() != self.per_view.len() {
            return Err(Error::InvalidShape(format!(
                "{} partitions but {} neighbour aggregates",
                partitions.len(),
                self.per_view.len()
            )));
        }
        partitions
            .iter()
            .zip(&self.per_view)
            .map(|(h, agg)| {
                if agg.counts.len() != h.n() {
                    return Err(Error::InvalidShape(
                        "neighbour counts do not match n".into(),
                    ));
                }
                Ok(scale_rows(h.matrix(), &agg.as_weights::<T>()))
            })
            .collect()
    }

    fn problem(&self, partitions: &[Partition<T>], lambda: T) -> Result<AlignmentProblem<T>> {
        AlignmentProblem::new(
            self.weighted_partitions(partitions)?,
            self.m_tilde.clone(),
            lambda,
        )
    }
}

pub fn build_local_aggregates<T: Real>(
    kernels: &[KernelMatrix<T>],
    regularizer: &Partition<T>,
    tau: usize,
) -> Result<LocalAggregates<T>> {
    let n = check_views(kernels)?;
    if regularizer.n() != n {
        return Err(Error::InvalidShape(format!(
            "regulariser has {} rows, kernels have {n}",
            regularizer.n()
        )));
    }
    let per_view = kernels
        .iter()
        .enumerate()
        .map(|(p, kp)| neighbor_aggregate(kp, tau, NeighborSource::View(p)))
        .collect::<Result<Vec<_>>>()?;
    let average_view = neighbor_aggregate(&average_kernel(kernels)?, tau, NeighborSource::Average)?;
    let m_tilde = scale_rows(regularizer.matrix(), &average_view.as_weights::<T>());
    Ok(LocalAggregates {
        per_view,
        average_view,
        m_tilde,
    })
}

/// `Σ_p β_p Tr(Fᵀ D_p H_p W_p) + λ Tr(Fᵀ M̃)`.
pub fn lam_objective<T: Real>(
    f: &DMatrix<T>,
    partitions: &[Partition<T>],
    rotations: &RotationSet<T>,
    beta: &ViewWeights<T>,
    aggregates: &LocalAggregates<T>,
    lambda: T,
) -> Result<T> {
    aggregates
        .problem(partitions, lambda)?
        .objective(f, rotations, beta)
}

/// Consensus update for `U = Σ_p β_p D_p H_p W_p + λ M̃`.
pub fn update_f_local<T: Real>(
    partitions: &[Partition<T>],
    rotations: &RotationSet<T>,
    beta: &ViewWeights<T>,
    aggregates: &LocalAggregates<T>,
    lambda: T,
) -> Result<ConsensusUpdate<T>> {
    let (f, rank_deficient) = aggregates
        .problem(partitions, lambda)?
        .update_f(rotations, beta)?;
    Ok(ConsensusUpdate {
        f: Partition::from_trusted(f, PartitionKind::Consensus),
        rank_deficient,
    })
}

/// Rotation update from the SVD of `L = β_p H_pᵀ D_p F`.
pub fn update_w_local<T: Real>(
    h: &Partition<T>,
    f: &DMatrix<T>,
    beta_p: T,
    counts: &NeighborAggregate,
) -> Result<DMatrix<T>> {
    if h.matrix().shape() != f.shape() || counts.counts.len() != h.n() {
        return Err(Error::InvalidShape(
            "H_p, F and counts must agree on n".into(),
        ));
    }
    let mut l = scale_rows(h.matrix(), &counts.as_weights::<T>()).tr_mul(f);
    if beta_p > T::zero() {
        l *= beta_p;
    }
    Ok(procrustes(&l)?.solution)
}

/// `β = δ₊/‖δ₊‖` with `δ_p = Tr(Fᵀ D_p H_p W_p)`.
pub fn update_beta_local<T: Real>(
    partitions: &[Partition<T>],
    rotations: &RotationSet<T>,
    f: &DMatrix<T>,
    aggregates: &LocalAggregates<T>,
) -> Result<ViewWeights<T>> {
    let problem = aggregates.problem(partitions, T::zero())?;
    problem.check_state(rotations, &ViewWeights::uniform(partitions.len()))?;
    update_beta(&problem.deltas(f, rotations))
}

/// Local solver on precomputed base partitions and neighbour aggregates,
/// started from `F = M`.
pub fn lam_from_aggregates<T: Real>(
    partitions: &[Partition<T>],
    regularizer: &Partition<T>,
    aggregates: &LocalAggregates<T>,
    lambda: T,
    opts: &SolverOptions,
) -> Result<FusionResult<T>> {
    aggregates
        .problem(partitions, lambda)?
        .solve(regularizer.matrix().clone(), opts)
}

/// Everything the local solver needs that does not depend on `λ` or `τ`:
/// base partitions, the regulariser and the kernels for neighbour search.
#[derive(Debug, Clone)]
pub struct LocalProblem<T: Real> {
    kernels: Vec<KernelMatrix<T>>,
    average: KernelMatrix<T>,
    partitions: Vec<Partition<T>>,
    regularizer: Partition<T>,
}

impl<T: Real> LocalProblem<T> {
    pub fn new(kernels: &[KernelMatrix<T>], k: usize) -> Result<Self> {
        check_views(kernels)?;
        Ok(Self {
            kernels: kernels.to_vec(),
            average: average_kernel(kernels)?,
            partitions: base_partitions(kernels, k)?,
            regularizer: regularizer_partition(kernels, k)?,
        })
    }

    pub fn partitions(&self) -> &[Partition<T>] {
        &self.partitions
    }

    pub fn regularizer(&self) -> &Partition<T> {
        &self.regularizer
    }

    pub fn n(&self) -> usize {
        self.regularizer.n()
    }

    pub fn aggregates(&self, tau: usize) -> Result<LocalAggregates<T>> {
        let per_view = self
            .kernels
            .iter()
            .enumerate()
            .map(|(p, kp)| neighbor_aggregate(kp, tau, NeighborSource::View(p)))
            .collect::<Result<Vec<_>>>()?;
        let average_view = neighbor_aggregate(&self.average, tau, NeighborSource::Average)?;
        let m_tilde = scale_rows(self.regularizer.matrix(), &average_view.as_weights::<T>());
        Ok(LocalAggregates {
            per_view,
            average_view,
            m_tilde,
        })
    }

    /// Runs the local solver from `F = M`, `W_p = I`, `β_p = 1/√m`.
    pub fn solve_with(
        &self,
        aggregates: &LocalAggregates<T>,
        lambda: T,
        opts: &SolverOptions,
    ) -> Result<FusionResult<T>> {
        lam_from_aggregates(
            &self.partitions,
            &self.regularizer,
            aggregates,
            lambda,
            opts,
        )
    }

    pub fn solve(&self, config: &LocalFusionConfig) -> Result<FusionResult<T>> {
        let tau = tau_from_fraction(self.n(), config.tau_fraction)?;
        let aggregates = self.aggregates(tau)?;
        self.solve_with(&aggregates, T::of(config.lambda), &config.solver_options())
    }
}

/// Local late-fusion solver end to end: base partitions, neighbour
/// aggregates, then alternating updates until the relative objective change
/// drops to `eps0`. Round the returned consensus with
/// [`lloyd_round`](crate::lloyd::lloyd_round).
pub fn lf_mvc_lam<T: Real>(
    kernels: &[KernelMatrix<T>],
    k: usize,
    config: &LocalFusionConfig,
) -> Result<FusionResult<T>> {
    if !(config.lambda >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "lambda = {} must be >= 0",
            config.lambda
        )));
    }
    LocalProblem::new(kernels, k)?.solve(config)
}
