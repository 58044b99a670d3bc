//! Late fusion multi-view clustering.
//!
//! Each view contributes a kernel; its top-k eigenvectors form a base
//! partition. The solvers find a consensus partition `F` together with a
//! rotation `W_p` and a weight `β_p` per view that maximise the alignment
//! `Tr(Fᵀ Σ_p β_p H_p W_p) + λ Tr(FᵀM)`. The global variant weights every
//! sample equally; the local variant weights sample `i` by how many of the
//! per-view τ-neighbourhoods contain it.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`). The
//! `*64` and `*32` aliases below fix the scalar.
//!
//! ```
//! use latefusion::{compute_kernel, preprocess_kernel, lf_mvc_gam, base_partitions,
//!     regularizer_partition, lloyd_round, FeatureView, KernelSpec, LloydOptions, SolverOptions};
//! use nalgebra::DMatrix;
//!
//! let x = DMatrix::from_fn(12, 2, |i, j| (i / 6) as f64 * 4.0 + (i * 7 + j * 3) as f64 % 5.0 * 0.1);
//! let view = FeatureView::new(x, 0).unwrap();
//! let kernel = preprocess_kernel(&compute_kernel(&view, &KernelSpec::Gaussian { sigma: 1.0 }).unwrap()).unwrap();
//! let kernels = vec![kernel.clone(), kernel];
//! let hs = base_partitions(&kernels, 2).unwrap();
//! let m = regularizer_partition(&kernels, 2).unwrap();
//! let run = lf_mvc_gam(&hs, &m, 1.0, &SolverOptions::default()).unwrap();
//! let labels = lloyd_round(&run.f, 2, &LloydOptions::default()).unwrap().labels;
//! assert_eq!(labels.len(), 12);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0)` also rejects NaN

pub mod analysis;
pub mod baselines;
pub mod error;
pub mod fusion;
pub mod kernel;
pub mod linalg;
pub mod lloyd;
pub mod metrics;
pub mod partition;
pub mod scalar;
pub mod synth;

pub use baselines::{a_mkkm, mkkm, mkkm_weights, sb_kkm, MkkmState, SbKkmResult, ViewOutcome};
pub use error::{Error, Result};
pub use fusion::{
    gam_objective, lam_from_aggregates, lf_mvc_gam, lf_mvc_lam, update_beta, update_f_global,
    update_w_global, FusionResult, Iterate, LocalAggregates, LocalFusionConfig, LocalProblem,
    RotationSet, SolverOptions, ViewWeights,
};
pub use kernel::{
    average_kernel, center_kernel, compute_kernel, normalize_kernel, preprocess_kernel,
    validate_and_symmetrize, FeatureView, KernelMatrix, KernelSpec,
};
pub use lloyd::{lloyd_round, lloyd_rows, ClusterLabels, LloydOptions, Rounding};
pub use metrics::{accuracy, nmi, purity, score, Scores, NMI_CONVENTION};
pub use partition::{
    base_partitions, neighbor_aggregate, regularizer_partition, tau_from_fraction, top_k_eigvecs,
    NeighborAggregate, NeighborSource, Partition, PartitionKind,
};
pub use scalar::Real;

pub type FeatureView64 = FeatureView<f64>;
pub type KernelMatrix64 = KernelMatrix<f64>;
pub type Partition64 = Partition<f64>;
pub type FusionResult64 = FusionResult<f64>;
pub type RotationSet64 = RotationSet<f64>;
pub type ViewWeights64 = ViewWeights<f64>;
pub type LocalProblem64 = LocalProblem<f64>;

pub type FeatureView32 = FeatureView<f32>;
pub type KernelMatrix32 = KernelMatrix<f32>;
pub type Partition32 = Partition<f32>;
pub type FusionResult32 = FusionResult<f32>;
pub type RotationSet32 = RotationSet<f32>;
pub type ViewWeights32 = ViewWeights<f32>;
pub type LocalProblem32 = LocalProblem<f32>;
