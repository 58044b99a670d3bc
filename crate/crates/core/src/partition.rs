//! Relaxed partitions from kernel k-means and τ-nearest-neighbour aggregates.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{average_kernel, check_views, KernelMatrix};
use crate::linalg::{canonical_signs, orthonormality_error, symmetric_eigen_desc};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionKind {
    /// Single-view kernel k-means relaxation `H_p`.
    Base,
    /// Fused consensus `F`.
    Consensus,
    /// Average-kernel partition `M` used as a regulariser.
    Regularizer,
}

/// n×k matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition<T: Real> {
    matrix: DMatrix<T>,
    kind: PartitionKind,
}

impl<T: Real> Partition<T> {
    /// Checks `‖XᵀX − I‖_max` against the scalar's check tolerance.
    pub fn new(matrix: DMatrix<T>, kind: PartitionKind) -> Result<Self> {
        let (n, k) = matrix.shape();
        if k == 0 || k > n {
            return Err(Error::InvalidK { k, n });
        }
        let err = orthonormality_error(&matrix);
        if !(err <= T::CHECK_TOL) {
            return Err(Error::InvalidShape(format!(
                "partition columns are not orthonormal (error {err:.3e})"
            )));
        }
        Ok(Self { matrix, kind })
    }

    pub(crate) fn from_trusted(matrix: DMatrix<T>, kind: PartitionKind) -> Self {
        Self { matrix, kind }
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.matrix
    }

    pub fn kind(&self) -> PartitionKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn k(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn with_kind(mut self, kind: PartitionKind) -> Self {
        self.kind = kind;
        self
    }
}

/// Eigenvectors of the `k` largest eigenvalues of `K`, i.e. the spectral
/// relaxation of kernel k-means. Each column's largest-magnitude entry is
/// made positive so results do not depend on the eigensolver's sign choice.
pub fn top_k_eigvecs<T: Real>(kernel: &KernelMatrix<T>, k: usize) -> Result<Partition<T>> {
    let n = kernel.n();
    if k == 0 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    let eig = symmetric_eigen_desc(kernel.values())?;
    let mut h = eig.vectors.columns(0, k).into_owned();
    canonical_signs(&mut h);
    Ok(Partition::from_trusted(h, PartitionKind::Base))
}

/// Per-view kernel k-means partitions `H_p`.
pub fn base_partitions<T: Real>(
    kernels: &[KernelMatrix<T>],
    k: usize,
) -> Result<Vec<Partition<T>>> {
    check_views(kernels)?;
    kernels.iter().map(|kp| top_k_eigvecs(kp, k)).collect()
}

/// Kernel k-means partition `M` of the uniformly averaged kernel.
pub fn regularizer_partition<T: Real>(
    kernels: &[KernelMatrix<T>],
    k: usize,
) -> Result<Partition<T>> {
    let avg = average_kernel(kernels)?;
    Ok(top_k_eigvecs(&avg, k)?.with_kind(PartitionKind::Regularizer))
}

/// Which kernel a [`NeighborAggregate`] was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighborSource {
    View(usize),
    Average,
}

/// Column sums of the τ-nearest-neighbour selectors of one kernel.
///
/// The selector of sample `i` is the diagonal 0/1 matrix that keeps the rows
/// of `i`'s τ nearest neighbours. Summing the selectors over all samples gives
/// `diag(counts)`, where `counts[j]` is the number of samples that have `j`
/// among their neighbours. Every local alignment term only ever sees that sum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborAggregate {
    pub counts: Vec<usize>,
    pub tau: usize,
    pub source: NeighborSource,
}

impl NeighborAggregate {
    pub fn max_count(&self) -> usize {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    pub fn as_weights<T: Real>(&self) -> Vec<T> {
        self.counts.iter().map(|&c| T::of(c as f64)).collect()
    }
}

/// Neighbourhood size for a fraction of `n`, rounded to nearest and clamped to `[1, n]`.
pub fn tau_from_fraction(n: usize, fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "tau fraction {fraction} is outside (0, 1]"
        )));
    }
    Ok(((fraction * n as f64).round() as usize).clamp(1, n))
}

/// Counts, for every sample `j`, how many rows of `K` rank `j` among their
/// `tau` largest entries. Each sample counts as its own neighbour when its
/// self-similarity is maximal; ties go to the smaller index.
pub fn neighbor_aggregate<T: Real>(
    kernel: &KernelMatrix<T>,
    tau: usize,
    source: NeighborSource,
) -> Result<NeighborAggregate> {
    let n = kernel.n();
    if tau == 0 || tau > n {
        return Err(Error::InvalidTau { tau, n });
    }
    let k = kernel.values();
    let mut counts = vec![0usize; n];
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        order.clear();
        order.extend(0..n);
        let by_similarity = |a: &usize, b: &usize| {
            k[(i, *b)]
                .partial_cmp(&k[(i, *a)])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(b))
        };
        if tau < n {
            order.select_nth_unstable_by(tau - 1, by_similarity);
        }
        for &j in &order[..tau] {
            counts[j] += 1;
        }
    }
    Ok(NeighborAggregate {
        counts,
        tau,
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::trace_inner;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_kernel(n: usize, seed: u64) -> KernelMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        KernelMatrix::new(&a + a.transpose(), 0).unwrap()
    }

    fn rayleigh(h: &Partition<f64>, k: &KernelMatrix<f64>) -> f64 {
        trace_inner(h.matrix(), &(k.values() * h.matrix()))
    }

    #[test]
    fn identity_kernel_trace_equals_k() {
        let k = KernelMatrix::new(DMatrix::<f64>::identity(5, 5), 0).unwrap();
        let h = top_k_eigvecs(&k, 2).unwrap();
        assert!((rayleigh(&h, &k) - 2.0).abs() < 1e-12);
        assert!(orthonormality_error(h.matrix()) < 1e-12);
    }

    #[test]
    fn two_block_kernel_trace_is_six() {
        let k = DMatrix::from_fn(6, 6, |i, j| if (i < 3) == (j < 3) { 1.0 } else { 0.0 });
        let k = KernelMatrix::new(k, 0).unwrap();
        let h = top_k_eigvecs(&k, 2).unwrap();
        assert!((rayleigh(&h, &k) - 6.0).abs() < 1e-10);
    }

    #[test]
    fn random_kernel_trace_matches_full_spectrum() {
        let k = random_kernel(8, 21);
        let h = top_k_eigvecs(&k, 3).unwrap();
        // oracle: full spectrum from nalgebra's unsorted eigensolver
        let mut all: Vec<f64> = k
            .values()
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        all.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let top: f64 = all[..3].iter().sum();
        assert!((rayleigh(&h, &k) - top).abs() <= 1e-6 * top.abs().max(1.0));
    }

    #[test]
    fn rejects_k_above_n() {
        let k = random_kernel(3, 1);
        assert!(matches!(
            top_k_eigvecs(&k, 4),
            Err(Error::InvalidK { k: 4, n: 3 })
        ));
        assert!(matches!(top_k_eigvecs(&k, 0), Err(Error::InvalidK { .. })));
    }

    #[test]
    fn base_partitions_are_deterministic_and_orthonormal() {
        let k = random_kernel(10, 4);
        let single = base_partitions(std::slice::from_ref(&k), 3).unwrap();
        assert_eq!(single[0].matrix(), top_k_eigvecs(&k, 3).unwrap().matrix());
        let twins = base_partitions(&[k.clone(), k.clone()], 3).unwrap();
        assert_eq!(twins[0].matrix(), twins[1].matrix());
        let views: Vec<_> = (0..3).map(|s| random_kernel(10, 100 + s)).collect();
        for h in base_partitions(&views, 3).unwrap() {
            assert!(orthonormality_error(h.matrix()) <= 1e-8);
        }
    }

    #[test]
    fn regularizer_of_identical_views_matches_base() {
        let k = random_kernel(9, 8);
        let m1 = regularizer_partition(std::slice::from_ref(&k), 2).unwrap();
        let h = top_k_eigvecs(&k, 2).unwrap();
        assert!((m1.matrix() - h.matrix()).amax() < 1e-10);
        assert_eq!(m1.kind(), PartitionKind::Regularizer);
        let m3 = regularizer_partition(&[k.clone(), k.clone(), k.clone()], 2).unwrap();
        assert!((m3.matrix() - h.matrix()).amax() < 1e-10);
    }

    #[test]
    fn regularizer_trace_matches_average_spectrum() {
        let views: Vec<_> = (0..3).map(|s| random_kernel(7, 40 + s)).collect();
        let m = regularizer_partition(&views, 2).unwrap();
        let avg = average_kernel(&views).unwrap();
        let mut all: Vec<f64> = avg
            .values()
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        all.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!((rayleigh(&m, &avg) - (all[0] + all[1])).abs() < 1e-9);
    }

    #[test]
    fn neighbor_edge_cases() {
        let k = random_kernel(6, 2);
        let all = neighbor_aggregate(&k, 6, NeighborSource::View(0)).unwrap();
        assert_eq!(all.counts, vec![6; 6]);
        let unit = DMatrix::from_fn(5, 5, |i, j| {
            if i == j {
                1.0
            } else {
                0.1 * ((i + j) % 3) as f64
            }
        });
        let unit = KernelMatrix::new(unit, 0).unwrap();
        let own = neighbor_aggregate(&unit, 1, NeighborSource::View(0)).unwrap();
        assert_eq!(own.counts, vec![1; 5]);
        assert!(matches!(
            neighbor_aggregate(&k, 0, NeighborSource::Average),
            Err(Error::InvalidTau { .. })
        ));
        assert!(matches!(
            neighbor_aggregate(&k, 7, NeighborSource::Average),
            Err(Error::InvalidTau { .. })
        ));
    }

    #[test]
    fn neighbor_hand_kernel_matches_row_scan() {
        #[rustfmt::skip]
        let rows = [
            [1.0, 0.9, 0.1, 0.2, 0.0],
            [0.9, 1.0, 0.3, 0.1, 0.2],
            [0.1, 0.3, 1.0, 0.8, 0.7],
            [0.2, 0.1, 0.8, 1.0, 0.8],
            [0.0, 0.2, 0.7, 0.8, 1.0],
        ];
        let k = KernelMatrix::new(DMatrix::from_fn(5, 5, |i, j| rows[i][j]), 0).unwrap();
        let agg = neighbor_aggregate(&k, 2, NeighborSource::View(0)).unwrap();
        // row 0 -> {0,1}; row 1 -> {1,0}; row 2 -> {2,3}; row 3 -> {3,2} (0.8 tie, 2 < 4); row 4 -> {4,3}
        assert_eq!(agg.counts, vec![2, 2, 2, 3, 1]);
        assert_eq!(agg.counts.iter().sum::<usize>(), 10);
    }

    #[test]
    fn tau_fraction_rounding() {
        assert_eq!(tau_from_fraction(300, 0.5).unwrap(), 150);
        assert_eq!(tau_from_fraction(7, 0.05).unwrap(), 1);
        assert_eq!(tau_from_fraction(7, 1.0).unwrap(), 7);
        assert!(tau_from_fraction(7, 0.0).is_err());
        assert!(tau_from_fraction(7, 1.5).is_err());
    }
}
