//! Reference methods: average-kernel k-means (A-MKKM), best single view
//! (SB-KKM) and multiple kernel k-means (MKKM).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kernel::{average_kernel, check_views, KernelMatrix};
use crate::linalg::trace_inner;
use crate::lloyd::{lloyd_round, ClusterLabels, LloydOptions, Rounding};
use crate::metrics::{score, Scores};
use crate::partition::{top_k_eigvecs, Partition};
use crate::scalar::Real;

/// Kernel k-means on the uniformly averaged kernel.
pub fn a_mkkm<T: Real>(
    kernels: &[KernelMatrix<T>],
    k: usize,
    opts: &LloydOptions,
) -> Result<(Rounding, Partition<T>)> {
    let h = top_k_eigvecs(&average_kernel(kernels)?, k)?;
    Ok((lloyd_round(&h, k, opts)?, h))
}

#[derive(Debug, Clone)]
pub struct ViewOutcome {
    pub rounding: Rounding,
    pub scores: Scores,
}

#[derive(Debug, Clone)]
pub struct SbKkmResult {
    pub per_view: Vec<ViewOutcome>,
    /// View with the highest ACC; lowest index wins ties.
    pub best: usize,
}

/// Single-view kernel k-means on every view, scored against `truth`; reports
/// the view with the best accuracy. Needs ground truth by construction.
pub fn sb_kkm<T: Real>(
    kernels: &[KernelMatrix<T>],
    k: usize,
    truth: &ClusterLabels,
    opts: &LloydOptions,
) -> Result<SbKkmResult> {
    check_views(kernels)?;
    let per_view = kernels
        .iter()
        .map(|kp| {
            let h = top_k_eigvecs(kp, k)?;
            let rounding = lloyd_round(&h, k, opts)?;
            let scores = score(&rounding.labels, truth)?;
            Ok(ViewOutcome { rounding, scores })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (p, v) in per_view.iter().enumerate() {
        if v.scores.acc > per_view[best].scores.acc {
            best = p;
        }
    }
    Ok(SbKkmResult { per_view, best })
}

/// State of a finished MKKM run. `beta` lies on the probability simplex.
#[derive(Debug, Clone)]
pub struct MkkmState<T: Real> {
    pub beta: Vec<T>,
    pub h: Partition<T>,
    /// `Tr(K_β (I − HHᵀ))` after each full alternation.
    pub objective_trace: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimiser of `Σ_p β_p² a_p` on the simplex: `β_p ∝ 1/a_p`.
pub fn mkkm_weights<T: Real>(residuals: &[T]) -> Result<Vec<T>> {
    if residuals.is_empty() {
        return Err(Error::InvalidInput("no residuals".into()));
    }
    if let Some((view, &r)) = residuals
        .iter()
        .enumerate()
        .find(|(_, &r)| !(r > T::zero()))
    {
        return Err(Error::DegenerateResidual {
            view,
            residual: r.as_f64(),
        });
    }
    let inv: Vec<T> = residuals.iter().map(|&a| T::one() / a).collect();
    let total = inv.iter().fold(T::zero(), |s, &x| s + x);
    Ok(inv.into_iter().map(|x| x / total).collect())
}

fn combined_kernel<T: Real>(kernels: &[KernelMatrix<T>], beta: &[T]) -> KernelMatrix<T> {
    let n = kernels[0].n();
    let mut acc = DMatrix::zeros(n, n);
    for (kp, &b) in kernels.iter().zip(beta) {
        acc += kp.values() * (b * b);
    }
    KernelMatrix::from_trusted(acc, usize::MAX)
}

/// `a_p = Tr(K_p) − Tr(Hᵀ K_p H)`.
fn residuals<T: Real>(kernels: &[KernelMatrix<T>], h: &DMatrix<T>) -> Vec<T> {
    kernels
        .iter()
        .map(|kp| kp.values().trace() - trace_inner(h, &(kp.values() * h)))
        .collect()
}

/// Multiple kernel k-means: alternate the top-k eigenvectors of
/// `K_β = Σ_p β_p² K_p` with the closed-form simplex weights. A view whose
/// residual is not positive is fully explained by `H` and takes all the
/// weight.
pub fn mkkm<T: Real>(
    kernels: &[KernelMatrix<T>],
    k: usize,
    eps0: f64,
    max_iter: usize,
) -> Result<MkkmState<T>> {
    check_views(kernels)?;
    if !(eps0 > 0.0) || max_iter == 0 {
        return Err(Error::InvalidInput(
            "mkkm needs eps0 > 0 and max_iter >= 1".into(),
        ));
    }
    let m = kernels.len();
    let mut beta = vec![T::one() / T::of(m as f64); m];
    let mut trace: Vec<T> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut h = top_k_eigvecs(&combined_kernel(kernels, &beta), k)?;
    while iterations < max_iter {
        iterations += 1;
        if iterations > 1 {
            h = top_k_eigvecs(&combined_kernel(kernels, &beta), k)?;
        }
        let a = residuals(kernels, h.matrix());
        beta = match mkkm_weights(&a) {
            Ok(b) => b,
            Err(Error::DegenerateResidual { view, .. }) => (0..m)
                .map(|p| if p == view { T::one() } else { T::zero() })
                .collect(),
            Err(e) => return Err(e),
        };
        let objective = beta
            .iter()
            .zip(&a)
            .fold(T::zero(), |s, (&b, &ap)| s + b * b * ap);
        if let Some(&previous) = trace.last() {
            let slack = T::of(T::ORDER_TOL) * previous.abs().max(T::one());
            if objective > previous + slack {
                return Err(Error::NonMonotoneObjective {
                    iteration: iterations,
                    previous: previous.as_f64(),
                    current: objective.as_f64(),
                });
            }
            trace.push(objective);
            let rel = if objective == T::zero() {
                0.0
            } else {
                ((previous - objective) / objective.abs()).as_f64()
            };
            if rel <= eps0 {
                converged = true;
                break;
            }
        } else {
            trace.push(objective);
        }
    }
    Ok(MkkmState {
        beta,
        h,
        objective_trace: trace,
        iterations,
        converged,
    })
}
