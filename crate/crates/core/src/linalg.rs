//! Dense linear-algebra helpers: orthogonal Procrustes, ordered symmetric
//! eigendecomposition and the small trace identities the solvers lean on.

use nalgebra::{DMatrix, SymmetricEigen, SVD};

use crate::error::{Error, Result};
use crate::scalar::Real;

const MAX_SWEEPS: usize = 10_000;

/// `Tr(AᵀB)`, the Frobenius inner product.
pub fn trace_inner<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn trace<T: Real>(a: &DMatrix<T>) -> T {
    a.diagonal().sum()
}

/// `‖MᵀM − I‖_max`.
pub fn orthonormality_error<T: Real>(m: &DMatrix<T>) -> f64 {
    let gram = m.tr_mul(m);
    let k = gram.nrows();
    let mut worst = 0.0f64;
    for j in 0..k {
        for i in 0..k {
            let target = if i == j { T::one() } else { T::zero() };
            worst = worst.max((gram[(i, j)] - target).abs().as_f64());
        }
    }
    worst
}

/// Scales row `i` of `m` by `weights[i]`; the action of a diagonal matrix on the left.
pub fn scale_rows<T: Real>(m: &DMatrix<T>, weights: &[T]) -> DMatrix<T> {
    debug_assert_eq!(m.nrows(), weights.len());
    let mut out = m.clone();
    for (mut row, &w) in out.row_iter_mut().zip(weights) {
        row *= w;
    }
    out
}

/// Solution of `max Tr(XᵀU)` over column-orthonormal `X`.
#[derive(Debug, Clone)]
pub struct Procrustes<T: Real> {
    pub solution: DMatrix<T>,
    /// Singular values of `U` (unordered).
    pub singular_values: Vec<T>,
    /// `U` had numerical rank below its column count; the missing directions
    /// were completed with an arbitrary orthonormal basis.
    pub rank_deficient: bool,
}

impl<T: Real> Procrustes<T> {
    /// `Tr(XᵀU)` at the optimum, the sum of the singular values.
    pub fn optimum(&self) -> T {
        self.singular_values.iter().fold(T::zero(), |a, &b| a + b)
    }
}

/// Orthogonal Procrustes via the truncated SVD `U = S_k Σ_k V_kᵀ`, returning
/// `X = S_k V_kᵀ`.
///
/// Tall inputs are first reduced with a Householder QR (`U = QR`), so the SVD
/// runs on the k×k factor and the cost is linear in the row count. The
/// Householder `Q` is orthonormal even when `U` is rank deficient, which
/// completes the basis without a separate null-space step.
pub fn procrustes<T: Real>(u: &DMatrix<T>) -> Result<Procrustes<T>> {
    let (n, k) = u.shape();
    if k == 0 || k > n {
        return Err(Error::InvalidShape(format!(
            "procrustes needs n >= k >= 1, got {n}x{k}"
        )));
    }
    if u.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericalFailure(
            "procrustes input is not finite".into(),
        ));
    }
    let (q, r) = if n > k {
        let qr = u.clone().qr();
        (Some(qr.q()), qr.r())
    } else {
        (None, u.clone())
    };
    let svd = SVD::try_new(r, true, true, T::default_epsilon(), MAX_SWEEPS)
        .ok_or_else(|| Error::NumericalFailure("SVD did not converge".into()))?;
    let s = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let small = s * v_t;
    let solution = match q {
        Some(q) => q * small,
        None => small,
    };
    let singular_values: Vec<T> = svd.singular_values.iter().copied().collect();
    let max_sv = singular_values.iter().fold(T::zero(), |a, &b| a.max(b));
    let min_sv = singular_values.iter().fold(max_sv, |a, &b| a.min(b));
    let threshold = max_sv * T::default_epsilon() * T::of((n.max(k) * 4) as f64);
    let rank_deficient = max_sv == T::zero() || min_sv <= threshold;
    Ok(Procrustes {
        solution,
        singular_values,
        rank_deficient,
    })
}

/// Eigenpairs of a symmetric matrix sorted by descending eigenvalue.
#[derive(Debug, Clone)]
pub struct OrderedEigen<T: Real> {
    pub values: Vec<T>,
    /// Column `j` is the eigenvector of `values[j]`.
    pub vectors: DMatrix<T>,
}

pub fn symmetric_eigen_desc<T: Real>(m: &DMatrix<T>) -> Result<OrderedEigen<T>> {
    let eig = SymmetricEigen::try_new(m.clone(), T::default_epsilon(), MAX_SWEEPS)
        .ok_or_else(|| Error::NumericalFailure("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(m.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    Ok(OrderedEigen { values, vectors })
}

/// Flips each column so its largest-magnitude entry is positive (first such
/// entry on ties).
pub fn canonical_signs<T: Real>(m: &mut DMatrix<T>) {
    for mut col in m.column_iter_mut() {
        let mut best = 0usize;
        let mut best_abs = T::zero();
        for (i, &x) in col.iter().enumerate() {
            if x.abs() > best_abs {
                best_abs = x.abs();
                best = i;
            }
        }
        if col[best] < T::zero() {
            col.neg_mut();
        }
    }
}
