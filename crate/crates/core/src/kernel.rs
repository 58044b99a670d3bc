//! Kernel construction, validation and preprocessing.
//!
//! Every solver in the crate consumes [`KernelMatrix`] values that are
//! symmetric and finite. Benchmark kernels are usually centred and then
//! cosine-normalised so that every sample has unit self-similarity; both steps
//! are exposed separately so already-preprocessed kernels can skip them.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Relative asymmetry accepted by [`validate_and_symmetrize`].
pub const ASYMMETRY_TOLERANCE: f64 = 1e-6;
/// Relative asymmetry accepted by [`KernelMatrix::new`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;
/// Smallest diagonal entry [`normalize_kernel`] will divide by.
pub const DIAGONAL_EPS: f64 = 1e-12;

/// One view of the raw data: rows are samples, columns are features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureView<T: Real> {
    data: DMatrix<T>,
    view_id: usize,
}

impl<T: Real> FeatureView<T> {
    pub fn new(data: DMatrix<T>, view_id: usize) -> Result<Self> {
        if data.nrows() < 2 {
            return Err(Error::InvalidInput(format!(
                "view {view_id} has {} samples, need at least 2",
                data.nrows()
            )));
        }
        if data.ncols() < 1 {
            return Err(Error::InvalidInput(format!(
                "view {view_id} has no features"
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "view {view_id} has a non-finite feature at row {}, column {}",
                pos % data.nrows(),
                pos / data.nrows()
            )));
        }
        Ok(Self { data, view_id })
    }

    pub fn data(&self) -> &DMatrix<T> {
        &self.data
    }

    pub fn view_id(&self) -> usize {
        self.view_id
    }

    pub fn n_samples(&self) -> usize {
        self.data.nrows()
    }
}

/// Kernel function and its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `x·y`
    Linear,
    /// `(x·y)^degree`
    Polynomial { degree: u32 },
    /// `exp(-|x-y|² / (2σ²))`
    Gaussian { sigma: f64 },
    /// `exp(-|x-y| / σ)`
    Laplace { sigma: f64 },
    /// `tanh(γ x·y + θ)`
    Sigmoid { gamma: f64, theta: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Polynomial { degree } if degree < 1 => Err(Error::InvalidSpec(format!(
                "polynomial degree {degree} < 1"
            ))),
            KernelSpec::Polynomial { .. } => Ok(()),
            KernelSpec::Gaussian { sigma } | KernelSpec::Laplace { sigma } => {
                if sigma > 0.0 && sigma.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidSpec(format!(
                        "bandwidth sigma = {sigma} must be > 0"
                    )))
                }
            }
            KernelSpec::Sigmoid { gamma, theta } => {
                if !(gamma > 0.0 && gamma.is_finite()) {
                    Err(Error::InvalidSpec(format!(
                        "sigmoid gamma = {gamma} must be > 0"
                    )))
                } else if !(theta < 0.0 && theta.is_finite()) {
                    Err(Error::InvalidSpec(format!(
                        "sigmoid theta = {theta} must be < 0"
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Evaluates the kernel function on two feature rows.
    pub fn eval<T: Real>(&self, x: &[T], y: &[T]) -> T {
        debug_assert_eq!(x.len(), y.len());
        let dot = || x.iter().zip(y).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
        let sq_dist = || {
            x.iter().zip(y).fold(T::zero(), |acc, (&a, &b)| {
                let d = a - b;
                acc + d * d
            })
        };
        match *self {
            KernelSpec::Linear => dot(),
            KernelSpec::Polynomial { degree } => dot().powi(degree as i32),
            KernelSpec::Gaussian { sigma } => {
                let s = T::of(sigma);
                (-sq_dist() / (T::of(2.0) * s * s)).exp()
            }
            KernelSpec::Laplace { sigma } => (-sq_dist().sqrt() / T::of(sigma)).exp(),
            KernelSpec::Sigmoid { gamma, theta } => (T::of(gamma) * dot() + T::of(theta)).tanh(),
        }
    }
}

/// Symmetric, finite n×n similarity matrix for one view.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix<T: Real> {
    values: DMatrix<T>,
    view_id: usize,
}

impl<T: Real> KernelMatrix<T> {
    /// Wraps a matrix that is already symmetric to within [`SYMMETRY_TOLERANCE`].
    pub fn new(values: DMatrix<T>, view_id: usize) -> Result<Self> {
        check_square_finite(&values)?;
        let asym = relative_asymmetry(&values);
        if asym > SYMMETRY_TOLERANCE.max(T::default_epsilon().as_f64() * 16.0) {
            return Err(Error::AsymmetricInput {
                asymmetry: asym,
                tolerance: SYMMETRY_TOLERANCE,
            });
        }
        Ok(Self { values, view_id })
    }

    pub fn values(&self) -> &DMatrix<T> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<T> {
        self.values
    }

    pub fn view_id(&self) -> usize {
        self.view_id
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub(crate) fn from_trusted(values: DMatrix<T>, view_id: usize) -> Self {
        Self { values, view_id }
    }
}

fn check_square_finite<T: Real>(m: &DMatrix<T>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidShape(format!(
            "kernel must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Err(Error::InvalidShape("kernel is empty".into()));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("kernel has non-finite entries".into()));
    }
    Ok(())
}

fn relative_asymmetry<T: Real>(m: &DMatrix<T>) -> f64 {
    let n = m.nrows();
    let scale = m.amax().as_f64();
    if scale == 0.0 {
        return 0.0;
    }
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs().as_f64());
        }
    }
    worst / scale
}

/// Builds the kernel matrix of a view; only the upper triangle is evaluated so
/// the result is exactly symmetric.
pub fn compute_kernel<T: Real>(
    view: &FeatureView<T>,
    spec: &KernelSpec,
) -> Result<KernelMatrix<T>> {
    spec.validate()?;
    let n = view.n_samples();
    let rows: Vec<Vec<T>> = view
        .data
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect();
    let mut values = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = spec.eval(&rows[i], &rows[j]);
            values[(i, j)] = v;
            values[(j, i)] = v;
        }
    }
    if values.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "kernel for view {} overflowed",
            view.view_id
        )));
    }
    Ok(KernelMatrix::from_trusted(values, view.view_id))
}

/// Double centring `C·K·C` with `C = I − (1/n)·11ᵀ`.
pub fn center_kernel<T: Real>(kernel: &KernelMatrix<T>) -> KernelMatrix<T> {
    let k = &kernel.values;
    let n = k.nrows();
    let inv_n = T::one() / T::of(n as f64);
    let row_means: Vec<T> = (0..n).map(|i| k.row(i).sum() * inv_n).collect();
    let grand = row_means.iter().fold(T::zero(), |a, &b| a + b) * inv_n;
    // K is symmetric, so column means equal row means.
    let mut out = DMatrix::from_fn(n, n, |i, j| k[(i, j)] - row_means[i] - row_means[j] + grand);
    symmetrize_in_place(&mut out);
    KernelMatrix::from_trusted(out, kernel.view_id)
}

/// Cosine normalisation `K_ij / sqrt(K_ii K_jj)`.
pub fn normalize_kernel<T: Real>(kernel: &KernelMatrix<T>) -> Result<KernelMatrix<T>> {
    normalize_kernel_with_eps(kernel, DIAGONAL_EPS)
}

pub fn normalize_kernel_with_eps<T: Real>(
    kernel: &KernelMatrix<T>,
    eps: f64,
) -> Result<KernelMatrix<T>> {
    let k = &kernel.values;
    let n = k.nrows();
    let mut inv_sqrt = Vec::with_capacity(n);
    for i in 0..n {
        let d = k[(i, i)];
        if !(d.as_f64() > eps) {
            return Err(Error::DegenerateDiagonal {
                index: i,
                value: d.as_f64(),
                eps,
            });
        }
        inv_sqrt.push(T::one() / d.sqrt());
    }
    let mut out = DMatrix::from_fn(n, n, |i, j| k[(i, j)] * inv_sqrt[i] * inv_sqrt[j]);
    for i in 0..n {
        out[(i, i)] = T::one();
    }
    symmetrize_in_place(&mut out);
    Ok(KernelMatrix::from_trusted(out, kernel.view_id))
}

/// Centre then normalise.
pub fn preprocess_kernel<T: Real>(kernel: &KernelMatrix<T>) -> Result<KernelMatrix<T>> {
    normalize_kernel(&center_kernel(kernel))
}

/// Outcome of [`validate_and_symmetrize`].
#[derive(Debug, Clone)]
pub struct Symmetrized<T: Real> {
    pub kernel: KernelMatrix<T>,
    /// Largest `|a_ij − a_ji|` divided by the largest `|a_ij|`.
    pub max_asymmetry: f64,
}

/// Accepts a raw square matrix, averages it with its transpose and reports
/// how asymmetric it was.
pub fn validate_and_symmetrize<T: Real>(raw: DMatrix<T>, view_id: usize) -> Result<Symmetrized<T>> {
    check_square_finite(&raw)?;
    let asym = relative_asymmetry(&raw);
    if asym > ASYMMETRY_TOLERANCE {
        return Err(Error::AsymmetricInput {
            asymmetry: asym,
            tolerance: ASYMMETRY_TOLERANCE,
        });
    }
    let half = T::of(0.5);
    let n = raw.nrows();
    let values = DMatrix::from_fn(n, n, |i, j| (raw[(i, j)] + raw[(j, i)]) * half);
    Ok(Symmetrized {
        kernel: KernelMatrix::from_trusted(values, view_id),
        max_asymmetry: asym,
    })
}

/// Uniform average `(1/m) Σ_p K_p`.
pub fn average_kernel<T: Real>(kernels: &[KernelMatrix<T>]) -> Result<KernelMatrix<T>> {
    let n = check_views(kernels)?;
    let mut acc = DMatrix::zeros(n, n);
    for k in kernels {
        acc += &k.values;
    }
    acc /= T::of(kernels.len() as f64);
    Ok(KernelMatrix::from_trusted(acc, usize::MAX))
}

/// Checks that a non-empty kernel list shares one sample count and returns it.
pub fn check_views<T: Real>(kernels: &[KernelMatrix<T>]) -> Result<usize> {
    let first = kernels
        .first()
        .ok_or_else(|| Error::InvalidInput("no kernels supplied".into()))?;
    let n = first.n();
    if let Some(bad) = kernels.iter().find(|k| k.n() != n) {
        return Err(Error::InvalidShape(format!(
            "view {} has {} samples, expected {n}",
            bad.view_id,
            bad.n()
        )));
    }
    Ok(n)
}

fn symmetrize_in_place<T: Real>(m: &mut DMatrix<T>) {
    let n = m.nrows();
    let half = T::of(0.5);
    for j in 0..n {
        for i in (j + 1)..n {
            let v = (m[(i, j)] + m[(j, i)]) * half;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn view(rows: &[&[f64]]) -> FeatureView<f64> {
        let d = rows[0].len();
        let data = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        FeatureView::new(data, 0).unwrap()
    }

    fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &a + a.transpose()
    }

    #[test]
    fn linear_kernel_is_dot_product() {
        let v = view(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let k = compute_kernel(&v, &KernelSpec::Linear).unwrap();
        assert_eq!(k.values()[(0, 1)], 11.0);
    }

    #[test]
    fn gaussian_self_similarity_is_one() {
        let v = view(&[&[0.3, -2.0], &[0.3, -2.0]]);
        for sigma in [0.1, 1.0, 7.5] {
            let k = compute_kernel(&v, &KernelSpec::Gaussian { sigma }).unwrap();
            assert_eq!(k.values()[(0, 1)], 1.0);
        }
    }

    #[test]
    fn polynomial_of_orthogonal_vectors_is_zero() {
        let v = view(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let k = compute_kernel(&v, &KernelSpec::Polynomial { degree: 2 }).unwrap();
        assert_eq!(k.values()[(0, 1)], 0.0);
    }

    #[test]
    fn gaussian_hand_value() {
        let v = view(&[&[0.0], &[2.0]]);
        let k = compute_kernel(&v, &KernelSpec::Gaussian { sigma: 2f64.sqrt() }).unwrap();
        assert!((k.values()[(0, 1)] - 0.367_879_441_171_442_3).abs() < 1e-12);
    }

    #[test]
    fn laplace_and_sigmoid_values() {
        let v = view(&[&[0.0, 0.0], &[3.0, 4.0]]);
        let k = compute_kernel(&v, &KernelSpec::Laplace { sigma: 5.0 }).unwrap();
        assert!((k.values()[(0, 1)] - (-1f64).exp()).abs() < 1e-12);
        let v = view(&[&[1.0, 1.0], &[1.0, 2.0]]);
        let k = compute_kernel(
            &v,
            &KernelSpec::Sigmoid {
                gamma: 0.5,
                theta: -1.0,
            },
        )
        .unwrap();
        assert!((k.values()[(0, 1)] - 0.5f64.tanh()).abs() < 1e-12);
    }

    #[test]
    fn every_kind_is_exactly_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = DMatrix::from_fn(9, 4, |_, _| rng.random_range(-1.0..1.0));
        let v = FeatureView::new(data, 2).unwrap();
        let specs = [
            KernelSpec::Linear,
            KernelSpec::Polynomial { degree: 3 },
            KernelSpec::Gaussian { sigma: 0.7 },
            KernelSpec::Laplace { sigma: 1.3 },
            KernelSpec::Sigmoid {
                gamma: 0.2,
                theta: -0.5,
            },
        ];
        for spec in specs {
            let k = compute_kernel(&v, &spec).unwrap();
            assert_eq!(k.values(), &k.values().transpose(), "{spec:?}");
            assert_eq!(k.view_id(), 2);
        }
    }

    #[test]
    fn rejects_invalid_specs() {
        let v = view(&[&[1.0], &[2.0]]);
        let bad = [
            KernelSpec::Polynomial { degree: 0 },
            KernelSpec::Gaussian { sigma: 0.0 },
            KernelSpec::Laplace { sigma: -1.0 },
            KernelSpec::Sigmoid {
                gamma: 0.0,
                theta: -1.0,
            },
            KernelSpec::Sigmoid {
                gamma: 1.0,
                theta: 0.0,
            },
        ];
        for spec in bad {
            assert!(
                matches!(compute_kernel(&v, &spec), Err(Error::InvalidSpec(_))),
                "{spec:?}"
            );
        }
    }

    #[test]
    fn rejects_non_finite_features() {
        let data = dmatrix![1.0, f64::NAN; 0.0, 1.0];
        assert!(matches!(
            FeatureView::new(data, 0),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn centering_annihilates_constants() {
        let k = KernelMatrix::new(DMatrix::from_element(4, 4, 2.5), 0).unwrap();
        let c = center_kernel(&k);
        assert!(c.values().amax() < 1e-14);
    }

    #[test]
    fn centering_matches_explicit_product() {
        let n = 5;
        let raw = random_symmetric(n, 11);
        let k = KernelMatrix::new(raw.clone(), 0).unwrap();
        let c = DMatrix::<f64>::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
        let oracle = &c * &raw * &c;
        let got = center_kernel(&k);
        assert!((got.values() - oracle).amax() < 1e-12);
    }

    #[test]
    fn centering_is_idempotent_and_zeroes_sums() {
        let raw = random_symmetric(7, 5);
        let once = center_kernel(&KernelMatrix::new(raw, 0).unwrap());
        let twice = center_kernel(&once);
        assert!((once.values() - twice.values()).amax() < 1e-8);
        let scale = 1e-8 * 7.0 * once.values().amax();
        for i in 0..7 {
            assert!(once.values().row(i).sum().abs() <= scale);
            assert!(once.values().column(i).sum().abs() <= scale);
        }
    }

    #[test]
    fn normalization_examples() {
        let id = KernelMatrix::new(DMatrix::<f64>::identity(3, 3), 0).unwrap();
        assert_eq!(normalize_kernel(&id).unwrap().values(), id.values());
        let k = KernelMatrix::new(dmatrix![4.0, 2.0; 2.0, 1.0], 0).unwrap();
        let out = normalize_kernel(&k).unwrap();
        assert!((out.values() - DMatrix::from_element(2, 2, 1.0)).amax() < 1e-15);
    }

    #[test]
    fn normalization_rejects_degenerate_diagonal() {
        let k = KernelMatrix::new(dmatrix![1.0, 0.0; 0.0, 0.0], 0).unwrap();
        assert!(matches!(
            normalize_kernel(&k),
            Err(Error::DegenerateDiagonal { index: 1, .. })
        ));
        // duplicate samples collapse to zero self-similarity after centring
        let v = view(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let lin = compute_kernel(&v, &KernelSpec::Linear).unwrap();
        assert!(matches!(
            preprocess_kernel(&lin),
            Err(Error::DegenerateDiagonal { .. })
        ));
    }

    #[test]
    fn symmetrize_examples() {
        let sym = dmatrix![1.0, 2.0; 2.0, 3.0];
        let out = validate_and_symmetrize(sym.clone(), 0).unwrap();
        assert_eq!(out.kernel.values(), &sym);
        assert_eq!(out.max_asymmetry, 0.0);

        let nearly = dmatrix![0.0f64, 1.0; 1.0 + 1e-9, 0.0];
        let out = validate_and_symmetrize(nearly, 0).unwrap();
        assert!((out.kernel.values()[(0, 1)] - (1.0 + 5e-10)).abs() < 1e-15);
        assert!((out.kernel.values()[(1, 0)] - (1.0 + 5e-10)).abs() < 1e-15);

        let bad = dmatrix![0.0, 1.0; 2.0, 0.0];
        assert!(matches!(
            validate_and_symmetrize(bad, 0),
            Err(Error::AsymmetricInput { .. })
        ));
        let rect = DMatrix::<f64>::zeros(2, 3);
        assert!(matches!(
            validate_and_symmetrize(rect, 0),
            Err(Error::InvalidShape(_))
        ));
    }

    #[test]
    fn strict_constructor_rejects_mild_asymmetry() {
        let nearly = dmatrix![0.0, 1.0; 1.0 + 1e-7, 0.0];
        assert!(KernelMatrix::new(nearly, 0).is_err());
    }

    #[test]
    fn preprocessing_works_in_single_precision() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data = DMatrix::<f32>::from_fn(6, 3, |_, _| rng.random_range(-1.0..1.0));
        let v = FeatureView::new(data, 0).unwrap();
        let k =
            preprocess_kernel(&compute_kernel(&v, &KernelSpec::Gaussian { sigma: 1.0 }).unwrap())
                .unwrap();
        for i in 0..6 {
            assert!((k.values()[(i, i)] - 1.0).abs() < 1e-6);
        }
    }
}
