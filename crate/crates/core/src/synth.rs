//! Random fixtures: orthonormal matrices and a multi-view Gaussian blob
//! generator.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::kernel::FeatureView;
use crate::lloyd::ClusterLabels;
use crate::scalar::Real;

fn gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Haar-like random `n×k` matrix with orthonormal columns (`k ≤ n`), from
/// the sign-corrected QR factor of a Gaussian matrix.
pub fn random_orthonormal<T: Real>(
    n: usize,
    k: usize,
    rng: &mut (impl Rng + ?Sized),
) -> DMatrix<T> {
    assert!(k <= n, "random_orthonormal needs k <= n");
    let qr = gaussian(n, k, rng).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q.map(T::of)
}

/// Parameters of the blob generator.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub k: usize,
    /// Informative views.
    pub m: usize,
    /// Append one view whose blobs follow a shuffled copy of the labels.
    pub noise_view: bool,
    pub seed: u64,
    /// Standard deviation of the blob centres around the origin.
    #[serde(default = "default_separation")]
    pub separation: f64,
    /// Within-blob standard deviation.
    #[serde(default = "default_spread")]
    pub spread: f64,
}

fn default_separation() -> f64 {
    2.0
}

fn default_spread() -> f64 {
    1.0
}

impl SyntheticSpec {
    pub fn new(n: usize, k: usize, m: usize, noise_view: bool, seed: u64) -> Self {
        SyntheticSpec {
            n,
            k,
            m,
            noise_view,
            seed,
            separation: default_separation(),
            spread: default_spread(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData<T: Real> {
    pub views: Vec<FeatureView<T>>,
    pub labels: ClusterLabels,
}

/// Balanced labels in random order; each view draws its own centres in a
/// random dimension between 2 and 5, adds isotropic noise and applies a
/// random rotation. The noise view uses the same recipe on shuffled labels.
pub fn make_synthetic<T: Real>(spec: &SyntheticSpec) -> Result<SyntheticData<T>> {
    let SyntheticSpec { n, k, m, .. } = *spec;
    if k == 0 || n < 2 * k {
        return Err(Error::InvalidInput(format!(
            "need n >= 2k, got n={n}, k={k}"
        )));
    }
    if m == 0 {
        return Err(Error::InvalidInput(
            "need at least one informative view".into(),
        ));
    }
    if !(spec.separation > 0.0 && spec.spread > 0.0) {
        return Err(Error::InvalidInput(
            "separation and spread must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    labels.shuffle(&mut rng);

    let mut views = Vec::with_capacity(m + 1);
    for p in 0..m {
        views.push(FeatureView::new(blob_view(&labels, k, spec, &mut rng), p)?);
    }
    if spec.noise_view {
        let mut shuffled = labels.clone();
        shuffled.shuffle(&mut rng);
        views.push(FeatureView::new(
            blob_view(&shuffled, k, spec, &mut rng),
            m,
        )?);
    }
    Ok(SyntheticData {
        views,
        labels: ClusterLabels::new(labels),
    })
}

fn blob_view<T: Real>(
    labels: &[usize],
    k: usize,
    spec: &SyntheticSpec,
    rng: &mut ChaCha8Rng,
) -> DMatrix<T> {
    let d = rng.random_range(2..=5);
    let centres = gaussian(k, d, rng) * spec.separation;
    let rotation = random_orthonormal::<f64>(d, d, rng);
    let mut x = gaussian(labels.len(), d, rng) * spec.spread;
    for (i, &c) in labels.iter().enumerate() {
        let mut row = x.row_mut(i);
        row += centres.row(c);
    }
    (x * rotation).map(T::of)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::orthonormality_error;

    #[test]
    fn orthonormal_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for (n, k) in [(5, 5), (10, 3), (1, 1), (40, 7)] {
            let q = random_orthonormal::<f64>(n, k, &mut rng);
            assert_eq!(q.shape(), (n, k));
            assert!(orthonormality_error(&q) < 1e-12);
        }
        let q = random_orthonormal::<f32>(6, 2, &mut rng);
        assert!(orthonormality_error(&q) < 1e-5);
    }

    #[test]
    fn shapes_and_balance() {
        let data = make_synthetic::<f64>(&SyntheticSpec::new(300, 3, 3, false, 1)).unwrap();
        assert_eq!(data.views.len(), 3);
        for v in &data.views {
            assert_eq!(v.n_samples(), 300);
            assert!((2..=5).contains(&v.data().ncols()));
        }
        let mut counts = [0; 3];
        for &l in data.labels.as_slice() {
            counts[l] += 1;
        }
        assert_eq!(counts, [100, 100, 100]);
        let noisy = make_synthetic::<f64>(&SyntheticSpec::new(300, 3, 3, true, 1)).unwrap();
        assert_eq!(noisy.views.len(), 4);
        assert_eq!(noisy.views[3].view_id(), 3);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = make_synthetic::<f64>(&SyntheticSpec::new(40, 4, 2, true, 7)).unwrap();
        let b = make_synthetic::<f64>(&SyntheticSpec::new(40, 4, 2, true, 7)).unwrap();
        let c = make_synthetic::<f64>(&SyntheticSpec::new(40, 4, 2, true, 8)).unwrap();
        assert_eq!(a.labels, b.labels);
        for (x, y) in a.views.iter().zip(&b.views) {
            assert_eq!(x.data(), y.data());
        }
        assert_ne!(a.views[0].data(), c.views[0].data());
    }

    #[test]
    fn rejects_too_few_samples() {
        assert!(make_synthetic::<f64>(&SyntheticSpec::new(5, 3, 1, false, 0)).is_err());
        assert!(make_synthetic::<f64>(&SyntheticSpec::new(6, 3, 1, false, 0)).is_ok());
    }
}
