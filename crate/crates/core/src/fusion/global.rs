//! Global alignment: every sample contributes equally to the alignment term.

use nalgebra::DMatrix;

use super::{AlignmentProblem, FusionResult, RotationSet, SolverOptions, ViewWeights};
use crate::error::{Error, Result};
use crate::linalg::procrustes;
use crate::partition::{Partition, PartitionKind};
use crate::scalar::Real;

/// New consensus partition and whether its target matrix was rank deficient.
#[derive(Debug, Clone)]
pub struct ConsensusUpdate<T: Real> {
    pub f: Partition<T>,
    pub rank_deficient: bool,
}

fn problem<T: Real>(
    partitions: &[Partition<T>],
    regularizer: &Partition<T>,
    lambda: T,
) -> Result<AlignmentProblem<T>> {
    AlignmentProblem::new(
        partitions.iter().map(|h| h.matrix().clone()).collect(),
        regularizer.matrix().clone(),
        lambda,
    )
}

/// `Tr(Fᵀ Σ_p β_p H_p W_p) + λ Tr(Fᵀ M)`.
pub fn gam_objective<T: Real>(
    f: &DMatrix<T>,
    partitions: &[Partition<T>],
    rotations: &RotationSet<T>,
    beta: &ViewWeights<T>,
    regularizer: &Partition<T>,
    lambda: T,
) -> Result<T> {
    problem(partitions, regularizer, lambda)?.objective(f, rotations, beta)
}

/// Consensus update `F = S_k V_kᵀ` for `U = Σ_p β_p H_p W_p + λ M`.
pub fn update_f_global<T: Real>(
    partitions: &[Partition<T>],
    rotations: &RotationSet<T>,
    beta: &ViewWeights<T>,
    regularizer: &Partition<T>,
    lambda: T,
) -> Result<ConsensusUpdate<T>> {
    let (f, rank_deficient) =
        problem(partitions, regularizer, lambda)?.update_f(rotations, beta)?;
    Ok(ConsensusUpdate {
        f: Partition::from_trusted(f, PartitionKind::Consensus),
        rank_deficient,
    })
}

/// Rotation update `W_p = S Gᵀ` from the SVD of `L = β_p H_pᵀ F`.
pub fn update_w_global<T: Real>(h: &Partition<T>, f: &DMatrix<T>, beta_p: T) -> Result<DMatrix<T>> {
    if h.matrix().shape() != f.shape() {
        return Err(Error::InvalidShape("H_p and F must share one shape".into()));
    }
    let mut l = h.matrix().tr_mul(f);
    if beta_p > T::zero() {
        l *= beta_p;
    }
    Ok(procrustes(&l)?.solution)
}

/// Maximiser of `Σ β_p δ_p` over the nonnegative part of the unit sphere:
/// `β = δ₊ / ‖δ₊‖₂`. Negative scores only appear through rounding and are
/// clamped to zero.
pub fn update_beta<T: Real>(delta: &[T]) -> Result<ViewWeights<T>> {
    let clamped: Vec<T> = delta.iter().map(|&d| d.max(T::zero())).collect();
    let norm = clamped.iter().fold(T::zero(), |a, &b| a + b * b).sqrt();
    if !(norm > T::zero()) || !norm.is_finite() {
        return Err(Error::DegenerateDelta);
    }
    Ok(ViewWeights {
        beta: clamped.into_iter().map(|d| d / norm).collect(),
    })
}

/// Global late-fusion solver. Starts from `F = M`, `W_p = I`, `β_p = 1/√m`.
pub fn lf_mvc_gam<T: Real>(
    partitions: &[Partition<T>],
    regularizer: &Partition<T>,
    lambda: T,
    opts: &SolverOptions,
) -> Result<FusionResult<T>> {
    problem(partitions, regularizer, lambda)?.solve(regularizer.matrix().clone(), opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{orthonormality_error, trace_inner};
    use crate::synth::random_orthonormal;
    use nalgebra::dmatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_partitions(
        n: usize,
        k: usize,
        m: usize,
        rng: &mut ChaCha8Rng,
    ) -> Vec<Partition<f64>> {
        (0..m)
            .map(|_| Partition::new(random_orthonormal(n, k, rng), PartitionKind::Base).unwrap())
            .collect()
    }

    fn random_rotations(k: usize, m: usize, rng: &mut ChaCha8Rng) -> RotationSet<f64> {
        RotationSet::new((0..m).map(|_| random_orthonormal(k, k, rng)).collect()).unwrap()
    }

    fn random_beta(m: usize, rng: &mut ChaCha8Rng) -> ViewWeights<f64> {
        let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
        update_beta(&raw).unwrap()
    }

    #[test]
    fn objective_of_single_view_is_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = random_partitions(10, 3, 1, &mut rng);
        let obj = gam_objective(
            h[0].matrix(),
            &h,
            &RotationSet::identity(1, 3),
            &ViewWeights::uniform(1),
            &h[0],
            0.0,
        )
        .unwrap();
        assert!((obj - 3.0).abs() < 1e-12);
    }

    #[test]
    fn objective_with_one_active_view_is_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = random_partitions(12, 4, 3, &mut rng);
        let beta = ViewWeights::new(vec![0.0, 1.0, 0.0]).unwrap();
        let obj = gam_objective(
            h[1].matrix(),
            &h,
            &random_rotations(4, 3, &mut rng).clone_with_identity(1),
            &beta,
            &h[0],
            0.0,
        )
        .unwrap();
        assert!((obj - 4.0).abs() < 1e-12);
    }

    impl RotationSet<f64> {
        fn clone_with_identity(&self, p: usize) -> Self {
            let mut r = self.as_slice().to_vec();
            r[p] = DMatrix::identity(r[p].nrows(), r[p].nrows());
            RotationSet::new(r).unwrap()
        }
    }

    #[test]
    fn objective_shape_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = random_partitions(8, 2, 2, &mut rng);
        let bad_f = DMatrix::<f64>::zeros(7, 2);
        let err = gam_objective(
            &bad_f,
            &h,
            &RotationSet::identity(2, 2),
            &ViewWeights::uniform(2),
            &h[0],
            1.0,
        );
        assert!(matches!(err, Err(Error::InvalidShape(_))));
        let err = gam_objective(
            h[0].matrix(),
            &h,
            &RotationSet::identity(3, 2),
            &ViewWeights::uniform(2),
            &h[0],
            1.0,
        );
        assert!(matches!(err, Err(Error::InvalidShape(_))));
    }

    #[test]
    fn random_objective_respects_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let (n, k, m) = (
                rng.random_range(6..20),
                rng.random_range(1..4),
                rng.random_range(1..5),
            );
            let h = random_partitions(n, k, m, &mut rng);
            let reg = Partition::new(
                random_orthonormal(n, k, &mut rng),
                PartitionKind::Regularizer,
            )
            .unwrap();
            let f = random_orthonormal(n, k, &mut rng);
            let lambda = rng.random_range(0.0..4.0);
            let obj = gam_objective(
                &f,
                &h,
                &random_rotations(k, m, &mut rng),
                &random_beta(m, &mut rng),
                &reg,
                lambda,
            )
            .unwrap();
            let bound = k as f64 / 2.0 * ((m * m) as f64 + 1.0) + lambda * k as f64;
            assert!(obj <= bound + 1e-9);
        }
    }

    #[test]
    fn update_f_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = random_partitions(9, 3, 1, &mut rng);
        let up = update_f_global(
            &h,
            &RotationSet::identity(1, 3),
            &ViewWeights::uniform(1),
            &h[0],
            0.0,
        )
        .unwrap();
        assert!((up.f.matrix() - h[0].matrix()).amax() < 1e-12);
        assert!(!up.rank_deficient);
    }

    #[test]
    fn update_f_beats_random_candidates() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let h = random_partitions(10, 3, 3, &mut rng);
        let reg = Partition::new(
            random_orthonormal(10, 3, &mut rng),
            PartitionKind::Regularizer,
        )
        .unwrap();
        let rot = random_rotations(3, 3, &mut rng);
        let beta = random_beta(3, &mut rng);
        let up = update_f_global(&h, &rot, &beta, &reg, 0.7).unwrap();
        let best = gam_objective(up.f.matrix(), &h, &rot, &beta, &reg, 0.7).unwrap();
        assert!(orthonormality_error(up.f.matrix()) < 1e-10);
        for _ in 0..1000 {
            let g = random_orthonormal(10, 3, &mut rng);
            assert!(gam_objective(&g, &h, &rot, &beta, &reg, 0.7).unwrap() <= best + 1e-10);
        }
    }

    #[test]
    fn update_w_examples() {
        let eye = Partition::new(DMatrix::<f64>::identity(3, 3), PartitionKind::Base).unwrap();
        let w = update_w_global(&eye, &DMatrix::identity(3, 3), 0.5).unwrap();
        assert!((w - DMatrix::identity(3, 3)).amax() < 1e-12);
        let h = Partition::new(DMatrix::<f64>::identity(2, 2), PartitionKind::Base).unwrap();
        let w = update_w_global(&h, &dmatrix![2.0, 0.0; 0.0, 3.0], 1.0).unwrap();
        assert!((w - DMatrix::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn update_w_matches_angle_grid_for_k2() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let h = random_partitions(8, 2, 1, &mut rng).remove(0);
            let f = random_orthonormal(8, 2, &mut rng);
            let w = update_w_global(&h, &f, 0.8).unwrap();
            let l = h.matrix().tr_mul(&f) * 0.8;
            let got = trace_inner(&w, &l);
            // rotation: Tr(RᵀL) = cosθ(l00+l11) + sinθ(l10−l01); reflection: cosθ(l00−l11) + sinθ(l10+l01)
            let mut best = f64::NEG_INFINITY;
            let steps = (2.0 * std::f64::consts::PI / 1e-4) as usize;
            for s in 0..steps {
                let t = s as f64 * 1e-4;
                let (c, si) = (t.cos(), t.sin());
                let rot = c * (l[(0, 0)] + l[(1, 1)]) + si * (l[(1, 0)] - l[(0, 1)]);
                let refl = c * (l[(0, 0)] - l[(1, 1)]) + si * (l[(1, 0)] + l[(0, 1)]);
                best = best.max(rot).max(refl);
            }
            assert!((got - best).abs() < 1e-6, "{got} vs {best}");
        }
    }

    #[test]
    fn beta_examples() {
        let b = update_beta(&[3.0f64, 4.0]).unwrap();
        assert!((b.as_slice()[0] - 0.6).abs() < 1e-15);
        assert!((b.as_slice()[1] - 0.8).abs() < 1e-15);
        let b = update_beta(&[2.0f64; 4]).unwrap();
        assert!(b.as_slice().iter().all(|&x| (x - 0.5).abs() < 1e-15));
        let b = update_beta(&[-1e-17, 1.0]).unwrap();
        assert_eq!(b.as_slice(), &[0.0, 1.0]);
        assert!(matches!(
            update_beta(&[0.0, -1.0]),
            Err(Error::DegenerateDelta)
        ));
    }

    #[test]
    fn beta_beats_random_feasible_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let delta: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..3.0)).collect();
        let beta = update_beta(&delta).unwrap();
        let best: f64 = beta.as_slice().iter().zip(&delta).map(|(b, d)| b * d).sum();
        for _ in 0..100_000 {
            let raw: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..1.0)).collect();
            let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
            let val: f64 = raw.iter().zip(&delta).map(|(b, d)| b / norm * d).sum();
            assert!(val <= best + 1e-12);
        }
    }

    #[test]
    fn single_view_converges_in_one_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = random_partitions(15, 3, 1, &mut rng);
        let res = lf_mvc_gam(&h, &h[0], 0.0, &SolverOptions::default()).unwrap();
        assert_eq!(res.iterations, 1);
        assert!(res.converged);
        assert!((res.final_objective() - 3.0).abs() < 1e-10);
        assert!((res.f.matrix() - h[0].matrix()).amax() < 1e-10);
    }

    #[test]
    fn identical_views_keep_uniform_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let h = random_partitions(20, 3, 1, &mut rng).remove(0);
        let views = vec![h.clone(); 4];
        let res = lf_mvc_gam(&views, &h, 0.0, &SolverOptions::default()).unwrap();
        for &b in res.beta.as_slice() {
            assert!((b - 0.5).abs() < 1e-10);
        }
        assert!((res.final_objective() - 2.0 * 3.0).abs() < 1e-9);
    }

    #[test]
    fn trace_is_monotone_and_iterates_are_retained() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = random_partitions(30, 4, 3, &mut rng);
        let reg = Partition::new(
            random_orthonormal(30, 4, &mut rng),
            PartitionKind::Regularizer,
        )
        .unwrap();
        let opts = SolverOptions {
            retain_iterates: true,
            ..SolverOptions::default()
        };
        let res = lf_mvc_gam(&h, &reg, 0.25, &opts).unwrap();
        for w in res.objective_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9);
        }
        assert_eq!(res.iterates.as_ref().unwrap().len(), res.iterations + 1);
    }

    #[test]
    fn solver_rejects_bad_options() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let h = random_partitions(6, 2, 2, &mut rng);
        let bad = SolverOptions {
            max_iter: 0,
            ..SolverOptions::default()
        };
        assert!(lf_mvc_gam(&h, &h[0], 1.0, &bad).is_err());
        let bad = SolverOptions {
            eps0: 0.0,
            ..SolverOptions::default()
        };
        assert!(lf_mvc_gam(&h, &h[0], 1.0, &bad).is_err());
        assert!(lf_mvc_gam(&h, &h[0], -1.0, &SolverOptions::default()).is_err());
    }

    #[test]
    fn runs_in_single_precision() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let views: Vec<Partition<f32>> = (0..3)
            .map(|_| {
                let m = random_orthonormal::<f64>(25, 3, &mut rng).map(|x| x as f32);
                Partition::new(m, PartitionKind::Base).unwrap()
            })
            .collect();
        let res = lf_mvc_gam(&views, &views[0], 0.5f32, &SolverOptions::default()).unwrap();
        assert!(orthonormality_error(res.f.matrix()) < 1e-4);
    }
}
