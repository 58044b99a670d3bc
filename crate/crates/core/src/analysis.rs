//! Numerical checks of the inequalities behind the alignment objective:
//! the trace-square inequality, the norm bound on the combined partition,
//! the bound chain that links alignment to the k-means loss, the objective's
//! upper bound, nonnegativity at the Procrustes optimum and the
//! generalisation bound calculator.

use nalgebra::{DMatrix, SVD};

use crate::error::{Error, Result};
use crate::fusion::{FusionResult, RotationSet, ViewWeights};
use crate::linalg::{procrustes, trace, trace_inner};
use crate::partition::Partition;
use crate::scalar::Real;

/// Absolute slack, scaled by magnitude, for every proved inequality.
pub const BOUND_SLACK: f64 = 1e-8;

fn le_with_slack(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs + BOUND_SLACK * rhs.abs().max(lhs.abs()).max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `Tr(P)² ≤ k·Tr(PᵀP)` for square `P`.
pub fn trace_square_check<T: Real>(p: &DMatrix<T>) -> Result<InequalityCheck> {
    if !p.is_square() {
        return Err(Error::InvalidShape(format!(
            "P is {}x{}, not square",
            p.nrows(),
            p.ncols()
        )));
    }
    let k = p.nrows() as f64;
    let lhs = trace(p).as_f64().powi(2);
    let rhs = k * trace_inner(p, p).as_f64();
    Ok(InequalityCheck {
        lhs,
        rhs,
        holds: lhs <= rhs + 1e-9 * rhs.max(1.0),
    })
}

/// `B = Σ_p β_p H_p W_p`.
pub fn combined_partition<T: Real>(
    partitions: &[Partition<T>],
    rotations: &RotationSet<T>,
    beta: &ViewWeights<T>,
) -> Result<DMatrix<T>> {
    let first = partitions
        .first()
        .ok_or_else(|| Error::InvalidInput("no partitions".into()))?;
    if rotations.len() != partitions.len() || beta.len() != partitions.len() {
        return Err(Error::InvalidShape(
            "partitions, rotations and weights differ in count".into(),
        ));
    }
    let (n, k) = first.matrix().shape();
    let mut b = DMatrix::zeros(n, k);
    for ((h, w), &bp) in partitions
        .iter()
        .zip(rotations.as_slice())
        .zip(beta.as_slice())
    {
        if h.matrix().shape() != (n, k) || w.shape() != (k, k) {
            return Err(Error::InvalidShape(
                "partition or rotation has the wrong shape".into(),
            ));
        }
        b.gemm(bp, h.matrix(), w, T::one());
    }
    Ok(b)
}

/// `Tr(BBᵀ) ≤ m²k`.
pub fn combined_norm_check<T: Real>(
    partitions: &[Partition<T>],
    rotations: &RotationSet<T>,
    beta: &ViewWeights<T>,
) -> Result<InequalityCheck> {
    let b = combined_partition(partitions, rotations, beta)?;
    let m = partitions.len() as f64;
    let k = b.ncols() as f64;
    let lhs = trace_inner(&b, &b).as_f64();
    let rhs = m * m * k;
    Ok(InequalityCheck {
        lhs,
        rhs,
        holds: le_with_slack(lhs, rhs),
    })
}

/// One iteration of the bound chain:
/// `obj1 = Tr(BBᵀ) − Tr(FᵀBBᵀF)` (relaxed k-means loss on `B`),
/// `obj2 = Tr(BBᵀ) − Tr²(FᵀB)/k`,
/// `obj3 = m²k − Tr²(FᵀB)/k`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct GapRow {
    pub obj1: f64,
    pub obj2: f64,
    pub obj3: f64,
}

impl GapRow {
    pub fn compute<T: Real>(f: &DMatrix<T>, b: &DMatrix<T>, m: usize) -> Self {
        let k = b.ncols() as f64;
        let bb = trace_inner(b, b).as_f64();
        let ftb = f.tr_mul(b);
        let projected = trace_inner(&ftb, &ftb).as_f64();
        let align = trace(&ftb).as_f64();
        let mm = m as f64;
        GapRow {
            obj1: bb - projected,
            obj2: bb - align * align / k,
            obj3: mm * mm * k - align * align / k,
        }
    }

    pub fn chain_holds(&self) -> bool {
        le_with_slack(self.obj1, self.obj2) && le_with_slack(self.obj2, self.obj3)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapTrace {
    pub rows: Vec<GapRow>,
}

impl GapTrace {
    pub fn chain_holds(&self) -> bool {
        self.rows.iter().all(GapRow::chain_holds)
    }

    /// `obj2 − obj1` per iteration.
    pub fn gaps(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.obj2 - r.obj1).collect()
    }
}

/// Bound chain for every retained iterate of a solver run, with
/// `B = Σ_p β_p H_p W_p` built from the unweighted base partitions.
pub fn gap_trace<T: Real>(run: &FusionResult<T>, partitions: &[Partition<T>]) -> Result<GapTrace> {
    let iterates = run.iterates.as_ref().ok_or(Error::MissingTrace)?;
    let rows = iterates
        .iter()
        .map(|it| {
            let b = combined_partition(partitions, &it.rotations, &it.beta)?;
            Ok(GapRow::compute(&it.f, &b, partitions.len()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GapTrace { rows })
}

/// Upper bound `(k/2)(m²+1) + λk` on the global alignment objective.
pub fn objective_upper_bound(m: usize, k: usize, lambda: f64) -> f64 {
    let (m, k) = (m as f64, k as f64);
    k / 2.0 * (m * m + 1.0) + lambda * k
}

/// Count-weighted version of [`objective_upper_bound`] for the local
/// objective: the alignment part scales by the largest per-view neighbour
/// count and the regulariser by the largest average-kernel count.
pub fn local_objective_upper_bound(
    m: usize,
    k: usize,
    lambda: f64,
    max_view_count: usize,
    max_average_count: usize,
) -> f64 {
    let (mf, kf) = (m as f64, k as f64);
    kf / 2.0 * (mf * mf + 1.0) * max_view_count as f64 + lambda * kf * max_average_count as f64
}

/// `sqrt(π/2)·k/sqrt(n) + 8m·sqrt(ln(1/δ)/(2n))`.
pub fn generalization_bound(n: usize, m: usize, k: usize, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidDelta(delta));
    }
    if n == 0 {
        return Err(Error::InvalidInput("n must be at least 1".into()));
    }
    let n = n as f64;
    let complexity = (std::f64::consts::PI / 2.0).sqrt() * k as f64 / n.sqrt();
    let confidence = 8.0 * m as f64 * ((1.0 / delta).ln() / (2.0 * n)).sqrt();
    Ok(complexity + confidence)
}

/// Diagnostics at the Procrustes optimum of `max Tr(FᵀU)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcrustesCheck {
    pub singular_values: Vec<f64>,
    /// `Tr(QΣ)` with `Q = VᵀFᵀS`.
    pub trace_q_sigma: f64,
    pub sum_singular_values: f64,
    /// `Tr(FᵀU)` for the solver's `F`.
    pub solver_value: f64,
    pub holds: bool,
}

/// Recomputes the thin SVD `U = SΣVᵀ` directly, forms `F = SVᵀ`, and checks
/// that `Tr(QΣ) = Σσ_i`, that every `σ_i ≥ −1e-10`, and that the solver's
/// QR-based Procrustes solution reaches the same value.
pub fn procrustes_singular_check<T: Real>(u: &DMatrix<T>) -> Result<ProcrustesCheck> {
    let (n, k) = u.shape();
    if k == 0 || k > n {
        return Err(Error::InvalidShape(format!("U is {n}x{k}")));
    }
    let svd = SVD::try_new(u.clone(), true, true, T::default_epsilon(), 10_000)
        .ok_or_else(|| Error::NumericalFailure("SVD did not converge".into()))?;
    let s = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let f = s * v_t;
    let q = v_t * f.transpose() * s;
    let sigma = DMatrix::from_diagonal(&svd.singular_values);
    let trace_q_sigma = trace(&(q * sigma)).as_f64();
    let singular_values: Vec<f64> = svd.singular_values.iter().map(|x| x.as_f64()).collect();
    let sum: f64 = singular_values.iter().sum();
    let solver_value = trace_inner(&procrustes(u)?.solution, u).as_f64();
    let tol = 1e-8 * sum.abs().max(1.0);
    let holds = singular_values.iter().all(|&s| s >= -1e-10)
        && (trace_q_sigma - sum).abs() <= tol
        && (solver_value - sum).abs() <= tol;
    Ok(ProcrustesCheck {
        singular_values,
        trace_q_sigma,
        sum_singular_values: sum,
        solver_value,
        holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::{lf_mvc_gam, update_beta, SolverOptions};
    use crate::partition::PartitionKind;
    use crate::synth::random_orthonormal;
    use nalgebra::dmatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn trace_square_examples() {
        let c = trace_square_check(&DMatrix::<f64>::identity(4, 4)).unwrap();
        assert_eq!((c.lhs, c.rhs), (16.0, 16.0));
        assert!(c.holds);
        let c = trace_square_check(&dmatrix![1.0, 0.0; 0.0, 0.0f64]).unwrap();
        assert_eq!((c.lhs, c.rhs), (1.0, 2.0));
        assert!(trace_square_check(&DMatrix::<f64>::zeros(2, 3)).is_err());
    }

    #[test]
    fn trace_square_equality_for_scaled_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // equality needs Tr(P) = Σσ, i.e. a positive multiple of the identity
        let p = DMatrix::<f64>::identity(5, 5) * 2.5;
        let c = trace_square_check(&p).unwrap();
        assert!((c.lhs - c.rhs).abs() < 1e-9);
        let rot = random_orthonormal::<f64>(5, 5, &mut rng) * 2.5;
        let c = trace_square_check(&rot).unwrap();
        assert!(c.holds && c.lhs <= c.rhs);
    }

    #[test]
    fn combined_norm_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = Partition::new(
            random_orthonormal::<f64>(10, 3, &mut rng),
            PartitionKind::Base,
        )
        .unwrap();
        let c = combined_norm_check(
            std::slice::from_ref(&h),
            &RotationSet::identity(1, 3),
            &ViewWeights::uniform(1),
        )
        .unwrap();
        assert!((c.lhs - 3.0).abs() < 1e-12);
        let views = vec![h.clone(); 4];
        let c = combined_norm_check(
            &views,
            &RotationSet::identity(4, 3),
            &ViewWeights::uniform(4),
        )
        .unwrap();
        // (Σβ)² k = (4/2)² · 3 = 12 = m·k
        assert!((c.lhs - 12.0).abs() < 1e-10);
        assert!(c.holds);
        assert_eq!(c.rhs, 48.0);
    }

    #[test]
    fn gap_trace_single_view_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = Partition::new(
            random_orthonormal::<f64>(9, 2, &mut rng),
            PartitionKind::Base,
        )
        .unwrap();
        let row = GapRow::compute(h.matrix(), h.matrix(), 1);
        assert!(row.obj1.abs() < 1e-12 && row.obj2.abs() < 1e-12 && row.obj3.abs() < 1e-12);
    }

    #[test]
    fn gap_trace_requires_iterates() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h: Vec<_> = (0..2)
            .map(|_| {
                Partition::new(random_orthonormal(8, 2, &mut rng), PartitionKind::Base).unwrap()
            })
            .collect();
        let run = lf_mvc_gam(&h, &h[0], 0.5, &SolverOptions::default()).unwrap();
        assert!(matches!(gap_trace(&run, &h), Err(Error::MissingTrace)));
        let run = lf_mvc_gam(
            &h,
            &h[0],
            0.5,
            &SolverOptions {
                retain_iterates: true,
                ..Default::default()
            },
        )
        .unwrap();
        let g = gap_trace(&run, &h).unwrap();
        assert_eq!(g.rows.len(), run.iterations + 1);
        assert!(g.chain_holds());
    }

    #[test]
    fn gap_stays_bounded_on_blobs() {
        use crate::kernel::{compute_kernel, preprocess_kernel, KernelSpec};
        use crate::partition::{base_partitions, regularizer_partition};
        use crate::synth::{make_synthetic, SyntheticSpec};
        let data = make_synthetic::<f64>(&SyntheticSpec::new(120, 3, 3, true, 2)).unwrap();
        let kernels: Vec<_> = data
            .views
            .iter()
            .map(|v| {
                preprocess_kernel(&compute_kernel(v, &KernelSpec::Gaussian { sigma: 2.0 }).unwrap())
                    .unwrap()
            })
            .collect();
        let hs = base_partitions(&kernels, 3).unwrap();
        let m = regularizer_partition(&kernels, 3).unwrap();
        let opts = SolverOptions {
            retain_iterates: true,
            ..Default::default()
        };
        let run = lf_mvc_gam(&hs, &m, 1.0, &opts).unwrap();
        let g = gap_trace(&run, &hs).unwrap();
        assert!(g.chain_holds());
        let gaps = g.gaps();
        assert!(gaps.iter().all(|&x| x >= -1e-10));
        assert!(gaps.last().unwrap() <= &(gaps[0] + 1e-10), "{gaps:?}");
    }

    #[test]
    fn upper_bound_examples() {
        assert_eq!(objective_upper_bound(1, 2, 0.0), 2.0);
        assert_eq!(objective_upper_bound(3, 5, 1.0), 30.0);
    }

    #[test]
    fn generalization_bound_values() {
        // sqrt(pi/2)*10/100 + 40*sqrt(ln(20)/20000)
        let v = generalization_bound(10_000, 5, 10, 0.05).unwrap();
        assert!((v - 0.614_880_779_867_713_3).abs() < 1e-12, "{v}");
        assert!(generalization_bound(1_000_000_000_000, 5, 10, 0.05).unwrap() < 1e-3);
        let a = generalization_bound(500, 3, 4, 0.1).unwrap();
        let b = generalization_bound(1000, 3, 4, 0.1).unwrap();
        assert!((b - a / 2f64.sqrt()).abs() < 1e-14);
        assert!(matches!(
            generalization_bound(10, 1, 1, 0.0),
            Err(Error::InvalidDelta(_))
        ));
        assert!(matches!(
            generalization_bound(10, 1, 1, 1.0),
            Err(Error::InvalidDelta(_))
        ));
    }

    #[test]
    fn procrustes_check_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = random_orthonormal::<f64>(7, 3, &mut rng);
        let c = procrustes_singular_check(&u).unwrap();
        assert!(c.singular_values.iter().all(|&s| (s - 1.0).abs() < 1e-12));
        assert!(c.holds);
        let u = dmatrix![2.0, 0.0; 0.0, 1.0; 0.0, 0.0f64];
        let mut sv = procrustes_singular_check(&u).unwrap().singular_values;
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!((sv[0] - 2.0).abs() < 1e-12 && (sv[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn procrustes_check_on_assembled_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let (n, k, m) = (
                rng.random_range(6..30),
                rng.random_range(1..5),
                rng.random_range(1..4),
            );
            let hs: Vec<_> = (0..m)
                .map(|_| {
                    Partition::new(random_orthonormal(n, k, &mut rng), PartitionKind::Base).unwrap()
                })
                .collect();
            let rot =
                RotationSet::new((0..m).map(|_| random_orthonormal(k, k, &mut rng)).collect())
                    .unwrap();
            let beta = update_beta(
                &(0..m)
                    .map(|_| rng.random_range(0.0..1.0))
                    .collect::<Vec<f64>>(),
            )
            .unwrap();
            let u = combined_partition(&hs, &rot, &beta).unwrap()
                + random_orthonormal::<f64>(n, k, &mut rng) * 0.3;
            assert!(procrustes_singular_check(&u).unwrap().holds);
        }
    }

    proptest! {
        #[test]
        fn generalization_bound_monotonicity(
            n in 1usize..100_000, m in 1usize..20, k in 1usize..50, delta in 0.001f64..0.999
        ) {
            let base = generalization_bound(n, m, k, delta).unwrap();
            prop_assert!(generalization_bound(n + 1, m, k, delta).unwrap() < base);
            prop_assert!(generalization_bound(n, m + 1, k, delta).unwrap() > base);
            prop_assert!(generalization_bound(n, m, k + 1, delta).unwrap() > base);
            let bigger_delta = (delta + 0.0005).min(0.9995);
            prop_assert!(generalization_bound(n, m, k, bigger_delta).unwrap() <= base);
        }

        #[test]
        fn trace_square_always_holds(k in 1usize..8, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = DMatrix::from_fn(k, k, |_, _| rng.random_range(-3.0..3.0f64));
            prop_assert!(trace_square_check(&p).unwrap().holds);
        }
    }
}
