//! Late-fusion alignment solvers.
//!
//! Both solvers maximise
//!
//! ```text
//! J(F, {W_p}, β) = Tr(Fᵀ Σ_p β_p G_p W_p) + λ Tr(Fᵀ R)
//! ```
//!
//! over column-orthonormal `F`, orthogonal `W_p` and nonnegative unit-norm
//! `β`. The global variant uses `G_p = H_p` and `R = M`; the local variant
//! uses the neighbour-weighted `G_p = D_p H_p` and `R = D_avg M`. Each sweep
//! updates `F`, then every `W_p`, then `β`, each in closed form, so `J`
//! never decreases.

pub mod global;
pub mod local;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{orthonormality_error, procrustes, trace_inner};
use crate::partition::{Partition, PartitionKind};
use crate::scalar::Real;

pub use global::{gam_objective, lf_mvc_gam, update_beta, update_f_global, update_w_global};
pub use local::{
    build_local_aggregates, lam_from_aggregates, lam_objective, lf_mvc_lam, update_beta_local,
    update_f_local, update_w_local, LocalAggregates, LocalFusionConfig, LocalProblem,
};

/// One orthogonal k×k matrix per view.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationSet<T: Real> {
    rotations: Vec<DMatrix<T>>,
}

impl<T: Real> RotationSet<T> {
    pub fn identity(m: usize, k: usize) -> Self {
        Self {
            rotations: vec![DMatrix::identity(k, k); m],
        }
    }

    pub fn new(rotations: Vec<DMatrix<T>>) -> Result<Self> {
        for (p, w) in rotations.iter().enumerate() {
            if !w.is_square() {
                return Err(Error::InvalidShape(format!("rotation {p} is not square")));
            }
            let err = orthonormality_error(w);
            if !(err <= T::CHECK_TOL) {
                return Err(Error::InvalidShape(format!(
                    "rotation {p} is not orthogonal (error {err:.3e})"
                )));
            }
        }
        Ok(Self { rotations })
    }

    pub fn as_slice(&self) -> &[DMatrix<T>] {
        &self.rotations
    }

    pub fn get(&self, p: usize) -> &DMatrix<T> {
        &self.rotations[p]
    }

    pub fn len(&self) -> usize {
        self.rotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rotations.is_empty()
    }

    /// Largest `‖W_pᵀW_p − I‖_max` over the set.
    pub fn max_orthonormality_error(&self) -> f64 {
        self.rotations
            .iter()
            .map(orthonormality_error)
            .fold(0.0, f64::max)
    }
}

/// Nonnegative view weights with unit Euclidean norm.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewWeights<T: Real> {
    beta: Vec<T>,
}

impl<T: Real> ViewWeights<T> {
    /// `β_p = 1/√m`.
    pub fn uniform(m: usize) -> Self {
        let w = T::one() / T::of(m as f64).sqrt();
        Self { beta: vec![w; m] }
    }

    pub fn new(beta: Vec<T>) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::InvalidInput("no view weights".into()));
        }
        if beta.iter().any(|&b| !(b >= T::zero()) || !b.is_finite()) {
            return Err(Error::InvalidInput(
                "view weights must be finite and nonnegative".into(),
            ));
        }
        let norm = beta.iter().fold(T::zero(), |a, &b| a + b * b).sqrt();
        if ((norm - T::one()).abs()).as_f64()
            > T::CHECK_TOL
                .min(1e-10)
                .max(T::default_epsilon().as_f64() * 8.0)
        {
            return Err(Error::InvalidInput(format!(
                "view weights have norm {norm}, not 1"
            )));
        }
        Ok(Self { beta })
    }

    pub fn as_slice(&self) -> &[T] {
        &self.beta
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }
}

/// Stopping rule and bookkeeping for the alternating solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Stop once `|J_t − J_{t−1}| / |J_t| ≤ eps0`.
    pub eps0: f64,
    pub max_iter: usize,
    /// Keep `(F, {W_p}, β)` for every entry of the objective trace.
    pub retain_iterates: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            eps0: 1e-4,
            max_iter: 100,
            retain_iterates: false,
        }
    }
}

/// Snapshot of the solver state.
#[derive(Debug, Clone, PartialEq)]
pub struct Iterate<T: Real> {
    pub f: DMatrix<T>,
    pub rotations: RotationSet<T>,
    pub beta: ViewWeights<T>,
}

#[derive(Debug, Clone)]
pub struct FusionResult<T: Real> {
    pub f: Partition<T>,
    pub rotations: RotationSet<T>,
    pub beta: ViewWeights<T>,
    /// `objective_trace[0]` is the initial state, entry `t` follows sweep `t`.
    pub objective_trace: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    /// Number of `F` updates whose target matrix was rank deficient.
    pub rank_deficient_updates: usize,
    /// Present when [`SolverOptions::retain_iterates`] was set; aligned with
    /// `objective_trace`.
    pub iterates: Option<Vec<Iterate<T>>>,
}

impl<T: Real> FusionResult<T> {
    pub fn final_objective(&self) -> T {
        *self.objective_trace.last().expect("trace is never empty")
    }
}

/// Shared engine: weighted base partitions `G_p`, a regulariser `R` and `λ`.
#[derive(Debug, Clone)]
pub(crate) struct AlignmentProblem<T: Real> {
    pub weighted: Vec<DMatrix<T>>,
    pub regularizer: DMatrix<T>,
    pub lambda: T,
}

impl<T: Real> AlignmentProblem<T> {
    pub fn new(weighted: Vec<DMatrix<T>>, regularizer: DMatrix<T>, lambda: T) -> Result<Self> {
        let Some(first) = weighted.first() else {
            return Err(Error::InvalidInput("no base partitions".into()));
        };
        let shape = first.shape();
        if weighted.iter().any(|g| g.shape() != shape) || regularizer.shape() != shape {
            return Err(Error::InvalidShape(
                "partitions must all share one n×k shape".into(),
            ));
        }
        if shape.1 == 0 || shape.1 > shape.0 {
            return Err(Error::InvalidK {
                k: shape.1,
                n: shape.0,
            });
        }
        if !(lambda >= T::zero()) {
            return Err(Error::InvalidInput(format!(
                "lambda = {lambda} must be >= 0"
            )));
        }
        Ok(Self {
            weighted,
            regularizer,
            lambda,
        })
    }

    pub fn m(&self) -> usize {
        self.weighted.len()
    }

    pub fn k(&self) -> usize {
        self.regularizer.ncols()
    }

    fn check_state(&self, rotations: &RotationSet<T>, beta: &ViewWeights<T>) -> Result<()> {
        let k = self.k();
        if rotations.len() != self.m() || beta.len() != self.m() {
            return Err(Error::InvalidShape(format!(
                "expected {} rotations and weights, got {} and {}",
                self.m(),
                rotations.len(),
                beta.len()
            )));
        }
        if rotations.as_slice().iter().any(|w| w.shape() != (k, k)) {
            return Err(Error::InvalidShape(format!("rotations must be {k}x{k}")));
        }
        Ok(())
    }

    /// `U = Σ_p β_p G_p W_p + λ R`.
    pub fn target(&self, rotations: &RotationSet<T>, beta: &ViewWeights<T>) -> Result<DMatrix<T>> {
        self.check_state(rotations, beta)?;
        let mut u = &self.regularizer * self.lambda;
        for ((g, w), &b) in self
            .weighted
            .iter()
            .zip(rotations.as_slice())
            .zip(beta.as_slice())
        {
            if b != T::zero() {
                u.gemm(b, g, w, T::one());
            }
        }
        Ok(u)
    }

    pub fn objective(
        &self,
        f: &DMatrix<T>,
        rotations: &RotationSet<T>,
        beta: &ViewWeights<T>,
    ) -> Result<T> {
        if f.shape() != self.regularizer.shape() {
            return Err(Error::InvalidShape(format!(
                "F is {}x{}, expected {}x{}",
                f.nrows(),
                f.ncols(),
                self.regularizer.nrows(),
                self.regularizer.ncols()
            )));
        }
        Ok(trace_inner(f, &self.target(rotations, beta)?))
    }

    pub fn update_f(
        &self,
        rotations: &RotationSet<T>,
        beta: &ViewWeights<T>,
    ) -> Result<(DMatrix<T>, bool)> {
        let p = procrustes(&self.target(rotations, beta)?)?;
        Ok((p.solution, p.rank_deficient))
    }

    /// `W_p` maximising `Tr(W_pᵀ G_pᵀ F)`. The positive factor `β_p` does not
    /// move the maximiser, and when `β_p = 0` every `W_p` is optimal, so it is
    /// left out of `L`.
    pub fn update_w(&self, p: usize, f: &DMatrix<T>) -> Result<DMatrix<T>> {
        let l = self.weighted[p].tr_mul(f);
        Ok(procrustes(&l)?.solution)
    }

    pub fn update_all_w(&self, f: &DMatrix<T>) -> Result<RotationSet<T>> {
        let rotations = (0..self.m())
            .map(|p| self.update_w(p, f))
            .collect::<Result<_>>()?;
        Ok(RotationSet { rotations })
    }

    /// `δ_p = Tr(Fᵀ G_p W_p)`.
    pub fn deltas(&self, f: &DMatrix<T>, rotations: &RotationSet<T>) -> Vec<T> {
        self.weighted
            .iter()
            .zip(rotations.as_slice())
            .map(|(g, w)| trace_inner(&f.tr_mul(g), &w.transpose()))
            .collect()
    }

    pub fn solve(&self, init_f: DMatrix<T>, opts: &SolverOptions) -> Result<FusionResult<T>> {
        if opts.max_iter == 0 {
            return Err(Error::InvalidInput("max_iter must be at least 1".into()));
        }
        if !(opts.eps0 > 0.0) {
            return Err(Error::InvalidInput(format!(
                "eps0 = {} must be > 0",
                opts.eps0
            )));
        }
        let m = self.m();
        let k = self.k();
        let mut f = init_f;
        let mut rotations = RotationSet::identity(m, k);
        let mut beta = ViewWeights::uniform(m);
        let mut trace = vec![self.objective(&f, &rotations, &beta)?];
        let mut iterates = opts.retain_iterates.then(|| {
            vec![Iterate {
                f: f.clone(),
                rotations: rotations.clone(),
                beta: beta.clone(),
            }]
        });
        let mut converged = false;
        let mut rank_deficient_updates = 0;
        let mut iterations = 0;

        while iterations < opts.max_iter {
            iterations += 1;
            let (new_f, deficient) = self.update_f(&rotations, &beta)?;
            f = new_f;
            rank_deficient_updates += usize::from(deficient);
            rotations = self.update_all_w(&f)?;
            beta = update_beta(&self.deltas(&f, &rotations))?;

            let current = self.objective(&f, &rotations, &beta)?;
            let previous = *trace.last().expect("non-empty");
            let slack = T::of(T::ORDER_TOL) * previous.abs().max(T::one());
            if current < previous - slack {
                return Err(Error::NonMonotoneObjective {
                    iteration: iterations,
                    previous: previous.as_f64(),
                    current: current.as_f64(),
                });
            }
            trace.push(current);
            if let Some(its) = iterates.as_mut() {
                its.push(Iterate {
                    f: f.clone(),
                    rotations: rotations.clone(),
                    beta: beta.clone(),
                });
            }
            let change = (current - previous).abs();
            let rel = if current == T::zero() {
                if change == T::zero() {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                (change / current.abs()).as_f64()
            };
            if rel <= opts.eps0 {
                converged = true;
                break;
            }
        }

        Ok(FusionResult {
            f: Partition::from_trusted(f, PartitionKind::Consensus),
            rotations,
            beta,
            objective_trace: trace,
            iterations,
            converged,
            rank_deficient_updates,
            iterates,
        })
    }
}
