//! Per-iteration timing of the local solver as `n` grows.

use std::time::{Duration, Instant};

use latefusion::synth::random_orthonormal;
use latefusion::{
    lam_from_aggregates, LocalAggregates, NeighborAggregate, NeighborSource, Partition,
    PartitionKind, SolverOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchPoint {
    pub n: usize,
    pub seconds_per_iteration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub m: usize,
    pub k: usize,
    pub points: Vec<BenchPoint>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchOptions {
    pub m: usize,
    pub k: usize,
    /// Timed batches per size; the fastest is kept.
    pub repeats: usize,
    /// Each batch runs whole solves until at least this much time has passed.
    pub min_batch: Duration,
    pub iterations_per_solve: usize,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            m: 3,
            k: 5,
            repeats: 5,
            min_batch: Duration::from_millis(50),
            iterations_per_solve: 10,
            seed: 0,
        }
    }
}

/// Least-squares line through `(x, y)`: slope, intercept and R².
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    (slope, intercept, r2)
}

fn random_counts(n: usize, source: NeighborSource, rng: &mut ChaCha8Rng) -> NeighborAggregate {
    NeighborAggregate {
        counts: (0..n).map(|_| rng.random_range(1..=10)).collect(),
        tau: 10,
        source,
    }
}

fn time_size(n: usize, opts: &BenchOptions, rng: &mut ChaCha8Rng) -> Result<f64> {
    let fail = |e: latefusion::Error| HarnessError::Data {
        context: format!("bench n={n}"),
        source: e,
    };
    let partitions: Vec<Partition<f64>> = (0..opts.m)
        .map(|_| Partition::new(random_orthonormal(n, opts.k, rng), PartitionKind::Base))
        .collect::<latefusion::Result<_>>()
        .map_err(fail)?;
    let regularizer = Partition::new(
        random_orthonormal(n, opts.k, rng),
        PartitionKind::Regularizer,
    )
    .map_err(fail)?;
    let per_view = (0..opts.m)
        .map(|p| random_counts(n, NeighborSource::View(p), rng))
        .collect();
    let average = random_counts(n, NeighborSource::Average, rng);
    let aggregates = LocalAggregates::from_counts(per_view, average, &regularizer).map_err(fail)?;
    let solver = SolverOptions {
        eps0: f64::MIN_POSITIVE,
        max_iter: opts.iterations_per_solve,
        retain_iterates: false,
    };
    let mut best = f64::INFINITY;
    for _ in 0..opts.repeats {
        let start = Instant::now();
        let mut iterations = 0;
        while start.elapsed() < opts.min_batch || iterations == 0 {
            let run = lam_from_aggregates(&partitions, &regularizer, &aggregates, 1.0, &solver)
                .map_err(fail)?;
            iterations += run.iterations.max(1);
        }
        best = best.min(start.elapsed().as_secs_f64() / iterations as f64);
    }
    Ok(best)
}

/// Times solver sweeps on random partitions and neighbour counts for every
/// size in `sizes` and fits time against `n`.
pub fn bench_scaling(sizes: &[usize], opts: &BenchOptions) -> Result<BenchReport> {
    if sizes.len() < 2 || opts.repeats == 0 || opts.iterations_per_solve == 0 {
        return Err(HarnessError::Config(
            "bench needs two sizes, repeats >= 1 and iterations >= 1".into(),
        ));
    }
    if let Some(&n) = sizes.iter().find(|&&n| n < opts.k) {
        return Err(HarnessError::Config(format!(
            "size {n} is smaller than k = {}",
            opts.k
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let points = sizes
        .iter()
        .map(|&n| {
            Ok(BenchPoint {
                n,
                seconds_per_iteration: time_size(n, opts, &mut rng)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let x: Vec<f64> = points.iter().map(|p| p.n as f64).collect();
    let y: Vec<f64> = points.iter().map(|p| p.seconds_per_iteration).collect();
    let (slope, intercept, r_squared) = linear_fit(&x, &y);
    Ok(BenchReport {
        m: opts.m,
        k: opts.k,
        points,
        slope,
        intercept,
        r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_a_line() {
        let (s, i, r2) = linear_fit(&[1.0, 2.0, 3.0, 4.0], &[3.0, 5.0, 7.0, 9.0]);
        assert!((s - 2.0).abs() < 1e-12 && (i - 1.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
        let (_, _, r2) = linear_fit(&[1.0, 2.0, 3.0, 4.0], &[1.0, -1.0, 1.0, -1.0]);
        assert!(r2 < 0.5);
    }
}
