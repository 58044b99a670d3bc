//! Rounding a relaxed partition to discrete labels with Lloyd's algorithm.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::Partition;
use crate::scalar::Real;

const MAX_LLOYD_ITERS: usize = 300;

/// Hard cluster assignment, one label per sample.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClusterLabels(Vec<usize>);

impl ClusterLabels {
    pub fn new(labels: Vec<usize>) -> Self {
        Self(labels)
    }

    /// Fails if any label is `>= k`.
    pub fn with_k(labels: Vec<usize>, k: usize) -> Result<Self> {
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
            return Err(Error::InvalidInput(format!(
                "label {l} at position {i} is outside [0, {k})"
            )));
        }
        Ok(Self(labels))
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// One more than the largest label, or 0 when empty.
    pub fn n_clusters(&self) -> usize {
        self.0.iter().max().map_or(0, |&m| m + 1)
    }
}

/// Options for [`lloyd_round`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LloydOptions {
    pub restarts: usize,
    pub seed: u64,
    /// Rescale rows to unit norm before clustering (zero rows stay zero).
    pub row_normalize: bool,
}

impl Default for LloydOptions {
    fn default() -> Self {
        Self {
            restarts: 50,
            seed: 0,
            row_normalize: true,
        }
    }
}

/// Labels and within-cluster sum of squares of the best restart.
#[derive(Debug, Clone, PartialEq)]
pub struct Rounding {
    pub labels: ClusterLabels,
    pub inertia: f64,
    /// Index of the restart that produced `labels`.
    pub restart: usize,
}

/// Runs k-means++-seeded Lloyd iterations on the rows of `partition`,
/// `restarts` times, and keeps the labelling with the smallest inertia
/// (earliest restart on ties). Restart `r` draws from stream `r` of a ChaCha
/// generator keyed by `seed`, so a run with more restarts extends a run with
/// fewer.
pub fn lloyd_round<T: Real>(
    partition: &Partition<T>,
    k: usize,
    opts: &LloydOptions,
) -> Result<Rounding> {
    lloyd_rows(partition.matrix(), k, opts)
}

/// [`lloyd_round`] on an arbitrary point matrix (rows are points).
pub fn lloyd_rows<T: Real>(points: &DMatrix<T>, k: usize, opts: &LloydOptions) -> Result<Rounding> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    if opts.restarts == 0 {
        return Err(Error::InvalidInput("restarts must be at least 1".into()));
    }
    let dim = points.ncols();
    let mut data: Vec<f64> = Vec::with_capacity(n * dim);
    for row in points.row_iter() {
        let start = data.len();
        data.extend(row.iter().map(|x| x.as_f64()));
        if opts.row_normalize {
            let norm = data[start..].iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                data[start..].iter_mut().for_each(|x| *x /= norm);
            }
        }
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericalFailure(
            "non-finite rows passed to Lloyd".into(),
        ));
    }
    let pts = Points { data, dim };

    let mut best: Option<Rounding> = None;
    for restart in 0..opts.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(restart as u64);
        let (labels, inertia) = single_run(&pts, k, &mut rng);
        if best.as_ref().is_none_or(|b| inertia < b.inertia) {
            best = Some(Rounding {
                labels: ClusterLabels(labels),
                inertia,
                restart,
            });
        }
    }
    Ok(best.expect("at least one restart"))
}

struct Points {
    data: Vec<f64>,
    dim: usize,
}

impl Points {
    fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn plus_plus_seeds(pts: &Points, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = pts.len();
    let dim = pts.dim;
    let mut centers = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centers.extend_from_slice(pts.row(first));
    let mut nearest: Vec<f64> = (0..n)
        .map(|i| sq_dist(pts.row(i), pts.row(first)))
        .collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in nearest.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.extend_from_slice(pts.row(pick));
        let new_center = &centers[c * dim..(c + 1) * dim];
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(pts.row(i), new_center));
        }
    }
    centers
}

fn assign(
    pts: &Points,
    centers: &[f64],
    k: usize,
    labels: &mut [usize],
    dists: &mut [f64],
) -> bool {
    let dim = pts.dim;
    let mut changed = false;
    for i in 0..pts.len() {
        let row = pts.row(i);
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for c in 0..k {
            let d = sq_dist(row, &centers[c * dim..(c + 1) * dim]);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        if labels[i] != best {
            labels[i] = best;
            changed = true;
        }
        dists[i] = best_d;
    }
    changed
}

fn update_centers(pts: &Points, k: usize, labels: &[usize], centers: &mut [f64]) -> Vec<usize> {
    let dim = pts.dim;
    let mut sizes = vec![0usize; k];
    centers.iter_mut().for_each(|c| *c = 0.0);
    for (i, &l) in labels.iter().enumerate() {
        sizes[l] += 1;
        for (c, x) in centers[l * dim..(l + 1) * dim].iter_mut().zip(pts.row(i)) {
            *c += x;
        }
    }
    for (c, &s) in sizes.iter().enumerate() {
        if s > 0 {
            centers[c * dim..(c + 1) * dim]
                .iter_mut()
                .for_each(|x| *x /= s as f64);
        }
    }
    sizes
}

/// Moves the point farthest from its centroid into each empty cluster.
/// Returns whether anything moved.
fn repair_empty(
    pts: &Points,
    k: usize,
    labels: &mut [usize],
    dists: &mut [f64],
    centers: &mut [f64],
) -> bool {
    let mut sizes = update_centers(pts, k, labels, centers);
    let mut moved = false;
    while let Some(empty) = sizes.iter().position(|&s| s == 0) {
        let donor = (0..pts.len())
            .filter(|&i| sizes[labels[i]] > 1)
            .max_by(|&a, &b| dists[a].partial_cmp(&dists[b]).unwrap().then(b.cmp(&a)));
        let Some(donor) = donor else { break };
        sizes[labels[donor]] -= 1;
        labels[donor] = empty;
        sizes[empty] = 1;
        dists[donor] = 0.0;
        moved = true;
    }
    if moved {
        update_centers(pts, k, labels, centers);
    }
    moved
}

fn single_run(pts: &Points, k: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, f64) {
    let n = pts.len();
    let mut centers = plus_plus_seeds(pts, k, rng);
    let mut labels = vec![usize::MAX; n];
    let mut dists = vec![0.0; n];
    for _ in 0..MAX_LLOYD_ITERS {
        let changed = assign(pts, &centers, k, &mut labels, &mut dists);
        let repaired = repair_empty(pts, k, &mut labels, &mut dists, &mut centers);
        if !changed && !repaired {
            break;
        }
    }
    let inertia = (0..n)
        .map(|i| {
            sq_dist(
                pts.row(i),
                &centers[labels[i] * pts.dim..(labels[i] + 1) * pts.dim],
            )
        })
        .sum();
    (labels, inertia)
}
