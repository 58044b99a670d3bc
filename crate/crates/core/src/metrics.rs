//! External clustering quality: ACC, NMI and purity.

use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;

use crate::error::{Error, Result};
use crate::lloyd::ClusterLabels;

/// NMI normalisation used by [`nmi`], reported alongside results.
pub const NMI_CONVENTION: &str = "sqrt";

/// Counts of (predicted, true) label pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    /// `counts[p][t]`, rows indexed by predicted label.
    pub counts: Vec<Vec<usize>>,
    pub n: usize,
}

impl ContingencyTable {
    pub fn new(pred: &ClusterLabels, truth: &ClusterLabels) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::InvalidInput(format!(
                "label lengths differ: {} predicted vs {} true",
                pred.len(),
                truth.len()
            )));
        }
        if pred.is_empty() {
            return Err(Error::InvalidInput("empty labelling".into()));
        }
        let mut counts = vec![vec![0usize; truth.n_clusters()]; pred.n_clusters()];
        for (&p, &t) in pred.as_slice().iter().zip(truth.as_slice()) {
            counts[p][t] += 1;
        }
        Ok(Self {
            counts,
            n: pred.len(),
        })
    }

    pub fn row_sums(&self) -> Vec<usize> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<usize> {
        let cols = self.counts.first().map_or(0, Vec::len);
        (0..cols)
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }
}

/// Fraction of samples correctly labelled under the best one-to-one mapping
/// of predicted to true clusters (Hungarian assignment on the zero-padded
/// contingency table).
pub fn accuracy(pred: &ClusterLabels, truth: &ClusterLabels) -> Result<f64> {
    let table = ContingencyTable::new(pred, truth)?;
    let rows = table.counts.len();
    let cols = table.col_sums().len();
    let size = rows.max(cols);
    let mut weights = Vec::with_capacity(size * size);
    for i in 0..size {
        for j in 0..size {
            let w = table
                .counts
                .get(i)
                .and_then(|r| r.get(j))
                .copied()
                .unwrap_or(0);
            weights.push(w as i64);
        }
    }
    let matrix = Matrix::from_vec(size, size, weights).expect("square weight matrix");
    let (matched, _) = kuhn_munkres(&matrix);
    Ok(matched as f64 / table.n as f64)
}

fn entropy(sums: &[usize], n: usize) -> f64 {
    let n = n as f64;
    sums.iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalised mutual information `I(P;T) / sqrt(H(P)·H(T))`, natural logs.
///
/// When either labelling has zero entropy the ratio is undefined: two
/// identical single-cluster labellings score 1, anything else scores 0.
pub fn nmi(pred: &ClusterLabels, truth: &ClusterLabels) -> Result<f64> {
    let table = ContingencyTable::new(pred, truth)?;
    let n = table.n as f64;
    let rows = table.row_sums();
    let cols = table.col_sums();
    let h_pred = entropy(&rows, table.n);
    let h_true = entropy(&cols, table.n);
    if h_pred <= 0.0 || h_true <= 0.0 {
        let both_trivial = h_pred <= 0.0 && h_true <= 0.0;
        return Ok(if both_trivial { 1.0 } else { 0.0 });
    }
    let mut mi = 0.0;
    for (i, row) in table.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / n * (c * n / (rows[i] as f64 * cols[j] as f64)).ln();
            }
        }
    }
    Ok((mi / (h_pred * h_true).sqrt()).clamp(0.0, 1.0))
}

/// `(1/n) Σ_clusters max_t counts[cluster][t]`.
pub fn purity(pred: &ClusterLabels, truth: &ClusterLabels) -> Result<f64> {
    let table = ContingencyTable::new(pred, truth)?;
    let hits: usize = table
        .counts
        .iter()
        .map(|r| r.iter().copied().max().unwrap_or(0))
        .sum();
    Ok(hits as f64 / table.n as f64)
}

/// The three metrics together.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Scores {
    pub acc: f64,
    pub nmi: f64,
    pub purity: f64,
}

pub fn score(pred: &ClusterLabels, truth: &ClusterLabels) -> Result<Scores> {
    Ok(Scores {
        acc: accuracy(pred, truth)?,
        nmi: nmi(pred, truth)?,
        purity: purity(pred, truth)?,
    })
}
