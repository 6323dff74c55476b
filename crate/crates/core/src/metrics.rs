//! Chance-adjusted agreement between two labelings.

use std::collections::HashMap;
use std::hash::Hash;

use crate::error::{Error, Result};

/// Cell counts `n_ij` between true classes `i` and predicted clusters `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    cells: HashMap<(usize, usize), u64>,
    rows: Vec<u64>,
    cols: Vec<u64>,
    n: u64,
}

impl ContingencyTable {
    pub fn new<A, B>(truth: &[A], pred: &[B]) -> Result<Self>
    where
        A: Hash + Eq,
        B: Hash + Eq,
    {
        if truth.len() != pred.len() {
            return Err(Error::LengthMismatch(truth.len(), pred.len()));
        }
        let t = encode(truth);
        let p = encode(pred);
        let mut rows = vec![0; t.iter().max().map_or(0, |m| m + 1)];
        let mut cols = vec![0; p.iter().max().map_or(0, |m| m + 1)];
        let mut cells = HashMap::new();
        for (&i, &j) in t.iter().zip(&p) {
            rows[i] += 1;
            cols[j] += 1;
            *cells.entry((i, j)).or_insert(0) += 1;
        }
        Ok(ContingencyTable {
            cells,
            rows,
            cols,
            n: truth.len() as u64,
        })
    }

    pub fn total(&self) -> u64 {
        self.n
    }

    pub fn row_sums(&self) -> &[u64] {
        &self.rows
    }

    pub fn col_sums(&self) -> &[u64] {
        &self.cols
    }

    pub fn cell(&self, i: usize, j: usize) -> u64 {
        self.cells.get(&(i, j)).copied().unwrap_or(0)
    }

    /// Non-zero cells.
    pub fn cells(&self) -> impl Iterator<Item = ((usize, usize), u64)> + '_ {
        self.cells.iter().map(|(&k, &v)| (k, v))
    }
}

fn encode<T: Hash + Eq>(labels: &[T]) -> Vec<usize> {
    let mut ids = HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = ids.len();
            *ids.entry(l).or_insert(next)
        })
        .collect()
}

fn check_len(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    Ok(())
}

/// Adjusted Rand Index. Returns 1.0 when the index is undefined because both
/// labelings are trivially identical (all-one-cluster or all-singletons).
///
/// Evaluated from integer ordered-pair counts with a single final division.
pub fn ari<A: Hash + Eq, B: Hash + Eq>(truth: &[A], pred: &[B]) -> Result<f64> {
    let table = ContingencyTable::new(truth, pred)?;
    check_len(truth.len())?;
    let sq = |x: u64| i128::from(x) * i128::from(x);
    let n = i128::from(table.n);
    let sum_squares: i128 = table.cells().map(|(_, c)| sq(c)).sum();
    let same_pred: i128 = table.cols.iter().map(|&b| sq(b)).sum();
    let same_true: i128 = table.rows.iter().map(|&a| sq(a)).sum();
    let tp = sum_squares - n;
    let fp = same_pred - sum_squares;
    let fn_ = same_true - sum_squares;
    let tn = n * n - fp - fn_ - sum_squares;
    if fp == 0 && fn_ == 0 {
        return Ok(1.0);
    }
    let numerator = 2 * (tp * tn - fn_ * fp);
    let denominator = (tp + fn_) * (fn_ + tn) + (tp + fp) * (fp + tn);
    Ok(numerator as f64 / denominator as f64)
}

/// Adjusted Mutual Information with arithmetic-mean normalization and the
/// exact hypergeometric expectation of the mutual information.
pub fn ami<A: Hash + Eq, B: Hash + Eq>(truth: &[A], pred: &[B]) -> Result<f64> {
    let table = ContingencyTable::new(truth, pred)?;
    check_len(truth.len())?;
    let n = table.n as f64;

    let entropy = |marginals: &[u64]| -> f64 {
        -marginals
            .iter()
            .map(|&a| {
                let p = a as f64 / n;
                p * p.ln()
            })
            .sum::<f64>()
    };
    let h_true = entropy(&table.rows);
    let h_pred = entropy(&table.cols);

    let mi: f64 = table
        .cells()
        .map(|((i, j), c)| {
            let c = c as f64;
            (c / n) * (n * c / (table.rows[i] as f64 * table.cols[j] as f64)).ln()
        })
        .sum();
    let emi = expected_mutual_information(&table);

    let normalizer = 0.5 * (h_true + h_pred);
    let denominator = normalizer - emi;
    if denominator.abs() < 1e-12 {
        let degenerate = (mi - emi).abs() < 1e-12 && (mi - normalizer).abs() < 1e-12;
        return Ok(if degenerate { 1.0 } else { 0.0 });
    }
    Ok((mi - emi) / denominator)
}

/// Exact `E[MI]` under the hypergeometric model of random labelings with
/// fixed marginals, in nats.
pub fn expected_mutual_information(table: &ContingencyTable) -> f64 {
    let n = table.n as usize;
    let log_fact = log_factorials(n);
    let nf = n as f64;
    let mut emi = 0.0;
    for &a in &table.rows {
        for &b in &table.cols {
            let (a, b) = (a as usize, b as usize);
            let lo = (a + b).saturating_sub(n).max(1);
            let hi = a.min(b);
            // log of a! b! (n-a)! (n-b)! / n!, shared by every term
            let common =
                log_fact[a] + log_fact[b] + log_fact[n - a] + log_fact[n - b] - log_fact[n];
            for nij in lo..=hi {
                let x = nij as f64;
                let log_p = common
                    - log_fact[nij]
                    - log_fact[a - nij]
                    - log_fact[b - nij]
                    - log_fact[n + nij - a - b];
                emi += (x / nf) * (nf * x / (a as f64 * b as f64)).ln() * log_p.exp();
            }
        }
    }
    emi
}

fn log_factorials(n: usize) -> Vec<f64> {
    let mut table = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    table.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        table.push(acc);
    }
    table
}

/// Average ranks, 1-based, ties sharing the mean of their positions.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && values[order[end + 1]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end) as f64 / 2.0 + 1.0;
        for &i in &order[start..=end] {
            out[i] = rank;
        }
        start = end + 1;
    }
    out
}

/// Spearman rank correlation; `None` when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    check_len(x.len())?;
    let (rx, ry) = (ranks(x), ranks(y));
    let mean = (x.len() as f64 + 1.0) / 2.0;
    let cov: f64 = rx
        .iter()
        .zip(&ry)
        .map(|(a, b)| (a - mean) * (b - mean))
        .sum();
    let vx: f64 = rx.iter().map(|a| (a - mean).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - mean).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return Ok(None);
    }
    Ok(Some(cov / (vx * vy).sqrt()))
}
