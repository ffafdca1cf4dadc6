//! Clustering agreement scores: accuracy under optimal label matching,
//! normalized mutual information and adjusted Rand index.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Minimum-cost perfect assignment for a square cost matrix.
///
/// Returns `assignment[row] = column`. Shortest augmenting paths with
/// row/column potentials, `O(n³)`.
pub fn hungarian(cost: &DMatrix<f64>) -> Result<Vec<usize>> {
    if !cost.is_square() {
        return Err(Error::Shape(format!(
            "cost matrix must be square, got {:?}",
            cost.shape()
        )));
    }
    if cost.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("assignment costs".into()));
    }
    let n = cost.nrows();
    // 1-based internally; column 0 is the virtual start
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        while j0 != 0 {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[row_of[j] - 1] = j - 1;
    }
    Ok(assignment)
}

/// Counts of co-occurring (predicted, true) labels over compacted label ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    /// `c_pred × c_true`
    pub counts: DMatrix<usize>,
}

impl ContingencyTable {
    pub fn new(pred: &[usize], truth: &[usize]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::Shape(format!(
                "label vectors differ in length: {} vs {}",
                pred.len(),
                truth.len()
            )));
        }
        if pred.is_empty() {
            return Err(Error::Data("empty label vectors".into()));
        }
        let (p, cp) = compact(pred);
        let (t, ct) = compact(truth);
        let mut counts = DMatrix::zeros(cp, ct);
        for (&a, &b) in p.iter().zip(&t) {
            counts[(a, b)] += 1;
        }
        Ok(Self { counts })
    }

    pub fn total(&self) -> usize {
        self.counts.sum()
    }

    fn row_sums(&self) -> Vec<usize> {
        self.counts.row_iter().map(|r| r.sum()).collect()
    }

    fn col_sums(&self) -> Vec<usize> {
        self.counts.column_iter().map(|c| c.sum()).collect()
    }
}

/// Maps labels to `0..k` in ascending label order.
fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut distinct = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let ids = labels
        .iter()
        .map(|l| distinct.binary_search(l).unwrap_or_default())
        .collect();
    (ids, distinct.len())
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(pred, truth)?;
    let (r, c) = table.counts.shape();
    let size = r.max(c);
    // pad square with zero rows/columns
    let cost = DMatrix::from_fn(size, size, |i, j| {
        if i < r && j < c {
            -(table.counts[(i, j)] as f64)
        } else {
            0.0
        }
    });
    let assignment = hungarian(&cost)?;
    let matched: usize = assignment
        .iter()
        .enumerate()
        .filter(|&(i, &j)| i < r && j < c)
        .map(|(i, &j)| table.counts[(i, j)])
        .sum();
    Ok(matched as f64 / table.total() as f64)
}

fn entropy(sums: &[usize], n: f64) -> f64 {
    sums.iter()
        .filter(|&&s| s > 0)
        .map(|&s| {
            let p = s as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information normalized by the geometric mean of the entropies.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(pred, truth)?;
    let n = table.total() as f64;
    let rows = table.row_sums();
    let cols = table.col_sums();
    let hp = entropy(&rows, n);
    let ht = entropy(&cols, n);
    if hp == 0.0 && ht == 0.0 {
        return Ok(1.0);
    }
    if hp == 0.0 || ht == 0.0 {
        return Ok(0.0);
    }
    if is_relabeling(&table) {
        // exact, where the ratio below may round to 1 − ulp
        return Ok(1.0);
    }
    let mut mi = 0.0;
    for (i, &ri) in rows.iter().enumerate() {
        for (j, &cj) in cols.iter().enumerate() {
            let nij = table.counts[(i, j)];
            if nij > 0 {
                let nij = nij as f64;
                mi += nij / n * (n * nij / (ri as f64 * cj as f64)).ln();
            }
        }
    }
    Ok((mi / (hp * ht).sqrt()).clamp(0.0, 1.0))
}

/// Every row and every column of the table has exactly one nonzero entry.
fn is_relabeling(table: &ContingencyTable) -> bool {
    let c = &table.counts;
    c.nrows() == c.ncols()
        && c.row_iter().all(|r| r.iter().filter(|&&x| x > 0).count() == 1)
        && c.column_iter().all(|col| col.iter().filter(|&&x| x > 0).count() == 1)
}

fn pairs(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index from pair counts of the contingency table.
pub fn ari(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(pred, truth)?;
    let index: f64 = table.counts.iter().map(|&x| pairs(x)).sum();
    let a: f64 = table.row_sums().into_iter().map(pairs).sum();
    let b: f64 = table.col_sums().into_iter().map(pairs).sum();
    let total = pairs(table.total());
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = a * b / total;
    let max = (a + b) / 2.0;
    // a zero denominator forces a = b ∈ {0, total}: identical partitions
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}
