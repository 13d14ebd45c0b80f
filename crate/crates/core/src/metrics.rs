//! Clustering-agreement measures: Adjusted Rand Index, Cohen's kappa with the
//! Landis-Koch agreement bands, and confusion matrices column-sorted by
//! maximum-weight assignment.

use std::collections::HashMap;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("label vectors differ in length: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("need at least {min} labels, got {got}")]
    TooFew { min: usize, got: usize },
    #[error("chance agreement is exactly 1; kappa is undefined")]
    DegenerateAgreement,
    #[error("estimated label {label} out of range for K = {k}")]
    LabelOutOfRange { label: usize, k: usize },
}

fn check_paired(a: &[usize], b: &[usize], min: usize) -> Result<(), MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch { a: a.len(), b: b.len() });
    }
    if a.len() < min {
        return Err(MetricsError::TooFew { min, got: a.len() });
    }
    Ok(())
}

fn comb2(n: usize) -> f64 {
    if n < 2 {
        0.0
    } else {
        n as f64 * (n as f64 - 1.0) / 2.0
    }
}

/// Pair-counting Adjusted Rand Index: 1 for identical partitions, ~0 in
/// expectation for independent labelings, invariant to relabeling either side.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64, MetricsError> {
    check_paired(a, b, 2)?;
    let mut cells: HashMap<(usize, usize), usize> = HashMap::new();
    let mut rows: HashMap<usize, usize> = HashMap::new();
    let mut cols: HashMap<usize, usize> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *cells.entry((x, y)).or_insert(0) += 1;
        *rows.entry(x).or_insert(0) += 1;
        *cols.entry(y).or_insert(0) += 1;
    }
    let sum_cells: f64 = cells.values().map(|&n| comb2(n)).sum();
    let sum_rows: f64 = rows.values().map(|&n| comb2(n)).sum();
    let sum_cols: f64 = cols.values().map(|&n| comb2(n)).sum();
    let total = comb2(a.len());
    let expected = sum_rows * sum_cols / total;
    let max = 0.5 * (sum_rows + sum_cols);
    if max == expected {
        // Both sides are single-cluster (or equivalent): define as perfect.
        return Ok(1.0);
    }
    Ok((sum_cells - expected) / (max - expected))
}

/// Cohen's kappa: chance-corrected literal agreement. Deliberately not
/// invariant to relabeling — matching sign indices is the point.
pub fn cohen_kappa(a: &[usize], b: &[usize]) -> Result<f64, MetricsError> {
    check_paired(a, b, 1)?;
    let n = a.len() as f64;
    let observed = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let mut pa: HashMap<usize, f64> = HashMap::new();
    let mut pb: HashMap<usize, f64> = HashMap::new();
    for &x in a {
        *pa.entry(x).or_insert(0.0) += 1.0 / n;
    }
    for &y in b {
        *pb.entry(y).or_insert(0.0) += 1.0 / n;
    }
    let chance: f64 = pa
        .iter()
        .map(|(k, p)| p * pb.get(k).copied().unwrap_or(0.0))
        .sum();
    if (1.0 - chance).abs() < 1e-15 {
        return Err(MetricsError::DegenerateAgreement);
    }
    Ok((observed - chance) / (1.0 - chance))
}

/// Landis-Koch agreement bands over kappa (half-open from above).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AgreementBand {
    AlmostPerfect,
    Substantial,
    Moderate,
    Fair,
    Slight,
    None,
}

impl std::fmt::Display for AgreementBand {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AgreementBand::AlmostPerfect => "almost perfect",
            AgreementBand::Substantial => "substantial",
            AgreementBand::Moderate => "moderate",
            AgreementBand::Fair => "fair",
            AgreementBand::Slight => "slight",
            AgreementBand::None => "no agreement",
        };
        f.write_str(s)
    }
}

/// Band boundaries: `(1.0 ≥ κ > 0.80)` almost perfect, `(0.80 ≥ κ > 0.60)`
/// substantial, and so on; `κ ≤ 0` is no agreement.
pub fn kappa_band(kappa: f64) -> AgreementBand {
    debug_assert!(kappa <= 1.0 + 1e-12);
    if kappa > 0.80 {
        AgreementBand::AlmostPerfect
    } else if kappa > 0.60 {
        AgreementBand::Substantial
    } else if kappa > 0.40 {
        AgreementBand::Moderate
    } else if kappa > 0.20 {
        AgreementBand::Fair
    } else if kappa > 0.0 {
        AgreementBand::Slight
    } else {
        AgreementBand::None
    }
}

/// Confusion counts with the estimated-sign columns permuted so the diagonal
/// mass is maximal (Hungarian assignment), for human-readable displays.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfusionMatrix {
    /// `counts[t][j]`: truth class `t` against the sign placed at column `j`.
    pub counts: Vec<Vec<usize>>,
    /// `permutation[j]` is the original sign index shown at column `j`.
    pub permutation: Vec<usize>,
}

impl ConfusionMatrix {
    pub fn trace(&self) -> usize {
        let n = self.counts.len().min(self.permutation.len());
        (0..n).map(|i| self.counts[i][i]).sum()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().map(|r| r.iter().sum::<usize>()).sum()
    }
}

/// Builds the truth × sign count matrix and permutes sign columns by
/// maximum-weight bipartite assignment so matched classes land on the
/// diagonal.
pub fn confusion_sorted(
    truth: &[usize],
    est: &[usize],
    k: usize,
) -> Result<ConfusionMatrix, MetricsError> {
    check_paired(truth, est, 1)?;
    for &e in est {
        if e >= k {
            return Err(MetricsError::LabelOutOfRange { label: e, k });
        }
    }
    let n_truth = truth.iter().copied().max().unwrap_or(0) + 1;
    let mut raw = vec![vec![0usize; k]; n_truth];
    for (&t, &e) in truth.iter().zip(est) {
        raw[t][e] += 1;
    }
    // Pad to square: assignment over max(n_truth, k) with zero weights.
    let n = n_truth.max(k);
    let mut weights = vec![vec![0i64; n]; n];
    for (t, row) in raw.iter().enumerate() {
        for (e, &c) in row.iter().enumerate() {
            weights[t][e] = c as i64;
        }
    }
    let row_assign = hungarian_max(&weights);
    // Column order: the sign assigned to truth row j goes to column j;
    // unassigned signs follow in index order.
    let mut permutation = Vec::with_capacity(k);
    let mut used = vec![false; k];
    for &e in row_assign.iter().take(n_truth) {
        if e < k {
            permutation.push(e);
            used[e] = true;
        }
    }
    for e in 0..k {
        if !used[e] {
            permutation.push(e);
        }
    }
    let counts = raw
        .iter()
        .map(|row| permutation.iter().map(|&e| row[e]).collect())
        .collect();
    Ok(ConfusionMatrix { counts, permutation })
}

/// Maximum-weight perfect assignment on a square matrix; returns for each row
/// the column it is matched to. O(n³) shortest-augmenting-path form.
pub fn hungarian_max(weights: &[Vec<i64>]) -> Vec<usize> {
    let n = weights.len();
    if n == 0 {
        return Vec::new();
    }
    let max_w = weights
        .iter()
        .flat_map(|r| r.iter().copied())
        .max()
        .unwrap_or(0);
    // Minimize cost = max_w − weight.
    let cost: Vec<Vec<i64>> = weights
        .iter()
        .map(|r| r.iter().map(|&w| max_w - w).collect())
        .collect();

    // Potentials and matching over a 1-indexed frame.
    let inf = i64::MAX / 2;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut matched_col = vec![0usize; n + 1]; // matched_col[j] = row matched to column j

    for i in 1..=n {
        let mut min_v = vec![inf; n + 1];
        let mut visited = vec![false; n + 1];
        let mut way = vec![0usize; n + 1];
        matched_col[0] = i;
        let mut j0 = 0usize;
        loop {
            visited[j0] = true;
            let i0 = matched_col[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if visited[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < min_v[j] {
                    min_v[j] = cur;
                    way[j] = j0;
                }
                if min_v[j] < delta {
                    delta = min_v[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if visited[j] {
                    u[matched_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_v[j] -= delta;
                }
            }
            j0 = j1;
            if matched_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_col[j0] = matched_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        if matched_col[j] > 0 {
            row_to_col[matched_col[j] - 1] = j - 1;
        }
    }
    row_to_col
}
