//! Clustering agreement and quality metrics.
//!
//! All entropies use natural logarithms. Pair-counting terms are exact
//! integers; only the final ratios are floating point.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::EmbeddingMatrix;
use crate::geometry::{self, dot64};
use crate::hac::ClusterAssignment;
use crate::{par, Error, Result};

/// Default number of points scored by [`silhouette`] before sampling.
pub const DEFAULT_SAMPLE_CAP: usize = 5000;

/// Sparse co-membership counts between a reference and a predicted labeling.
#[derive(Clone, Debug, PartialEq)]
pub struct ContingencyTable {
    /// `((true label, predicted label), count)` sorted by labels.
    pub cells: Vec<((usize, usize), u64)>,
    pub row_sums: Vec<u64>,
    pub col_sums: Vec<u64>,
    pub n: u64,
}

impl ContingencyTable {
    pub fn new(truth: &ClusterAssignment, pred: &ClusterAssignment) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::LengthMismatch {
                left: truth.len(),
                right: pred.len(),
            });
        }
        let mut cells: BTreeMap<(usize, usize), u64> = BTreeMap::new();
        let mut row_sums = vec![0u64; truth.k()];
        let mut col_sums = vec![0u64; pred.k()];
        for (&t, &p) in truth.labels().iter().zip(pred.labels()) {
            *cells.entry((t, p)).or_default() += 1;
            row_sums[t] += 1;
            col_sums[p] += 1;
        }
        Ok(ContingencyTable {
            cells: cells.into_iter().collect(),
            row_sums,
            col_sums,
            n: truth.len() as u64,
        })
    }

    fn mutual_information(&self) -> f64 {
        let n = self.n as f64;
        self.cells
            .iter()
            .map(|&((i, j), c)| {
                let c = c as f64;
                c / n * (n * c / (self.row_sums[i] as f64 * self.col_sums[j] as f64)).ln()
            })
            .sum()
    }
}

fn entropy(counts: &[u64], n: u64) -> f64 {
    let n = n as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

fn comb2(v: u64) -> i128 {
    let v = i128::from(v);
    v * (v - 1) / 2
}

fn require_pairs(truth: &ClusterAssignment, pred: &ClusterAssignment) -> Result<ContingencyTable> {
    let table = ContingencyTable::new(truth, pred)?;
    if table.n < 2 {
        return Err(Error::invalid(format!("need at least 2 points, got {}", table.n)));
    }
    Ok(table)
}

/// Adjusted Rand index.
pub fn ari(truth: &ClusterAssignment, pred: &ClusterAssignment) -> Result<f64> {
    let table = require_pairs(truth, pred)?;
    let index: i128 = table.cells.iter().map(|&(_, c)| comb2(c)).sum();
    let rows: i128 = table.row_sums.iter().map(|&c| comb2(c)).sum();
    let cols: i128 = table.col_sums.iter().map(|&c| comb2(c)).sum();
    let total = comb2(table.n);
    // Both sides scaled by 2 * C(n, 2) to stay in integers.
    let num = 2 * (index * total - rows * cols);
    let den = (rows + cols) * total - 2 * rows * cols;
    if den == 0 {
        // Only reachable when both sides are one cluster or both all singletons.
        return Ok(if same_partition(truth, pred) { 1.0 } else { 0.0 });
    }
    Ok(num as f64 / den as f64)
}

fn same_partition(a: &ClusterAssignment, b: &ClusterAssignment) -> bool {
    ClusterAssignment::from_raw(a.labels()) == ClusterAssignment::from_raw(b.labels())
}

/// `ln k!` for `k = 0..=n`.
fn log_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(0.0);
    let mut acc = 0.0;
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// Expected mutual information under the fixed-marginals hypergeometric
/// model, summed exactly over every feasible cell count.
pub fn expected_mutual_information(row_sums: &[u64], col_sums: &[u64], n: u64) -> f64 {
    let lf = log_factorials(n as usize);
    // Marginals repeat heavily; sum once per distinct (a, b) value.
    let tally = |sums: &[u64]| {
        let mut m: BTreeMap<u64, u64> = BTreeMap::new();
        for &s in sums.iter().filter(|&&s| s > 0) {
            *m.entry(s).or_default() += 1;
        }
        m.into_iter().collect::<Vec<_>>()
    };
    let rows = tally(row_sums);
    let cols = tally(col_sums);
    let nf = n as f64;
    let nu = n as usize;
    let per_row = par::map_slice(&rows, |&(a, a_mult)| {
        let a = a as usize;
        let mut acc = 0.0;
        for &(b, b_mult) in &cols {
            let b = b as usize;
            let lo = (a + b).saturating_sub(nu).max(1);
            let hi = a.min(b);
            let fixed = lf[a] + lf[b] + lf[nu - a] + lf[nu - b] - lf[nu];
            let mut cell = 0.0;
            for nij in lo..=hi {
                let log_p = fixed - lf[nij] - lf[a - nij] - lf[b - nij] - lf[nu + nij - a - b];
                let x = nij as f64;
                cell += x / nf * (nf * x / (a as f64 * b as f64)).ln() * log_p.exp();
            }
            acc += (b_mult as f64) * cell;
        }
        acc * a_mult as f64
    });
    per_row.iter().sum()
}

/// Adjusted mutual information with arithmetic-mean normalization.
pub fn ami(truth: &ClusterAssignment, pred: &ClusterAssignment) -> Result<f64> {
    let table = require_pairs(truth, pred)?;
    if same_partition(truth, pred) {
        return Ok(1.0);
    }
    let mi = table.mutual_information();
    let emi = expected_mutual_information(&table.row_sums, &table.col_sums, table.n);
    let mean = 0.5 * (entropy(&table.row_sums, table.n) + entropy(&table.col_sums, table.n));
    let den = mean - emi;
    if den.abs() < 1e-15 {
        return Ok(0.0);
    }
    Ok(((mi - emi) / den).clamp(-1.0, 1.0))
}

/// Homogeneity, completeness and V-measure.
pub fn homogeneity_completeness_v(
    truth: &ClusterAssignment,
    pred: &ClusterAssignment,
) -> Result<(f64, f64, f64)> {
    let table = ContingencyTable::new(truth, pred)?;
    if table.n == 0 {
        return Err(Error::invalid("need at least 1 point"));
    }
    let n = table.n as f64;
    let h_true = entropy(&table.row_sums, table.n);
    let h_pred = entropy(&table.col_sums, table.n);
    let (mut h_true_given_pred, mut h_pred_given_true) = (0.0, 0.0);
    for &((i, j), c) in &table.cells {
        let c = c as f64;
        h_true_given_pred -= c / n * (c / table.col_sums[j] as f64).ln();
        h_pred_given_true -= c / n * (c / table.row_sums[i] as f64).ln();
    }
    let h = if h_true == 0.0 {
        1.0
    } else {
        (1.0 - h_true_given_pred / h_true).clamp(0.0, 1.0)
    };
    let c = if h_pred == 0.0 {
        1.0
    } else {
        (1.0 - h_pred_given_true / h_pred).clamp(0.0, 1.0)
    };
    let v = if h + c == 0.0 { 0.0 } else { 2.0 * h * c / (h + c) };
    Ok((h, c, v))
}

/// Per-point silhouette terms for the scored rows.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SilhouetteDetail {
    /// Row indices that were scored, ascending.
    pub rows: Vec<usize>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub s: Vec<f64>,
    pub mean: f64,
    /// `k = 1` or `k = n`: no silhouette exists and `mean` is -1.
    pub degenerate: bool,
}

impl SilhouetteDetail {
    /// `claim_id,a,b,s` rows.
    pub fn to_csv(&self, ids: &[String]) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["claim_id", "a", "b", "s"]).unwrap();
        for (k, &row) in self.rows.iter().enumerate() {
            w.write_record([
                ids[row].as_str(),
                &self.a[k].to_string(),
                &self.b[k].to_string(),
                &self.s[k].to_string(),
            ])
            .unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }
}

pub const DEGENERATE_SILHOUETTE: f64 = -1.0;

/// Cosine silhouette scorer with a fixed sample, reusable across many
/// labelings of the same matrix.
///
/// Mean distances to a cluster come from cluster sums of unit rows:
/// `mean_{j in C} (1 - x_i . x_j) = 1 - x_i . S_C / |C|`.
pub struct SilhouetteScorer {
    rows: Vec<f64>,
    n: usize,
    d: usize,
    sample: Vec<usize>,
}

impl SilhouetteScorer {
    /// Scores every row when `n <= sample_cap`, else a seeded uniform
    /// sample of `sample_cap` rows measured against all rows.
    pub fn new(matrix: &EmbeddingMatrix, sample_cap: usize, seed: u64) -> Result<Self> {
        if sample_cap == 0 {
            return Err(Error::invalid("sample_cap must be at least 1"));
        }
        let n = matrix.n();
        let rows = geometry::normalized_f64(matrix)?;
        let sample = if n <= sample_cap {
            (0..n).collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = rand::seq::index::sample(&mut rng, n, sample_cap).into_vec();
            s.sort_unstable();
            s
        };
        Ok(SilhouetteScorer {
            rows,
            n,
            d: matrix.dim(),
            sample,
        })
    }

    pub fn sample(&self) -> &[usize] {
        &self.sample
    }

    pub fn score(&self, assignment: &ClusterAssignment) -> Result<SilhouetteDetail> {
        if assignment.len() != self.n {
            return Err(Error::LengthMismatch {
                left: assignment.len(),
                right: self.n,
            });
        }
        let k = assignment.k();
        if k <= 1 || k >= self.n {
            return Ok(SilhouetteDetail {
                mean: DEGENERATE_SILHOUETTE,
                degenerate: true,
                ..Default::default()
            });
        }
        let d = self.d;
        let sizes = assignment.sizes();
        let mut sums = vec![0.0; k * d];
        for (i, &label) in assignment.labels().iter().enumerate() {
            let row = &self.rows[i * d..(i + 1) * d];
            sums[label * d..(label + 1) * d]
                .iter_mut()
                .zip(row)
                .for_each(|(s, x)| *s += x);
        }
        let terms = par::map_slice(&self.sample, |&i| {
            let x = &self.rows[i * d..(i + 1) * d];
            let own = assignment.labels()[i];
            let mut b = f64::INFINITY;
            let mut a = 0.0;
            for c in 0..k {
                let dot = dot64(x, &sums[c * d..(c + 1) * d]);
                let size = sizes[c] as f64;
                if c == own {
                    if sizes[c] > 1 {
                        a = ((size - 1.0) - (dot - dot64(x, x))) / (size - 1.0);
                    }
                } else {
                    b = b.min(1.0 - dot / size);
                }
            }
            let s = if sizes[own] == 1 {
                0.0
            } else {
                let m = a.max(b);
                if m > 0.0 {
                    ((b - a) / m).clamp(-1.0, 1.0)
                } else {
                    0.0
                }
            };
            (a, b, s)
        });
        let mean = terms.iter().map(|t| t.2).sum::<f64>() / terms.len() as f64;
        Ok(SilhouetteDetail {
            rows: self.sample.clone(),
            a: terms.iter().map(|t| t.0).collect(),
            b: terms.iter().map(|t| t.1).collect(),
            s: terms.iter().map(|t| t.2).collect(),
            mean,
            degenerate: false,
        })
    }
}

/// Mean cosine silhouette. Degenerate clusterings return `-1` with the
/// detail's `degenerate` flag set instead of an error.
pub fn silhouette(
    matrix: &EmbeddingMatrix,
    assignment: &ClusterAssignment,
    sample_cap: usize,
    seed: u64,
) -> Result<(f64, SilhouetteDetail)> {
    let detail = SilhouetteScorer::new(matrix, sample_cap, seed)?.score(assignment)?;
    Ok((detail.mean, detail))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub ari: f64,
    pub ami: f64,
    pub homogeneity: f64,
    pub completeness: f64,
    pub v_measure: f64,
    pub silhouette: f64,
    pub silhouette_degenerate: bool,
    pub k_pred: usize,
    pub k_true: usize,
    /// Claims with a ground-truth cluster; supervised metrics use only these.
    pub n_labeled: usize,
}

/// Full metric bundle. Supervised metrics run on claims with a known
/// ground-truth cluster; the silhouette runs on every row.
pub fn evaluate(
    truth: &[Option<usize>],
    pred: &ClusterAssignment,
    matrix: &EmbeddingMatrix,
    sample_cap: usize,
    seed: u64,
) -> Result<(EvaluationReport, SilhouetteDetail)> {
    if truth.len() != pred.len() || matrix.n() != pred.len() {
        return Err(Error::LengthMismatch {
            left: truth.len(),
            right: pred.len(),
        });
    }
    let labeled: Vec<usize> = (0..truth.len()).filter(|&i| truth[i].is_some()).collect();
    let t = ClusterAssignment::from_raw(&labeled.iter().map(|&i| truth[i].unwrap()).collect::<Vec<_>>());
    let p = pred.restrict(&labeled);
    let (homogeneity, completeness, v_measure) = homogeneity_completeness_v(&t, &p)?;
    let (silhouette, detail) = silhouette(matrix, pred, sample_cap, seed)?;
    Ok((
        EvaluationReport {
            ari: ari(&t, &p)?,
            ami: ami(&t, &p)?,
            homogeneity,
            completeness,
            v_measure,
            silhouette,
            silhouette_degenerate: detail.degenerate,
            k_pred: pred.k(),
            k_true: t.k(),
            n_labeled: labeled.len(),
        },
        detail,
    ))
}

/// Entropy-normalized mutual information with the arithmetic mean.
pub fn nmi_arithmetic(truth: &ClusterAssignment, pred: &ClusterAssignment) -> Result<f64> {
    let table = ContingencyTable::new(truth, pred)?;
    let mean = 0.5 * (entropy(&table.row_sums, table.n) + entropy(&table.col_sums, table.n));
    if mean == 0.0 {
        return Ok(1.0);
    }
    Ok(table.mutual_information() / mean)
}
