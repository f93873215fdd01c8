//! Cosine geometry over embedding rows.
//!
//! Storage is f32; every dot product and reduction accumulates in f64.

use serde::Serialize;

use crate::corpus::{ClaimPair, EmbeddingMatrix, PairLabel};
use crate::{par, Error, Result};

/// Default cap on condensed distance matrices (2 GiB).
pub const DEFAULT_MEMORY_CAP: u64 = 2 << 30;

const MIN_NORM: f64 = 1e-12;

pub const HISTOGRAM_BINS: usize = 50;
pub const HISTOGRAM_MAX: f64 = 2.0;

pub(crate) fn dot(u: &[f32], v: &[f32]) -> f64 {
    u.iter()
        .zip(v)
        .map(|(&a, &b)| f64::from(a) * f64::from(b))
        .sum()
}

pub(crate) fn dot64(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub(crate) fn norm(u: &[f32]) -> f64 {
    dot(u, u).sqrt()
}

/// Rows scaled to unit L2 norm.
pub fn normalize_rows(matrix: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    let data = normalized_f64(matrix)?.into_iter().map(|v| v as f32).collect();
    matrix.with_data(data, matrix.dim())
}

/// Unit-normalized rows in f64, row-major.
pub(crate) fn normalized_f64(matrix: &EmbeddingMatrix) -> Result<Vec<f64>> {
    let d = matrix.dim();
    let mut out = matrix.to_f64();
    for (i, row) in out.chunks_exact_mut(d).enumerate() {
        let norm = dot64(row, row).sqrt();
        if norm < MIN_NORM {
            return Err(Error::ZeroNorm(matrix.ids()[i].clone()));
        }
        row.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(out)
}

/// `1 - cos(u, v)`, clamped to `[0, 2]`.
pub fn cosine_distance(u: &[f32], v: &[f32]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            actual: v.len(),
        });
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu < MIN_NORM || nv < MIN_NORM {
        return Err(Error::ZeroNorm("<vector>".into()));
    }
    Ok(distance_from_cos(dot(u, v) / (nu * nv)))
}

fn distance_from_cos(cos: f64) -> f64 {
    (1.0 - cos).clamp(0.0, 2.0)
}

/// Upper-triangular pairwise distances, row-major over `i < j`.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f32>,
}

impl DistanceMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        if i == j {
            return 0.0;
        }
        self.values[condensed_index(self.n, i.min(j), i.max(j))]
    }
}

/// Position of pair `(i, j)`, `i < j`, in a condensed matrix over `n` points.
pub fn condensed_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    row_offset(n, i) + (j - i - 1)
}

fn row_offset(n: usize, i: usize) -> usize {
    i * (2 * n - i - 1) / 2
}

pub fn condensed_bytes(n: usize, elem_size: usize) -> u64 {
    let pairs = (n as u64) * (n as u64).saturating_sub(1) / 2;
    pairs * elem_size as u64
}

/// All pairwise cosine distances. Rows are processed in blocks of
/// `chunk_rows`; the output does not depend on the block size.
pub fn pairwise_cosine_distances(
    matrix: &EmbeddingMatrix,
    chunk_rows: usize,
    memory_cap: u64,
) -> Result<DistanceMatrix> {
    let n = matrix.n();
    if n < 2 {
        return Err(Error::invalid(format!(
            "pairwise distances need at least 2 rows, got {n}"
        )));
    }
    if chunk_rows == 0 {
        return Err(Error::invalid("chunk_rows must be at least 1"));
    }
    let bytes = condensed_bytes(n, std::mem::size_of::<f32>());
    if bytes > memory_cap {
        return Err(Error::MemoryCap {
            bytes,
            cap: memory_cap,
        });
    }
    let norms: Vec<f64> = (0..n).map(|i| norm(matrix.row(i))).collect();
    if let Some(i) = norms.iter().position(|&v| v < MIN_NORM) {
        return Err(Error::ZeroNorm(matrix.ids()[i].clone()));
    }

    let mut values = vec![0f32; n * (n - 1) / 2];
    // Each block of rows owns a contiguous, disjoint slice of the output.
    let mut blocks: Vec<(usize, usize, &mut [f32])> = Vec::new();
    let mut rest: &mut [f32] = &mut values;
    let mut start = 0;
    while start < n - 1 {
        let end = (start + chunk_rows).min(n - 1);
        let len = row_offset(n, end) - row_offset(n, start);
        let (head, tail) = rest.split_at_mut(len);
        blocks.push((start, end, head));
        rest = tail;
        start = end;
    }
    par::for_each_mut(&mut blocks, |(start, end, out)| {
        let mut k = 0;
        for i in *start..*end {
            let u = matrix.row(i);
            for j in i + 1..n {
                let cos = dot(u, matrix.row(j)) / (norms[i] * norms[j]);
                out[k] = distance_from_cos(cos) as f32;
                k += 1;
            }
        }
    });
    Ok(DistanceMatrix { n, values })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelFilter {
    Similar,
    Dissimilar,
    All,
}

impl LabelFilter {
    fn accepts(self, label: PairLabel) -> bool {
        match self {
            LabelFilter::Similar => label == PairLabel::Similar,
            LabelFilter::Dissimilar => label == PairLabel::Dissimilar,
            LabelFilter::All => true,
        }
    }
}

/// Summary of cosine distances over a set of claim pairs, with a fixed
/// 50-bin histogram over `[0, 2]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairDistanceStats {
    pub count: u64,
    pub mean: f64,
    pub std: f64,
    pub bins: Vec<u64>,
}

impl PairDistanceStats {
    pub fn from_distances(distances: &[f64]) -> Result<Self> {
        if distances.is_empty() {
            return Err(Error::invalid("no pairs to summarize"));
        }
        let count = distances.len() as f64;
        let mean = distances.iter().sum::<f64>() / count;
        let var = distances.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / count;
        let width = HISTOGRAM_MAX / HISTOGRAM_BINS as f64;
        let mut bins = vec![0u64; HISTOGRAM_BINS];
        for &d in distances {
            let b = ((d / width).floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1);
            bins[b] += 1;
        }
        Ok(PairDistanceStats {
            count: distances.len() as u64,
            mean,
            std: var.sqrt(),
            bins,
        })
    }

    /// `bin_left,count` rows.
    pub fn to_csv(&self) -> String {
        let width = HISTOGRAM_MAX / HISTOGRAM_BINS as f64;
        let mut out = String::from("bin_left,count\n");
        for (i, c) in self.bins.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i as f64 * width, c));
        }
        out
    }
}

/// Cosine distances of the pairs passing `filter`, in pair order.
pub fn pair_distances(
    matrix: &EmbeddingMatrix,
    pairs: &[ClaimPair],
    filter: LabelFilter,
) -> Result<Vec<f64>> {
    let resolve = |id: &str| {
        matrix
            .position(id)
            .ok_or_else(|| Error::invalid(format!("pair references unknown claim id {id:?}")))
    };
    pairs
        .iter()
        .filter(|p| filter.accepts(p.label))
        .map(|p| {
            let (a, b) = (resolve(&p.a)?, resolve(&p.b)?);
            cosine_distance(matrix.row(a), matrix.row(b))
        })
        .collect()
}

pub fn pair_distance_stats(
    matrix: &EmbeddingMatrix,
    pairs: &[ClaimPair],
    filter: LabelFilter,
) -> Result<PairDistanceStats> {
    PairDistanceStats::from_distances(&pair_distances(matrix, pairs, filter)?)
}
