//! Ward agglomerative clustering via the nearest-neighbor chain.
//!
//! Heights use the distance-scale Ward convention: merging clusters `A` and
//! `B` happens at `sqrt(2 |A| |B| / (|A| + |B|)) * |c_A - c_B|`, which is
//! what the Lance-Williams recurrence produces from Euclidean leaf distances.
//!
//! Two interchangeable backends feed the chain. The matrix backend keeps a
//! condensed table of squared Ward distances and updates it with
//! Lance-Williams; the centroid backend keeps only cluster centroids and
//! evaluates distances on demand, using `O(n d)` memory.

use std::fmt::Write as _;

use serde::Serialize;

use crate::corpus::EmbeddingMatrix;
use crate::geometry::{self, condensed_index};
use crate::{par, Error, Result};

/// Largest `n` for which [`WardBackend::Auto`] uses the condensed matrix.
pub const MATRIX_BACKEND_MAX_N: usize = 20_000;

const UNIT_NORM_TOLERANCE: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

/// `n - 1` merges in non-decreasing height order. Leaves are nodes
/// `0..n`; merge `m` creates node `n + m`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dendrogram {
    n: usize,
    merges: Vec<Merge>,
}

impl Dendrogram {
    /// Validates and wraps a merge list.
    pub fn from_merges(n: usize, merges: Vec<Merge>) -> Result<Self> {
        if n < 1 || merges.len() != n - 1 {
            return Err(Error::invalid(format!(
                "dendrogram over {n} leaves needs {} merges, got {}",
                n.saturating_sub(1),
                merges.len()
            )));
        }
        let mut size = vec![1usize; 2 * n - 1];
        let mut used = vec![false; 2 * n - 1];
        let mut prev = 0.0;
        for (m, merge) in merges.iter().enumerate() {
            let node = n + m;
            for child in [merge.left, merge.right] {
                if child >= node || used[child] {
                    return Err(Error::invalid(format!(
                        "merge {m}: child {child} is unavailable"
                    )));
                }
                used[child] = true;
            }
            if merge.left == merge.right {
                return Err(Error::invalid(format!("merge {m} joins a node with itself")));
            }
            if !(merge.height.is_finite() && merge.height >= 0.0 && merge.height >= prev) {
                return Err(Error::invalid(format!(
                    "merge {m}: height {} breaks monotonicity",
                    merge.height
                )));
            }
            size[node] = size[merge.left] + size[merge.right];
            if size[node] != merge.size {
                return Err(Error::invalid(format!(
                    "merge {m}: size {} should be {}",
                    merge.size, size[node]
                )));
            }
            prev = merge.height;
        }
        Ok(Dendrogram { n, merges })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    pub fn heights(&self) -> impl Iterator<Item = f64> + '_ {
        self.merges.iter().map(|m| m.height)
    }

    /// Number of merges with height `<= t`.
    pub fn merges_at_or_below(&self, t: f64) -> usize {
        self.merges.partition_point(|m| m.height <= t)
    }

    /// Flat clustering after applying the first `count` merges.
    pub fn assignment_after(&self, count: usize) -> ClusterAssignment {
        let n = self.n;
        let mut leaf_of = Vec::with_capacity(2 * n - 1);
        leaf_of.extend(0..n);
        let mut sets = DisjointSets::new(n);
        for merge in &self.merges[..count.min(self.merges.len())] {
            let (l, r) = (leaf_of[merge.left], leaf_of[merge.right]);
            sets.union(l, r);
            leaf_of.push(l);
        }
        let roots: Vec<usize> = (0..n).map(|i| sets.find(i)).collect();
        ClusterAssignment::from_raw(&roots)
    }

    /// `merge_index,left,right,height,size` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("merge_index,left,right,height,size\n");
        for (m, merge) in self.merges.iter().enumerate() {
            writeln!(out, "{m},{},{},{},{}", merge.left, merge.right, merge.height, merge.size)
                .unwrap();
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut merges = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |what: &str| Error::Parse {
                path: "dendrogram.csv".into(),
                line: i + 1,
                message: what.to_string(),
            };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(bad("expected 5 columns"));
            }
            let int = |s: &str| s.trim().parse::<usize>().map_err(|e| bad(&e.to_string()));
            if int(fields[0])? != merges.len() {
                return Err(bad("merge_index out of sequence"));
            }
            merges.push(Merge {
                left: int(fields[1])?,
                right: int(fields[2])?,
                height: fields[3].trim().parse().map_err(|e: std::num::ParseFloatError| bad(&e.to_string()))?,
                size: int(fields[4])?,
            });
        }
        Dendrogram::from_merges(merges.len() + 1, merges)
    }
}

/// Dense flat labels `0..k`, numbered by first appearance in leaf order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct ClusterAssignment {
    labels: Vec<usize>,
    k: usize,
}

impl ClusterAssignment {
    /// Canonicalizes arbitrary labels.
    pub fn from_raw<T: Eq + std::hash::Hash>(raw: &[T]) -> Self {
        let mut ids = std::collections::HashMap::new();
        let labels: Vec<usize> = raw
            .iter()
            .map(|v| {
                let next = ids.len();
                *ids.entry(v).or_insert(next)
            })
            .collect();
        ClusterAssignment { k: ids.len(), labels }
    }

    pub fn singletons(n: usize) -> Self {
        ClusterAssignment {
            labels: (0..n).collect(),
            k: n,
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Labels restricted to `rows`, relabeled densely.
    pub fn restrict(&self, rows: &[usize]) -> ClusterAssignment {
        let sub: Vec<usize> = rows.iter().map(|&r| self.labels[r]).collect();
        ClusterAssignment::from_raw(&sub)
    }

    /// Cluster sizes indexed by label.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// `claim_id,label` rows.
    pub fn to_csv(&self, ids: &[String]) -> Result<String> {
        if ids.len() != self.labels.len() {
            return Err(Error::LengthMismatch {
                left: ids.len(),
                right: self.labels.len(),
            });
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["claim_id", "label"]).unwrap();
        for (id, label) in ids.iter().zip(&self.labels) {
            w.write_record([id.as_str(), &label.to_string()]).unwrap();
        }
        Ok(String::from_utf8(w.into_inner().unwrap()).unwrap())
    }

    /// Parses `claim_id,label` rows, in any order, covering exactly `ids`.
    pub fn from_csv(text: &str, ids: &[String]) -> Result<Self> {
        let position: std::collections::HashMap<&str, usize> =
            ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let mut raw: Vec<Option<String>> = vec![None; ids.len()];
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        for (i, rec) in reader.records().enumerate() {
            let line = i + 2;
            let bad = |message: String| Error::Parse {
                path: "assignments.csv".into(),
                line,
                message,
            };
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            if rec.len() != 2 {
                return Err(bad("expected claim_id,label".into()));
            }
            let row = *position
                .get(&rec[0])
                .ok_or_else(|| Error::UnknownId { id: rec[0].to_string(), line })?;
            if raw[row].replace(rec[1].to_string()).is_some() {
                return Err(Error::DuplicateId {
                    id: rec[0].to_string(),
                    line,
                    first_line: 0,
                });
            }
        }
        let missing: Vec<String> = raw
            .iter()
            .zip(ids)
            .filter(|(r, _)| r.is_none())
            .map(|(_, id)| id.clone())
            .collect();
        if !missing.is_empty() {
            let count = missing.len();
            return Err(Error::IdMismatch {
                count,
                sample: missing.into_iter().take(10).collect(),
            });
        }
        let raw: Vec<String> = raw.into_iter().map(Option::unwrap).collect();
        Ok(ClusterAssignment::from_raw(&raw))
    }
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum WardBackend {
    /// Matrix up to [`MATRIX_BACKEND_MAX_N`] points, centroids beyond.
    #[default]
    Auto,
    Matrix,
    Centroid,
}

/// Squared Ward dissimilarities between active clusters, addressed by slot.
/// A slot is the smallest leaf index of its cluster.
trait WardSpace: Sync {
    fn dist(&self, a: usize, b: usize) -> f64;
    /// Merge the cluster in `drop` into `keep`. `active` lists the other
    /// live slots.
    fn merge(&mut self, keep: usize, drop: usize, d_ab: f64, active: &[usize]);
}

struct MatrixSpace {
    n: usize,
    sq: Vec<f64>,
    size: Vec<f64>,
}

impl MatrixSpace {
    fn new(rows: &[f64], n: usize, d: usize) -> Self {
        let per_row = par::map_range(0..n, |i| {
            let u = &rows[i * d..(i + 1) * d];
            (i + 1..n)
                .map(|j| squared_euclidean(u, &rows[j * d..(j + 1) * d]))
                .collect::<Vec<f64>>()
        });
        MatrixSpace {
            n,
            sq: per_row.concat(),
            size: vec![1.0; n],
        }
    }

    fn idx(&self, a: usize, b: usize) -> usize {
        condensed_index(self.n, a.min(b), a.max(b))
    }
}

impl WardSpace for MatrixSpace {
    fn dist(&self, a: usize, b: usize) -> f64 {
        self.sq[self.idx(a, b)]
    }

    fn merge(&mut self, keep: usize, drop: usize, d_ab: f64, active: &[usize]) {
        let (na, nb) = (self.size[keep], self.size[drop]);
        for &k in active {
            let nk = self.size[k];
            let (dak, dbk) = (self.dist(keep, k), self.dist(drop, k));
            let updated = ((na + nk) * dak + (nb + nk) * dbk - nk * d_ab) / (na + nb + nk);
            let idx = self.idx(keep, k);
            self.sq[idx] = updated.max(0.0);
        }
        self.size[keep] = na + nb;
    }
}

struct CentroidSpace {
    d: usize,
    centroids: Vec<f64>,
    size: Vec<f64>,
}

impl WardSpace for CentroidSpace {
    fn dist(&self, a: usize, b: usize) -> f64 {
        let d = self.d;
        let (na, nb) = (self.size[a], self.size[b]);
        let sq = squared_euclidean(
            &self.centroids[a * d..(a + 1) * d],
            &self.centroids[b * d..(b + 1) * d],
        );
        2.0 * na * nb / (na + nb) * sq
    }

    fn merge(&mut self, keep: usize, drop: usize, _d_ab: f64, _active: &[usize]) {
        let d = self.d;
        let (na, nb) = (self.size[keep], self.size[drop]);
        for k in 0..d {
            let merged = (na * self.centroids[keep * d + k] + nb * self.centroids[drop * d + k]) / (na + nb);
            self.centroids[keep * d + k] = merged;
        }
        self.size[keep] = na + nb;
    }
}

fn squared_euclidean(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Ward dendrogram of unit-normalized rows.
pub fn build_dendrogram(matrix: &EmbeddingMatrix) -> Result<Dendrogram> {
    build_dendrogram_with(matrix, WardBackend::Auto)
}

pub fn build_dendrogram_with(matrix: &EmbeddingMatrix, backend: WardBackend) -> Result<Dendrogram> {
    let n = matrix.n();
    if n < 2 {
        return Err(Error::invalid(format!("clustering needs at least 2 rows, got {n}")));
    }
    for i in 0..n {
        let norm = geometry::norm(matrix.row(i));
        if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(Error::NotNormalized {
                row: i,
                id: matrix.ids()[i].clone(),
                norm,
            });
        }
    }
    let d = matrix.dim();
    let rows = matrix.to_f64();
    let use_matrix = match backend {
        WardBackend::Matrix => true,
        WardBackend::Centroid => false,
        WardBackend::Auto => n <= MATRIX_BACKEND_MAX_N,
    };
    let raw = if use_matrix {
        nn_chain(n, MatrixSpace::new(&rows, n, d))
    } else {
        nn_chain(
            n,
            CentroidSpace {
                d,
                centroids: rows,
                size: vec![1.0; n],
            },
        )
    };
    Ok(label_merges(n, raw))
}

/// Runs the chain; returns `(slot_a, slot_b, squared height)` in discovery
/// order.
fn nn_chain<S: WardSpace>(n: usize, mut space: S) -> Vec<(usize, usize, f64)> {
    let mut active: Vec<usize> = (0..n).collect();
    let mut chain: Vec<usize> = Vec::with_capacity(n);
    let mut merges = Vec::with_capacity(n - 1);
    while active.len() > 1 {
        if chain.is_empty() {
            chain.push(*active.iter().min().unwrap());
        }
        let (a, b, d_ab) = loop {
            let a = *chain.last().unwrap();
            let prev = chain.len().checked_sub(2).map(|i| chain[i]);
            let (mut b, mut best) = par::argmin_by_key(&active, |c| {
                if c == a {
                    f64::INFINITY
                } else {
                    space.dist(a, c)
                }
            })
            .expect("at least two active clusters");
            // Prefer the predecessor on ties so the chain always terminates.
            if let Some(p) = prev {
                let dp = space.dist(a, p);
                if dp <= best {
                    b = p;
                    best = dp;
                }
            }
            if Some(b) == prev {
                break (a, b, best);
            }
            chain.push(b);
        };
        chain.truncate(chain.len() - 2);
        let (keep, drop) = (a.min(b), a.max(b));
        let pos = active.iter().position(|&s| s == drop).unwrap();
        active.swap_remove(pos);
        let others: Vec<usize> = active.iter().copied().filter(|&s| s != keep).collect();
        space.merge(keep, drop, d_ab, &others);
        merges.push((keep, drop, d_ab));
    }
    merges
}

/// Sorts chain merges by height and assigns node ids.
fn label_merges(n: usize, mut raw: Vec<(usize, usize, f64)>) -> Dendrogram {
    raw.sort_by(|x, y| x.2.total_cmp(&y.2));
    let mut sets = DisjointSets::new(n);
    // Node id currently standing for the set rooted at each leaf.
    let mut node_of_root: Vec<usize> = (0..n).collect();
    let mut size_of_root = vec![1usize; n];
    let mut merges = Vec::with_capacity(n - 1);
    for (m, (a, b, sq)) in raw.into_iter().enumerate() {
        let (ra, rb) = (sets.find(a), sets.find(b));
        let (na, nb) = (node_of_root[ra], node_of_root[rb]);
        let size = size_of_root[ra] + size_of_root[rb];
        sets.union(ra, rb);
        let root = sets.find(ra);
        node_of_root[root] = n + m;
        size_of_root[root] = size;
        merges.push(Merge {
            left: na.min(nb),
            right: na.max(nb),
            height: sq.max(0.0).sqrt(),
            size,
        });
    }
    Dendrogram { n, merges }
}

/// Connected components of all merges with height `<= t`.
pub fn cut_by_threshold(dendrogram: &Dendrogram, t: f64) -> ClusterAssignment {
    dendrogram.assignment_after(dendrogram.merges_at_or_below(t))
}

/// Exactly `k` clusters, from the first `n - k` merges.
pub fn cut_by_count(dendrogram: &Dendrogram, k: usize) -> Result<ClusterAssignment> {
    let n = dendrogram.n;
    if k < 1 || k > n {
        return Err(Error::invalid(format!("cluster count {k} outside 1..={n}")));
    }
    Ok(dendrogram.assignment_after(n - k))
}
