//! Distance-threshold selection by silhouette maximization.
//!
//! A coarse grid of thresholds is scored first. Around the best grid
//! threshold the search then steps through the dendrogram itself: flat
//! clusterings only change at merge heights, so each refinement candidate is
//! the midpoint between two consecutive distinct merge heights, up to
//! `refine_count` clusterings on each side.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::EmbeddingMatrix;
use crate::hac::{self, Dendrogram};
use crate::metrics::{SilhouetteScorer, DEFAULT_SAMPLE_CAP};
use crate::{par, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AutotuneParams {
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub step: f64,
    pub refine_count: usize,
    pub sample_cap: usize,
    pub seed: u64,
}

impl Default for AutotuneParams {
    fn default() -> Self {
        AutotuneParams {
            grid_lo: 0.5,
            grid_hi: 1.5,
            step: 0.05,
            refine_count: 10,
            sample_cap: DEFAULT_SAMPLE_CAP,
            seed: 0,
        }
    }
}

impl AutotuneParams {
    fn validate(&self) -> Result<()> {
        if !(self.grid_lo.is_finite() && self.grid_hi.is_finite() && self.grid_lo < self.grid_hi) {
            return Err(Error::invalid("grid_lo must be below grid_hi"));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::invalid("grid step must be positive"));
        }
        Ok(())
    }

    /// Grid thresholds `grid_lo, grid_lo + step, ..., <= grid_hi`.
    pub fn grid(&self) -> Vec<f64> {
        let count = ((self.grid_hi - self.grid_lo) / self.step + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|m| round12(self.grid_lo + m as f64 * self.step))
            .collect()
    }
}

fn round12(v: f64) -> f64 {
    (v * 1e12).round() / 1e12
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub k: usize,
    pub silhouette: f64,
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AutotuneResult {
    pub best_threshold: f64,
    pub best_silhouette: f64,
    pub best_k: usize,
    pub grid: Vec<SweepPoint>,
    pub refinement: Vec<SweepPoint>,
}

impl AutotuneResult {
    /// `stage,threshold,k,silhouette` rows for grid then refinement.
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("stage,threshold,k,silhouette\n");
        for (stage, points) in [("grid", &self.grid), ("refine", &self.refinement)] {
            for p in points {
                out.push_str(&format!("{stage},{},{},{}\n", p.threshold, p.k, p.silhouette));
            }
        }
        out
    }
}

/// Scores each threshold, evaluating every distinct clustering once.
fn score_thresholds(
    scorer: &SilhouetteScorer,
    dendrogram: &Dendrogram,
    thresholds: &[f64],
) -> Result<Vec<SweepPoint>> {
    let counts: Vec<usize> = thresholds
        .iter()
        .map(|&t| dendrogram.merges_at_or_below(t))
        .collect();
    let mut unique = counts.clone();
    unique.sort_unstable();
    unique.dedup();
    let scored = par::map_slice(&unique, |&c| scorer.score(&dendrogram.assignment_after(c)));
    let mut by_count = std::collections::HashMap::new();
    for (c, detail) in unique.iter().zip(scored) {
        by_count.insert(*c, detail?);
    }
    Ok(thresholds
        .iter()
        .zip(&counts)
        .map(|(&t, c)| {
            let d = &by_count[c];
            SweepPoint {
                threshold: t,
                k: dendrogram.n() - c,
                silhouette: d.mean,
                degenerate: d.degenerate,
            }
        })
        .collect())
}

/// Best point: highest silhouette, then smaller threshold. Degenerate
/// points only win when nothing else exists.
fn best<'a>(points: impl Iterator<Item = &'a SweepPoint>, allow_degenerate: bool) -> Option<&'a SweepPoint> {
    points
        .filter(|p| allow_degenerate || !p.degenerate)
        .fold(None, |acc: Option<&SweepPoint>, p| match acc {
            Some(b) if b.silhouette > p.silhouette => Some(b),
            Some(b) if b.silhouette == p.silhouette && b.threshold <= p.threshold => Some(b),
            _ => Some(p),
        })
}

/// Midpoints between consecutive distinct merge heights realizing the
/// `refine_count` clusterings just below and just above the one at `t`.
pub fn refinement_thresholds(dendrogram: &Dendrogram, t: f64, refine_count: usize) -> Vec<f64> {
    let mut heights: Vec<f64> = dendrogram.heights().collect();
    heights.dedup();
    let p = heights.partition_point(|&h| h <= t);
    let mut out = Vec::new();
    for m in 1..=refine_count {
        if p > m {
            out.push(0.5 * (heights[p - m - 1] + heights[p - m]));
        }
        if p + m < heights.len() {
            out.push(0.5 * (heights[p + m - 1] + heights[p + m]));
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

pub fn select_threshold(
    matrix: &EmbeddingMatrix,
    dendrogram: &Dendrogram,
    params: &AutotuneParams,
) -> Result<AutotuneResult> {
    params.validate()?;
    if dendrogram.n() != matrix.n() {
        return Err(Error::LengthMismatch {
            left: dendrogram.n(),
            right: matrix.n(),
        });
    }
    let scorer = SilhouetteScorer::new(matrix, params.sample_cap, params.seed)?;
    let grid = score_thresholds(&scorer, dendrogram, &params.grid())?;
    let anchor = best(grid.iter(), false)
        .or_else(|| best(grid.iter(), true))
        .expect("grid is non-empty")
        .threshold;
    let refinement = score_thresholds(
        &scorer,
        dendrogram,
        &refinement_thresholds(dendrogram, anchor, params.refine_count),
    )?;
    let winner = best(grid.iter().chain(&refinement), false).ok_or(Error::NoValidClustering)?;
    Ok(AutotuneResult {
        best_threshold: winner.threshold,
        best_silhouette: winner.silhouette,
        best_k: winner.k,
        grid: grid.clone(),
        refinement: refinement.clone(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubsetAverage {
    pub mean_threshold: f64,
    pub thresholds: Vec<f64>,
    /// Sorted row indices of each subset.
    pub memberships: Vec<Vec<usize>>,
    pub runs: Vec<AutotuneResult>,
}

/// Averages the selected threshold over `subsets` random subsets of
/// `subset_size` rows, each clustered from scratch. With `n <= subset_size`
/// a single run covers the whole matrix.
pub fn subset_average_threshold(
    matrix: &EmbeddingMatrix,
    subset_size: usize,
    subsets: usize,
    params: &AutotuneParams,
) -> Result<SubsetAverage> {
    let n = matrix.n();
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 rows, got {n}")));
    }
    if subsets == 0 || subset_size < 2 {
        return Err(Error::invalid("need at least one subset of at least 2 rows"));
    }
    let memberships: Vec<Vec<usize>> = if n <= subset_size {
        vec![(0..n).collect()]
    } else {
        (0..subsets)
            .map(|s| {
                let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
                rng.set_stream(s as u64 + 1);
                let mut rows = rand::seq::index::sample(&mut rng, n, subset_size).into_vec();
                rows.sort_unstable();
                rows
            })
            .collect()
    };
    // Subsets run one after another: a matrix-backend dendrogram over 10k
    // rows already holds ~400 MB.
    let mut runs = Vec::with_capacity(memberships.len());
    for rows in &memberships {
        let sub = if rows.len() == n { matrix.clone() } else { matrix.select(rows) };
        let dendrogram = hac::build_dendrogram(&sub)?;
        runs.push(select_threshold(&sub, &dendrogram, params)?);
    }
    let thresholds: Vec<f64> = runs.iter().map(|r| r.best_threshold).collect();
    Ok(SubsetAverage {
        mean_threshold: thresholds.iter().sum::<f64>() / thresholds.len() as f64,
        thresholds,
        memberships,
        runs,
    })
}
