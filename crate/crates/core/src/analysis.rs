//! Error accounting and robustness analyses on top of a clustering.
//!
//! Errors are counted per cluster: a ground-truth cluster of two or more
//! claims is *split* when its members land in more than one predicted
//! cluster, and a predicted cluster is *mismerged* when it holds members of
//! more than one ground-truth cluster.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::corpus::EmbeddingMatrix;
use crate::hac::{self, ClusterAssignment, Dendrogram};
use crate::metrics::{self, SilhouetteScorer};
use crate::{par, Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ErrorReport {
    pub split_count: usize,
    pub mismerge_count: usize,
    #[serde(skip)]
    pub split_flags: Vec<bool>,
    #[serde(skip)]
    pub mismerge_flags: Vec<bool>,
}

impl ErrorReport {
    /// `claim_id,split,mismerge` rows with 0/1 flags.
    pub fn flags_csv(&self, ids: &[String]) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["claim_id", "split", "mismerge"]).unwrap();
        for (i, id) in ids.iter().enumerate() {
            let flag = |b: bool| if b { "1" } else { "0" };
            w.write_record([id.as_str(), flag(self.split_flags[i]), flag(self.mismerge_flags[i])])
                .unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }
}

/// Clusters of `outer` whose members fall into two or more clusters of
/// `inner`.
fn spanning_clusters(outer: &ClusterAssignment, inner: &ClusterAssignment) -> Vec<bool> {
    let mut seen: Vec<Option<usize>> = vec![None; outer.k()];
    let mut spans = vec![false; outer.k()];
    for (&o, &i) in outer.labels().iter().zip(inner.labels()) {
        match seen[o] {
            None => seen[o] = Some(i),
            Some(first) if first != i => spans[o] = true,
            _ => {}
        }
    }
    spans
}

pub fn split_mismerge(truth: &ClusterAssignment, pred: &ClusterAssignment) -> Result<ErrorReport> {
    if truth.len() != pred.len() {
        return Err(Error::LengthMismatch {
            left: truth.len(),
            right: pred.len(),
        });
    }
    let split = spanning_clusters(truth, pred);
    let mismerge = spanning_clusters(pred, truth);
    Ok(ErrorReport {
        split_count: split.iter().filter(|&&s| s).count(),
        mismerge_count: mismerge.iter().filter(|&&m| m).count(),
        split_flags: truth.labels().iter().map(|&t| split[t]).collect(),
        mismerge_flags: pred.labels().iter().map(|&p| mismerge[p]).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LanguageRate {
    pub lang: String,
    pub occurrences: usize,
    pub split_claims: usize,
    pub mismerge_claims: usize,
    pub split_rate: f64,
    pub mismerge_rate: f64,
}

/// Per-language fraction of claims carrying each error flag, sorted by
/// language code.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LanguageErrorRates {
    pub languages: Vec<LanguageRate>,
}

impl LanguageErrorRates {
    /// `language,split_rate,mismerge_rate,occurrences` rows.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["language", "split_rate", "mismerge_rate", "occurrences"])
            .unwrap();
        for l in &self.languages {
            w.write_record([
                l.lang.clone(),
                l.split_rate.to_string(),
                l.mismerge_rate.to_string(),
                l.occurrences.to_string(),
            ])
            .unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }
}

pub fn language_error_rates<S: AsRef<str>>(langs: &[S], report: &ErrorReport) -> Result<LanguageErrorRates> {
    if langs.len() != report.split_flags.len() {
        return Err(Error::LengthMismatch {
            left: langs.len(),
            right: report.split_flags.len(),
        });
    }
    let mut tally: BTreeMap<&str, (usize, usize, usize)> = BTreeMap::new();
    for (i, lang) in langs.iter().enumerate() {
        let entry = tally.entry(lang.as_ref()).or_default();
        entry.0 += 1;
        entry.1 += usize::from(report.split_flags[i]);
        entry.2 += usize::from(report.mismerge_flags[i]);
    }
    Ok(LanguageErrorRates {
        languages: tally
            .into_iter()
            .map(|(lang, (occ, split, mis))| LanguageRate {
                lang: lang.to_string(),
                occurrences: occ,
                split_claims: split,
                mismerge_claims: mis,
                split_rate: split as f64 / occ as f64,
                mismerge_rate: mis as f64 / occ as f64,
            })
            .collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub ari: f64,
    pub ami: f64,
    pub silhouette: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassGain {
    pub claims: usize,
    pub clusters: usize,
    pub base: ClassMetrics,
    pub refined: ClassMetrics,
    /// `refined - base`, per metric.
    pub gain: ClassMetrics,
}

/// Metric gains split by ground-truth cluster language composition. A class
/// with fewer than two claims is `None`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GainReport {
    pub monolingual: Option<ClassGain>,
    pub multilingual: Option<ClassGain>,
}

/// Inputs for [`lingual_gain`], all aligned to corpus order.
pub struct GainInputs<'a, S> {
    pub langs: &'a [S],
    pub truth: &'a [Option<usize>],
    pub pred_base: &'a ClusterAssignment,
    pub pred_refined: &'a ClusterAssignment,
    pub emb_base: &'a EmbeddingMatrix,
    pub emb_refined: &'a EmbeddingMatrix,
}

pub fn lingual_gain<S: AsRef<str>>(
    inputs: &GainInputs<'_, S>,
    sample_cap: usize,
    seed: u64,
) -> Result<GainReport> {
    let n = inputs.truth.len();
    let lens = [
        inputs.langs.len(),
        inputs.pred_base.len(),
        inputs.pred_refined.len(),
        inputs.emb_base.n(),
        inputs.emb_refined.n(),
    ];
    if let Some(&bad) = lens.iter().find(|&&l| l != n) {
        return Err(Error::LengthMismatch { left: n, right: bad });
    }
    let mut langs_of: BTreeMap<usize, BTreeSet<&str>> = BTreeMap::new();
    for (i, t) in inputs.truth.iter().enumerate() {
        if let Some(t) = t {
            langs_of.entry(*t).or_default().insert(inputs.langs[i].as_ref());
        }
    }
    let class_rows = |multi: bool| -> Vec<usize> {
        (0..n)
            .filter(|&i| matches!(inputs.truth[i], Some(t) if (langs_of[&t].len() > 1) == multi))
            .collect()
    };
    let measure = |rows: &[usize], pred: &ClusterAssignment, emb: &EmbeddingMatrix| -> Result<ClassMetrics> {
        let truth = ClusterAssignment::from_raw(&rows.iter().map(|&i| inputs.truth[i]).collect::<Vec<_>>());
        let pred = pred.restrict(rows);
        let (silhouette, _) = metrics::silhouette(&emb.select(rows), &pred, sample_cap, seed)?;
        Ok(ClassMetrics {
            ari: metrics::ari(&truth, &pred)?,
            ami: metrics::ami(&truth, &pred)?,
            silhouette,
        })
    };
    let class = |multi: bool| -> Result<Option<ClassGain>> {
        let rows = class_rows(multi);
        if rows.len() < 2 {
            return Ok(None);
        }
        let base = measure(&rows, inputs.pred_base, inputs.emb_base)?;
        let refined = measure(&rows, inputs.pred_refined, inputs.emb_refined)?;
        let clusters = rows
            .iter()
            .filter_map(|&i| inputs.truth[i])
            .collect::<BTreeSet<_>>()
            .len();
        Ok(Some(ClassGain {
            claims: rows.len(),
            clusters,
            gain: ClassMetrics {
                ari: refined.ari - base.ari,
                ami: refined.ami - base.ami,
                silhouette: refined.silhouette - base.silhouette,
            },
            base,
            refined,
        }))
    };
    Ok(GainReport {
        monolingual: class(false)?,
        multilingual: class(true)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub k: usize,
    pub ari: f64,
    pub ami: f64,
    pub silhouette: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepCurve {
    pub points: Vec<SweepRow>,
    pub auc_ari: f64,
    pub auc_ami: f64,
    pub auc_ss: f64,
    pub max_ari: f64,
    pub max_ami: f64,
    pub max_ss: f64,
}

impl SweepCurve {
    pub fn from_points(points: Vec<SweepRow>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("sweep has no points"));
        }
        if points.windows(2).any(|w| w[0].k >= w[1].k) {
            return Err(Error::invalid("sweep k values must be strictly increasing"));
        }
        let ks: Vec<f64> = points.iter().map(|p| p.k as f64).collect();
        let series = |f: fn(&SweepRow) -> f64| points.iter().map(f).collect::<Vec<f64>>();
        let (ari, ami, ss) = (series(|p| p.ari), series(|p| p.ami), series(|p| p.silhouette));
        let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(SweepCurve {
            auc_ari: normalized_auc(&ks, &ari),
            auc_ami: normalized_auc(&ks, &ami),
            auc_ss: normalized_auc(&ks, &ss),
            max_ari: max(&ari),
            max_ami: max(&ami),
            max_ss: max(&ss),
            points,
        })
    }

    /// `k,ari,ami,ss` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,ari,ami,ss\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{},{}\n", p.k, p.ari, p.ami, p.silhouette));
        }
        out
    }
}

/// Trapezoidal area divided by the width of the x range. A single point
/// returns its own value.
pub fn normalized_auc(xs: &[f64], ys: &[f64]) -> f64 {
    if xs.len() == 1 {
        return ys[0];
    }
    let area: f64 = xs
        .windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (y[0] + y[1]) * (x[1] - x[0]))
        .sum();
    area / (xs[xs.len() - 1] - xs[0])
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepParams {
    pub band: f64,
    pub k_step: usize,
    pub sample_cap: usize,
    pub seed: u64,
}

impl Default for SweepParams {
    fn default() -> Self {
        SweepParams {
            band: 0.10,
            k_step: 1,
            sample_cap: metrics::DEFAULT_SAMPLE_CAP,
            seed: 0,
        }
    }
}

/// `k` values within `band` of `k_true`, clipped to `[2, n - 1]`.
pub fn sweep_range(k_true: usize, n: usize, band: f64, k_step: usize) -> Result<Vec<usize>> {
    if k_step == 0 {
        return Err(Error::invalid("k_step must be at least 1"));
    }
    let lo = ((1.0 - band) * k_true as f64 - 1e-9).ceil().max(2.0) as usize;
    let hi = (((1.0 + band) * k_true as f64 + 1e-9).floor() as usize).min(n.saturating_sub(1));
    if lo > hi {
        return Err(Error::invalid(format!(
            "empty k range around k_true = {k_true} for n = {n}"
        )));
    }
    let mut ks: Vec<usize> = (lo..=hi).step_by(k_step).collect();
    // Keep the upper edge so the AUC spans the whole band.
    if ks.last() != Some(&hi) {
        ks.push(hi);
    }
    Ok(ks)
}

/// ARI, AMI and silhouette at each cluster count near `k_true`. Supervised
/// metrics use only rows with a known ground truth.
pub fn config_sweep(
    matrix: &EmbeddingMatrix,
    dendrogram: &Dendrogram,
    truth: &[Option<usize>],
    k_true: usize,
    params: &SweepParams,
) -> Result<SweepCurve> {
    let n = matrix.n();
    if dendrogram.n() != n || truth.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: truth.len(),
        });
    }
    let ks = sweep_range(k_true, n, params.band, params.k_step)?;
    let labeled: Vec<usize> = (0..n).filter(|&i| truth[i].is_some()).collect();
    let truth_sub =
        ClusterAssignment::from_raw(&labeled.iter().map(|&i| truth[i].unwrap()).collect::<Vec<_>>());
    let scorer = SilhouetteScorer::new(matrix, params.sample_cap, params.seed)?;
    let rows = par::map_slice(&ks, |&k| -> Result<SweepRow> {
        let cut = hac::cut_by_count(dendrogram, k)?;
        let pred = cut.restrict(&labeled);
        Ok(SweepRow {
            k,
            ari: metrics::ari(&truth_sub, &pred)?,
            ami: metrics::ami(&truth_sub, &pred)?,
            silhouette: scorer.score(&cut)?.mean,
        })
    });
    SweepCurve::from_points(rows.into_iter().collect::<Result<Vec<_>>>()?)
}
