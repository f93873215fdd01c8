use std::path::Path;

use claimclust_core::adapter::{self, TrainTrace};
use claimclust_core::analysis::{self, GainInputs, GainReport, LanguageErrorRates, SweepCurve};
use claimclust_core::autotune::{self, AutotuneResult};
use claimclust_core::corpus::{self, Corpus, CorpusCounts, EmbeddingMatrix, PairCounts};
use claimclust_core::geometry::{self, LabelFilter, PairDistanceStats};
use claimclust_core::hac::{self, ClusterAssignment, Dendrogram, WardBackend};
use claimclust_core::metrics::{self, EvaluationReport};
use serde::Serialize;

use crate::config::RunConfig;
use crate::{CliError, Command};

type Result<T> = std::result::Result<T, CliError>;

pub fn dispatch(command: Command, cfg: &RunConfig) -> Result<()> {
    match command {
        Command::IngestCheck => ingest_check(cfg),
        Command::Train => train(cfg),
        Command::Project => project(cfg),
        Command::Cluster => cluster(cfg),
        Command::Evaluate => evaluate(cfg),
        Command::Errors => errors(cfg),
        Command::Gain => gain(cfg),
        Command::Sweep => sweep(cfg),
        Command::Pairdist => pairdist(cfg),
    }
}

#[derive(Serialize)]
struct Report<'a, T> {
    command: &'a str,
    seed: u64,
    config: &'a RunConfig,
    result: T,
}

fn write_report<T: Serialize>(cfg: &RunConfig, command: &str, result: T) -> Result<()> {
    let report = Report {
        command,
        seed: cfg.seed,
        config: cfg,
        result,
    };
    let mut text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    write_file(&cfg.out_dir.join(format!("{command}.json")), &text)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("reading {}: {e}", path.display())))
}

fn load_corpus(cfg: &RunConfig) -> Result<Corpus> {
    Ok(corpus::load_claims(cfg.input("claims")?)?)
}

fn load_matrix(cfg: &RunConfig, key: &str, corpus: &Corpus) -> Result<EmbeddingMatrix> {
    Ok(corpus::load_embeddings(cfg.input(key)?, corpus)?)
}

fn load_assignment(cfg: &RunConfig, key: &str, ids: &[String]) -> Result<ClusterAssignment> {
    let path = cfg.input(key)?;
    ClusterAssignment::from_csv(&read_file(path)?, ids)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn corpus_ids(corpus: &Corpus) -> Vec<String> {
    corpus.ids().map(str::to_string).collect()
}

#[derive(Serialize)]
struct EmbeddingSummary {
    n: usize,
    dim: usize,
    max_norm_deviation: f64,
}

#[derive(Serialize)]
struct IngestReport {
    claims: CorpusCounts,
    pairs: Option<PairCounts>,
    embeddings: Option<EmbeddingSummary>,
}

fn ingest_check(cfg: &RunConfig) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    let pairs = match cfg.pairs {
        Some(_) => Some(corpus::pair_counts(&corpus::load_pairs(cfg.input("pairs")?, &corpus)?)),
        None => None,
    };
    let embeddings = match cfg.embeddings {
        Some(_) => {
            let m = load_matrix(cfg, "embeddings", &corpus)?;
            let max_norm_deviation = (0..m.n())
                .map(|i| {
                    let row = m.row(i);
                    let norm: f64 = row.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
                    (norm - 1.0).abs()
                })
                .fold(0.0, f64::max);
            Some(EmbeddingSummary {
                n: m.n(),
                dim: m.dim(),
                max_norm_deviation,
            })
        }
        None => None,
    };
    write_report(
        cfg,
        "ingest-check",
        IngestReport {
            claims: corpus.counts(),
            pairs,
            embeddings,
        },
    )
}

#[derive(Serialize)]
struct TrainReport<'a> {
    adapter: &'a Path,
    d_in: usize,
    d_out: usize,
    similar_pairs: u64,
    trace: TrainTrace,
}

fn train(cfg: &RunConfig) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    let pairs = corpus::load_pairs(cfg.input("pairs")?, &corpus)?;
    let emb = geometry::normalize_rows(&load_matrix(cfg, "embeddings", &corpus)?)?;
    let (model, trace) = adapter::train_adapter(&emb, &pairs, &cfg.train())?;
    let out = cfg.output("adapter");
    adapter::save_adapter(&model, out)?;
    let mut losses = String::from("step,loss\n");
    for (i, l) in trace.step_losses.iter().enumerate() {
        losses.push_str(&format!("{i},{l}\n"));
    }
    write_file(&cfg.out_dir.join("train_loss.csv"), &losses)?;
    write_report(
        cfg,
        "train",
        TrainReport {
            adapter: out,
            d_in: model.d_in,
            d_out: model.d_out,
            similar_pairs: trace.positive_before.count,
            trace,
        },
    )
}

#[derive(Serialize)]
struct ProjectReport<'a> {
    projected: &'a Path,
    n: usize,
    d_in: usize,
    d_out: usize,
}

fn project(cfg: &RunConfig) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    let emb = geometry::normalize_rows(&load_matrix(cfg, "embeddings", &corpus)?)?;
    let model = adapter::load_adapter(cfg.input("adapter")?)?;
    let projected = adapter::apply_adapter(&emb, &model)?;
    let out = cfg.output("projected");
    corpus::write_embeddings(&projected, out)?;
    write_report(
        cfg,
        "project",
        ProjectReport {
            projected: out,
            n: projected.n(),
            d_in: model.d_in,
            d_out: model.d_out,
        },
    )
}

#[derive(Serialize)]
struct ClusterReport {
    n: usize,
    backend: &'static str,
    threshold: f64,
    k: usize,
    /// Present when the whole set was tuned in one run.
    autotune: Option<AutotuneResult>,
    /// Present when the threshold is a mean over random subsets.
    subset_thresholds: Option<Vec<f64>>,
    subset_runs: Option<Vec<AutotuneResult>>,
}

fn cluster(cfg: &RunConfig) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    let emb = geometry::normalize_rows(&load_matrix(cfg, "embeddings", &corpus)?)?;
    let n = emb.n();
    let (backend, name) = if geometry::condensed_bytes(n, 8) <= cfg.memory_cap {
        (WardBackend::Matrix, "matrix")
    } else {
        (WardBackend::Centroid, "centroid")
    };
    let dendrogram = hac::build_dendrogram_with(&emb, backend)?;
    write_file(cfg.output("dendrogram"), &dendrogram.to_csv())?;

    let mut report = ClusterReport {
        n,
        backend: name,
        threshold: 0.0,
        k: 0,
        autotune: None,
        subset_thresholds: None,
        subset_runs: None,
    };
    report.threshold = match (cfg.threshold, cfg.auto_threshold) {
        (Some(_), true) => {
            return Err(CliError::Validation("set either threshold or auto_threshold, not both".into()))
        }
        (None, false) => {
            return Err(CliError::Validation("cluster needs --threshold or --auto-threshold".into()))
        }
        (Some(t), false) => t,
        (None, true) if n <= cfg.subset_size => {
            let result = autotune::select_threshold(&emb, &dendrogram, &cfg.autotune())?;
            write_file(&cfg.out_dir.join("autotune_curve.csv"), &result.curve_csv())?;
            let t = result.best_threshold;
            report.autotune = Some(result);
            t
        }
        (None, true) => {
            let avg = autotune::subset_average_threshold(&emb, cfg.subset_size, cfg.subsets, &cfg.autotune())?;
            for (s, run) in avg.runs.iter().enumerate() {
                write_file(&cfg.out_dir.join(format!("autotune_curve_subset{s}.csv")), &run.curve_csv())?;
            }
            report.subset_thresholds = Some(avg.thresholds);
            report.subset_runs = Some(avg.runs);
            avg.mean_threshold
        }
    };
    let assignment = hac::cut_by_threshold(&dendrogram, report.threshold);
    report.k = assignment.k();
    write_file(cfg.output("assignments"), &assignment.to_csv(emb.ids())?)?;
    write_report(cfg, "cluster", report)
}

fn evaluate(cfg: &RunConfig) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    let emb = load_matrix(cfg, "embeddings", &corpus)?;
    let ids = corpus_ids(&corpus);
    let pred = load_assignment(cfg, "assignments", &ids)?;
    let (report, detail): (EvaluationReport, _) =
        metrics::evaluate(&corpus.truth_labels(), &pred, &emb, cfg.sample_cap, cfg.seed)?;
    write_file(&cfg.out_dir.join("silhouette.csv"), &detail.to_csv(&ids))?;
    write_report(cfg, "evaluate", report)
}

/// Truth and prediction restricted to claims with a ground-truth cluster.
fn labeled_view(corpus: &Corpus, pred: &ClusterAssignment) -> Result<(Vec<usize>, ClusterAssignment, ClusterAssignment)> {
    let truth = corpus.truth_labels();
    let rows: Vec<usize> = (0..truth.len()).filter(|&i| truth[i].is_some()).collect();
    if rows.is_empty() {
        return Err(CliError::Validation("no claim carries a ground-truth cluster".into()));
    }
    let t = ClusterAssignment::from_raw(&rows.iter().map(|&i| truth[i].unwrap()).collect::<Vec<_>>());
    let p = pred.restrict(&rows);
    Ok((rows, t, p))
}

#[derive(Serialize)]
struct ErrorsReport {
    labeled_claims: usize,
    split_count: usize,
    mismerge_count: usize,
    languages: LanguageErrorRates,
}

fn errors(cfg: &RunConfig) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    let ids = corpus_ids(&corpus);
    let pred = load_assignment(cfg, "assignments", &ids)?;
    let (rows, truth, pred) = labeled_view(&corpus, &pred)?;
    let report = analysis::split_mismerge(&truth, &pred)?;
    let langs: Vec<&str> = rows.iter().map(|&i| corpus.claims()[i].lang.as_str()).collect();
    let rates = analysis::language_error_rates(&langs, &report)?;
    let labeled_ids: Vec<String> = rows.iter().map(|&i| ids[i].clone()).collect();
    write_file(&cfg.out_dir.join("error_flags.csv"), &report.flags_csv(&labeled_ids))?;
    write_file(&cfg.out_dir.join("language_errors.csv"), &rates.to_csv())?;
    write_report(
        cfg,
        "errors",
        ErrorsReport {
            labeled_claims: rows.len(),
            split_count: report.split_count,
            mismerge_count: report.mismerge_count,
            languages: rates,
        },
    )
}

fn gain(cfg: &RunConfig) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    let ids = corpus_ids(&corpus);
    let emb_base = load_matrix(cfg, "base_embeddings", &corpus)?;
    let emb_refined = load_matrix(cfg, "refined_embeddings", &corpus)?;
    let pred_base = load_assignment(cfg, "base_assignments", &ids)?;
    let pred_refined = load_assignment(cfg, "refined_assignments", &ids)?;
    let langs: Vec<&str> = corpus.claims().iter().map(|c| c.lang.as_str()).collect();
    let truth = corpus.truth_labels();
    let report: GainReport = analysis::lingual_gain(
        &GainInputs {
            langs: &langs,
            truth: &truth,
            pred_base: &pred_base,
            pred_refined: &pred_refined,
            emb_base: &emb_base,
            emb_refined: &emb_refined,
        },
        cfg.sample_cap,
        cfg.seed,
    )?;
    write_report(cfg, "gain", report)
}

#[derive(Serialize)]
struct SweepReport {
    k_true: usize,
    curve: SweepCurve,
}

fn sweep(cfg: &RunConfig) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    let emb = load_matrix(cfg, "embeddings", &corpus)?;
    let path = cfg.input("dendrogram")?;
    let dendrogram = Dendrogram::from_csv(&read_file(path)?)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    if dendrogram.n() != emb.n() {
        return Err(CliError::Validation(format!(
            "dendrogram covers {} leaves but there are {} claims",
            dendrogram.n(),
            emb.n()
        )));
    }
    let truth = corpus.truth_labels();
    let k_true = corpus.counts().clusters;
    let curve = analysis::config_sweep(&emb, &dendrogram, &truth, k_true, &cfg.sweep())?;
    write_file(&cfg.out_dir.join("sweep.csv"), &curve.to_csv())?;
    write_report(cfg, "sweep", SweepReport { k_true, curve })
}

#[derive(Serialize)]
struct PairdistReport {
    similar: Option<PairDistanceStats>,
    dissimilar: Option<PairDistanceStats>,
}

fn pairdist(cfg: &RunConfig) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    let pairs = corpus::load_pairs(cfg.input("pairs")?, &corpus)?;
    let emb = load_matrix(cfg, "embeddings", &corpus)?;
    let counts = corpus::pair_counts(&pairs);
    let mut report = PairdistReport {
        similar: None,
        dissimilar: None,
    };
    for (filter, present, name, slot) in [
        (LabelFilter::Similar, counts.similar > 0, "similar", &mut report.similar),
        (LabelFilter::Dissimilar, counts.dissimilar > 0, "dissimilar", &mut report.dissimilar),
    ] {
        if present {
            let stats = geometry::pair_distance_stats(&emb, &pairs, filter)?;
            write_file(&cfg.out_dir.join(format!("pairdist_{name}.csv")), &stats.to_csv())?;
            *slot = Some(stats);
        }
    }
    write_report(cfg, "pairdist", report)
}
