mod support;

use std::fs;

use claimclust_core::corpus::{self, EmbeddingMatrix};
use claimclust_core::synth;
use support::{cli, report, s};

#[test]
fn blob_pipeline_recovers_blobs() {
    let dir = tempfile::tempdir().unwrap();
    let (m, labels) = synth::blobs(500, 10, 16, 0.03, 1);
    let f = support::write_blobs(dir.path(), &m, &labels);
    let out = dir.path().join("out");
    let common = ["--claims", s(&f.claims), "--embeddings", s(&f.embeddings), "--out-dir", s(&out)];
    assert_eq!(cli(&[&["cluster", "--auto-threshold"], &common[..]].concat()), 0);
    assert_eq!(cli(&[&["evaluate"], &common[..]].concat()), 0);
    let eval = report(&out, "evaluate");
    assert!(eval["result"]["ari"].as_f64().unwrap() >= 0.99, "{eval}");
    assert_eq!(eval["result"]["k_true"], 10);
    let cluster = report(&out, "cluster");
    assert_eq!(cluster["result"]["k"], 10);
    assert!(cluster["result"]["autotune"]["grid"].as_array().unwrap().len() == 21);
    assert!(out.join("autotune_curve.csv").exists());
    assert!(fs::read_to_string(out.join("silhouette.csv")).unwrap().starts_with("claim_id,a,b,s\n"));

    assert_eq!(cli(&[&["sweep"], &common[..]].concat()), 0);
    let sweep = report(&out, "sweep");
    assert_eq!(sweep["result"]["k_true"], 10);
    assert_eq!(cli(&[&["errors"], &common[..]].concat()), 0);
    assert_eq!(report(&out, "errors")["result"]["split_count"], 0);
}

#[test]
fn two_view_pipeline_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let fx = synth::two_view(&synth::TwoViewConfig {
        clusters: 60,
        negatives: 200,
        ..synth::TwoViewConfig::default()
    });
    let f = support::write_two_view(dir.path(), &fx);
    let out = dir.path().join("out");
    let config = dir.path().join("run.json");
    fs::write(
        &config,
        serde_json::json!({
            "claims": f.claims,
            "pairs": f.pairs,
            "embeddings": f.embeddings,
            "out_dir": out,
            "learning_rate": 1e-3,
            "seed": 3,
        })
        .to_string(),
    )
    .unwrap();
    let c = s(&config);
    assert_eq!(cli(&["ingest-check", "--config", c]), 0);
    let ingest = report(&out, "ingest-check");
    assert_eq!(ingest["result"]["claims"]["claims"], 300);
    assert_eq!(ingest["result"]["pairs"]["dissimilar"], 200);

    assert_eq!(cli(&["pairdist", "--config", c]), 0);
    assert!(out.join("pairdist_similar.csv").exists());
    assert_eq!(cli(&["train", "--config", c]), 0);
    let train = report(&out, "train");
    assert_eq!(train["seed"], 3);
    assert_eq!(train["config"]["learning_rate"], 1e-3);
    assert!(out.join("adapter.c2va").exists());
    assert_eq!(cli(&["project", "--config", c]), 0);
    let projected = out.join("projected.cev");
    assert_eq!(corpus::read_embeddings(&projected).unwrap().n(), 300);

    let base_out = dir.path().join("base");
    assert_eq!(cli(&["cluster", "--config", c, "--auto-threshold", "--out-dir", s(&base_out)]), 0);
    assert_eq!(
        cli(&["cluster", "--config", c, "--auto-threshold", "--embeddings", s(&projected)]),
        0
    );
    assert_eq!(cli(&["evaluate", "--config", c, "--embeddings", s(&projected)]), 0);
    assert_eq!(
        cli(&[
            "gain",
            "--config",
            c,
            "--base-embeddings",
            s(&f.embeddings),
            "--refined-embeddings",
            s(&projected),
            "--base-assignments",
            s(&base_out.join("assignments.csv")),
            "--refined-assignments",
            s(&out.join("assignments.csv")),
        ]),
        0
    );
    let gain = report(&out, "gain");
    assert!(gain["result"]["multilingual"]["claims"].as_u64().unwrap() > 0);
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let fx = synth::two_view(&synth::TwoViewConfig {
        clusters: 40,
        negatives: 100,
        ..synth::TwoViewConfig::default()
    });
    let f = support::write_two_view(dir.path(), &fx);
    let mut reports = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("out{run}"));
        let args = [
            "--claims",
            s(&f.claims),
            "--pairs",
            s(f.pairs.as_ref().unwrap()),
            "--embeddings",
            s(&f.embeddings),
            "--out-dir",
            "OUT",
            "--learning-rate",
            "0.001",
        ];
        // Same config text in both runs; only the working output differs.
        let args: Vec<&str> = args.iter().map(|a| if *a == "OUT" { s(&out) } else { a }).collect();
        assert_eq!(cli(&[&["train"], &args[..]].concat()), 0);
        assert_eq!(cli(&[&["cluster", "--threshold", "0.9"], &args[..]].concat()), 0);
        reports.push((
            fs::read(out.join("adapter.c2va")).unwrap(),
            fs::read_to_string(out.join("train.json")).unwrap().replace(s(&out), "OUT"),
            fs::read_to_string(out.join("cluster.json")).unwrap().replace(s(&out), "OUT"),
            fs::read(out.join("assignments.csv")).unwrap(),
        ));
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn validation_failures_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let (m, labels) = synth::blobs(20, 2, 4, 0.05, 1);
    let f = support::write_blobs(dir.path(), &m, &labels);
    let out = dir.path().join("out");

    // Embeddings whose ids do not match the claims.
    let other = EmbeddingMatrix::new(
        (0..20).map(|i| format!("x{i}")).collect(),
        m.data().to_vec(),
        m.dim(),
    )
    .unwrap();
    let bad = dir.path().join("bad.cev");
    corpus::write_embeddings(&other, &bad).unwrap();
    let args = ["evaluate", "--claims", s(&f.claims), "--embeddings", s(&bad), "--out-dir", s(&out)];
    assert_eq!(cli(&args), 2);

    assert_eq!(cli(&["frobnicate"]), 2);
    assert_eq!(cli(&["cluster", "--no-such-flag"]), 2);
    assert_eq!(cli(&["cluster", "--claims", "/nonexistent/claims.jsonl", "--out-dir", s(&out)]), 2);
    let base = ["--claims", s(&f.claims), "--embeddings", s(&f.embeddings), "--out-dir", s(&out)];
    assert_eq!(cli(&[&["cluster"], &base[..]].concat()), 2);
    assert_eq!(cli(&[&["cluster", "--threshold", "1", "--auto-threshold"], &base[..]].concat()), 2);
    let config = dir.path().join("bad.json");
    fs::write(&config, r#"{"no_such_key": 1}"#).unwrap();
    assert_eq!(cli(&["ingest-check", "--config", s(&config)]), 2);
    assert!(!out.join("evaluate.json").exists());
}

#[test]
fn flags_override_config_values() {
    let dir = tempfile::tempdir().unwrap();
    let (m, labels) = synth::blobs(60, 3, 4, 0.05, 1);
    let f = support::write_blobs(dir.path(), &m, &labels);
    let out = dir.path().join("out");
    let config = dir.path().join("run.json");
    fs::write(
        &config,
        serde_json::json!({"claims": f.claims, "embeddings": f.embeddings, "out_dir": out, "threshold": 0.1, "seed": 1})
            .to_string(),
    )
    .unwrap();
    assert_eq!(cli(&["cluster", "--config", s(&config), "--threshold", "5", "--seed", "9"]), 0);
    let r = report(&out, "cluster");
    assert_eq!(r["config"]["threshold"], 5.0);
    assert_eq!(r["seed"], 9);
    assert_eq!(r["result"]["threshold"], 5.0);
}

#[test]
fn id_mismatch_is_reported_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let (m, labels) = synth::blobs(10, 2, 4, 0.05, 1);
    let f = support::write_blobs(dir.path(), &m, &labels);
    let shifted = EmbeddingMatrix::new((0..10).map(|i| format!("z{i}")).collect(), m.data().to_vec(), m.dim()).unwrap();
    let bad = dir.path().join("bad.cev");
    corpus::write_embeddings(&shifted, &bad).unwrap();
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_claimclust"))
        .args(["ingest-check", "--claims", s(&f.claims), "--embeddings", s(&bad)])
        .args(["--out-dir", s(&dir.path().join("out"))])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("id"), "{stderr}");
}
