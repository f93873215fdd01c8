//! Fixture files on disk for driving the CLI.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use claimclust_core::corpus::{self, Claim, EmbeddingMatrix};
use claimclust_core::synth::{self, TwoViewFixture};

pub struct Files {
    pub claims: PathBuf,
    pub pairs: Option<PathBuf>,
    pub embeddings: PathBuf,
}

pub fn write_two_view(dir: &Path, fx: &TwoViewFixture) -> Files {
    let files = Files {
        claims: dir.join("claims.jsonl"),
        pairs: Some(dir.join("pairs.jsonl")),
        embeddings: dir.join("base.cev"),
    };
    corpus::write_claims(&fx.claims, &files.claims).unwrap();
    corpus::write_pairs(&fx.pairs, files.pairs.as_ref().unwrap()).unwrap();
    corpus::write_embeddings(&fx.embeddings, &files.embeddings).unwrap();
    files
}

/// Blob rows as claims whose ground-truth cluster is the blob.
pub fn write_blobs(dir: &Path, m: &EmbeddingMatrix, labels: &[usize]) -> Files {
    let claims: Vec<Claim> = m
        .ids()
        .iter()
        .zip(labels)
        .map(|(id, l)| Claim {
            id: id.clone(),
            text: format!("blob point {id}"),
            lang: synth::LANG_A.into(),
            gt_cluster: Some(format!("blob{l}")),
            topic_group: None,
        })
        .collect();
    let files = Files {
        claims: dir.join("claims.jsonl"),
        pairs: None,
        embeddings: dir.join("blobs.cev"),
    };
    corpus::write_claims(&claims, &files.claims).unwrap();
    corpus::write_embeddings(m, &files.embeddings).unwrap();
    files
}

/// Runs the CLI in-process; `args` exclude the program name.
pub fn cli(args: &[&str]) -> i32 {
    claimclust_cli::run(std::iter::once("claimclust").chain(args.iter().copied()))
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub fn report(out: &Path, command: &str) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(out.join(format!("{command}.json"))).unwrap()).unwrap()
}
