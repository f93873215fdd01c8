//! Claim embedding refinement and clustering.
//!
//! The pipeline runs in two stages. A linear projection adapter is trained
//! over frozen base embeddings with an in-batch-negatives ranking loss, then
//! the refined embeddings are clustered with Ward agglomerative clustering
//! whose distance threshold is picked by maximizing the silhouette score.
//! Evaluation and error-analysis helpers sit on top of both stages.
//!
//! Modules:
//!
//! * [`corpus`]: claims, labeled pairs and the `CEV1` embedding file format.
//! * [`geometry`]: row normalization, cosine kernels, pair-distance statistics.
//! * [`adapter`]: the projection adapter, its loss, Adam training and the `C2VA` file format.
//! * [`hac`]: nearest-neighbor-chain Ward clustering and flat cuts.
//! * [`metrics`]: ARI, AMI, homogeneity/completeness/V-measure, cosine silhouette.
//! * [`autotune`]: silhouette-driven threshold selection.
//! * [`analysis`]: split/mismerge errors, language error rates, lingual gain, k sweeps.
//! * [`synth`]: seeded synthetic fixtures used by tests, benches and demos.
//!
//! With the default `parallel` feature the hot loops run on rayon. Every
//! parallel reduction has a fixed order, so results are bit-identical to a
//! build with `--no-default-features`.

pub mod adapter;
pub mod analysis;
pub mod autotune;
pub mod corpus;
mod error;
pub mod geometry;
pub mod hac;
pub mod metrics;
mod par;
pub mod synth;

pub use error::{Error, Result};
