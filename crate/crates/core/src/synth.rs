//! Seeded synthetic fixtures.
//!
//! * [`blobs`]: Gaussian blobs around random unit centers, projected back to
//!   the sphere.
//! * [`two_view`]: claims in latent clusters, each written in one of two
//!   "languages". A language is a fixed rotation of the shared latent
//!   cluster center that tilts every latent axis toward a spare subspace of
//!   its own. Cross-language members of a cluster sit apart in the raw space,
//!   while one linear map that suppresses both spare subspaces realigns them.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::{Claim, ClaimPair, Corpus, EmbeddingMatrix, PairLabel};
use crate::geometry::dot64;

fn gaussian(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let norm = dot64(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

fn to_f32(v: &[f64]) -> impl Iterator<Item = f32> + '_ {
    v.iter().map(|&x| x as f32)
}

/// `n` unit rows in `k` blobs, assigned round-robin. `noise` is the
/// per-coordinate standard deviation added before renormalizing.
pub fn blobs(n: usize, k: usize, d: usize, noise: f64, seed: u64) -> (EmbeddingMatrix, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..k).map(|_| normalized(gaussian(&mut rng, d))).collect();
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % k;
        let point: Vec<f64> = centers[c]
            .iter()
            .map(|&x| x + noise * rng.sample::<f64, _>(StandardNormal))
            .collect();
        data.extend(to_f32(&normalized(point)));
        labels.push(c);
    }
    let ids = (0..n).map(|i| format!("b{i}")).collect();
    (EmbeddingMatrix::new(ids, data, d).expect("finite rows"), labels)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwoViewConfig {
    pub clusters: usize,
    pub per_cluster: usize,
    pub dim: usize,
    /// Fraction of clusters whose members mix both languages.
    pub multilingual_fraction: f64,
    /// Weight of the direction shared by every center; raises the baseline
    /// similarity between unrelated claims.
    pub shared_weight: f64,
    /// Dimension of the subspace holding the cluster centers. Each language
    /// rotates every latent axis toward a spare axis of its own, so
    /// `3 * latent_dim <= dim`.
    pub latent_dim: usize,
    /// Angle of each per-axis rotation.
    pub rotation_angle: f64,
    /// Per-coordinate noise added to each claim.
    pub noise: f64,
    /// Fraction of clusters contributing similar pairs (topic group 1).
    pub train_fraction: f64,
    /// Dissimilar pairs drawn across clusters, never used for training.
    pub negatives: usize,
    pub seed: u64,
}

impl Default for TwoViewConfig {
    fn default() -> Self {
        TwoViewConfig {
            clusters: 400,
            per_cluster: 5,
            dim: 64,
            multilingual_fraction: 0.5,
            shared_weight: 0.8,
            latent_dim: 16,
            rotation_angle: 0.4,
            noise: 0.035,
            train_fraction: 0.5,
            negatives: 4000,
            seed: 7,
        }
    }
}

pub struct TwoViewFixture {
    pub claims: Vec<Claim>,
    /// Similar pairs from training-topic clusters, then held-out dissimilar
    /// pairs.
    pub pairs: Vec<ClaimPair>,
    pub embeddings: EmbeddingMatrix,
    pub latent_labels: Vec<usize>,
}

impl TwoViewFixture {
    pub fn corpus(&self) -> Corpus {
        Corpus::new(self.claims.clone()).expect("generated claims are valid")
    }
}

/// Random orthonormal basis of `R^d`, one vector per entry.
fn random_basis(rng: &mut ChaCha8Rng, d: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d);
    while basis.len() < d {
        let mut v = gaussian(rng, d);
        for q in &basis {
            let p = dot64(&v, q);
            v.iter_mut().zip(q).for_each(|(x, y)| *x -= p * y);
        }
        if dot64(&v, &v) > 1e-6 {
            basis.push(normalized(v));
        }
    }
    basis
}

/// Givens rotations in planes spanned by basis vectors `(i, j)`.
struct Rotation {
    planes: Vec<(usize, usize)>,
    cos: f64,
    sin: f64,
}

impl Rotation {
    fn apply(&self, basis: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
        let mut coords: Vec<f64> = basis.iter().map(|q| dot64(q, v)).collect();
        for &(i, j) in &self.planes {
            let (a, b) = (coords[i], coords[j]);
            coords[i] = self.cos * a - self.sin * b;
            coords[j] = self.sin * a + self.cos * b;
        }
        let mut out = vec![0.0; v.len()];
        for (c, q) in coords.iter().zip(basis) {
            out.iter_mut().zip(q).for_each(|(o, x)| *o += c * x);
        }
        out
    }
}

pub const LANG_A: &str = "xa";
pub const LANG_B: &str = "xb";

pub fn two_view(config: &TwoViewConfig) -> TwoViewFixture {
    let d = config.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let l = config.latent_dim;
    assert!(l >= 1 && 3 * l <= d, "latent_dim must satisfy 1 <= 3 * latent_dim <= dim");
    let basis = random_basis(&mut rng, d);
    let shared = normalized(gaussian(&mut rng, d));
    let view = |lang: usize| Rotation {
        planes: (0..l).map(|i| (i, l * (1 + lang) + i)).collect(),
        cos: config.rotation_angle.cos(),
        sin: config.rotation_angle.sin(),
    };
    let views = [view(0), view(1)];
    let multilingual = (config.clusters as f64 * config.multilingual_fraction).round() as usize;
    let train_clusters = (config.clusters as f64 * config.train_fraction).round() as usize;
    // Interleave so both topic groups hold mono- and multilingual clusters.
    let mut is_multi: Vec<bool> = (0..config.clusters).map(|c| c < multilingual).collect();
    is_multi.shuffle(&mut rng);

    let mut claims = Vec::new();
    let mut data = Vec::new();
    let mut latent_labels = Vec::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    for (c, &multi) in is_multi.iter().enumerate() {
        let weights = normalized(gaussian(&mut rng, l));
        let mut own = vec![0.0; d];
        for (w, q) in weights.iter().zip(&basis) {
            own.iter_mut().zip(q).for_each(|(o, x)| *o += w * x);
        }
        let mono_lang = rng.random_range(0..2usize);
        let mut idx = Vec::new();
        for m in 0..config.per_cluster {
            let lang = if multi { (mono_lang + m) % 2 } else { mono_lang };
            // The shared direction is added after the view rotation, so it
            // stays common to both languages.
            let mut x = views[lang].apply(&basis, &own);
            x.iter_mut().zip(&shared).for_each(|(v, s)| {
                *v += config.shared_weight * s + config.noise * rng.sample::<f64, _>(StandardNormal)
            });
            let id = format!("c{c:04}_{m}");
            claims.push(Claim {
                id: id.clone(),
                text: format!("synthetic claim {m} of cluster {c}"),
                lang: [LANG_A, LANG_B][lang].to_string(),
                gt_cluster: Some(format!("g{c:04}")),
                topic_group: Some(if c < train_clusters { 1 } else { 2 }),
            });
            idx.push(latent_labels.len());
            data.extend(to_f32(&normalized(x)));
            latent_labels.push(c);
        }
        members.push(idx);
    }
    let ids: Vec<String> = claims.iter().map(|c| c.id.clone()).collect();

    let mut pairs = Vec::new();
    for idx in members.iter().take(train_clusters) {
        for (x, &a) in idx.iter().enumerate() {
            for &b in &idx[x + 1..] {
                pairs.push(ClaimPair {
                    a: ids[a].clone(),
                    b: ids[b].clone(),
                    label: PairLabel::Similar,
                });
            }
        }
    }
    let n = ids.len();
    let mut seen = std::collections::HashSet::new();
    while seen.len() < config.negatives.min(n * (n - 1) / 2) {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if latent_labels[a] == latent_labels[b] || !seen.insert((a.min(b), a.max(b))) {
            continue;
        }
        pairs.push(ClaimPair {
            a: ids[a].clone(),
            b: ids[b].clone(),
            label: PairLabel::Dissimilar,
        });
    }

    TwoViewFixture {
        claims,
        pairs,
        embeddings: EmbeddingMatrix::new(ids, data, d).expect("finite rows"),
        latent_labels,
    }
}
