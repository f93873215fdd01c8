//! Linear projection adapter trained with the multiple-negatives ranking
//! loss.
//!
//! The adapter maps a frozen embedding `x` to `f(x) = normalize(W x + b)`.
//! For a batch of `B` positive pairs `(a_i, p_i)` the loss is
//!
//! ```text
//! L = -(1/B) * sum_i log softmax_j( s * cos(f(a_i), f(p_j)) )[j = i]
//! ```
//!
//! so every other positive in the batch acts as a negative for `a_i`. The
//! symmetric variant averages this with the same loss taken column-wise.
//!
//! The adapter file (`C2VA`, little-endian) is
//!
//! ```text
//! magic "C2VA" | u32 version = 1 | u32 d_in | u32 d_out | u8 has_bias
//! | f32 W row-major (d_out*d_in) | [f32 bias (d_out)] | f32 scale | u64 L | L bytes JSON meta
//! ```

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ClaimPair, EmbeddingMatrix, PairLabel};
use crate::geometry::{self, LabelFilter, PairDistanceStats};
use crate::{par, Error, Result};

const C2VA_MAGIC: &[u8; 4] = b"C2VA";
const C2VA_VERSION: u32 = 1;
const MIN_NORM: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdapterMeta {
    pub seed: u64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub symmetric: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdapterModel {
    pub d_in: usize,
    pub d_out: usize,
    /// `d_out x d_in`, row-major.
    pub weight: Vec<f64>,
    pub bias: Option<Vec<f64>>,
    pub scale: f64,
    pub meta: AdapterMeta,
}

impl AdapterModel {
    /// Identity projection with a zero bias.
    pub fn identity(dim: usize, scale: f64, meta: AdapterMeta) -> Self {
        let mut weight = vec![0.0; dim * dim];
        for i in 0..dim {
            weight[i * dim + i] = 1.0;
        }
        AdapterModel {
            d_in: dim,
            d_out: dim,
            weight,
            bias: Some(vec![0.0; dim]),
            scale,
            meta,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.d_in == 0 || self.d_out == 0 {
            return Err(Error::invalid("adapter dimensions must be at least 1"));
        }
        if self.weight.len() != self.d_in * self.d_out {
            return Err(Error::LengthMismatch {
                left: self.weight.len(),
                right: self.d_in * self.d_out,
            });
        }
        if let Some(b) = &self.bias {
            if b.len() != self.d_out {
                return Err(Error::LengthMismatch {
                    left: b.len(),
                    right: self.d_out,
                });
            }
        }
        let finite = self.weight.iter().chain(self.bias.iter().flatten()).all(|v| v.is_finite());
        if !finite || !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::invalid("adapter parameters must be finite with scale > 0"));
        }
        Ok(())
    }

    /// `W x + b`, unnormalized.
    fn project_into(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.weight[r * self.d_in..(r + 1) * self.d_in];
            let mut acc = geometry::dot64(row, x);
            if let Some(b) = &self.bias {
                acc += b[r];
            }
            *o = acc;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub scale: f64,
    pub symmetric: bool,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            learning_rate: 1e-5,
            epochs: 1,
            seed: 0,
            scale: 20.0,
            symmetric: false,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::invalid("batch_size must be at least 2"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be finite and >= 0"));
        }
        if self.epochs < 1 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::invalid("scale must be finite and > 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainTrace {
    pub step_losses: Vec<f64>,
    pub epoch_mean_losses: Vec<f64>,
    pub positive_before: PairDistanceStats,
    pub positive_after: PairDistanceStats,
    /// Present when the pair list carried dissimilar pairs. They are only
    /// measured, never trained on.
    pub negative_before: Option<PairDistanceStats>,
    pub negative_after: Option<PairDistanceStats>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad_weight: Vec<f64>,
    /// Empty when the model has no bias.
    pub grad_bias: Vec<f64>,
}

struct Projected {
    unit: Vec<f64>,
    norms: Vec<f64>,
}

fn project_batch(model: &AdapterModel, rows: &[f64]) -> Result<Projected> {
    let b = rows.len() / model.d_in;
    let per_row = par::map_range(0..b, |i| {
        let mut z = vec![0.0; model.d_out];
        model.project_into(&rows[i * model.d_in..(i + 1) * model.d_in], &mut z);
        let norm = geometry::dot64(&z, &z).sqrt();
        z.iter_mut().for_each(|v| *v /= norm);
        (z, norm)
    });
    let mut unit = Vec::with_capacity(b * model.d_out);
    let mut norms = Vec::with_capacity(b);
    for (i, (z, norm)) in per_row.into_iter().enumerate() {
        if norm.is_nan() || norm < MIN_NORM {
            return Err(Error::ZeroNorm(format!("batch row {i}")));
        }
        unit.extend(z);
        norms.push(norm);
    }
    Ok(Projected { unit, norms })
}

/// Row-wise log-softmax cross-entropy against the diagonal. Returns the
/// summed loss and `softmax - identity` in `grad`, scaled by `weight`.
fn diagonal_cross_entropy(
    scores: &[f64],
    b: usize,
    transpose: bool,
    weight: f64,
    grad: &mut [f64],
) -> f64 {
    let at = |i: usize, j: usize| if transpose { scores[j * b + i] } else { scores[i * b + j] };
    let mut total = 0.0;
    for i in 0..b {
        let max = (0..b).map(|j| at(i, j)).fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = (0..b).map(|j| (at(i, j) - max).exp()).sum();
        let log_sum = sum.ln();
        total += (max - at(i, i)) + log_sum;
        for j in 0..b {
            let p = (at(i, j) - max - log_sum).exp();
            let g = weight * (p - if i == j { 1.0 } else { 0.0 });
            if transpose {
                grad[j * b + i] += g;
            } else {
                grad[i * b + j] += g;
            }
        }
    }
    total
}

/// Loss and exact gradient for one batch. `anchors` and `positives` are
/// `B x d_in`, row-major.
pub fn mnrl_loss_and_grad(
    anchors: &[f64],
    positives: &[f64],
    model: &AdapterModel,
    symmetric: bool,
) -> Result<LossGrad> {
    let (d_in, d_out) = (model.d_in, model.d_out);
    if anchors.len() != positives.len() || anchors.is_empty() || !anchors.len().is_multiple_of(d_in) {
        return Err(Error::invalid(format!(
            "batch shapes {} / {} do not match d_in = {d_in}",
            anchors.len(),
            positives.len()
        )));
    }
    let b = anchors.len() / d_in;
    let fa = project_batch(model, anchors)?;
    let fp = project_batch(model, positives)?;

    let s = model.scale;
    let mut scores = vec![0.0; b * b];
    for i in 0..b {
        let u = &fa.unit[i * d_out..(i + 1) * d_out];
        for j in 0..b {
            scores[i * b + j] = s * geometry::dot64(u, &fp.unit[j * d_out..(j + 1) * d_out]);
        }
    }

    // dL/dscores
    let mut g = vec![0.0; b * b];
    let inv_b = 1.0 / b as f64;
    let loss = if symmetric {
        let forward = diagonal_cross_entropy(&scores, b, false, 0.5 * inv_b, &mut g);
        let backward = diagonal_cross_entropy(&scores, b, true, 0.5 * inv_b, &mut g);
        0.5 * (forward + backward) * inv_b
    } else {
        diagonal_cross_entropy(&scores, b, false, inv_b, &mut g) * inv_b
    };

    // Back through the cosine and the row normalization:
    // dL/dz = (g - u (u . g)) / |z|
    let back = |own: &Projected, other: &Projected, i: usize, by_row: bool| {
        let mut gu = vec![0.0; d_out];
        for j in 0..b {
            let gij = if by_row { g[i * b + j] } else { g[j * b + i] };
            let v = &other.unit[j * d_out..(j + 1) * d_out];
            gu.iter_mut().zip(v).for_each(|(acc, vk)| *acc += s * gij * vk);
        }
        let u = &own.unit[i * d_out..(i + 1) * d_out];
        let radial = geometry::dot64(u, &gu);
        gu.iter_mut()
            .zip(u)
            .for_each(|(gk, uk)| *gk = (*gk - uk * radial) / own.norms[i]);
        gu
    };
    let gz_anchor: Vec<Vec<f64>> = (0..b).map(|i| back(&fa, &fp, i, true)).collect();
    let gz_positive: Vec<Vec<f64>> = (0..b).map(|j| back(&fp, &fa, j, false)).collect();

    let rows = par::map_range(0..d_out, |r| {
        let mut row = vec![0.0; d_in];
        for i in 0..b {
            let (ga, gp) = (gz_anchor[i][r], gz_positive[i][r]);
            let a = &anchors[i * d_in..(i + 1) * d_in];
            let p = &positives[i * d_in..(i + 1) * d_in];
            for k in 0..d_in {
                row[k] += ga * a[k] + gp * p[k];
            }
        }
        row
    });
    let grad_weight = rows.concat();
    let grad_bias = if model.bias.is_some() {
        (0..d_out)
            .map(|r| (0..b).map(|i| gz_anchor[i][r] + gz_positive[i][r]).sum())
            .collect()
    } else {
        Vec::new()
    };
    Ok(LossGrad {
        loss,
        grad_weight,
        grad_bias,
    })
}

struct Adam {
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    lr: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    fn new(config: &TrainConfig, len: usize) -> Self {
        Adam {
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
            lr: config.learning_rate,
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    /// `params` and `grads` are the concatenation of every trained tensor.
    fn update(&mut self, params: &mut [&mut f64], grads: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (k, (p, &g)) in params.iter_mut().zip(grads).enumerate() {
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g;
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[k] / c1;
            let v_hat = self.v[k] / c2;
            **p -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

/// Trains an identity-initialized adapter on the similar pairs in `pairs`.
/// Dissimilar pairs are only used for the before/after statistics.
pub fn train_adapter(
    embeddings: &EmbeddingMatrix,
    pairs: &[ClaimPair],
    config: &TrainConfig,
) -> Result<(AdapterModel, TrainTrace)> {
    config.validate()?;
    let resolve = |id: &str| {
        embeddings
            .position(id)
            .ok_or_else(|| Error::invalid(format!("pair references unknown claim id {id:?}")))
    };
    let mut positives = Vec::new();
    for p in pairs.iter().filter(|p| p.label == PairLabel::Similar) {
        positives.push((resolve(&p.a)?, resolve(&p.b)?));
    }
    if positives.len() < 2 {
        return Err(Error::invalid(format!(
            "training needs at least 2 similar pairs, got {}",
            positives.len()
        )));
    }
    let has_negatives = pairs.iter().any(|p| p.label == PairLabel::Dissimilar);

    let dim = embeddings.dim();
    let meta = AdapterMeta {
        seed: config.seed,
        epochs: config.epochs,
        lr: config.learning_rate,
        batch_size: config.batch_size,
        symmetric: config.symmetric,
    };
    let mut model = AdapterModel::identity(dim, config.scale, meta);
    let mut adam = Adam::new(config, dim * dim + dim);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut step_losses = Vec::new();
    let mut epoch_mean_losses = Vec::new();
    let mut order: Vec<usize> = (0..positives.len()).collect();
    for _ in 0..config.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut epoch_losses = Vec::new();
        for chunk in order.chunks(config.batch_size).filter(|c| c.len() >= 2) {
            let mut anchors = Vec::with_capacity(chunk.len() * dim);
            let mut targets = Vec::with_capacity(chunk.len() * dim);
            for &k in chunk {
                let (a, b) = positives[k];
                anchors.extend(embeddings.row(a).iter().map(|&v| f64::from(v)));
                targets.extend(embeddings.row(b).iter().map(|&v| f64::from(v)));
            }
            let lg = mnrl_loss_and_grad(&anchors, &targets, &model, config.symmetric)?;
            let mut grads = lg.grad_weight;
            grads.extend_from_slice(&lg.grad_bias);
            let bias = model.bias.as_mut().expect("trained adapters carry a bias");
            let mut params: Vec<&mut f64> = model.weight.iter_mut().chain(bias.iter_mut()).collect();
            adam.update(&mut params, &grads);
            epoch_losses.push(lg.loss);
        }
        epoch_mean_losses.push(epoch_losses.iter().sum::<f64>() / epoch_losses.len().max(1) as f64);
        step_losses.extend(epoch_losses);
    }

    // Persisted weights are f32; round now so a saved model is exactly the
    // trained one.
    for v in model.weight.iter_mut().chain(model.bias.iter_mut().flatten()) {
        *v = *v as f32 as f64;
    }
    model.scale = model.scale as f32 as f64;

    let refined = apply_adapter(embeddings, &model)?;
    let stats = |m: &EmbeddingMatrix, f: LabelFilter| geometry::pair_distance_stats(m, pairs, f);
    let trace = TrainTrace {
        step_losses,
        epoch_mean_losses,
        positive_before: stats(embeddings, LabelFilter::Similar)?,
        positive_after: stats(&refined, LabelFilter::Similar)?,
        negative_before: has_negatives
            .then(|| stats(embeddings, LabelFilter::Dissimilar))
            .transpose()?,
        negative_after: has_negatives
            .then(|| stats(&refined, LabelFilter::Dissimilar))
            .transpose()?,
    };
    Ok((model, trace))
}

/// Replaces every row by `normalize(W x + b)`.
pub fn apply_adapter(embeddings: &EmbeddingMatrix, model: &AdapterModel) -> Result<EmbeddingMatrix> {
    model.validate()?;
    if embeddings.dim() != model.d_in {
        return Err(Error::DimensionMismatch {
            expected: model.d_in,
            actual: embeddings.dim(),
        });
    }
    let rows = par::map_range(0..embeddings.n(), |i| {
        let x: Vec<f64> = embeddings.row(i).iter().map(|&v| f64::from(v)).collect();
        let mut z = vec![0.0; model.d_out];
        model.project_into(&x, &mut z);
        let norm = geometry::dot64(&z, &z).sqrt();
        (norm >= MIN_NORM).then(|| z.iter().map(|v| (v / norm) as f32).collect::<Vec<f32>>())
    });
    let mut data = Vec::with_capacity(embeddings.n() * model.d_out);
    for (i, row) in rows.into_iter().enumerate() {
        data.extend(row.ok_or_else(|| Error::ZeroNorm(embeddings.ids()[i].clone()))?);
    }
    embeddings.with_data(data, model.d_out)
}

pub fn encode_c2va(model: &AdapterModel) -> Result<Vec<u8>> {
    model.validate()?;
    let meta = serde_json::to_vec(&model.meta).expect("plain data serializes");
    let mut buf = Vec::new();
    buf.extend_from_slice(C2VA_MAGIC);
    buf.extend_from_slice(&C2VA_VERSION.to_le_bytes());
    buf.extend_from_slice(&(model.d_in as u32).to_le_bytes());
    buf.extend_from_slice(&(model.d_out as u32).to_le_bytes());
    buf.push(u8::from(model.bias.is_some()));
    for &v in model.weight.iter().chain(model.bias.iter().flatten()) {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    buf.extend_from_slice(&(model.scale as f32).to_le_bytes());
    buf.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    buf.extend_from_slice(&meta);
    Ok(buf)
}

pub fn decode_c2va(bytes: &[u8]) -> Result<AdapterModel> {
    const HEADER: usize = 4 + 4 + 4 + 4 + 1;
    if bytes.len() < HEADER {
        return Err(Error::Truncated {
            what: "adapter header",
            expected: HEADER as u64,
            actual: bytes.len() as u64,
        });
    }
    if &bytes[..4] != C2VA_MAGIC {
        return Err(Error::BadHeader(format!("expected magic C2VA, found {:?}", &bytes[..4])));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != C2VA_VERSION {
        return Err(Error::BadHeader(format!("unsupported C2VA version {version}")));
    }
    let (d_in, d_out) = (u32_at(8) as usize, u32_at(12) as usize);
    let has_bias = match bytes[16] {
        0 => false,
        1 => true,
        other => return Err(Error::BadHeader(format!("has_bias flag must be 0 or 1, got {other}"))),
    };
    let floats = d_out * d_in + if has_bias { d_out } else { 0 } + 1;
    let fixed = HEADER + floats * 4 + 8;
    if bytes.len() < fixed {
        return Err(Error::Truncated {
            what: "adapter payload",
            expected: fixed as u64,
            actual: bytes.len() as u64,
        });
    }
    let values: Vec<f64> = bytes[HEADER..HEADER + floats * 4]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    let meta_len = u64::from_le_bytes(bytes[fixed - 8..fixed].try_into().unwrap());
    if bytes.len() as u64 != fixed as u64 + meta_len {
        return Err(Error::Truncated {
            what: "adapter metadata",
            expected: fixed as u64 + meta_len,
            actual: bytes.len() as u64,
        });
    }
    let meta: AdapterMeta = serde_json::from_slice(&bytes[fixed..])
        .map_err(|e| Error::BadHeader(format!("adapter metadata: {e}")))?;
    let w_len = d_out * d_in;
    let model = AdapterModel {
        d_in,
        d_out,
        weight: values[..w_len].to_vec(),
        bias: has_bias.then(|| values[w_len..w_len + d_out].to_vec()),
        scale: values[floats - 1],
        meta,
    };
    model.validate()?;
    Ok(model)
}

pub fn save_adapter(model: &AdapterModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_c2va(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_adapter(path: impl AsRef<Path>) -> Result<AdapterModel> {
    let path = path.as_ref();
    decode_c2va(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn meta() -> AdapterMeta {
        AdapterMeta {
            seed: 1,
            epochs: 1,
            lr: 1e-3,
            batch_size: 4,
            symmetric: false,
        }
    }

    fn random_model(rng: &mut ChaCha8Rng, d_in: usize, d_out: usize, scale: f64) -> AdapterModel {
        AdapterModel {
            d_in,
            d_out,
            weight: (0..d_in * d_out).map(|_| rng.random_range(-1.0..1.0)).collect(),
            bias: Some((0..d_out).map(|_| rng.random_range(-0.3..0.3)).collect()),
            scale,
            meta: meta(),
        }
    }

    #[test]
    fn single_pair_batch_has_zero_loss() {
        let model = AdapterModel::identity(3, 20.0, meta());
        let lg = mnrl_loss_and_grad(&[1.0, 2.0, 3.0], &[0.5, -1.0, 2.0], &model, false).unwrap();
        assert_eq!(lg.loss, 0.0);
        assert!(lg.grad_weight.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn identical_projections_give_log_batch_size() {
        let model = AdapterModel::identity(4, 20.0, meta());
        let rows: Vec<f64> = (0..8).flat_map(|_| [0.0, 1.0, 0.0, 0.0]).collect();
        for symmetric in [false, true] {
            let lg = mnrl_loss_and_grad(&rows, &rows, &model, symmetric).unwrap();
            assert!((lg.loss - 8f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn dominant_diagonal_gives_zero_loss() {
        let mut model = AdapterModel::identity(4, 100.0, meta());
        model.bias = None;
        let mut rows = vec![0.0; 16];
        for i in 0..4 {
            rows[i * 4 + i] = 1.0;
        }
        let lg = mnrl_loss_and_grad(&rows, &rows, &model, false).unwrap();
        assert_eq!(lg.loss, 0.0);
        assert!(lg.grad_bias.is_empty());
    }

    #[test]
    fn loss_is_invariant_to_row_rescaling_without_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut model = random_model(&mut rng, 5, 4, 20.0);
        model.bias = None;
        let a: Vec<f64> = (0..15).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p: Vec<f64> = (0..15).map(|_| rng.random_range(-1.0..1.0)).collect();
        let base = mnrl_loss_and_grad(&a, &p, &model, false).unwrap().loss;
        let mut scaled = a.clone();
        scaled[5..10].iter_mut().for_each(|v| *v *= 3.0);
        let again = mnrl_loss_and_grad(&scaled, &p, &model, false).unwrap().loss;
        assert!((base - again).abs() < 1e-12);
    }

    #[test]
    fn zero_projection_is_rejected() {
        let mut model = AdapterModel::identity(2, 20.0, meta());
        model.bias = None;
        let err = mnrl_loss_and_grad(&[0.0, 0.0, 1.0, 0.0], &[1.0, 0.0, 0.0, 1.0], &model, false);
        assert!(matches!(err, Err(Error::ZeroNorm(_))));
    }

    #[test]
    fn apply_identity_and_scaled_identity() {
        let m = EmbeddingMatrix::new(
            vec!["a".into(), "b".into()],
            vec![0.6, 0.8, 3.0, -4.0],
            2,
        )
        .unwrap();
        let id = AdapterModel::identity(2, 20.0, meta());
        let out = apply_adapter(&m, &id).unwrap();
        assert!((out.row(0)[0] - 0.6).abs() < 1e-6 && (out.row(0)[1] - 0.8).abs() < 1e-6);
        let mut twice = id.clone();
        twice.weight.iter_mut().for_each(|w| *w *= 2.0);
        let out2 = apply_adapter(&m, &twice).unwrap();
        assert!((out2.row(1)[0] - 0.6).abs() < 1e-6 && (out2.row(1)[1] + 0.8).abs() < 1e-6);
        assert_eq!(out2.ids(), m.ids());
    }

    #[test]
    fn apply_random_model_gives_unit_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let model = random_model(&mut rng, 6, 3, 20.0);
        let ids = (0..40).map(|i| format!("c{i}")).collect();
        let data = (0..240).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        let m = EmbeddingMatrix::new(ids, data, 6).unwrap();
        let out = apply_adapter(&m, &model).unwrap();
        assert_eq!(out.dim(), 3);
        for i in 0..out.n() {
            assert!((geometry::norm(out.row(i)) - 1.0).abs() < 1e-6);
        }
        let wrong = EmbeddingMatrix::new(vec!["x".into()], vec![1.0; 5], 5).unwrap();
        assert!(matches!(apply_adapter(&wrong, &model), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn adapter_file_round_trip_and_corruption() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut model = random_model(&mut rng, 3, 2, 20.0);
        for v in model.weight.iter_mut().chain(model.bias.iter_mut().flatten()) {
            *v = *v as f32 as f64;
        }
        let bytes = encode_c2va(&model).unwrap();
        let back = decode_c2va(&bytes).unwrap();
        assert_eq!(back, model);

        match decode_c2va(&bytes[..20]).unwrap_err() {
            Error::Truncated {
                expected, actual, ..
            } => assert_eq!((expected, actual), (17 + 9 * 4 + 8, 20)),
            other => panic!("unexpected {other:?}"),
        }
        let mut bad = bytes.clone();
        bad[..4].copy_from_slice(b"NOPE");
        assert!(matches!(decode_c2va(&bad), Err(Error::BadHeader(_))));

        model.bias = None;
        let no_bias = decode_c2va(&encode_c2va(&model).unwrap()).unwrap();
        assert!(no_bias.bias.is_none());
        let m = EmbeddingMatrix::new(vec!["a".into()], vec![1.0, 0.0, 0.0], 3).unwrap();
        let out = apply_adapter(&m, &no_bias).unwrap();
        let (w0, w1) = (no_bias.weight[0], no_bias.weight[3]);
        let n = (w0 * w0 + w1 * w1).sqrt();
        assert!((f64::from(out.row(0)[0]) - w0 / n).abs() < 1e-6);
    }

    fn toy_pairs(n: usize) -> (EmbeddingMatrix, Vec<ClaimPair>) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ids: Vec<String> = (0..2 * n).map(|i| format!("c{i}")).collect();
        let mut data = Vec::new();
        for _ in 0..n {
            let base: Vec<f32> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            data.extend(&base);
            data.extend(base.iter().map(|v| v + rng.random_range(-0.3..0.3)));
        }
        let pairs = (0..n)
            .map(|k| ClaimPair {
                a: ids[2 * k].clone(),
                b: ids[2 * k + 1].clone(),
                label: PairLabel::Similar,
            })
            .collect();
        (EmbeddingMatrix::new(ids, data, 4).unwrap(), pairs)
    }

    #[test]
    fn zero_learning_rate_keeps_identity() {
        let (m, pairs) = toy_pairs(20);
        let config = TrainConfig {
            learning_rate: 0.0,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let (model, trace) = train_adapter(&m, &pairs, &config).unwrap();
        assert_eq!(model.weight, AdapterModel::identity(4, 20.0, model.meta.clone()).weight);
        assert!(model.bias.as_ref().unwrap().iter().all(|b| *b == 0.0));
        // 20 pairs in batches of 8: 8, 8, 4
        assert_eq!(trace.step_losses.len(), 3);
        assert!(trace.negative_before.is_none());
    }

    #[test]
    fn remainder_batch_of_one_is_dropped() {
        let (m, pairs) = toy_pairs(9);
        let config = TrainConfig {
            batch_size: 4,
            ..TrainConfig::default()
        };
        let (_, trace) = train_adapter(&m, &pairs, &config).unwrap();
        assert_eq!(trace.step_losses.len(), 2);
        assert!(trace.step_losses.iter().all(|l| l.is_finite() && *l >= 0.0));
    }

    #[test]
    fn training_needs_two_pairs() {
        let (m, pairs) = toy_pairs(1);
        assert!(train_adapter(&m, &pairs, &TrainConfig::default()).is_err());
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let (m, pairs) = toy_pairs(40);
        let config = TrainConfig {
            learning_rate: 1e-2,
            batch_size: 8,
            epochs: 2,
            seed: 42,
            ..TrainConfig::default()
        };
        let (a, ta) = train_adapter(&m, &pairs, &config).unwrap();
        let (b, tb) = train_adapter(&m, &pairs, &config).unwrap();
        assert_eq!(encode_c2va(&a).unwrap(), encode_c2va(&b).unwrap());
        let bits = |t: &TrainTrace| t.step_losses.iter().map(|l| l.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&ta), bits(&tb));
        assert_eq!(ta.epoch_mean_losses.len(), 2);
    }
}
