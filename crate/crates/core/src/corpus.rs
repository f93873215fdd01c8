//! Claims, labeled claim pairs and dense embedding matrices.
//!
//! Claims and pairs are JSONL. Embeddings use the little-endian `CEV1`
//! layout:
//!
//! ```text
//! magic "CEV1" | u32 version = 1 | u64 n | u32 d | n*d f32 row-major | u64 L | L bytes of ids joined by '\n'
//! ```
//!
//! Embedding rows are always reordered to corpus order on load, so every
//! downstream module indexes claims by corpus position.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const CEV1_MAGIC: &[u8; 4] = b"CEV1";
const CEV1_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub id: String,
    pub text: String,
    pub lang: String,
    #[serde(rename = "cluster", default)]
    pub gt_cluster: Option<String>,
    #[serde(rename = "topic", default)]
    pub topic_group: Option<i64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CorpusCounts {
    pub claims: usize,
    pub clusters: usize,
    pub languages: usize,
}

/// An ordered, id-indexed claim list.
#[derive(Clone, Debug, Default)]
pub struct Corpus {
    claims: Vec<Claim>,
    index: HashMap<String, usize>,
}

impl Corpus {
    /// Builds a corpus, rejecting empty fields and duplicate ids.
    pub fn new(claims: Vec<Claim>) -> Result<Self> {
        let mut index = HashMap::with_capacity(claims.len());
        for (pos, claim) in claims.iter().enumerate() {
            validate_claim(claim, pos + 1)?;
            if let Some(&first) = index.get(&claim.id) {
                return Err(Error::DuplicateId {
                    id: claim.id.clone(),
                    line: pos + 1,
                    first_line: first + 1,
                });
            }
            index.insert(claim.id.clone(), pos);
        }
        Ok(Corpus { claims, index })
    }

    pub fn claims(&self) -> &[Claim] {
        &self.claims
    }

    pub fn len(&self) -> usize {
        self.claims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.claims.is_empty()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.claims.iter().map(|c| c.id.as_str())
    }

    pub fn counts(&self) -> CorpusCounts {
        let clusters: BTreeSet<&str> = self
            .claims
            .iter()
            .filter_map(|c| c.gt_cluster.as_deref())
            .collect();
        let languages: BTreeSet<&str> = self.claims.iter().map(|c| c.lang.as_str()).collect();
        CorpusCounts {
            claims: self.claims.len(),
            clusters: clusters.len(),
            languages: languages.len(),
        }
    }

    /// Ground-truth cluster labels as dense integers, `None` for unlabeled
    /// claims. Labels are numbered by first appearance.
    pub fn truth_labels(&self) -> Vec<Option<usize>> {
        let mut ids: HashMap<&str, usize> = HashMap::new();
        self.claims
            .iter()
            .map(|c| {
                c.gt_cluster.as_deref().map(|g| {
                    let next = ids.len();
                    *ids.entry(g).or_insert(next)
                })
            })
            .collect()
    }
}

fn validate_claim(claim: &Claim, line: usize) -> Result<()> {
    for (field, value) in [("id", &claim.id), ("text", &claim.text), ("lang", &claim.lang)] {
        if value.is_empty() {
            return Err(Error::Parse {
                path: Default::default(),
                line,
                message: format!("field `{field}` must be non-empty"),
            });
        }
    }
    Ok(())
}

/// Reads a claims JSONL file. Blank lines are skipped but still counted for
/// line numbers in errors. Language codes are lowercased.
pub fn load_claims(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut claims: Vec<Claim> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut lines_of: Vec<usize> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut claim: Claim = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        claim.lang = claim.lang.to_lowercase();
        validate_claim(&claim, line_no).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::Parse {
                path: path.to_path_buf(),
                line,
                message,
            },
            other => other,
        })?;
        if let Some(&first) = index.get(&claim.id) {
            return Err(Error::DuplicateId {
                id: claim.id,
                line: line_no,
                first_line: lines_of[first],
            });
        }
        index.insert(claim.id.clone(), claims.len());
        lines_of.push(line_no);
        claims.push(claim);
    }
    Ok(Corpus { claims, index })
}

pub fn write_claims(claims: &[Claim], path: impl AsRef<Path>) -> Result<()> {
    write_jsonl(claims, path.as_ref())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairLabel {
    Similar,
    Dissimilar,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimPair {
    pub a: String,
    pub b: String,
    pub label: PairLabel,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PairCounts {
    pub similar: usize,
    pub dissimilar: usize,
}

pub fn pair_counts(pairs: &[ClaimPair]) -> PairCounts {
    let similar = pairs
        .iter()
        .filter(|p| p.label == PairLabel::Similar)
        .count();
    PairCounts {
        similar,
        dissimilar: pairs.len() - similar,
    }
}

/// Reads a pairs JSONL file against `corpus`. Repeated unordered pairs with
/// the same label are dropped; a repeat with the other label is an error.
pub fn load_pairs(path: impl AsRef<Path>, corpus: &Corpus) -> Result<Vec<ClaimPair>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut seen: HashMap<(usize, usize), (PairLabel, usize)> = HashMap::new();
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let pair: ClaimPair = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        let resolve = |id: &str| {
            corpus.position(id).ok_or_else(|| Error::UnknownId {
                id: id.to_string(),
                line: line_no,
            })
        };
        let (pa, pb) = (resolve(&pair.a)?, resolve(&pair.b)?);
        if pa == pb {
            return Err(Error::SelfPair {
                id: pair.a,
                line: line_no,
            });
        }
        let key = (pa.min(pb), pa.max(pb));
        match seen.get(&key) {
            Some(&(label, _)) if label == pair.label => continue,
            Some(&(_, first_line)) => {
                return Err(Error::ConflictingPair {
                    a: pair.a,
                    b: pair.b,
                    first_line,
                    line: line_no,
                })
            }
            None => {
                seen.insert(key, (pair.label, line_no));
                pairs.push(pair);
            }
        }
    }
    Ok(pairs)
}

pub fn write_pairs(pairs: &[ClaimPair], path: impl AsRef<Path>) -> Result<()> {
    write_jsonl(pairs, path.as_ref())
}

fn write_jsonl<T: Serialize>(items: &[T], path: &Path) -> Result<()> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("plain data serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Dense `n x d` f32 matrix whose rows are aligned with claim ids.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    data: Vec<f32>,
    dim: usize,
    index: HashMap<String, usize>,
}

impl EmbeddingMatrix {
    pub fn new(ids: Vec<String>, data: Vec<f32>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be at least 1"));
        }
        if data.len() != ids.len() * dim {
            return Err(Error::LengthMismatch {
                left: data.len(),
                right: ids.len() * dim,
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / dim,
                col: pos % dim,
            });
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (row, id) in ids.iter().enumerate() {
            if id.is_empty() || id.contains('\n') {
                return Err(Error::invalid(format!("row {row}: invalid claim id {id:?}")));
            }
            if index.insert(id.clone(), row).is_some() {
                return Err(Error::DuplicateId {
                    id: id.clone(),
                    line: row + 1,
                    first_line: index[id] + 1,
                });
            }
        }
        Ok(EmbeddingMatrix {
            ids,
            data,
            dim,
            index,
        })
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Rows at `rows`, in that order.
    pub fn select(&self, rows: &[usize]) -> EmbeddingMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.dim);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        let ids: Vec<String> = rows.iter().map(|&r| self.ids[r].clone()).collect();
        let index = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        EmbeddingMatrix {
            ids,
            data,
            dim: self.dim,
            index,
        }
    }

    /// Same ids, new row data of dimension `dim`.
    pub fn with_data(&self, data: Vec<f32>, dim: usize) -> Result<EmbeddingMatrix> {
        EmbeddingMatrix::new(self.ids.clone(), data, dim)
    }

    /// Rows widened to f64, row-major.
    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| f64::from(v)).collect()
    }
}

pub fn encode_cev1(matrix: &EmbeddingMatrix) -> Result<Vec<u8>> {
    if matrix.n() == 0 {
        return Err(Error::invalid("cannot persist an empty embedding matrix"));
    }
    let ids = matrix.ids.join("\n");
    let mut buf = Vec::with_capacity(32 + matrix.data.len() * 4 + ids.len());
    buf.extend_from_slice(CEV1_MAGIC);
    buf.extend_from_slice(&CEV1_VERSION.to_le_bytes());
    buf.extend_from_slice(&(matrix.n() as u64).to_le_bytes());
    buf.extend_from_slice(&(matrix.dim as u32).to_le_bytes());
    for v in &matrix.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&(ids.len() as u64).to_le_bytes());
    buf.extend_from_slice(ids.as_bytes());
    Ok(buf)
}

pub fn decode_cev1(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(4, "header")?;
    if magic != CEV1_MAGIC {
        return Err(Error::BadHeader(format!("expected magic CEV1, found {magic:?}")));
    }
    let version = cur.u32("header")?;
    if version != CEV1_VERSION {
        return Err(Error::BadHeader(format!("unsupported CEV1 version {version}")));
    }
    let n = cur.u64("header")?;
    let d = cur.u32("header")? as u64;
    if n == 0 || d == 0 {
        return Err(Error::BadHeader(format!("empty matrix (n={n}, d={d})")));
    }
    let payload = n
        .checked_mul(d)
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| Error::BadHeader(format!("n={n}, d={d} overflows")))?;
    let floats = cur.take(payload, "embedding payload")?;
    let mut data = Vec::with_capacity((n * d) as usize);
    for (k, chunk) in floats.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::NonFinite {
                row: k / d as usize,
                col: k % d as usize,
            });
        }
        data.push(v);
    }
    let id_len = cur.u64("id block length")?;
    let id_bytes = cur.take(id_len, "id block")?;
    if cur.pos != bytes.len() {
        return Err(Error::BadHeader(format!(
            "{} trailing bytes after id block",
            bytes.len() - cur.pos
        )));
    }
    let ids_text = std::str::from_utf8(id_bytes)
        .map_err(|e| Error::BadHeader(format!("id block is not UTF-8: {e}")))?;
    let ids: Vec<String> = ids_text.split('\n').map(str::to_string).collect();
    if ids.len() as u64 != n {
        return Err(Error::BadHeader(format!(
            "id block holds {} ids for {n} rows",
            ids.len()
        )));
    }
    EmbeddingMatrix::new(ids, data, d as usize)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: u64, what: &'static str) -> Result<&'a [u8]> {
        let remaining = (self.bytes.len() - self.pos) as u64;
        if len > remaining {
            return Err(Error::Truncated {
                what,
                expected: len,
                actual: remaining,
            });
        }
        let out = &self.bytes[self.pos..self.pos + len as usize];
        self.pos += len as usize;
        Ok(out)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn write_embeddings(matrix: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_cev1(matrix)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads a `CEV1` file in its stored row order.
pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_cev1(&bytes)
}

/// Reads a `CEV1` file and reorders its rows to corpus order. The stored id
/// set must equal the corpus id set.
pub fn load_embeddings(path: impl AsRef<Path>, corpus: &Corpus) -> Result<EmbeddingMatrix> {
    align_to_corpus(read_embeddings(path)?, corpus)
}

pub fn align_to_corpus(matrix: EmbeddingMatrix, corpus: &Corpus) -> Result<EmbeddingMatrix> {
    const MAX_LISTED: usize = 10;
    let mut offenders: Vec<String> = matrix
        .ids
        .iter()
        .filter(|id| corpus.position(id).is_none())
        .map(|id| format!("{id} (not in corpus)"))
        .collect();
    offenders.extend(
        corpus
            .ids()
            .filter(|id| matrix.position(id).is_none())
            .map(|id| format!("{id} (no embedding)")),
    );
    if !offenders.is_empty() {
        let count = offenders.len();
        offenders.truncate(MAX_LISTED);
        return Err(Error::IdMismatch {
            count,
            sample: offenders,
        });
    }
    let rows: Vec<usize> = corpus
        .ids()
        .map(|id| matrix.position(id).expect("id sets checked"))
        .collect();
    if rows.iter().enumerate().all(|(i, &r)| i == r) {
        return Ok(matrix);
    }
    Ok(matrix.select(&rows))
}
