//! Deterministic text and image embeddings.
//!
//! Two providers exist: a signed feature-hashing embedder that needs no model
//! assets, and a JSON Lines cache of precomputed vectors keyed by exact text
//! (or image digest).

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backend::GeneratedImage;
use crate::error::{Error, Result};

pub const EDGE_TEXT_DIM: usize = 384;
pub const CLOUD_TEXT_DIM: usize = 768;
pub const IMAGE_DIM: usize = 512;

/// Fixed-dimension real vector with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: 1,
                actual: 0,
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding"));
        }
        Ok(EmbeddingVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.0)
    }

    pub fn cosine(&self, other: &EmbeddingVector) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        Ok(cosine(&self.0, &other.0))
    }
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cosine similarity; zero when either side has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let (na, nb) = (l2_norm(a), l2_norm(b));
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Scales to unit L2 norm. `None` for the zero vector.
pub(crate) fn normalized(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let n = l2_norm(&v);
    if n == 0.0 || !n.is_finite() {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= n);
    Some(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    FileCache,
    HashEmbedder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub dim: usize,
    pub normalize: bool,
    pub cache_path: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl ProviderConfig {
    pub fn hash(dim: usize, seed: u64) -> Self {
        ProviderConfig {
            kind: ProviderKind::HashEmbedder,
            dim,
            normalize: true,
            cache_path: None,
            seed: Some(seed),
        }
    }

    pub fn file_cache(dim: usize, path: impl Into<PathBuf>) -> Self {
        ProviderConfig {
            kind: ProviderKind::FileCache,
            dim,
            normalize: true,
            cache_path: Some(path.into()),
            seed: None,
        }
    }
}

#[derive(Debug, Clone)]
enum Source {
    Hash { seed: u64 },
    Cache(HashMap<String, Vec<f64>>),
}

/// A constructed embedding provider. Read-only after construction.
#[derive(Debug, Clone)]
pub struct Embedder {
    dim: usize,
    normalize: bool,
    source: Source,
}

impl Embedder {
    pub fn from_config(config: &ProviderConfig) -> Result<Self> {
        if config.dim == 0 {
            return Err(Error::InvalidConfig("dim must be positive".into()));
        }
        let source = match config.kind {
            ProviderKind::HashEmbedder => Source::Hash {
                seed: config
                    .seed
                    .ok_or_else(|| Error::InvalidConfig("hash embedder requires a seed".into()))?,
            },
            ProviderKind::FileCache => {
                let path = config
                    .cache_path
                    .as_ref()
                    .ok_or_else(|| Error::InvalidConfig("file cache requires cache_path".into()))?;
                Source::Cache(load_cache(path, config.dim)?)
            }
        };
        Ok(Embedder {
            dim: config.dim,
            normalize: config.normalize,
            source,
        })
    }

    pub fn hash(dim: usize, seed: u64) -> Self {
        Embedder {
            dim,
            normalize: true,
            source: Source::Hash { seed },
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
        let text = text.trim();
        if text.is_empty() {
            return Err(Error::EmptyText);
        }
        let raw = match &self.source {
            Source::Hash { seed } => {
                let mut acc = vec![0.0; self.dim];
                let mut any = false;
                for token in tokenize(text) {
                    let h = seeded_hash(*seed, token.as_bytes());
                    let idx = (h % self.dim as u64) as usize;
                    let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
                    acc[idx] += sign;
                    any = true;
                }
                if !any {
                    return Err(Error::EmptyText);
                }
                acc
            }
            Source::Cache(map) => map
                .get(text)
                .cloned()
                .ok_or_else(|| Error::CacheMiss(text.to_string()))?,
        };
        self.finish(raw)
    }

    /// Mock images map their stored semantic vector to `dim` by truncating
    /// or zero-padding; remote images are looked up by digest in a file cache.
    pub fn embed_image(&self, image: &GeneratedImage) -> Result<EmbeddingVector> {
        match (&self.source, image.semantic_vec()) {
            (_, Some(vec)) => {
                let src = vec.as_slice();
                let mut out = vec![0.0; self.dim];
                let n = src.len().min(self.dim);
                out[..n].copy_from_slice(&src[..n]);
                if self.normalize && l2_norm(&out) == 0.0 {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim,
                        actual: src.len(),
                    });
                }
                self.finish(out)
            }
            (Source::Cache(map), None) => {
                let key = image.digest();
                let v = map
                    .get(key.0.as_str())
                    .cloned()
                    .ok_or(Error::CacheMiss(key.0))?;
                self.finish(v)
            }
            (Source::Hash { .. }, None) => Err(Error::MissingSemanticVector),
        }
    }

    fn finish(&self, v: Vec<f64>) -> Result<EmbeddingVector> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: v.len(),
            });
        }
        if self.normalize {
            let v = normalized(v).ok_or(Error::NonFinite("zero-norm embedding"))?;
            EmbeddingVector::new(v)
        } else {
            EmbeddingVector::new(v)
        }
    }
}

pub const EDGE_TEXT_SEED: u64 = 0xed6e;
pub const CLOUD_TEXT_SEED: u64 = 0xc10d;
pub const IMAGE_SEED: u64 = 0x1a6e;

/// The three encoders the predictors consume: a small prompt encoder on the
/// edge, a wider one in the cloud, and an image encoder for drafts.
#[derive(Debug, Clone)]
pub struct Encoders {
    pub edge_text: Embedder,
    pub cloud_text: Embedder,
    pub image: Embedder,
}

impl Default for Encoders {
    fn default() -> Self {
        Encoders {
            edge_text: Embedder::hash(EDGE_TEXT_DIM, EDGE_TEXT_SEED),
            cloud_text: Embedder::hash(CLOUD_TEXT_DIM, CLOUD_TEXT_SEED),
            image: Embedder::hash(IMAGE_DIM, IMAGE_SEED),
        }
    }
}

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// FNV-1a over the bytes, seeded through the offset basis, then a splitmix64
/// finalizer so the high bit (used as the sign) is well mixed.
fn seeded_hash(seed: u64, bytes: &[u8]) -> u64 {
    const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = FNV_OFFSET ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    let mut z = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Deserialize)]
struct CacheLine {
    key: String,
    vec: Vec<f32>,
}

fn load_cache(path: &Path, dim: usize) -> Result<HashMap<String, Vec<f64>>> {
    let reader = BufReader::new(File::open(path)?);
    let mut map = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CacheLine =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e))?;
        if rec.vec.len() != dim {
            return Err(Error::parse(
                path,
                i + 1,
                format!("vector length {} != dim {dim}", rec.vec.len()),
            ));
        }
        if rec.vec.iter().any(|v| !v.is_finite()) {
            return Err(Error::parse(path, i + 1, "non-finite vector entry"));
        }
        map.insert(rec.key, rec.vec.into_iter().map(f64::from).collect());
    }
    Ok(map)
}
