//! Text embeddings: a deterministic hashing embedder and an OpenAI-compatible
//! remote client, plus a checksummed binary matrix format.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::pool::map_bounded;
use crate::tokens::tokenize;

pub const DEFAULT_DIM: usize = 256;
const MAGIC: &[u8; 8] = b"TAGEMB\0\x01";

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding request failed: {0}")]
    Transport(String),
    #[error("embedding response: {0}")]
    Response(String),
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("checksum mismatch for {0}")]
    Checksum(PathBuf),
    #[error("invalid embedding configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Row-major `rows x dim` matrix of f64.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * dim, "data length must be rows * dim");
        Self { rows, dim, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Cosine similarity of rows `i` and `j`; 0 when either row is zero.
    pub fn cosine(&self, i: usize, j: usize) -> f64 {
        cosine(self.row(i), self.row(j))
    }

    pub fn write_to(&self, mut w: impl Write) -> io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.rows as u64).to_le_bytes())?;
        w.write_all(&(self.dim as u64).to_le_bytes())?;
        w.write_all(&8u32.to_le_bytes())?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(28 + self.data.len() * 8);
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    /// Writes the matrix and a `<path>.sha256` sidecar holding the hex digest.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EmbedError> {
        let path = path.as_ref();
        let bytes = self.to_bytes();
        fs::write(path, &bytes)?;
        fs::write(sidecar(path), hex::encode(Sha256::digest(&bytes)))?;
        Ok(())
    }

    /// Loads a matrix, verifying the sidecar checksum when one exists.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, EmbedError> {
        let path = path.as_ref();
        let bytes = fs::read(path)?;
        match fs::read_to_string(sidecar(path)) {
            Ok(expected) => {
                if expected.trim() != hex::encode(Sha256::digest(&bytes)) {
                    return Err(EmbedError::Checksum(path.to_owned()));
                }
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }
        Self::from_bytes(&bytes).map_err(|message| EmbedError::Format {
            path: path.to_owned(),
            message,
        })
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self, String> {
        let mut magic = [0u8; 8];
        let mut u64buf = [0u8; 8];
        let mut u32buf = [0u8; 4];
        let short = |_| "truncated header".to_string();
        bytes.read_exact(&mut magic).map_err(short)?;
        if &magic != MAGIC {
            return Err("bad magic".into());
        }
        bytes.read_exact(&mut u64buf).map_err(short)?;
        let rows = u64::from_le_bytes(u64buf) as usize;
        bytes.read_exact(&mut u64buf).map_err(short)?;
        let dim = u64::from_le_bytes(u64buf) as usize;
        bytes.read_exact(&mut u32buf).map_err(short)?;
        if u32::from_le_bytes(u32buf) != 8 {
            return Err("only 8-byte floats are supported".into());
        }
        let count = rows.checked_mul(dim).ok_or("dimensions overflow")?;
        if bytes.len() != count * 8 {
            return Err(format!("expected {} payload bytes, found {}", count * 8, bytes.len()));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Ok(Self { rows, dim, data })
    }
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".sha256");
    PathBuf::from(s)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

pub trait TextEmbedder: Send + Sync {
    /// Identifier used in stage cache keys.
    fn name(&self) -> String;
    fn embed(&self, texts: &[&str]) -> Result<EmbeddingMatrix, EmbedError>;
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Signed feature hashing of tokens with `1 + ln(tf)` weights, L2-normalized.
/// Texts without tokens map to the zero vector.
pub fn offline_hash_embed(text: &str, dim: usize) -> Vec<f64> {
    let mut counts = std::collections::BTreeMap::<String, usize>::new();
    for t in tokenize(text) {
        *counts.entry(t).or_default() += 1;
    }
    let mut v = vec![0.0; dim];
    for (token, tf) in counts {
        let bucket = (fnv1a(token.as_bytes()) % dim as u64) as usize;
        let sign = if fnv1a(format!("sign:{token}").as_bytes()) & 1 == 0 {
            1.0
        } else {
            -1.0
        };
        v[bucket] += sign * (1.0 + (tf as f64).ln());
    }
    l2_normalize(&mut v);
    v
}

fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

#[derive(Debug, Clone)]
pub struct HashEmbedder {
    pub dim: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self { dim: DEFAULT_DIM }
    }
}

impl TextEmbedder for HashEmbedder {
    fn name(&self) -> String {
        format!("hash-fnv1a-{}", self.dim)
    }

    fn embed(&self, texts: &[&str]) -> Result<EmbeddingMatrix, EmbedError> {
        let mut data = Vec::with_capacity(texts.len() * self.dim);
        for t in texts {
            data.extend(offline_hash_embed(t, self.dim));
        }
        Ok(EmbeddingMatrix::new(texts.len(), self.dim, data))
    }
}

/// Client for `{endpoint}/v1/embeddings`. Batches run on the bounded pool and
/// returned vectors are L2-normalized.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    url: String,
    model: String,
    batch_size: usize,
    workers: usize,
    api_key: Option<String>,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f64>,
}

impl RemoteEmbedder {
    pub fn new(
        endpoint: &str,
        model: &str,
        batch_size: usize,
        workers: usize,
        timeout: Duration,
        api_key: Option<String>,
    ) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            url: format!("{}/v1/embeddings", endpoint.trim_end_matches('/')),
            model: model.to_owned(),
            batch_size: batch_size.max(1),
            workers: workers.max(1),
            api_key,
            agent,
        }
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let body = json!({"model": self.model, "input": texts}).to_string();
        let mut req = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send(&body).map_err(|e| EmbedError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| EmbedError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(EmbedError::Transport(format!("HTTP {status}: {text}")));
        }
        let mut parsed: EmbeddingResponse =
            serde_json::from_str(&text).map_err(|e| EmbedError::Response(e.to_string()))?;
        if parsed.data.len() != texts.len() {
            return Err(EmbedError::Response(format!(
                "{} embeddings for {} inputs",
                parsed.data.len(),
                texts.len()
            )));
        }
        parsed.data.sort_by_key(|item| item.index);
        Ok(parsed.data.into_iter().map(|item| item.embedding).collect())
    }
}

impl TextEmbedder for RemoteEmbedder {
    fn name(&self) -> String {
        format!("remote-{}", self.model)
    }

    fn embed(&self, texts: &[&str]) -> Result<EmbeddingMatrix, EmbedError> {
        let chunks: Vec<&[&str]> = texts.chunks(self.batch_size).collect();
        let batches = map_bounded(&chunks, self.workers, |_, chunk| self.embed_batch(chunk))?;
        let mut rows: Vec<Vec<f64>> = batches.into_iter().flatten().collect();
        for r in &mut rows {
            l2_normalize(r);
        }
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
            return Err(EmbedError::Response(format!(
                "row {bad} has dimension {} (expected {dim})",
                rows[bad].len()
            )));
        }
        Ok(EmbeddingMatrix::new(rows.len(), dim, rows.concat()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    #[default]
    Hash,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderConfig {
    pub kind: EmbedderKind,
    pub dim: usize,
    pub endpoint: String,
    pub model: String,
    pub batch_size: usize,
    pub workers: usize,
    pub timeout_secs: f64,
    pub api_key_env: String,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            kind: EmbedderKind::Hash,
            dim: DEFAULT_DIM,
            endpoint: "http://localhost:8000".into(),
            model: "sentence-transformers/all-MiniLM-L6-v2".into(),
            batch_size: 64,
            workers: 4,
            timeout_secs: 120.0,
            api_key_env: "OPENAI_API_KEY".into(),
        }
    }
}

impl EmbedderConfig {
    pub fn build(&self) -> Result<Box<dyn TextEmbedder>, EmbedError> {
        match self.kind {
            EmbedderKind::Hash => {
                if self.dim == 0 {
                    return Err(EmbedError::Config("embedding dimension must be positive".into()));
                }
                Ok(Box::new(HashEmbedder { dim: self.dim }))
            }
            EmbedderKind::Remote => {
                if !(self.timeout_secs > 0.0) {
                    return Err(EmbedError::Config("timeout must be positive".into()));
                }
                Ok(Box::new(RemoteEmbedder::new(
                    &self.endpoint,
                    &self.model,
                    self.batch_size,
                    self.workers,
                    Duration::from_secs_f64(self.timeout_secs),
                    std::env::var(&self.api_key_env).ok(),
                )))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_embedding_is_unit_and_deterministic() {
        let a = offline_hash_embed("graph neural network graph", 64);
        let b = offline_hash_embed("graph neural network graph", 64);
        assert_eq!(a, b);
        let norm: f64 = a.iter().map(|x| x * x).sum();
        assert!((norm - 1.0).abs() < 1e-12);
        assert!(offline_hash_embed("", 64).iter().all(|&x| x == 0.0));
        assert!(offline_hash_embed("!!!", 64).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn similar_texts_are_closer() {
        let m = HashEmbedder { dim: 256 }
            .embed(&["protein folding structure", "protein folding dynamics", "stock market prices"])
            .unwrap();
        assert!(m.cosine(0, 1) > m.cosine(0, 2));
        assert!((m.cosine(0, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn token_order_and_repetition() {
        assert_eq!(offline_hash_embed("x x x", 256), offline_hash_embed("x", 256));
        assert_eq!(offline_hash_embed("a b c", 256), offline_hash_embed("c a b", 256));
        assert!(offline_hash_embed("x y", 256).iter().filter(|&&v| v != 0.0).count() <= 2);
    }

    #[test]
    fn disjoint_tokens_without_collision_are_orthogonal() {
        let bucket = |t: &str| fnv1a(t.as_bytes()) % 256;
        assert_ne!(bucket("a"), bucket("b"));
        let m = HashEmbedder::default().embed(&["a", "b"]).unwrap();
        assert_eq!(m.cosine(0, 1), 0.0);
    }

    #[test]
    fn zero_rows_have_zero_cosine() {
        let m = EmbeddingMatrix::new(2, 2, vec![0.0, 0.0, 1.0, 0.0]);
        assert_eq!(m.cosine(0, 1), 0.0);
        assert_eq!(m.cosine(0, 0), 0.0);
    }

    #[test]
    fn binary_round_trip_and_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.bin");
        let m = EmbeddingMatrix::new(2, 3, vec![1.0, -0.5, 0.25, f64::MIN_POSITIVE, 0.0, 3.0]);
        m.save(&path).unwrap();
        assert_eq!(EmbeddingMatrix::load(&path).unwrap(), m);
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(bytes.len(), 28 + 6 * 8);

        let mut corrupted = bytes.clone();
        corrupted[30] ^= 1;
        fs::write(&path, corrupted).unwrap();
        assert!(matches!(EmbeddingMatrix::load(&path), Err(EmbedError::Checksum(_))));
    }

    #[test]
    fn rejects_truncated_payload() {
        let m = EmbeddingMatrix::new(1, 2, vec![1.0, 2.0]);
        let bytes = m.to_bytes();
        assert!(EmbeddingMatrix::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(EmbeddingMatrix::from_bytes(b"nonsense").is_err());
    }
}
