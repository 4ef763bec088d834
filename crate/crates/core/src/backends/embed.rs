//! Sentence embedders used by the diversity analysis.

use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::http::classify;
use super::BackendError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub model_tag: String,
}

pub trait Embedder: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, BackendError>;
}

/// Rejects empty batches, ragged dimensions and non-finite entries.
pub fn check_batch(texts: usize, vectors: &[EmbeddingVector]) -> Result<(), BackendError> {
    if vectors.len() != texts {
        return Err(BackendError::Embedding(format!(
            "{} vectors for {texts} texts",
            vectors.len()
        )));
    }
    let Some(first) = vectors.first() else {
        return Ok(());
    };
    let dim = first.values.len();
    if dim == 0 {
        return Err(BackendError::Embedding("zero-length vector".into()));
    }
    for v in vectors {
        if v.values.len() != dim {
            return Err(BackendError::Embedding(format!(
                "dimension {} differs from {dim}",
                v.values.len()
            )));
        }
        if v.values.iter().any(|x| !x.is_finite()) {
            return Err(BackendError::Embedding("non-finite entry".into()));
        }
    }
    Ok(())
}

fn require_texts(texts: &[String]) -> Result<(), BackendError> {
    if texts.is_empty() {
        Err(BackendError::InvalidRequest(
            "embed needs at least one text".into(),
        ))
    } else {
        Ok(())
    }
}

/// Offline embedder: a stable pseudo-random unit vector per distinct text.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }

    fn vector(&self, text: &str) -> Vec<f64> {
        let digest = Sha256::digest(text.as_bytes());
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(seed);
        let mut v: Vec<f64> = (0..self.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        } else {
            v[0] = 1.0;
        }
        v
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(64)
    }
}

impl Embedder for HashEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, BackendError> {
        require_texts(texts)?;
        let tag = format!("hash-{}", self.dim);
        let out: Vec<_> = texts
            .iter()
            .map(|t| EmbeddingVector {
                values: self.vector(t),
                model_tag: tag.clone(),
            })
            .collect();
        check_batch(texts.len(), &out)?;
        Ok(out)
    }
}

/// Remote embedder speaking the OpenAI `/embeddings` contract.
#[derive(Debug)]
pub struct HttpEmbedder {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    api_key: Option<String>,
}

#[derive(Deserialize)]
struct WireEmbeddings {
    data: Vec<WireDatum>,
}

#[derive(Deserialize)]
struct WireDatum {
    embedding: Vec<f64>,
    #[serde(default)]
    index: Option<usize>,
}

impl HttpEmbedder {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
    ) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(Self {
            client,
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
        })
    }
}

impl Embedder for HttpEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, BackendError> {
        require_texts(texts)?;
        let url = format!("{}/embeddings", self.endpoint.trim_end_matches('/'));
        let mut rb = self
            .client
            .post(url)
            .json(&json!({ "model": self.model, "input": texts }));
        if let Some(key) = &self.api_key {
            rb = rb.bearer_auth(key);
        }
        let resp = rb.send().map_err(classify)?;
        let status = resp.status();
        let body = resp.text().map_err(classify)?;
        if !status.is_success() {
            return Err(BackendError::Status {
                status: status.as_u16(),
                body,
            });
        }
        let mut wire: WireEmbeddings =
            serde_json::from_str(&body).map_err(|e| BackendError::Malformed(e.to_string()))?;
        wire.data.sort_by_key(|d| d.index.unwrap_or(0));
        let out: Vec<_> = wire
            .data
            .into_iter()
            .map(|d| EmbeddingVector {
                values: d.embedding,
                model_tag: self.model.clone(),
            })
            .collect();
        check_batch(texts.len(), &out)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_texts_identical_vectors() {
        let e = HashEmbedder::default();
        let v = e.embed(&["a".into(), "a".into()]).unwrap();
        assert_eq!(v[0], v[1]);
    }

    #[test]
    fn distinct_texts_same_dimension() {
        let e = HashEmbedder::new(16);
        let v = e.embed(&["a".into(), "b".into()]).unwrap();
        assert_eq!(v[0].values.len(), 16);
        assert_eq!(v[1].values.len(), 16);
        assert_ne!(v[0].values, v[1].values);
        let norm: f64 = v[0].values.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_batch_rejected() {
        assert!(matches!(
            HashEmbedder::default().embed(&[]),
            Err(BackendError::InvalidRequest(_))
        ));
    }

    #[test]
    fn ragged_batch_is_internal_error() {
        let vs = vec![
            EmbeddingVector {
                values: vec![1.0, 0.0],
                model_tag: "t".into(),
            },
            EmbeddingVector {
                values: vec![1.0],
                model_tag: "t".into(),
            },
        ];
        assert!(matches!(
            check_batch(2, &vs),
            Err(BackendError::Embedding(_))
        ));
        let nan = vec![EmbeddingVector {
            values: vec![f64::NAN],
            model_tag: "t".into(),
        }];
        assert!(check_batch(1, &nan).is_err());
    }
}
