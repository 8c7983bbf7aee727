use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::math::cosine;
use crate::rng::{hash_str, SplitMix64};

/// Maps text to a (tokens x dim) embedding matrix.
pub trait TextEncoder: Send + Sync {
    fn id(&self) -> &str;
    fn dim(&self) -> usize;
    fn encode(&self, text: &str) -> Result<Array2<f64>>;
}

/// Offline stand-in for a real text encoder: each lowercase word hashes to
/// a fixed pseudorandom row, preceded by a start row. Equal words give equal
/// rows, so captions that share vocabulary share embedding mass.
#[derive(Debug, Clone)]
pub struct HashTextEncoder {
    dim: usize,
    seed: u64,
    max_tokens: usize,
}

impl HashTextEncoder {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self {
            dim,
            seed,
            max_tokens: 16,
        }
    }

    fn row(&self, token: &str) -> Vec<f64> {
        let mut rng = SplitMix64::new(self.seed ^ hash_str(token));
        let scale = 1.0 / (self.dim as f64).sqrt();
        (0..self.dim).map(|_| rng.normal() * scale).collect()
    }
}

pub(crate) fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

impl TextEncoder for HashTextEncoder {
    fn id(&self) -> &str {
        "hash-text"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<Array2<f64>> {
        if self.dim == 0 {
            return Err(Error::invalid("text embedding dimension is zero"));
        }
        let mut rows = vec![self.row("<start>")];
        rows.extend(tokenize(text).iter().take(self.max_tokens).map(|t| self.row(t)));
        let flat: Vec<f64> = rows.concat();
        Array2::from_shape_vec((rows.len(), self.dim), flat).map_err(|e| Error::shape(e.to_string()))
    }
}

fn pooled(e: &Array2<f64>) -> Result<Array1<f64>> {
    e.mean_axis(Axis(0))
        .ok_or_else(|| Error::invalid("cannot pool an embedding with no tokens"))
}

/// Cosine similarity between the token-mean of the anchor embedding and
/// each caption embedding.
pub fn anchor_similarity(e_anc: &Array2<f64>, e_a: &Array2<f64>, e_b: &Array2<f64>) -> Result<(f64, f64)> {
    let anc = pooled(e_anc)?;
    let a = pooled(e_a)?;
    let b = pooled(e_b)?;
    Ok((
        cosine(anc.as_slice().unwrap(), a.as_slice().unwrap())?,
        cosine(anc.as_slice().unwrap(), b.as_slice().unwrap())?,
    ))
}
