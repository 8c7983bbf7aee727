//! Desk-scale stand-ins for the perceptual networks used in evaluation.
//! Real feature extractors plug in through the same traits.

use ndarray::Array2;

use crate::denoiser::Image;
use crate::error::{Error, Result};
use crate::math::cosine;
use crate::rng::SplitMix64;

pub trait ImageEmbedder: Send + Sync {
    fn id(&self) -> &str;
    fn embed(&self, image: &Image) -> Result<Vec<f64>>;
}

/// Bounded similarity in [-1, 1].
pub trait SimilarityProvider: Send + Sync {
    fn id(&self) -> &str;
    fn similarity(&self, x: &Image, y: &Image) -> Result<f64>;
}

pub trait DistanceProvider: Send + Sync {
    fn id(&self) -> &str;
    fn distance(&self, x: &Image, y: &Image) -> Result<f64>;
}

/// Fixed Gaussian random projection of centred pixels (`2p - 1`).
pub struct ProjectionEmbedder {
    id: String,
    dim: usize,
    seed: u64,
}

impl ProjectionEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self {
            id: format!("projection-{dim}-{seed}"),
            dim,
            seed,
        }
    }

    fn matrix(&self, n_in: usize) -> Array2<f64> {
        let mut rng = SplitMix64::labeled(self.seed, &format!("proj.{n_in}"));
        let scale = 1.0 / (self.dim as f64).sqrt();
        Array2::from_shape_simple_fn((self.dim, n_in), || rng.normal() * scale)
    }
}

impl Default for ProjectionEmbedder {
    fn default() -> Self {
        Self::new(64, 0)
    }
}

impl ImageEmbedder for ProjectionEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn embed(&self, image: &Image) -> Result<Vec<f64>> {
        let x: ndarray::Array1<f64> = image.pixels().iter().map(|p| 2.0 * p - 1.0).collect();
        Ok(self.matrix(x.len()).dot(&x).to_vec())
    }
}

/// Cosine similarity between embeddings.
pub struct EmbeddingCosine<E> {
    id: String,
    embedder: E,
}

impl<E: ImageEmbedder> EmbeddingCosine<E> {
    pub fn new(embedder: E) -> Self {
        Self {
            id: format!("cosine({})", embedder.id()),
            embedder,
        }
    }

    pub fn embedder(&self) -> &E {
        &self.embedder
    }
}

impl<E: ImageEmbedder> SimilarityProvider for EmbeddingCosine<E> {
    fn id(&self) -> &str {
        &self.id
    }

    fn similarity(&self, x: &Image, y: &Image) -> Result<f64> {
        let (a, b) = (self.embedder.embed(x)?, self.embedder.embed(y)?);
        if a == b {
            return Ok(1.0);
        }
        // A zero embedding (mid-grey input) has no direction.
        if a.iter().all(|&v| v == 0.0) || b.iter().all(|&v| v == 0.0) {
            return Ok(0.0);
        }
        cosine(&a, &b)
    }
}

/// Root-mean-square pixel difference. A true metric, so path lengths obey
/// the triangle inequality.
#[derive(Debug, Default, Clone, Copy)]
pub struct EuclideanDistance;

impl DistanceProvider for EuclideanDistance {
    fn id(&self) -> &str {
        "pixel-rms"
    }

    fn distance(&self, x: &Image, y: &Image) -> Result<f64> {
        if x.shape() != y.shape() {
            return Err(Error::shape(format!("images {:?} and {:?}", x.shape(), y.shape())));
        }
        let diff = x.pixels() - y.pixels();
        Ok((diff.mapv(|v| v * v).sum() / diff.len() as f64).sqrt())
    }
}
