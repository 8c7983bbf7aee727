//! Morph-sequence evaluation: trend consistency and local smoothness scores
//! (GCS, LCS, GLCS), Fréchet distances and path-length metrics.

mod frechet;
mod glcs;
mod path;
mod providers;

use rayon::prelude::*;
use serde::Serialize;

pub use frechet::{frechet_distance, FeatureSet, NEG_EIG_TOL};
pub use glcs::{gcs, gcs_with, glcs, lcs, GcsResult, LcsResult, SimilarityMatrix};
pub use path::{lpips_path, ppl};
pub use providers::{
    DistanceProvider, EmbeddingCosine, EuclideanDistance, ImageEmbedder, ProjectionEmbedder, SimilarityProvider,
};

use crate::denoiser::Image;
use crate::error::{Error, Result};
use crate::math::{interp_weights, ScalarSlerpMode};

/// Queries `provider` for every frame against both endpoints.
pub fn similarity_matrix(
    provider: &dyn SimilarityProvider,
    a: &Image,
    b: &Image,
    frames: &[Image],
) -> Result<SimilarityMatrix> {
    let rows = frames
        .par_iter()
        .map(|f| Ok((provider.similarity(a, f)?, provider.similarity(b, f)?)))
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let (s_a, s_b) = rows.into_iter().unzip();
    SimilarityMatrix::new(
        s_a,
        s_b,
        provider.similarity(a, a)?,
        provider.similarity(a, b)?,
        provider.similarity(b, a)?,
        provider.similarity(b, b)?,
    )
}

/// One evaluated morph: endpoints and the frames between them.
#[derive(Debug, Clone, Copy)]
pub struct MorphPair<'a> {
    pub a: &'a Image,
    pub b: &'a Image,
    pub frames: &'a [Image],
}

fn embed_all(embedder: &dyn ImageEmbedder, images: &[&Image]) -> Result<Vec<Vec<f64>>> {
    images.par_iter().map(|i| embedder.embed(i)).collect()
}

type Embeddings = Vec<Vec<f64>>;

fn pair_sets(embedder: &dyn ImageEmbedder, pair: &MorphPair<'_>) -> Result<(Embeddings, Embeddings)> {
    if pair.frames.is_empty() {
        return Err(Error::invalid("morph pair has no frames"));
    }
    let ends = embed_all(embedder, &[pair.a, pair.b])?;
    let frames = embed_all(embedder, &pair.frames.iter().collect::<Vec<_>>())?;
    Ok((ends, frames))
}

/// Mean over pairs of the distance between each pair's endpoint features and
/// its frame features.
pub fn fid_local(pairs: &[MorphPair<'_>], embedder: &dyn ImageEmbedder) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::invalid("no morph pairs"));
    }
    let mut total = 0.0;
    for p in pairs {
        let (ends, frames) = pair_sets(embedder, p)?;
        total += frechet_distance(&FeatureSet::new(ends)?, &FeatureSet::new(frames)?)?;
    }
    Ok(total / pairs.len() as f64)
}

/// Distance between all endpoints pooled and all frames pooled.
pub fn fid_global(pairs: &[MorphPair<'_>], embedder: &dyn ImageEmbedder) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::invalid("no morph pairs"));
    }
    let (mut ends, mut frames) = (Vec::new(), Vec::new());
    for p in pairs {
        let (e, f) = pair_sets(embedder, p)?;
        ends.extend(e);
        frames.extend(f);
    }
    frechet_distance(&FeatureSet::new(ends)?, &FeatureSet::new(frames)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerFrame {
    pub g: Vec<f64>,
    pub g_tilde: Vec<f64>,
    pub l: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProviderIds {
    pub similarity: String,
    pub embedder: String,
    pub distance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub gamma: f64,
    pub gcs: f64,
    pub lcs: f64,
    pub glcs: f64,
    pub gcs_display: f64,
    pub lcs_display: f64,
    pub glcs_display: f64,
    pub per_frame: PerFrame,
    pub fid_local: Option<f64>,
    pub fid_global: Option<f64>,
    pub lpips_path: Option<f64>,
    pub ppl: Option<f64>,
    pub provider_ids: ProviderIds,
}

impl MetricReport {
    /// One header and one value row; optional metrics are blank when absent.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "gamma,gcs,lcs,glcs,glcs_display,fid_local,fid_global,lpips_path,ppl\n{},{},{},{},{},{},{},{},{}\n",
            self.gamma,
            self.gcs,
            self.lcs,
            self.glcs,
            self.glcs_display,
            opt(self.fid_local),
            opt(self.fid_global),
            opt(self.lpips_path),
            opt(self.ppl),
        )
    }
}

pub struct Providers<'p> {
    pub similarity: &'p dyn SimilarityProvider,
    pub embedder: &'p dyn ImageEmbedder,
    pub distance: &'p dyn DistanceProvider,
}

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    pub gamma: f64,
    pub sim_mode: ScalarSlerpMode,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            sim_mode: ScalarSlerpMode::Angle,
        }
    }
}

/// Full report for one sequence. `path_latents`, when given, holds one
/// latent per path point (`A`, frames, `B`) and enables PPL.
pub fn evaluate(
    pair: MorphPair<'_>,
    path_latents: Option<&[Vec<f64>]>,
    providers: &Providers<'_>,
    opts: EvalOptions,
) -> Result<MetricReport> {
    let sim = similarity_matrix(providers.similarity, pair.a, pair.b, pair.frames)?;
    let alphas = interp_weights(pair.frames.len())?;
    let g = gcs_with(&sim, &alphas, opts.gamma, opts.sim_mode)?;
    let l = lcs(&sim)?;
    let score = glcs(g.gcs, l.lcs)?;

    let mut path: Vec<Image> = Vec::with_capacity(pair.frames.len() + 2);
    path.push(pair.a.clone());
    path.extend(pair.frames.iter().cloned());
    path.push(pair.b.clone());

    let ppl = path_latents.map(|w| ppl(&path, w, providers.distance)).transpose()?;
    Ok(MetricReport {
        gamma: opts.gamma,
        gcs: g.gcs,
        lcs: l.lcs,
        glcs: score,
        gcs_display: 100.0 * g.gcs,
        lcs_display: 100.0 * l.lcs,
        glcs_display: 100.0 * score,
        per_frame: PerFrame {
            g: g.g,
            g_tilde: g.g_tilde,
            l: l.l,
        },
        fid_local: Some(fid_local(&[pair], providers.embedder)?),
        fid_global: Some(fid_global(&[pair], providers.embedder)?),
        lpips_path: Some(lpips_path(&path, providers.distance)?),
        ppl,
        provider_ids: ProviderIds {
            similarity: providers.similarity.id().to_owned(),
            embedder: providers.embedder.id().to_owned(),
            distance: providers.distance.id().to_owned(),
        },
    })
}
