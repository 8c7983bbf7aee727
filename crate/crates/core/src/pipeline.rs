//! End-to-end wiring used by the command line: backend construction, prompt
//! acquisition and a full run from image files to a run directory.

use std::path::Path;
use std::time::Duration;

use log::warn;

use crate::config::{BackendKind, MorphConfig};
use crate::denoiser::{Backend, ToyBackend, ToyConfig};
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::io::{load_image_as, write_run, RunInputs, RunManifest};
use crate::prompting::{build_vlm_request_from_paths, HashTextEncoder, PromptTexts, PromptTriplet, VlmClient};

/// Seed of the hashed text encoder paired with every backend.
pub const TEXT_ENCODER_SEED: u64 = 0x7e57;

pub fn build_backend(cfg: &MorphConfig) -> Result<Box<dyn Backend>> {
    match cfg.backend {
        BackendKind::Toy => Ok(Box::new(ToyBackend::new(ToyConfig {
            seed: cfg.toy_seed,
            ..ToyConfig::default()
        }))),
        BackendKind::Adapter => Err(Error::Backend(
            "the latent-diffusion adapter needs external model weights, which this build does not load".into(),
        )),
    }
}

pub fn text_encoder(backend: &dyn Backend) -> HashTextEncoder {
    HashTextEncoder::new(backend.descriptor().text_dim, TEXT_ENCODER_SEED)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptSource {
    Given,
    Vlm,
    Fallback,
}

impl PromptSource {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptSource::Given => "given",
            PromptSource::Vlm => "vlm",
            PromptSource::Fallback => "fallback",
        }
    }
}

pub fn vlm_client(cfg: &MorphConfig, url: Option<&str>) -> Option<VlmClient> {
    url.map(str::to_owned)
        .or_else(|| cfg.vlm_url.clone())
        .map(|u| VlmClient::new(u, Duration::from_secs(cfg.vlm_timeout_secs)))
}

pub fn caption_pair(client: &VlmClient, a: &Path, b: &Path, model: &str) -> Result<PromptTexts> {
    client.caption(&build_vlm_request_from_paths(a, b, model)?)
}

/// Asks the VLM when one is configured. Any failure degrades to an empty
/// anchor and empty captions instead of aborting the run.
pub fn acquire_prompts(client: Option<&VlmClient>, a: &Path, b: &Path, model: &str) -> (PromptTexts, PromptSource) {
    let fallback = (PromptTexts::new("", "", ""), PromptSource::Fallback);
    let Some(client) = client else {
        return fallback;
    };
    match caption_pair(client, a, b, model) {
        Ok(p) => (p, PromptSource::Vlm),
        Err(e) => {
            warn!("anchor prompt unavailable, continuing without one: {e}");
            fallback
        }
    }
}

/// Where a run failed, so callers can map it to an exit status.
#[derive(Debug)]
pub enum RunError {
    Input(Error),
    Backend(Error),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Input(e) => write!(f, "{e}"),
            RunError::Backend(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for RunError {}

pub struct RunRequest<'a> {
    pub path_a: &'a Path,
    pub path_b: &'a Path,
    pub out_dir: &'a Path,
    pub prompts: PromptTexts,
    pub prompt_source: PromptSource,
    pub contact_sheet: bool,
}

pub fn run_pair(cfg: &MorphConfig, req: RunRequest<'_>) -> std::result::Result<RunManifest, RunError> {
    cfg.validate().map_err(RunError::Input)?;
    let backend = build_backend(cfg).map_err(RunError::Backend)?;
    let shape = backend.descriptor().image_shape;
    let image_a = load_image_as(req.path_a, shape).map_err(RunError::Input)?;
    let image_b = load_image_as(req.path_b, shape).map_err(RunError::Input)?;
    let prompts =
        PromptTriplet::embed(req.prompts.clone(), &text_encoder(backend.as_ref())).map_err(RunError::Input)?;
    let engine = Engine::new(backend.as_ref(), cfg.clone()).map_err(RunError::Input)?;
    let seq = engine
        .generate_sequence(&image_a, &image_b, &prompts)
        .map_err(RunError::Backend)?;
    let inputs = RunInputs {
        path_a: req.path_a,
        path_b: req.path_b,
        image_a: &image_a,
        image_b: &image_b,
        config: cfg.to_json(),
        prompts: &req.prompts,
        prompt_source: req.prompt_source.as_str(),
        backend_name: &backend.descriptor().name,
        contact_sheet: req.contact_sheet,
    };
    write_run(req.out_dir, &seq, &inputs).map_err(RunError::Input)
}
