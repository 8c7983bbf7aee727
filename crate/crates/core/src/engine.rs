//! Morph generation: DDIM inversion with feature caching, then per-frame
//! denoising from interpolated latents with cache and anchor guidance.

use std::collections::BTreeMap;
use std::time::Instant;

use ndarray::{Array3, Zip};
use rayon::prelude::*;
use serde::Serialize;

use crate::cache::{blend_cache, FeatureCache, Stage, StageId};
use crate::config::MorphConfig;
use crate::denoiser::{AnchorOverride, Backend, DenoiseHooks, Image, Latent, TextConditioning};
use crate::error::{Error, Result};
use crate::math::{interp_weights, slerp_vec, InterpWeights};
use crate::prompting::{PromptTexts, PromptTriplet};
use crate::schedule::{build_schedule, IdmMap, NoiseSchedule};

pub const ID_A: &str = "A";
pub const ID_B: &str = "B";

/// One deterministic DDIM move from noise level `ab_from` to `ab_to` with
/// predicted noise `eps`. Denoising and inversion both use it.
pub fn ddim_update(x: &Latent, eps: &Latent, ab_from: f64, ab_to: f64) -> Result<Latent> {
    if x.dim() != eps.dim() {
        return Err(Error::shape(format!("latent {:?} vs noise {:?}", x.dim(), eps.dim())));
    }
    for ab in [ab_from, ab_to] {
        if !(ab > 0.0 && ab <= 1.0) {
            return Err(Error::invalid(format!("alpha-bar {ab} outside (0, 1]")));
        }
    }
    let (sf, nf) = (ab_from.sqrt(), (1.0 - ab_from).sqrt());
    let (st, nt) = (ab_to.sqrt(), (1.0 - ab_to).sqrt());
    let mut out = Latent::zeros(x.raw_dim());
    Zip::from(&mut out).and(x).and(eps).for_each(|o, &xv, &e| {
        *o = st * (xv - nf * e) / sf + nt * e;
    });
    Ok(out)
}

/// Latents visited by a chain of DDIM steps, one per step, in step order.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTrajectory {
    pub latents: Vec<Latent>,
}

impl LatentTrajectory {
    pub fn terminal(&self) -> &Latent {
        self.latents.last().expect("trajectory is never empty")
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Timings {
    pub inversion_ms: f64,
    pub frames_ms: Vec<f64>,
    pub total_ms: f64,
}

#[derive(Debug, Clone)]
pub struct MorphSequence {
    pub frames: Vec<Image>,
    pub alphas: InterpWeights,
    /// Interpolated starting latents, one per frame.
    pub start_latents: Vec<Latent>,
    pub z_a: Latent,
    pub z_b: Latent,
    pub config: MorphConfig,
    pub prompts: PromptTexts,
    pub timings: Timings,
}

pub struct Engine<'b> {
    backend: &'b dyn Backend,
    schedule: NoiseSchedule,
    idm: IdmMap,
    config: MorphConfig,
}

impl<'b> Engine<'b> {
    pub fn new(backend: &'b dyn Backend, config: MorphConfig) -> Result<Self> {
        config.validate()?;
        backend.descriptor().validate()?;
        let schedule = build_schedule(&config.schedule_params())?;
        if schedule.t_max() != backend.descriptor().t_max {
            return Err(Error::invalid(format!(
                "schedule t_max {} does not match backend t_max {}",
                schedule.t_max(),
                backend.descriptor().t_max
            )));
        }
        let idm = schedule.idm(config.idm_order);
        Ok(Self {
            backend,
            schedule,
            idm,
            config,
        })
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn config(&self) -> &MorphConfig {
        &self.config
    }

    pub fn idm(&self) -> &IdmMap {
        &self.idm
    }

    pub fn new_cache(&self) -> FeatureCache {
        FeatureCache::with_shapes(self.backend.descriptor().feature_shapes.clone())
    }

    fn predict(
        &self,
        x: &Latent,
        t: usize,
        text: &TextConditioning<'_>,
        tap: Option<&mut BTreeMap<StageId, Array3<f64>>>,
    ) -> Result<Latent> {
        match tap {
            None => self.backend.predict_noise(x, t, text, &mut DenoiseHooks::default()),
            Some(store) => {
                let mut f = |s: StageId, v: &Array3<f64>| {
                    store.insert(s, v.clone());
                };
                let mut hooks = DenoiseHooks {
                    feature_tap: Some(&mut f),
                    ..Default::default()
                };
                self.backend.predict_noise(x, t, text, &mut hooks)
            }
        }
    }

    /// Inverts `z0` along the ascending inversion timesteps, storing every
    /// block output under `(image_id, stage, t)` in `cache`.
    pub fn invert_latent(
        &self,
        z0: &Latent,
        text: &TextConditioning<'_>,
        image_id: &str,
        cache: &mut FeatureCache,
    ) -> Result<LatentTrajectory> {
        let ts = self.schedule.inv_timesteps();
        let mut x = z0.clone();
        let mut latents = Vec::with_capacity(ts.len());
        for (i, &t) in ts.iter().enumerate() {
            let ab_from = if i == 0 {
                1.0
            } else {
                self.schedule.alpha_bar_at(ts[i - 1])?
            };
            let ab_to = self.schedule.alpha_bar_at(t)?;
            let mut feats = BTreeMap::new();
            let eps = self.predict(&x, t, text, Some(&mut feats))?;
            let mut next = ddim_update(&x, &eps, ab_from, ab_to)?;
            // Fixed-point passes re-evaluate the noise at the step's target so
            // the step becomes the exact inverse of the matching denoising step.
            for _ in 0..self.config.inversion_refine_iters {
                feats.clear();
                let eps = self.predict(&next, t, text, Some(&mut feats))?;
                next = ddim_update(&x, &eps, ab_from, ab_to)?;
            }
            for (s, f) in feats {
                cache.put(image_id, s, t, f.mapv(|v| v as f32))?;
            }
            latents.push(next.clone());
            x = next;
        }
        Ok(LatentTrajectory { latents })
    }

    pub fn invert(
        &self,
        image: &Image,
        text: &TextConditioning<'_>,
        image_id: &str,
        cache: &mut FeatureCache,
    ) -> Result<LatentTrajectory> {
        let z0 = self.backend.encode(image)?;
        self.invert_latent(&z0, text, image_id, cache)
    }

    fn alpha_bar_after(&self, tau: usize) -> Result<f64> {
        match self.schedule.dng_timesteps().get(tau + 1) {
            Some(&t) => self.schedule.alpha_bar_at(t),
            None => Ok(1.0),
        }
    }

    /// Denoising step `tau`: from `T_dng[tau]` to the next timestep, or to the
    /// clean level after the last one.
    pub fn denoise_step(
        &self,
        x: &Latent,
        tau: usize,
        text: &TextConditioning<'_>,
        hooks: &mut DenoiseHooks<'_>,
    ) -> Result<Latent> {
        let t =
            *self.schedule.dng_timesteps().get(tau).ok_or_else(|| {
                Error::invalid(format!("step {tau} beyond {} denoising steps", self.schedule.n_dng()))
            })?;
        let eps = self.backend.predict_noise(x, t, text, hooks)?;
        ddim_update(x, &eps, self.schedule.alpha_bar_at(t)?, self.alpha_bar_after(tau)?)
    }

    /// Plain denoising of `x` through every step, no hooks.
    pub fn denoise(&self, x: &Latent, text: &TextConditioning<'_>) -> Result<LatentTrajectory> {
        let mut x = x.clone();
        let mut latents = Vec::with_capacity(self.schedule.n_dng());
        for tau in 0..self.schedule.n_dng() {
            x = self.denoise_step(&x, tau, text, &mut DenoiseHooks::default())?;
            latents.push(x.clone());
        }
        Ok(LatentTrajectory { latents })
    }

    /// `lambda_S` times the blended cache at the inversion timestep that
    /// step `tau` maps to, for every stage.
    pub fn aci_residuals(
        &self,
        cache_a: &FeatureCache,
        cache_b: &FeatureCache,
        alpha: f64,
        tau: usize,
    ) -> Result<BTreeMap<StageId, Array3<f64>>> {
        let t = self.idm.map(tau)?;
        let blended = blend_cache(cache_a, ID_A, cache_b, ID_B, alpha, t)?;
        Ok(blended
            .values
            .into_iter()
            .map(|(s, v)| {
                let lam = self.config.lambda(s.stage);
                (s, v.mapv(|x| lam * x))
            })
            .collect())
    }

    /// Whether residuals for `stage` are injected at step `tau`.
    pub fn stage_active(&self, stage: Stage, tau: usize) -> bool {
        if !self.config.aci || self.config.lambda(stage) == 0.0 {
            return false;
        }
        let n = self.schedule.n_dng() as f64;
        let tau = tau as f64;
        match stage {
            Stage::D => true,
            Stage::M => tau < self.config.m_gate_fraction * n,
            Stage::U => tau >= self.config.u_gate_fraction * n,
        }
    }

    pub fn sap_active(&self, prompts: &PromptTriplet, tau: usize) -> bool {
        self.config.sap
            && prompts.has_anchor()
            && (tau as f64) < self.config.sap_stage_fraction * self.schedule.n_dng() as f64
    }

    fn gated_residuals(
        &self,
        cache_a: &FeatureCache,
        cache_b: &FeatureCache,
        alpha: f64,
        tau: usize,
    ) -> Result<BTreeMap<StageId, Array3<f64>>> {
        if !Stage::ALL.iter().any(|&s| self.stage_active(s, tau)) {
            return Ok(BTreeMap::new());
        }
        let mut r = self.aci_residuals(cache_a, cache_b, alpha, tau)?;
        r.retain(|s, _| self.stage_active(s.stage, tau));
        Ok(r)
    }

    /// Denoises one frame from its starting latent.
    pub fn render_frame(
        &self,
        start: &Latent,
        alpha: f64,
        prompts: &PromptTriplet,
        cache_a: &FeatureCache,
        cache_b: &FeatureCache,
    ) -> Result<Image> {
        let text = TextConditioning {
            branch_a: &prompts.e_a,
            branch_b: &prompts.e_b,
            alpha,
            combine: self.config.branch_combine,
        };
        let mut x = start.clone();
        for tau in 0..self.schedule.n_dng() {
            let residuals = self.gated_residuals(cache_a, cache_b, alpha, tau)?;
            let mut hooks = DenoiseHooks {
                feature_tap: None,
                residuals: (!residuals.is_empty()).then_some(&residuals),
                attn_override: self.sap_active(prompts, tau).then_some(AnchorOverride {
                    anchor: &prompts.e_anc,
                    scope: self.config.sap_scope,
                }),
            };
            x = self.denoise_step(&x, tau, &text, &mut hooks)?;
        }
        self.backend.decode(&x)
    }

    /// Inverts both endpoints, returning their terminal latents and caches.
    pub fn invert_pair(
        &self,
        image_a: &Image,
        image_b: &Image,
        prompts: &PromptTriplet,
    ) -> Result<(Latent, FeatureCache, Latent, FeatureCache)> {
        let run = |img: &Image, e, id: &str| -> Result<(Latent, FeatureCache)> {
            let mut cache = self.new_cache();
            let traj = self.invert(img, &TextConditioning::single(e), id, &mut cache)?;
            cache.check_complete(id, self.schedule.inv_timesteps())?;
            Ok((traj.terminal().clone(), cache))
        };
        let (ra, rb) = if self.backend.descriptor().serial {
            (run(image_a, &prompts.e_a, ID_A), run(image_b, &prompts.e_b, ID_B))
        } else {
            rayon::join(|| run(image_a, &prompts.e_a, ID_A), || run(image_b, &prompts.e_b, ID_B))
        };
        let ((za, ca), (zb, cb)) = (ra?, rb?);
        Ok((za, ca, zb, cb))
    }

    pub fn generate_sequence(
        &self,
        image_a: &Image,
        image_b: &Image,
        prompts: &PromptTriplet,
    ) -> Result<MorphSequence> {
        let start = Instant::now();
        let alphas = interp_weights(self.config.frames)?;
        let (z_a, cache_a, z_b, cache_b) = self.invert_pair(image_a, image_b, prompts)?;
        let inversion_ms = start.elapsed().as_secs_f64() * 1e3;

        let (fa, fb) = (
            z_a.as_slice().expect("standard layout"),
            z_b.as_slice().expect("standard layout"),
        );
        let start_latents = alphas
            .as_slice()
            .iter()
            .map(|&a| {
                let v = slerp_vec(fa, fb, a)?;
                Latent::from_shape_vec(z_a.raw_dim(), v).map_err(|e| Error::shape(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;

        let render = |k: usize| -> Result<(Image, f64)> {
            let t0 = Instant::now();
            let img = self.render_frame(&start_latents[k], alphas.as_slice()[k], prompts, &cache_a, &cache_b)?;
            Ok((img, t0.elapsed().as_secs_f64() * 1e3))
        };
        let workers = if self.backend.descriptor().serial {
            1
        } else {
            self.config.workers
        };
        let results: Vec<Result<(Image, f64)>> = if workers <= 1 {
            (0..alphas.len()).map(render).collect()
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| Error::invalid(format!("worker pool: {e}")))?;
            pool.install(|| (0..alphas.len()).into_par_iter().map(render).collect())
        };
        let mut frames = Vec::with_capacity(results.len());
        let mut frames_ms = Vec::with_capacity(results.len());
        for r in results {
            let (img, ms) = r?;
            frames.push(img);
            frames_ms.push(ms);
        }
        Ok(MorphSequence {
            frames,
            alphas,
            start_latents,
            z_a,
            z_b,
            config: self.config.clone(),
            prompts: prompts.texts.clone(),
            timings: Timings {
                inversion_ms,
                frames_ms,
                total_ms: start.elapsed().as_secs_f64() * 1e3,
            },
        })
    }
}
