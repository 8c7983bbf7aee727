//! Flat JSON run configuration. Every key is optional; missing keys take
//! the defaults below.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::cache::Stage;
use crate::denoiser::SapScope;
use crate::error::{Error, Result};
use crate::math::ScalarSlerpMode;
use crate::prompting::BranchCombine;
use crate::schedule::{IdmOrder, ScheduleParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Toy,
    Adapter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MorphConfig {
    pub frames: usize,
    pub lambda_d: f64,
    pub lambda_m: f64,
    pub lambda_u: f64,
    /// Master switch for cache injection; off means plain interpolated-latent
    /// denoising.
    pub aci: bool,
    pub sap: bool,
    pub sap_stage_fraction: f64,
    pub sap_scope: SapScope,
    pub branch_combine: BranchCombine,
    /// M-stage residuals are injected while `tau < m_gate_fraction * n_dng`.
    pub m_gate_fraction: f64,
    /// U-stage residuals are injected once `tau >= u_gate_fraction * n_dng`.
    pub u_gate_fraction: f64,
    pub idm_order: IdmOrder,
    /// Extra fixed-point passes per inversion step; 0 is plain DDIM inversion.
    pub inversion_refine_iters: usize,
    pub guidance: f64,
    pub resolution: usize,
    pub t_max: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub n_inv: usize,
    pub n_dng: usize,
    pub backend: BackendKind,
    pub toy_seed: u64,
    pub workers: usize,
    pub gamma: f64,
    pub sim_mode: ScalarSlerpMode,
    pub provider: String,
    pub vlm_url: Option<String>,
    pub vlm_model: String,
    pub vlm_timeout_secs: u64,
}

impl Default for MorphConfig {
    fn default() -> Self {
        let sched = ScheduleParams::default();
        Self {
            frames: 5,
            lambda_d: 0.4,
            lambda_m: 0.4,
            lambda_u: 0.4,
            aci: true,
            sap: true,
            sap_stage_fraction: 0.5,
            sap_scope: SapScope::AllSites,
            branch_combine: BranchCombine::Linear,
            m_gate_fraction: 0.5,
            u_gate_fraction: 0.5,
            idm_order: IdmOrder::NoiseAligned,
            inversion_refine_iters: 3,
            guidance: 0.75,
            resolution: 768,
            t_max: sched.t_max,
            beta_start: sched.beta_start,
            beta_end: sched.beta_end,
            n_inv: sched.n_inv,
            n_dng: sched.n_dng,
            backend: BackendKind::Toy,
            toy_seed: 42,
            workers: 4,
            gamma: 1.0,
            sim_mode: ScalarSlerpMode::Angle,
            provider: "embed".into(),
            vlm_url: None,
            vlm_model: "Qwen/Qwen2.5-VL-7B-Instruct".into(),
            vlm_timeout_secs: 60,
        }
    }
}

impl MorphConfig {
    pub fn schedule_params(&self) -> ScheduleParams {
        ScheduleParams {
            t_max: self.t_max,
            beta_start: self.beta_start,
            beta_end: self.beta_end,
            n_inv: self.n_inv,
            n_dng: self.n_dng,
        }
    }

    pub fn lambda(&self, stage: Stage) -> f64 {
        match stage {
            Stage::D => self.lambda_d,
            Stage::M => self.lambda_m,
            Stage::U => self.lambda_u,
        }
    }

    pub fn set_lambda_all(&mut self, v: f64) {
        self.lambda_d = v;
        self.lambda_m = v;
        self.lambda_u = v;
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, why: &str| Err(Error::invalid(format!("config key `{key}`: {why}")));
        if self.frames < 1 {
            return bad("frames", "must be at least 1");
        }
        for (k, v) in [
            ("lambda_d", self.lambda_d),
            ("lambda_m", self.lambda_m),
            ("lambda_u", self.lambda_u),
        ] {
            if !v.is_finite() || v < 0.0 {
                return bad(k, "must be finite and non-negative");
            }
        }
        for (k, v) in [
            ("sap_stage_fraction", self.sap_stage_fraction),
            ("m_gate_fraction", self.m_gate_fraction),
            ("u_gate_fraction", self.u_gate_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(k, "must lie in [0, 1]");
            }
        }
        if self.gamma.is_nan() || self.gamma < 1.0 {
            return bad("gamma", "must be >= 1");
        }
        if self.workers == 0 {
            return bad("workers", "must be positive");
        }
        Ok(())
    }

    /// Parses a JSON object. Unknown or ill-typed keys are reported by name.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| Error::invalid(format!("config is not valid JSON: {e}")))?;
        let Value::Object(map) = value else {
            return Err(Error::invalid("config must be a JSON object"));
        };
        Self::from_map(map)
    }

    pub fn from_map(map: Map<String, Value>) -> Result<Self> {
        // Try each key alone first so the error can name it.
        for (k, v) in &map {
            let mut single = Map::new();
            single.insert(k.clone(), v.clone());
            if let Err(e) = serde_json::from_value::<MorphConfig>(Value::Object(single)) {
                let msg = if e.to_string().contains("unknown field") {
                    "unknown key".to_owned()
                } else {
                    e.to_string()
                };
                return Err(Error::invalid(format!("config key `{k}`: {msg}")));
            }
        }
        let cfg: MorphConfig = serde_json::from_value(Value::Object(map)).map_err(|e| Error::invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
