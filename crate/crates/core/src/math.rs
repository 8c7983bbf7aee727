//! Interpolation and clamping primitives shared by the engine and metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this `sin θ` the two vectors are treated as parallel and slerp
/// degrades to linear interpolation.
pub const SLERP_PARALLEL_EPS: f64 = 1e-7;

/// Tolerance for similarities that drift just outside [-1, 1].
pub const SIM_RANGE_TOL: f64 = 1e-9;

/// Interpolation weights `α_k = (k+1)/(K+1)`, k = 0..K-1. Endpoints are
/// never part of the list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpWeights {
    alphas: Vec<f64>,
}

impl InterpWeights {
    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.alphas
    }

    pub fn get(&self, k: usize) -> Option<f64> {
        self.alphas.get(k).copied()
    }
}

pub fn interp_weights(frames: usize) -> Result<InterpWeights> {
    if frames < 1 {
        return Err(Error::invalid("frame count must be at least 1"));
    }
    let denom = (frames + 1) as f64;
    let alphas = (0..frames).map(|k| (k + 1) as f64 / denom).collect();
    Ok(InterpWeights { alphas })
}

/// A real number known to lie in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct UnitInterval(f64);

impl UnitInterval {
    pub fn value(self) -> f64 {
        self.0
    }
}

pub fn clamp01(x: f64) -> Result<UnitInterval> {
    if x.is_nan() {
        return Err(Error::invalid("cannot clamp NaN"));
    }
    Ok(UnitInterval(x.clamp(0.0, 1.0)))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine of the angle between two nonzero vectors, clipped to [-1, 1].
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("length mismatch: {} vs {}", a.len(), b.len())));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::invalid("cosine of a zero vector"));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Great-circle interpolation between `a` (alpha = 0) and `b` (alpha = 1).
pub fn slerp_vec(a: &[f64], b: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha {alpha} outside [0, 1]")));
    }
    let cos_theta = cosine(a, b)?;
    let theta = cos_theta.acos();
    let sin_theta = theta.sin();
    if sin_theta < SLERP_PARALLEL_EPS {
        return Ok(a.iter().zip(b).map(|(x, y)| (1.0 - alpha) * x + alpha * y).collect());
    }
    let wa = ((1.0 - alpha) * theta).sin() / sin_theta;
    let wb = (alpha * theta).sin() / sin_theta;
    Ok(a.iter().zip(b).map(|(x, y)| wa * x + wb * y).collect())
}

/// How expected similarities are interpolated between endpoint values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarSlerpMode {
    /// Treat similarities as cosines and interpolate the angle.
    #[default]
    Angle,
    /// Plain linear interpolation, for sensitivity studies.
    Linear,
}

fn check_sim(s: f64) -> Result<f64> {
    if !(-1.0 - SIM_RANGE_TOL..=1.0 + SIM_RANGE_TOL).contains(&s) {
        return Err(Error::invalid(format!("similarity {s} outside [-1, 1]")));
    }
    Ok(s.clamp(-1.0, 1.0))
}

pub fn slerp_scalar_sim(sa: f64, sb: f64, alpha: f64) -> Result<f64> {
    slerp_scalar_sim_with(sa, sb, alpha, ScalarSlerpMode::Angle)
}

pub fn slerp_scalar_sim_with(sa: f64, sb: f64, alpha: f64, mode: ScalarSlerpMode) -> Result<f64> {
    let (sa, sb) = (check_sim(sa)?, check_sim(sb)?);
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha {alpha} outside [0, 1]")));
    }
    if sa == sb {
        return Ok(sa);
    }
    let out = match mode {
        ScalarSlerpMode::Angle => ((1.0 - alpha) * sa.acos() + alpha * sb.acos()).cos(),
        ScalarSlerpMode::Linear => (1.0 - alpha) * sa + alpha * sb,
    };
    Ok(out.clamp(sa.min(sb), sa.max(sb)))
}
