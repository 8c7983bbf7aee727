use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{clamp01, slerp_scalar_sim_with, InterpWeights, ScalarSlerpMode};

/// Similarities of every frame to both endpoints, plus the four endpoint
/// cross-similarities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub s_a: Vec<f64>,
    pub s_b: Vec<f64>,
    pub s_aa: f64,
    pub s_ab: f64,
    pub s_ba: f64,
    pub s_bb: f64,
}

fn check_sim(name: &str, v: f64) -> Result<()> {
    if (-1.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::invalid(format!("similarity {name} = {v} outside [-1, 1]")))
    }
}

impl SimilarityMatrix {
    pub fn new(s_a: Vec<f64>, s_b: Vec<f64>, s_aa: f64, s_ab: f64, s_ba: f64, s_bb: f64) -> Result<Self> {
        let m = Self {
            s_a,
            s_b,
            s_aa,
            s_ab,
            s_ba,
            s_bb,
        };
        m.validate()?;
        Ok(m)
    }

    /// Cosine-style endpoints: self-similarity 1, symmetric cross term.
    pub fn symmetric(s_a: Vec<f64>, s_b: Vec<f64>, s_ab: f64) -> Result<Self> {
        Self::new(s_a, s_b, 1.0, s_ab, s_ab, 1.0)
    }

    pub fn frames(&self) -> usize {
        self.s_a.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.s_a.len() != self.s_b.len() {
            return Err(Error::invalid(format!(
                "s_a has {} frames, s_b has {}",
                self.s_a.len(),
                self.s_b.len()
            )));
        }
        if self.s_a.is_empty() {
            return Err(Error::invalid("similarity matrix needs at least one frame"));
        }
        for (k, (&a, &b)) in self.s_a.iter().zip(&self.s_b).enumerate() {
            check_sim(&format!("s_a[{k}]"), a)?;
            check_sim(&format!("s_b[{k}]"), b)?;
        }
        for (n, v) in [
            ("s_aa", self.s_aa),
            ("s_ab", self.s_ab),
            ("s_ba", self.s_ba),
            ("s_bb", self.s_bb),
        ] {
            check_sim(n, v)?;
        }
        Ok(())
    }

    /// Frames in reverse order with the endpoints swapped.
    pub fn reversed(&self) -> Self {
        Self {
            s_a: self.s_b.iter().rev().copied().collect(),
            s_b: self.s_a.iter().rev().copied().collect(),
            s_aa: self.s_bb,
            s_ab: self.s_ba,
            s_ba: self.s_ab,
            s_bb: self.s_aa,
        }
    }
}

fn agreement(measured: f64, expected: f64) -> Result<f64> {
    Ok(clamp01(1.0 - (measured - expected).abs())?.value())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GcsResult {
    pub gcs: f64,
    pub g: Vec<f64>,
    /// `g_k` raised to gamma.
    pub g_tilde: Vec<f64>,
}

pub fn gcs(sim: &SimilarityMatrix, alphas: &InterpWeights, gamma: f64) -> Result<GcsResult> {
    gcs_with(sim, alphas, gamma, ScalarSlerpMode::Angle)
}

pub fn gcs_with(
    sim: &SimilarityMatrix,
    alphas: &InterpWeights,
    gamma: f64,
    mode: ScalarSlerpMode,
) -> Result<GcsResult> {
    sim.validate()?;
    if alphas.len() != sim.frames() {
        return Err(Error::invalid(format!(
            "{} weights for {} frames",
            alphas.len(),
            sim.frames()
        )));
    }
    if !gamma.is_finite() || gamma < 1.0 {
        return Err(Error::invalid(format!("gamma {gamma} must be finite and >= 1")));
    }
    let mut g = Vec::with_capacity(sim.frames());
    for (k, &alpha) in alphas.as_slice().iter().enumerate() {
        let exp_a = slerp_scalar_sim_with(sim.s_aa, sim.s_ab, alpha, mode)?;
        let exp_b = slerp_scalar_sim_with(sim.s_ba, sim.s_bb, alpha, mode)?;
        g.push(agreement(sim.s_a[k], exp_a)? * agreement(sim.s_b[k], exp_b)?);
    }
    let g_tilde: Vec<f64> = g.iter().map(|x| x.powf(gamma)).collect();
    Ok(GcsResult {
        gcs: mean(&g_tilde),
        g,
        g_tilde,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LcsResult {
    pub lcs: f64,
    pub l: Vec<f64>,
}

fn neighbour_expectation(s: &[f64], k: usize) -> f64 {
    let last = s.len() - 1;
    match k {
        0 => s[1],
        k if k == last => s[last - 1],
        k => 0.5 * (s[k - 1] + s[k + 1]),
    }
}

pub fn lcs(sim: &SimilarityMatrix) -> Result<LcsResult> {
    sim.validate()?;
    let n = sim.frames();
    if n == 1 {
        return Ok(LcsResult { lcs: 1.0, l: vec![1.0] });
    }
    let l = (0..n)
        .map(|k| {
            Ok(agreement(sim.s_a[k], neighbour_expectation(&sim.s_a, k))?
                * agreement(sim.s_b[k], neighbour_expectation(&sim.s_b, k))?)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(LcsResult { lcs: mean(&l), l })
}

pub fn glcs(gcs: f64, lcs: f64) -> Result<f64> {
    for (n, v) in [("gcs", gcs), ("lcs", lcs)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::invalid(format!("{n} = {v} outside [0, 1]")));
        }
    }
    Ok((gcs * lcs).sqrt())
}
