//! Noise schedule, timestep lists and the inversion-to-denoising timestep
//! mapping (IDM).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub t_max: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub n_inv: usize,
    pub n_dng: usize,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            t_max: 1000,
            beta_start: 0.00085,
            beta_end: 0.012,
            n_inv: 50,
            n_dng: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    t_max: usize,
    alpha_bar: Vec<f64>,
    inv_timesteps: Vec<usize>,
    dng_timesteps: Vec<usize>,
}

fn evenly_spaced(n: usize, t_max: usize) -> Vec<usize> {
    (0..n).map(|i| i * t_max / n).collect()
}

/// Scaled-linear betas (linear in sqrt-space), cumulative alpha products,
/// and evenly spaced timestep subsets of `[0, t_max)`.
pub fn build_schedule(p: &ScheduleParams) -> Result<NoiseSchedule> {
    if p.t_max == 0 {
        return Err(Error::invalid("t_max must be positive"));
    }
    if !(p.beta_start > 0.0 && p.beta_start < p.beta_end && p.beta_end < 1.0) {
        return Err(Error::invalid(format!(
            "need 0 < beta_start < beta_end < 1, got {} and {}",
            p.beta_start, p.beta_end
        )));
    }
    if p.n_inv == 0 || p.n_dng == 0 || p.n_inv > p.t_max || p.n_dng > p.t_max {
        return Err(Error::invalid(format!(
            "step counts must lie in [1, t_max={}], got n_inv={} n_dng={}",
            p.t_max, p.n_inv, p.n_dng
        )));
    }
    let (lo, hi) = (p.beta_start.sqrt(), p.beta_end.sqrt());
    let denom = (p.t_max.max(2) - 1) as f64;
    let mut alpha_bar = Vec::with_capacity(p.t_max);
    let mut acc = 1.0;
    for i in 0..p.t_max {
        let s = lo + (hi - lo) * i as f64 / denom;
        acc *= 1.0 - s * s;
        alpha_bar.push(acc);
    }
    let inv_timesteps = evenly_spaced(p.n_inv, p.t_max);
    let mut dng_timesteps = evenly_spaced(p.n_dng, p.t_max);
    dng_timesteps.reverse();
    Ok(NoiseSchedule {
        t_max: p.t_max,
        alpha_bar,
        inv_timesteps,
        dng_timesteps,
    })
}

impl NoiseSchedule {
    pub fn t_max(&self) -> usize {
        self.t_max
    }

    pub fn alpha_bar(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// `ᾱ_t`; timesteps outside the table are rejected.
    pub fn alpha_bar_at(&self, t: usize) -> Result<f64> {
        self.alpha_bar
            .get(t)
            .copied()
            .ok_or_else(|| Error::invalid(format!("timestep {t} outside [0, {})", self.t_max)))
    }

    /// Ascending inversion timesteps.
    pub fn inv_timesteps(&self) -> &[usize] {
        &self.inv_timesteps
    }

    /// Descending denoising timesteps.
    pub fn dng_timesteps(&self) -> &[usize] {
        &self.dng_timesteps
    }

    pub fn n_inv(&self) -> usize {
        self.inv_timesteps.len()
    }

    pub fn n_dng(&self) -> usize {
        self.dng_timesteps.len()
    }

    /// Builds the IDM table for this schedule.
    pub fn idm(&self, order: IdmOrder) -> IdmMap {
        let mut list = self.inv_timesteps.clone();
        if order == IdmOrder::NoiseAligned {
            list.reverse();
        }
        IdmMap {
            n_dng: self.n_dng(),
            inv_timesteps: list,
        }
    }
}

/// Order in which the cached inversion timesteps are handed to the IDM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdmOrder {
    /// Step 0 of denoising (the noisiest) reads the noisiest cached timestep.
    #[default]
    NoiseAligned,
    /// Step 0 of denoising reads the first recorded (least noisy) timestep.
    Ascending,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdmMap {
    n_dng: usize,
    inv_timesteps: Vec<usize>,
}

impl IdmMap {
    pub fn new(n_dng: usize, inv_timesteps: Vec<usize>) -> Result<Self> {
        if n_dng == 0 || inv_timesteps.is_empty() {
            return Err(Error::invalid("IDM needs at least one step on each side"));
        }
        Ok(Self { n_dng, inv_timesteps })
    }

    pub fn n_inv(&self) -> usize {
        self.inv_timesteps.len()
    }

    pub fn n_dng(&self) -> usize {
        self.n_dng
    }

    pub fn timesteps(&self) -> &[usize] {
        &self.inv_timesteps
    }

    /// `round(tau * (N_inv - 1) / (N_dng - 1))`, halves rounded away from
    /// zero, evaluated in integer arithmetic.
    pub fn index(&self, tau: usize) -> Result<usize> {
        if tau >= self.n_dng {
            return Err(Error::invalid(format!(
                "denoising step {tau} outside [0, {})",
                self.n_dng
            )));
        }
        if self.n_dng == 1 {
            return Ok(0);
        }
        let num = 2 * tau * (self.n_inv() - 1) + (self.n_dng - 1);
        Ok(num / (2 * (self.n_dng - 1)))
    }

    pub fn map(&self, tau: usize) -> Result<usize> {
        Ok(self.inv_timesteps[self.index(tau)?])
    }
}

pub fn idm_map(tau: usize, idm: &IdmMap) -> Result<usize> {
    idm.map(tau)
}
