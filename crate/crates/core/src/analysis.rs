//! Frequency-band analysis of cached features across layers and timesteps.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView3};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::cache::{FeatureCache, StageId};
use crate::error::{Error, Result};

pub const DEFAULT_CUTOFF: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileAxis {
    Layer,
    Timestep,
}

/// `true` marks low-band bins: radial frequency, in units of the Nyquist
/// frequency, below `cutoff`. Indexed in unshifted FFT order.
pub fn low_band_mask(h: usize, w: usize, cutoff: f64) -> Array2<bool> {
    let freq = |k: usize, n: usize| {
        let signed = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
        signed / n as f64 / 0.5
    };
    Array2::from_shape_fn((h, w), |(y, x)| freq(y, h).hypot(freq(x, w)) < cutoff)
}

/// Unitary 2-D DFT magnitudes of one channel.
fn magnitudes(planner: &mut FftPlanner<f64>, map: ndarray::ArrayView2<'_, f64>) -> Array2<f64> {
    let (h, w) = map.dim();
    let mut buf: Vec<Complex<f64>> = map.iter().map(|&v| Complex::new(v, 0.0)).collect();
    let row = planner.plan_fft_forward(w);
    for r in buf.chunks_mut(w) {
        row.process(r);
    }
    let col = planner.plan_fft_forward(h);
    let mut column = vec![Complex::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            column[y] = buf[y * w + x];
        }
        col.process(&mut column);
        for y in 0..h {
            buf[y * w + x] = column[y];
        }
    }
    let scale = 1.0 / ((h * w) as f64).sqrt();
    Array2::from_shape_vec((h, w), buf.iter().map(|c| c.norm() * scale).collect()).expect("shape preserved")
}

/// Mean spectral magnitude inside `band`, over all channels of a
/// `(channels, height, width)` map.
pub fn band_energy(feature: ArrayView3<'_, f64>, band: Band, cutoff: f64) -> Result<f64> {
    let (c, h, w) = feature.dim();
    if c == 0 || h < 2 || w < 2 {
        return Err(Error::invalid(format!(
            "feature map {:?} too small for band analysis",
            (c, h, w)
        )));
    }
    if !(cutoff > 0.0 && cutoff < 1.0) {
        return Err(Error::invalid(format!("cutoff fraction {cutoff} outside (0, 1)")));
    }
    let mask = low_band_mask(h, w, cutoff);
    let want_low = band == Band::Low;
    let mut planner = FftPlanner::new();
    let (mut sum, mut count) = (0.0, 0usize);
    for ch in feature.outer_iter() {
        let mag = magnitudes(&mut planner, ch);
        for (m, &low) in mag.iter().zip(mask.iter()) {
            if low == want_low {
                sum += m;
                count += 1;
            }
        }
    }
    Ok(sum / count as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandPoint {
    pub position: usize,
    pub label: String,
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandProfile {
    pub axis: ProfileAxis,
    pub cutoff: f64,
    pub points: Vec<BandPoint>,
}

impl BandProfile {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("position,label,low,high\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{},{}\n", p.position, p.label, p.low, p.high));
        }
        out
    }
}

/// Averages low and high band energy over every cache entry sharing a
/// position. Layers are numbered in forward order (D blocks, M, U blocks).
pub fn profile(cache: &FeatureCache, axis: ProfileAxis, cutoff: f64) -> Result<BandProfile> {
    if cache.is_empty() {
        return Err(Error::invalid("cache is empty"));
    }
    let entries: Vec<(StageId, usize, &ndarray::Array3<f32>)> = cache.iter().map(|(_, s, t, f)| (s, t, f)).collect();
    let energies = entries
        .par_iter()
        .map(|(_, _, f)| {
            let f = f.mapv(f64::from);
            Ok((
                band_energy(f.view(), Band::Low, cutoff)?,
                band_energy(f.view(), Band::High, cutoff)?,
            ))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;

    let layer_pos: BTreeMap<StageId, usize> = cache.shapes().keys().enumerate().map(|(i, &s)| (s, i)).collect();
    let mut acc: BTreeMap<usize, (String, f64, f64, usize)> = BTreeMap::new();
    for ((s, t, _), (lo, hi)) in entries.iter().zip(energies) {
        let (pos, label) = match axis {
            ProfileAxis::Layer => (layer_pos[s], s.to_string()),
            ProfileAxis::Timestep => (*t, t.to_string()),
        };
        let e = acc.entry(pos).or_insert((label, 0.0, 0.0, 0));
        e.1 += lo;
        e.2 += hi;
        e.3 += 1;
    }
    let points = acc
        .into_iter()
        .map(|(position, (label, lo, hi, n))| BandPoint {
            position,
            label,
            low: lo / n as f64,
            high: hi / n as f64,
        })
        .collect();
    Ok(BandProfile { axis, cutoff, points })
}
