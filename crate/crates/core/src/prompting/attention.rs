//! Cross-attention with anchor rows appended to each endpoint branch, and
//! the blend of the two branch outputs for intermediate frames.

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::slerp_vec;

/// Inputs for one branch: `softmax(Q [K_X ; K_anc]^T / sqrt(d)) [V_X ; V_anc]`.
#[derive(Debug, Clone, Copy)]
pub struct AttentionInputs<'a> {
    pub q: ArrayView2<'a, f64>,
    pub k_x: ArrayView2<'a, f64>,
    pub v_x: ArrayView2<'a, f64>,
    /// May have zero rows.
    pub k_anc: ArrayView2<'a, f64>,
    pub v_anc: ArrayView2<'a, f64>,
}

impl AttentionInputs<'_> {
    fn validate(&self) -> Result<usize> {
        let d = self.q.ncols();
        if d == 0 {
            return Err(Error::invalid("attention head dimension is zero"));
        }
        for (name, m) in [
            ("K_X", &self.k_x),
            ("V_X", &self.v_x),
            ("K_anc", &self.k_anc),
            ("V_anc", &self.v_anc),
        ] {
            if m.ncols() != d {
                return Err(Error::shape(format!("{name} has width {}, expected {d}", m.ncols())));
            }
        }
        if self.k_x.nrows() != self.v_x.nrows() || self.k_anc.nrows() != self.v_anc.nrows() {
            return Err(Error::shape("key and value row counts differ"));
        }
        if self.k_x.nrows() + self.k_anc.nrows() == 0 {
            return Err(Error::invalid("attention over zero keys"));
        }
        Ok(d)
    }
}

/// Row-wise softmax attention weights over the stacked keys.
pub fn sap_weights(inp: &AttentionInputs<'_>) -> Result<Array2<f64>> {
    let d = inp.validate()?;
    let keys = concatenate(Axis(0), &[inp.k_x, inp.k_anc]).map_err(|e| Error::shape(e.to_string()))?;
    let scale = 1.0 / (d as f64).sqrt();
    let mut logits = inp.q.dot(&keys.t()) * scale;
    for mut row in logits.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        row.mapv_inplace(|x| (x - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|x| x / sum);
    }
    Ok(logits)
}

pub fn sap_attention(inp: &AttentionInputs<'_>) -> Result<Array2<f64>> {
    let weights = sap_weights(inp)?;
    let values = concatenate(Axis(0), &[inp.v_x, inp.v_anc]).map_err(|e| Error::shape(e.to_string()))?;
    Ok(weights.dot(&values))
}

/// Plain cross-attention, i.e. the anchor-free case.
pub fn plain_attention(q: ArrayView2<'_, f64>, k: ArrayView2<'_, f64>, v: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let empty = Array2::<f64>::zeros((0, q.ncols()));
    sap_attention(&AttentionInputs {
        q: q.view(),
        k_x: k.view(),
        v_x: v.view(),
        k_anc: empty.view(),
        v_anc: empty.view(),
    })
}

/// How the A- and B-branch attention outputs are merged for frame k.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchCombine {
    #[default]
    Linear,
    Slerp,
}

pub fn combine_branches(
    attn_a: &Array2<f64>,
    attn_b: &Array2<f64>,
    alpha: f64,
    mode: BranchCombine,
) -> Result<Array2<f64>> {
    if attn_a.dim() != attn_b.dim() {
        return Err(Error::shape(format!(
            "branch outputs differ: {:?} vs {:?}",
            attn_a.dim(),
            attn_b.dim()
        )));
    }
    match mode {
        BranchCombine::Linear => Ok(attn_a * (1.0 - alpha) + attn_b * alpha),
        BranchCombine::Slerp => {
            // Row by row, so each query token moves along its own great circle.
            let mut out = Array2::zeros(attn_a.dim());
            for (i, (ra, rb)) in attn_a.rows().into_iter().zip(attn_b.rows()).enumerate() {
                let (va, vb) = (ra.to_vec(), rb.to_vec());
                let row = if va.iter().all(|&x| x == 0.0) || vb.iter().all(|&x| x == 0.0) {
                    va.iter().zip(&vb).map(|(x, y)| (1.0 - alpha) * x + alpha * y).collect()
                } else {
                    slerp_vec(&va, &vb, alpha)?
                };
                out.row_mut(i).assign(&ndarray::Array1::from(row));
            }
            Ok(out)
        }
    }
}
