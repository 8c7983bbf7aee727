//! Deterministic miniature U-Net used for desk-scale runs and tests.
//!
//! Layout (channels x height x width), width `C = 8`:
//!
//! ```text
//! latent 4x8x8
//! D0  mix 4->C           8x8
//! D1  avgpool2, mix C->C 4x4
//! D2  avgpool2, mix C->C 2x2
//! M0  mix C->C, then cross-attention (queries = the 4 spatial tokens)
//! U0  mix(M0 + D2)           2x2
//! U1  mix(up2(U0) + D1)      4x4
//! U2  mix(up2(U1) + D0)      8x8
//! out mix C->4           8x8
//! ```
//!
//! Every mix is `tanh(W x + W_t temb(t))`. Weight matrices are drawn from
//! [`SplitMix64`] streams labelled by layer name and rescaled to a fixed
//! Frobenius norm, which bounds the spectral norm and keeps the predictor
//! Lipschitz-small. Images are single-channel 16x16; encode/decode are the
//! 2x2 patchify followed by an orthonormal 4x4 Hadamard mix, so they invert
//! each other exactly on [0, 1] inputs.

use std::collections::BTreeMap;

use ndarray::{s, Array1, Array2, Array3};

use super::{
    branch_cross_attention, AttnSite, Backend, BackendDescriptor, DenoiseHooks, Image, Latent, TextConditioning,
};
use crate::cache::{Stage, StageId};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

const WIDTH: usize = 8;
const LATENT_C: usize = 4;
const LATENT_HW: usize = 8;
const IMAGE_HW: usize = 16;
const TEMB: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyConfig {
    pub seed: u64,
    pub text_dim: usize,
    pub attn_dim: usize,
    /// Scalar weight on the cross-attention contribution.
    pub guidance: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            text_dim: 16,
            attn_dim: 8,
            guidance: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
struct Layer {
    w: Array2<f64>,
    w_t: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct ToyBackend {
    config: ToyConfig,
    desc: BackendDescriptor,
    layers: BTreeMap<StageId, Layer>,
    w_out: Array2<f64>,
    w_q: Array2<f64>,
    w_k: Array2<f64>,
    w_v: Array2<f64>,
    w_o: Array2<f64>,
    site: AttnSite,
}

fn matrix(seed: u64, label: &str, rows: usize, cols: usize, frob: f64) -> Array2<f64> {
    let mut rng = SplitMix64::labeled(seed, label);
    let m = Array2::from_shape_simple_fn((rows, cols), || rng.uniform(-1.0, 1.0));
    let n = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    m * (frob / n)
}

// Orthonormal and symmetric, so it is its own inverse.
fn hadamard4() -> Array2<f64> {
    ndarray::array![
        [1.0, 1.0, 1.0, 1.0],
        [1.0, -1.0, 1.0, -1.0],
        [1.0, 1.0, -1.0, -1.0],
        [1.0, -1.0, -1.0, 1.0]
    ] * 0.5
}

impl ToyBackend {
    pub fn new(config: ToyConfig) -> Self {
        let seed = config.seed;
        let d = |b| StageId::new(Stage::D, b);
        let u = |b| StageId::new(Stage::U, b);
        let m0 = StageId::new(Stage::M, 0);
        let spec: [(StageId, usize, usize); 7] = [
            (d(0), LATENT_C, 8),
            (d(1), WIDTH, 4),
            (d(2), WIDTH, 2),
            (m0, WIDTH, 2),
            (u(0), WIDTH, 2),
            (u(1), WIDTH, 4),
            (u(2), WIDTH, 8),
        ];
        let mut layers = BTreeMap::new();
        let mut feature_shapes = BTreeMap::new();
        for (id, c_in, hw) in spec {
            let name = id.to_string();
            layers.insert(
                id,
                Layer {
                    w: matrix(seed, &format!("{name}.w"), WIDTH, c_in, 1.0),
                    w_t: matrix(seed, &format!("{name}.wt"), WIDTH, TEMB, 0.5),
                },
            );
            feature_shapes.insert(id, [WIDTH, hw, hw]);
        }
        let site = AttnSite { stage: m0, early: true };
        let desc = BackendDescriptor {
            name: "toy".into(),
            latent_shape: [LATENT_C, LATENT_HW, LATENT_HW],
            image_shape: [1, IMAGE_HW, IMAGE_HW],
            stage_blocks: [(Stage::D, 3), (Stage::M, 1), (Stage::U, 3)].into_iter().collect(),
            feature_shapes,
            attn_dim: config.attn_dim,
            text_dim: config.text_dim,
            cross_attn_sites: vec![site.clone()],
            t_max: 1000,
            serial: false,
        };
        Self {
            config,
            layers,
            w_out: matrix(seed, "out.w", LATENT_C, WIDTH, 1.0),
            w_q: matrix(seed, "attn.q", WIDTH, config.attn_dim, 1.5),
            w_k: matrix(seed, "attn.k", config.text_dim, config.attn_dim, 3.0),
            w_v: matrix(seed, "attn.v", config.text_dim, config.attn_dim, 3.0),
            w_o: matrix(seed, "attn.o", config.attn_dim, WIDTH, 0.5),
            site,
            desc,
        }
    }

    pub fn config(&self) -> &ToyConfig {
        &self.config
    }

    fn temb(&self, t: usize) -> Array1<f64> {
        let x = t as f64 / self.desc.t_max as f64;
        let mut v = Array1::zeros(TEMB);
        for j in 0..TEMB / 2 {
            let a = std::f64::consts::PI * f64::from(1u32 << j) * x;
            v[2 * j] = a.sin();
            v[2 * j + 1] = a.cos();
        }
        v
    }

    fn mix(&self, id: StageId, x: &Array3<f64>, temb: &Array1<f64>) -> Array3<f64> {
        let layer = &self.layers[&id];
        let (c, h, w) = x.dim();
        let flat = x.to_shape((c, h * w)).expect("contiguous").to_owned();
        let bias = layer.w_t.dot(temb);
        let mut out = layer.w.dot(&flat);
        for (mut row, b) in out.rows_mut().into_iter().zip(bias.iter()) {
            row.mapv_inplace(|v| (v + b).tanh());
        }
        out.into_shape_with_order((layer.w.nrows(), h, w)).expect("sized")
    }

    fn cross_attention(
        &self,
        m: &mut Array3<f64>,
        text: &TextConditioning<'_>,
        hooks: &DenoiseHooks<'_>,
    ) -> Result<()> {
        let (c, h, w) = m.dim();
        // Tokens are spatial positions, features are channels.
        let tokens = m.to_shape((c, h * w)).expect("contiguous").t().to_owned();
        let q = tokens.dot(&self.w_q);
        let attn = branch_cross_attention(q.view(), &self.w_k, &self.w_v, text, hooks.anchor_for(&self.site))?;
        let update = attn.dot(&self.w_o) * self.config.guidance;
        let update = update
            .t()
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((c, h, w))
            .expect("sized");
        *m += &update;
        Ok(())
    }

    fn check_text(&self, e: &Array2<f64>, what: &str) -> Result<()> {
        if e.ncols() != self.desc.text_dim {
            return Err(Error::shape(format!(
                "{what} embedding width {} != {}",
                e.ncols(),
                self.desc.text_dim
            )));
        }
        Ok(())
    }
}

fn avgpool2(x: &Array3<f64>) -> Array3<f64> {
    let (c, h, w) = x.dim();
    Array3::from_shape_fn((c, h / 2, w / 2), |(k, i, j)| {
        (x[[k, 2 * i, 2 * j]] + x[[k, 2 * i + 1, 2 * j]] + x[[k, 2 * i, 2 * j + 1]] + x[[k, 2 * i + 1, 2 * j + 1]])
            * 0.25
    })
}

fn upsample2(x: &Array3<f64>) -> Array3<f64> {
    let (c, h, w) = x.dim();
    Array3::from_shape_fn((c, 2 * h, 2 * w), |(k, i, j)| x[[k, i / 2, j / 2]])
}

impl Backend for ToyBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.desc
    }

    fn predict_noise(
        &self,
        latent: &Latent,
        t: usize,
        text: &TextConditioning<'_>,
        hooks: &mut DenoiseHooks<'_>,
    ) -> Result<Latent> {
        let (c, h, w) = latent.dim();
        if [c, h, w] != self.desc.latent_shape {
            return Err(Error::shape(format!(
                "latent {:?} != {:?}",
                [c, h, w],
                self.desc.latent_shape
            )));
        }
        if t >= self.desc.t_max {
            return Err(Error::invalid(format!("timestep {t} outside [0, {})", self.desc.t_max)));
        }
        self.check_text(text.branch_a, "branch A")?;
        self.check_text(text.branch_b, "branch B")?;
        if let Some(ov) = hooks.attn_override {
            self.check_text(ov.anchor, "anchor")?;
        }
        let temb = self.temb(t);
        let d = |b| StageId::new(Stage::D, b);
        let u = |b| StageId::new(Stage::U, b);
        let m0 = StageId::new(Stage::M, 0);

        let mut d0 = self.mix(d(0), latent, &temb);
        hooks.apply(d(0), &mut d0)?;
        let mut d1 = self.mix(d(1), &avgpool2(&d0), &temb);
        hooks.apply(d(1), &mut d1)?;
        let mut d2 = self.mix(d(2), &avgpool2(&d1), &temb);
        hooks.apply(d(2), &mut d2)?;

        let mut m = self.mix(m0, &d2, &temb);
        self.cross_attention(&mut m, text, hooks)?;
        hooks.apply(m0, &mut m)?;

        let mut u0 = self.mix(u(0), &(&m + &d2), &temb);
        hooks.apply(u(0), &mut u0)?;
        let mut u1 = self.mix(u(1), &(upsample2(&u0) + &d1), &temb);
        hooks.apply(u(1), &mut u1)?;
        let mut u2 = self.mix(u(2), &(upsample2(&u1) + &d0), &temb);
        hooks.apply(u(2), &mut u2)?;

        let flat = u2.to_shape((WIDTH, h * w)).expect("contiguous").to_owned();
        Ok(self
            .w_out
            .dot(&flat)
            .into_shape_with_order((LATENT_C, h, w))
            .expect("sized"))
    }

    fn encode(&self, image: &Image) -> Result<Latent> {
        if image.shape() != self.desc.image_shape {
            return Err(Error::invalid(format!(
                "image {:?} != configured {:?}",
                image.shape(),
                self.desc.image_shape
            )));
        }
        let px = image.pixels();
        let hm = hadamard4();
        let mut z = Array3::zeros((LATENT_C, LATENT_HW, LATENT_HW));
        for i in 0..LATENT_HW {
            for j in 0..LATENT_HW {
                let p = px.slice(s![0, 2 * i..2 * i + 2, 2 * j..2 * j + 2]);
                let v = Array1::from_iter(p.iter().map(|x| 2.0 * x - 1.0));
                z.slice_mut(s![.., i, j]).assign(&hm.dot(&v));
            }
        }
        Ok(z)
    }

    fn decode(&self, latent: &Latent) -> Result<Image> {
        let (c, h, w) = latent.dim();
        if [c, h, w] != self.desc.latent_shape {
            return Err(Error::shape(format!(
                "latent {:?} != {:?}",
                [c, h, w],
                self.desc.latent_shape
            )));
        }
        let hm = hadamard4();
        let mut px = Array3::zeros((1, IMAGE_HW, IMAGE_HW));
        for i in 0..LATENT_HW {
            for j in 0..LATENT_HW {
                let v = hm.dot(&latent.slice(s![.., i, j]));
                let patch = v.mapv(|x| ((x + 1.0) * 0.5).clamp(0.0, 1.0));
                let patch = patch.into_shape_with_order((2, 2)).expect("four values");
                px.slice_mut(s![0, 2 * i..2 * i + 2, 2 * j..2 * j + 2]).assign(&patch);
            }
        }
        Image::new(px)
    }
}
