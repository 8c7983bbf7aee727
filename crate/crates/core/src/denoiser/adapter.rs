//! Descriptor for attaching a 768x768 latent-diffusion U-Net (SD 2.x
//! layout). No weights ship with this crate: an adapter implements
//! [`Backend`](super::Backend) for such a model and reports this descriptor.
//!
//! Hook placement expected from an adapter:
//! - `D{i}`: output of down block `i` (after its downsampler, if any),
//! - `M0`: output of the mid block,
//! - `U{i}`: output of up block `i` (after its upsampler, if any).
//!
//! Feature taps see each output before residuals are added; residuals are
//! added in place before the tensor flows into the next block or skip
//! connection. Anchor rows from the hooks are appended to the keys and
//! values of every cross-attention layer listed in `cross_attn_sites`.

use std::collections::BTreeMap;

use super::{AttnSite, BackendDescriptor};
use crate::cache::{Stage, StageId};

pub fn latent_diffusion_768_descriptor() -> BackendDescriptor {
    let d = |b| StageId::new(Stage::D, b);
    let u = |b| StageId::new(Stage::U, b);
    let m0 = StageId::new(Stage::M, 0);
    let feature_shapes: BTreeMap<StageId, [usize; 3]> = [
        (d(0), [320, 48, 48]),
        (d(1), [640, 24, 24]),
        (d(2), [1280, 12, 12]),
        (d(3), [1280, 12, 12]),
        (m0, [1280, 12, 12]),
        (u(0), [1280, 24, 24]),
        (u(1), [1280, 48, 48]),
        (u(2), [640, 96, 96]),
        (u(3), [320, 96, 96]),
    ]
    .into_iter()
    .collect();
    let site = |stage, early| AttnSite { stage, early };
    BackendDescriptor {
        name: "latent-diffusion-768".into(),
        latent_shape: [4, 96, 96],
        image_shape: [3, 768, 768],
        stage_blocks: [(Stage::D, 4), (Stage::M, 1), (Stage::U, 4)].into_iter().collect(),
        feature_shapes,
        attn_dim: 64,
        text_dim: 1024,
        cross_attn_sites: vec![
            site(d(0), true),
            site(d(1), true),
            site(d(2), true),
            site(m0, true),
            site(u(1), false),
            site(u(2), false),
            site(u(3), false),
        ],
        t_max: 1000,
        serial: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descriptor_validates() {
        let d = latent_diffusion_768_descriptor();
        d.validate().unwrap();
        assert_eq!(d.stage_ids().len(), 9);
        assert_eq!(d.image_shape[1], 768);
    }
}
