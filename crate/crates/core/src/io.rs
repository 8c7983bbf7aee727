//! Image files, content hashes and run directories.

use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use image::{DynamicImage, GrayImage, ImageFormat, RgbImage};
use ndarray::{concatenate, Array3, Axis};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::denoiser::Image;
use crate::engine::MorphSequence;
use crate::error::{Error, Result};
use crate::prompting::PromptTexts;

pub const MANIFEST_FILE: &str = "run.json";
pub const ENDPOINT_A_FILE: &str = "endpoint_a.png";
pub const ENDPOINT_B_FILE: &str = "endpoint_b.png";
pub const LATENTS_FILE: &str = "latents.json";
pub const CONTACT_SHEET_FILE: &str = "contact_sheet.png";

pub fn frame_file_name(k: usize) -> String {
    format!("frame_{k:03}.png")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

fn image_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Image(format!("{}: {e}", path.display()))
}

fn from_dynamic(img: DynamicImage) -> Image {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() {
        let raw = img.to_rgb8().into_raw();
        let hwc = Array3::from_shape_vec((h, w, 3), raw).expect("rgb buffer size");
        Image::from_u8(&hwc.permuted_axes([2, 0, 1]).as_standard_layout().to_owned())
    } else {
        let raw = img.to_luma8().into_raw();
        Image::from_u8(&Array3::from_shape_vec((1, h, w), raw).expect("luma buffer size"))
    }
}

/// Reads an image file as stored: one channel for greyscale, three otherwise.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    let img = image::load_from_memory(&bytes).map_err(|e| image_err(path, e))?;
    Ok(from_dynamic(img))
}

/// Reads an image and converts it to `shape` (channels, height, width),
/// resizing with a triangle filter when needed.
pub fn load_image_as(path: impl AsRef<Path>, shape: [usize; 3]) -> Result<Image> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    let mut img = image::load_from_memory(&bytes).map_err(|e| image_err(path, e))?;
    let [c, h, w] = shape;
    if (img.width() as usize, img.height() as usize) != (w, h) {
        img = img.resize_exact(w as u32, h as u32, FilterType::Triangle);
    }
    img = match c {
        1 => DynamicImage::ImageLuma8(img.to_luma8()),
        3 => DynamicImage::ImageRgb8(img.to_rgb8()),
        _ => return Err(Error::invalid(format!("cannot load images with {c} channels"))),
    };
    let out = from_dynamic(img);
    // A grey-looking RGB target still needs three planes.
    if out.shape()[0] != c {
        let px = out.pixels();
        let stacked = concatenate(Axis(0), &[px.view(), px.view(), px.view()]).expect("same shape");
        return Image::new(stacked);
    }
    Ok(out)
}

pub fn encode_png(image: &Image) -> Result<Vec<u8>> {
    let [c, h, w] = image.shape();
    let px = image.to_u8();
    let dynamic = match c {
        1 => DynamicImage::ImageLuma8(
            GrayImage::from_raw(w as u32, h as u32, px.iter().copied().collect()).expect("luma buffer size"),
        ),
        3 => {
            let hwc: Vec<u8> = px.permuted_axes([1, 2, 0]).iter().copied().collect();
            DynamicImage::ImageRgb8(RgbImage::from_raw(w as u32, h as u32, hwc).expect("rgb buffer size"))
        }
        _ => return Err(Error::Format(format!("cannot write {c}-channel image as PNG"))),
    };
    let mut buf = Cursor::new(Vec::new());
    dynamic
        .write_to(&mut buf, ImageFormat::Png)
        .map_err(|e| Error::Image(e.to_string()))?;
    Ok(buf.into_inner())
}

/// Writes a PNG and returns the SHA-256 of the bytes written.
pub fn save_png(path: impl AsRef<Path>, image: &Image) -> Result<String> {
    let bytes = encode_png(image)?;
    std::fs::write(path, &bytes)?;
    Ok(sha256_hex(&bytes))
}

/// Frames side by side, left to right.
pub fn contact_sheet(frames: &[Image]) -> Result<Image> {
    let Some(first) = frames.first() else {
        return Err(Error::invalid("no frames for contact sheet"));
    };
    if frames.iter().any(|f| f.shape() != first.shape()) {
        return Err(Error::shape("frames differ in shape"));
    }
    let views: Vec<_> = frames.iter().map(|f| f.pixels().view()).collect();
    Image::new(concatenate(Axis(2), &views).map_err(|e| Error::shape(e.to_string()))?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub file: String,
    pub alpha: f64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub chimera: String,
    pub backend: String,
}

/// Everything needed to reproduce and audit a run. `timings` is the only
/// field that changes between identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: Value,
    pub input_a: FileEntry,
    pub input_b: FileEntry,
    pub prompts: PromptTexts,
    pub prompt_source: String,
    pub frames: Vec<FrameEntry>,
    pub endpoint_a: FileEntry,
    pub endpoint_b: FileEntry,
    pub latents_file: String,
    pub contact_sheet: Option<FileEntry>,
    pub versions: Versions,
    pub timings: Value,
}

impl RunManifest {
    /// The manifest without its volatile timing section.
    pub fn stable_json(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("manifest serializes");
        v.as_object_mut().expect("object").remove("timings");
        v
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

/// Inputs to [`write_run`] that are not part of the generated sequence.
pub struct RunInputs<'a> {
    pub path_a: &'a Path,
    pub path_b: &'a Path,
    pub image_a: &'a Image,
    pub image_b: &'a Image,
    pub config: Value,
    pub prompts: &'a PromptTexts,
    pub prompt_source: &'a str,
    pub backend_name: &'a str,
    pub contact_sheet: bool,
}

fn latent_rows(seq: &MorphSequence) -> Vec<Vec<f64>> {
    let mut rows = vec![seq.z_a.iter().copied().collect::<Vec<_>>()];
    rows.extend(seq.start_latents.iter().map(|z| z.iter().copied().collect()));
    rows.push(seq.z_b.iter().copied().collect());
    rows
}

pub fn write_run(out_dir: impl AsRef<Path>, seq: &MorphSequence, inputs: &RunInputs<'_>) -> Result<RunManifest> {
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut frames = Vec::with_capacity(seq.frames.len());
    for (k, (img, &alpha)) in seq.frames.iter().zip(seq.alphas.as_slice()).enumerate() {
        let file = frame_file_name(k);
        let sha256 = save_png(dir.join(&file), img)?;
        frames.push(FrameEntry { file, alpha, sha256 });
    }
    let endpoint_a = FileEntry {
        path: ENDPOINT_A_FILE.into(),
        sha256: save_png(dir.join(ENDPOINT_A_FILE), inputs.image_a)?,
    };
    let endpoint_b = FileEntry {
        path: ENDPOINT_B_FILE.into(),
        sha256: save_png(dir.join(ENDPOINT_B_FILE), inputs.image_b)?,
    };
    let latents = serde_json::to_vec(&latent_rows(seq)).expect("latents serialize");
    std::fs::write(dir.join(LATENTS_FILE), latents)?;
    let contact_sheet = if inputs.contact_sheet {
        let mut all = vec![inputs.image_a.clone()];
        all.extend(seq.frames.iter().cloned());
        all.push(inputs.image_b.clone());
        let sha256 = save_png(dir.join(CONTACT_SHEET_FILE), &contact_sheet(&all)?)?;
        Some(FileEntry {
            path: CONTACT_SHEET_FILE.into(),
            sha256,
        })
    } else {
        None
    };
    let input = |p: &Path| -> Result<FileEntry> {
        Ok(FileEntry {
            path: p.display().to_string(),
            sha256: sha256_file(p)?,
        })
    };
    let manifest = RunManifest {
        config: inputs.config.clone(),
        input_a: input(inputs.path_a)?,
        input_b: input(inputs.path_b)?,
        prompts: inputs.prompts.clone(),
        prompt_source: inputs.prompt_source.to_owned(),
        frames,
        endpoint_a,
        endpoint_b,
        latents_file: LATENTS_FILE.into(),
        contact_sheet,
        versions: Versions {
            chimera: env!("CARGO_PKG_VERSION").into(),
            backend: inputs.backend_name.to_owned(),
        },
        timings: serde_json::to_value(&seq.timings).expect("timings serialize"),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(dir.join(MANIFEST_FILE), text)?;
    Ok(manifest)
}

/// A morph sequence read back from disk.
#[derive(Debug, Clone)]
pub struct StoredSequence {
    pub a: Image,
    pub b: Image,
    pub frames: Vec<Image>,
    pub frame_files: Vec<PathBuf>,
    /// One latent per path point, when the directory has them.
    pub latents: Option<Vec<Vec<f64>>>,
}

/// Loads endpoints and frames. Frame order comes from the manifest when
/// present, otherwise from sorted `frame_*.png` names.
pub fn load_sequence(dir: impl AsRef<Path>) -> Result<StoredSequence> {
    let dir = dir.as_ref();
    for f in [ENDPOINT_A_FILE, ENDPOINT_B_FILE] {
        if !dir.join(f).is_file() {
            return Err(Error::NotFound(format!("{} is missing", dir.join(f).display())));
        }
    }
    let frame_files: Vec<PathBuf> = if dir.join(MANIFEST_FILE).is_file() {
        RunManifest::load(dir)?
            .frames
            .iter()
            .map(|f| dir.join(&f.file))
            .collect()
    } else {
        let mut names: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("frame_") && n.ends_with(".png"))
            })
            .collect();
        names.sort();
        names
    };
    if frame_files.is_empty() {
        return Err(Error::NotFound(format!("no frames in {}", dir.display())));
    }
    let frames = frame_files.iter().map(load_image).collect::<Result<Vec<_>>>()?;
    let latents = match std::fs::read(dir.join(LATENTS_FILE)) {
        Ok(bytes) => Some(
            serde_json::from_slice::<Vec<Vec<f64>>>(&bytes)
                .map_err(|e| Error::Format(format!("{}: {e}", dir.join(LATENTS_FILE).display())))?,
        ),
        Err(_) => None,
    };
    if let Some(l) = &latents {
        if l.len() != frames.len() + 2 {
            return Err(Error::Format(format!(
                "{} latents for {} frames",
                l.len(),
                frames.len()
            )));
        }
    }
    Ok(StoredSequence {
        a: load_image(dir.join(ENDPOINT_A_FILE))?,
        b: load_image(dir.join(ENDPOINT_B_FILE))?,
        frames,
        frame_files,
        latents,
    })
}
