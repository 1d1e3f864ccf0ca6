//! Single-channel rasters and their 16-bit PNG persistence.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ImageError {
    #[error("image size mismatch: {0}x{1} vs {2}x{3}")]
    SizeMismatch(usize, usize, usize, usize),
    #[error("pixel buffer has {got} values, expected {expected}")]
    BufferLength { expected: usize, got: usize },
    #[error("unsupported PNG layout: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Encode(#[from] png::EncodingError),
    #[error(transparent)]
    Decode(#[from] png::DecodingError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Row-major single-channel image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl GrayImage {
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        if data.len() != width * height {
            return Err(ImageError::BufferLength {
                expected: width * height,
                got: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn same_size(&self, other: &GrayImage) -> Result<(), ImageError> {
        if self.width != other.width || self.height != other.height {
            return Err(ImageError::SizeMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }

    /// Quantized 16-bit samples, `round(v · 65535)` after clamping to `[0, 1]`.
    pub fn to_u16(&self) -> Vec<u16> {
        self.data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
            .collect()
    }

    pub fn write_png(&self, path: &Path) -> Result<(), ImageError> {
        let file = BufWriter::new(File::create(path)?);
        let mut enc = png::Encoder::new(file, self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Sixteen);
        let mut writer = enc.write_header()?;
        let bytes: Vec<u8> = self.to_u16().iter().flat_map(|v| v.to_be_bytes()).collect();
        writer.write_image_data(&bytes)?;
        writer.finish()?;
        Ok(())
    }

    /// Reads an 8- or 16-bit grayscale PNG, scaling samples to `[0, 1]`.
    pub fn read_png(path: &Path) -> Result<Self, ImageError> {
        let dec = png::Decoder::new(BufReader::new(File::open(path)?));
        let mut reader = dec.read_info()?;
        let size = reader
            .output_buffer_size()
            .ok_or_else(|| ImageError::Unsupported("image too large".into()))?;
        let mut buf = vec![0; size];
        let info = reader.next_frame(&mut buf)?;
        if info.color_type != png::ColorType::Grayscale {
            return Err(ImageError::Unsupported(format!("{:?}", info.color_type)));
        }
        let (w, h) = (info.width as usize, info.height as usize);
        let data: Vec<f64> = match info.bit_depth {
            png::BitDepth::Sixteen => buf[..w * h * 2]
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / 65535.0)
                .collect(),
            png::BitDepth::Eight => buf[..w * h].iter().map(|v| *v as f64 / 255.0).collect(),
            other => return Err(ImageError::Unsupported(format!("bit depth {other:?}"))),
        };
        Self::from_data(w, h, data)
    }
}

/// Normalized depth: `0` at the near plane, `1` at the far plane and on
/// background pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub image: GrayImage,
    pub near: f64,
    pub far: f64,
}

/// Sidecar metadata stored next to a depth PNG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthMeta {
    pub near: f64,
    pub far: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<serde_json::Value>,
}

impl DepthImage {
    pub fn background(width: usize, height: usize, near: f64, far: f64) -> Self {
        Self {
            image: GrayImage::filled(width, height, 1.0),
            near,
            far,
        }
    }

    /// Writes `path` as a 16-bit PNG and `path.json` with near/far and an
    /// optional camera description.
    pub fn write(&self, path: &Path, camera: Option<serde_json::Value>) -> Result<(), ImageError> {
        self.image.write_png(path)?;
        let meta = DepthMeta {
            near: self.near,
            far: self.far,
            camera,
        };
        std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    /// Reads a depth PNG; near/far come from the sidecar when present.
    pub fn read(path: &Path) -> Result<Self, ImageError> {
        let image = GrayImage::read_png(path)?;
        let side = sidecar_path(path);
        let (near, far) = if side.exists() {
            let meta: DepthMeta = serde_json::from_str(&std::fs::read_to_string(side)?)?;
            (meta.near, meta.far)
        } else {
            (0.0, 1.0)
        };
        Ok(Self { image, near, far })
    }
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}
