//! Decoding source rasters and re-encoding them as 16-bit PNG or TIFF.
//!
//! Samples are held planar: all pixels of plane 0 channel 0, then plane 0
//! channel 1, and so on. Each output file carries one 2D plane (PNG) or a
//! stack of planes (TIFF pages).

mod decode;
mod encode;

use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use decode::decode;
pub use encode::{encode_png16, encode_tiff16, TiffCompression};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ImageError {
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image: {0}")]
    CorruptImage(String),
    #[error("image has zero width or height")]
    ZeroPixel,
    #[error("conversion policy does not fit image: {0}")]
    PolicyMismatch(String),
    #[error("invalid raw image: {0}")]
    InvalidImage(String),
}

/// A decoded raster with planar sample layout.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawImage {
    width: u32,
    height: u32,
    channels: u16,
    planes: u32,
    bit_depth: u8,
    samples: Vec<u16>,
}

impl RawImage {
    pub fn new(
        width: u32,
        height: u32,
        channels: u16,
        planes: u32,
        bit_depth: u8,
        samples: Vec<u16>,
    ) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::ZeroPixel);
        }
        if channels == 0 || planes == 0 {
            return Err(ImageError::InvalidImage("channels and planes must be positive".into()));
        }
        if !matches!(bit_depth, 8 | 12 | 16) {
            return Err(ImageError::InvalidImage(format!("bit depth {bit_depth} not in 8, 12, 16")));
        }
        let expected = width as usize * height as usize * channels as usize * planes as usize;
        if samples.len() != expected {
            return Err(ImageError::InvalidImage(format!(
                "expected {expected} samples, got {}",
                samples.len()
            )));
        }
        let max = max_sample(bit_depth);
        if let Some(v) = samples.iter().find(|&&v| v > max) {
            return Err(ImageError::InvalidImage(format!(
                "sample {v} exceeds {bit_depth}-bit range"
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            planes,
            bit_depth,
            samples,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }
    pub fn channels(&self) -> u16 {
        self.channels
    }
    pub fn planes(&self) -> u32 {
        self.planes
    }
    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }
    pub fn samples(&self) -> &[u16] {
        &self.samples
    }

    fn pixels_per_plane(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Samples of one (plane, channel) slice.
    pub fn slice(&self, plane: u32, channel: u16) -> &[u16] {
        let n = self.pixels_per_plane();
        let start = (plane as usize * self.channels as usize + channel as usize) * n;
        &self.samples[start..start + n]
    }
}

pub(crate) fn max_sample(bit_depth: u8) -> u16 {
    ((1u32 << bit_depth) - 1) as u16
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageFormat {
    #[default]
    Png16,
    Tiff16,
}

impl ImageFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ImageFormat::Png16 => "png",
            ImageFormat::Tiff16 => "tif",
        }
    }

    pub fn mime_type(self) -> &'static str {
        match self {
            ImageFormat::Png16 => "image/png",
            ImageFormat::Tiff16 => "image/tiff",
        }
    }
}

impl fmt::Display for ImageFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ImageFormat::Png16 => "png16",
            ImageFormat::Tiff16 => "tiff16",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// Store raw values unchanged in the 16-bit container.
    #[default]
    Preserve,
    /// Stretch the source range onto 0..=65535.
    RescaleToFull,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConversionPolicy {
    #[serde(default, rename = "format")]
    pub target_format: ImageFormat,
    #[serde(default)]
    pub scaling: Scaling,
    #[serde(default)]
    pub channel_split: bool,
    #[serde(default = "default_true")]
    pub plane_split: bool,
}

fn default_true() -> bool {
    true
}

impl Default for ConversionPolicy {
    fn default() -> Self {
        Self {
            target_format: ImageFormat::Png16,
            scaling: Scaling::Preserve,
            channel_split: false,
            plane_split: true,
        }
    }
}

/// One encoded output file.
#[derive(Clone, PartialEq, Eq)]
pub struct ConvertedImage {
    pub relative_path: String,
    pub format: ImageFormat,
    pub width: u32,
    pub height: u32,
    pub bytes: Vec<u8>,
    pub sha256: [u8; 32],
    pub source_path: String,
    /// Structure columns known from conversion itself, e.g. `z_plane`.
    pub derived: IndexMap<String, String>,
}

impl ConvertedImage {
    pub fn sha256_hex(&self) -> String {
        hex::encode(self.sha256)
    }

    pub fn verify(&self) -> bool {
        <[u8; 32]>::from(Sha256::digest(&self.bytes)) == self.sha256
    }
}

impl fmt::Debug for ConvertedImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConvertedImage")
            .field("relative_path", &self.relative_path)
            .field("format", &self.format)
            .field("width", &self.width)
            .field("height", &self.height)
            .field("len", &self.bytes.len())
            .field("sha256", &self.sha256_hex())
            .field("source_path", &self.source_path)
            .field("derived", &self.derived)
            .finish()
    }
}

/// What the rest of the pipeline keeps about a converted file once its
/// bytes are on disk.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageRecord {
    pub relative_path: String,
    pub format: ImageFormat,
    pub width: u32,
    pub height: u32,
    pub size_bytes: u64,
    pub sha256: [u8; 32],
    pub source_path: String,
    pub derived: IndexMap<String, String>,
}

impl From<&ConvertedImage> for ImageRecord {
    fn from(img: &ConvertedImage) -> Self {
        Self {
            relative_path: img.relative_path.clone(),
            format: img.format,
            width: img.width,
            height: img.height,
            size_bytes: img.bytes.len() as u64,
            sha256: img.sha256,
            source_path: img.source_path.clone(),
            derived: img.derived.clone(),
        }
    }
}

/// Map one source sample into the 16-bit container.
///
/// `RescaleToFull` computes `round(v * 65535 / (2^d - 1))` exactly in integers.
pub fn scale_sample(v: u16, bit_depth: u8, scaling: Scaling) -> u16 {
    match scaling {
        Scaling::Preserve => v,
        Scaling::RescaleToFull => {
            let max = u64::from(max_sample(bit_depth));
            let num = 2 * u64::from(v) * 65535 + max;
            (num / (2 * max)) as u16
        }
    }
}

/// Encode `img` into one or more files named from `base_path`.
///
/// Suffixes `_z{p}` and `_c{c}` are appended only when the matching split is
/// enabled and the dimension is larger than one.
pub fn convert(
    img: &RawImage,
    policy: &ConversionPolicy,
    base_path: &str,
    source_path: &str,
) -> Result<Vec<ConvertedImage>, ImageError> {
    let split_planes = policy.plane_split && img.planes > 1;
    let split_channels = policy.channel_split && img.channels > 1;
    let channels_per_file = if split_channels { 1 } else { img.channels };
    let planes_per_file = if split_planes { 1 } else { img.planes };

    if policy.target_format == ImageFormat::Png16 {
        if planes_per_file > 1 {
            return Err(ImageError::PolicyMismatch(format!(
                "PNG holds one plane but the image has {} and plane_split is off",
                img.planes
            )));
        }
        if !matches!(channels_per_file, 1 | 3) {
            return Err(ImageError::PolicyMismatch(format!(
                "PNG needs 1 or 3 channels per file, got {channels_per_file} with channel_split off"
            )));
        }
    }

    let plane_groups: Vec<Vec<u32>> = if split_planes {
        (0..img.planes).map(|p| vec![p]).collect()
    } else {
        vec![(0..img.planes).collect()]
    };
    let channel_groups: Vec<Vec<u16>> = if split_channels {
        (0..img.channels).map(|c| vec![c]).collect()
    } else {
        vec![(0..img.channels).collect()]
    };

    let mut outputs = Vec::with_capacity(plane_groups.len() * channel_groups.len());
    for planes in &plane_groups {
        for channels in &channel_groups {
            let mut name = base_path.to_string();
            let mut derived = IndexMap::new();
            if img.bit_depth != 16 {
                derived.insert("acquisition_bit_depth".to_string(), img.bit_depth.to_string());
            }
            if split_planes {
                name.push_str(&format!("_z{}", planes[0]));
                derived.insert("z_plane".to_string(), planes[0].to_string());
            }
            if split_channels {
                name.push_str(&format!("_c{}", channels[0]));
                derived.insert("channel".to_string(), channels[0].to_string());
            }
            name.push('.');
            name.push_str(policy.target_format.extension());

            let pages: Vec<Vec<u16>> = planes
                .iter()
                .map(|&p| interleave(img, p, channels, policy.scaling))
                .collect();
            let bytes = match policy.target_format {
                ImageFormat::Png16 => encode_png16(img.width, img.height, channels.len() as u16, &pages[0])?,
                ImageFormat::Tiff16 => encode_tiff16(
                    img.width,
                    img.height,
                    channels.len() as u16,
                    &pages,
                    TiffCompression::Deflate,
                )?,
            };
            let sha256 = Sha256::digest(&bytes).into();
            outputs.push(ConvertedImage {
                relative_path: name,
                format: policy.target_format,
                width: img.width,
                height: img.height,
                bytes,
                sha256,
                source_path: source_path.to_string(),
                derived,
            });
        }
    }
    Ok(outputs)
}

/// Pixel-interleaved, scaled samples of the chosen channels of one plane.
fn interleave(img: &RawImage, plane: u32, channels: &[u16], scaling: Scaling) -> Vec<u16> {
    let n = img.pixels_per_plane();
    let slices: Vec<&[u16]> = channels.iter().map(|&c| img.slice(plane, c)).collect();
    let mut out = Vec::with_capacity(n * channels.len());
    for i in 0..n {
        for s in &slices {
            out.push(scale_sample(s[i], img.bit_depth, scaling));
        }
    }
    out
}

#[cfg(test)]
mod tests;
