use std::io::Cursor;

use tiff::decoder::{Decoder as TiffDecoder, DecodingResult, Limits};
use tiff::tags::Tag;
use tiff::ColorType as TiffColor;

use super::{ImageError, RawImage};

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";

enum Container {
    Png,
    Tiff,
}

fn sniff(bytes: &[u8]) -> Option<Container> {
    if bytes.starts_with(PNG_MAGIC) {
        return Some(Container::Png);
    }
    match bytes.get(..4)? {
        b"II*\0" | b"MM\0*" | b"II+\0" | b"MM\0+" => Some(Container::Tiff),
        _ => None,
    }
}

/// Decode PNG (8/16-bit gray, RGB, with or without alpha) or baseline TIFF
/// (8/16-bit unsigned, any sample count, pages become planes). The filename
/// is used for error context only; the format is sniffed from magic bytes.
pub fn decode(bytes: &[u8], filename_hint: &str) -> Result<RawImage, ImageError> {
    match sniff(bytes) {
        Some(Container::Png) => decode_png(bytes),
        Some(Container::Tiff) => decode_tiff(bytes),
        None => Err(ImageError::UnsupportedFormat(format!(
            "{filename_hint}: unrecognized magic bytes"
        ))),
    }
    .map_err(|e| match e {
        ImageError::CorruptImage(msg) => ImageError::CorruptImage(format!("{filename_hint}: {msg}")),
        ImageError::UnsupportedFormat(msg) if !msg.starts_with(filename_hint) => {
            ImageError::UnsupportedFormat(format!("{filename_hint}: {msg}"))
        }
        other => other,
    })
}

fn decode_png(bytes: &[u8]) -> Result<RawImage, ImageError> {
    // IHDR width/height sit at fixed offsets; check them before the decoder
    // rejects zero dimensions as a generic format error.
    if bytes.len() >= 24 {
        let w = u32::from_be_bytes(bytes[16..20].try_into().unwrap());
        let h = u32::from_be_bytes(bytes[20..24].try_into().unwrap());
        if &bytes[12..16] == b"IHDR" && (w == 0 || h == 0) {
            return Err(ImageError::ZeroPixel);
        }
    }
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder
        .read_info()
        .map_err(|e| ImageError::CorruptImage(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| ImageError::CorruptImage("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| ImageError::CorruptImage(e.to_string()))?;
    buf.truncate(info.buffer_size());
    let channels = info.color_type.samples() as u16;
    let (bit_depth, interleaved): (u8, Vec<u16>) = match info.bit_depth {
        png::BitDepth::Eight => (8, buf.iter().map(|&b| u16::from(b)).collect()),
        png::BitDepth::Sixteen => (
            16,
            buf.chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]))
                .collect(),
        ),
        other => {
            return Err(ImageError::UnsupportedFormat(format!(
                "PNG bit depth {other:?} after expansion"
            )))
        }
    };
    let planar = deinterleave(&interleaved, info.width, info.height, channels);
    RawImage::new(info.width, info.height, channels, 1, bit_depth, planar)
}

fn tiff_err(e: tiff::TiffError) -> ImageError {
    match e {
        tiff::TiffError::UnsupportedError(u) => ImageError::UnsupportedFormat(u.to_string()),
        other => ImageError::CorruptImage(other.to_string()),
    }
}

fn decode_tiff(bytes: &[u8]) -> Result<RawImage, ImageError> {
    let mut decoder = TiffDecoder::new(Cursor::new(bytes))
        .map_err(tiff_err)?
        .with_limits(Limits::unlimited());
    let mut geometry: Option<(u32, u32, u16, u8)> = None;
    let mut samples: Vec<u16> = Vec::new();
    let mut planes = 0u32;
    loop {
        let (width, height) = decoder.dimensions().map_err(tiff_err)?;
        if width == 0 || height == 0 {
            return Err(ImageError::ZeroPixel);
        }
        let color = decoder.colortype().map_err(tiff_err)?;
        let (channels, bits) = match color {
            TiffColor::Gray(b) => (1u16, b),
            TiffColor::GrayA(b) => (2, b),
            TiffColor::RGB(b) => (3, b),
            TiffColor::RGBA(b) => (4, b),
            TiffColor::Multiband {
                bit_depth,
                num_samples,
            } => (num_samples, bit_depth),
            other => {
                return Err(ImageError::UnsupportedFormat(format!("TIFF color type {other:?}")))
            }
        };
        if !matches!(bits, 8 | 16) {
            return Err(ImageError::UnsupportedFormat(format!("TIFF with {bits} bits per sample")));
        }
        let page_geometry = (width, height, channels, bits);
        match geometry {
            None => geometry = Some(page_geometry),
            Some(g) if g != page_geometry => {
                return Err(ImageError::UnsupportedFormat(format!(
                    "TIFF pages differ in geometry: {g:?} vs {page_geometry:?}"
                )))
            }
            Some(_) => {}
        }
        let planar_config: u16 = decoder
            .find_tag_unsigned(Tag::PlanarConfiguration)
            .map_err(tiff_err)?
            .unwrap_or(1);
        let mut result = DecodingResult::U8(Vec::new());
        decoder.read_image_to_buffer(&mut result).map_err(tiff_err)?;
        let values: Vec<u16> = match result {
            DecodingResult::U8(v) => v.into_iter().map(u16::from).collect(),
            DecodingResult::U16(v) => v,
            _ => {
                return Err(ImageError::UnsupportedFormat(
                    "TIFF sample format is not unsigned integer".into(),
                ))
            }
        };
        let per_page = width as usize * height as usize * channels as usize;
        if values.len() < per_page {
            return Err(ImageError::CorruptImage(format!(
                "TIFF page decoded {} samples, expected {per_page}",
                values.len()
            )));
        }
        if planar_config == 2 {
            samples.extend_from_slice(&values[..per_page]);
        } else {
            samples.extend(deinterleave(&values[..per_page], width, height, channels));
        }
        planes += 1;
        if !decoder.more_images() {
            break;
        }
        decoder.next_image().map_err(tiff_err)?;
    }
    let (width, height, channels, bits) = geometry.expect("at least one page decoded");
    RawImage::new(width, height, channels, planes, bits, samples)
}

/// Pixel-interleaved to channel-planar order.
fn deinterleave(interleaved: &[u16], width: u32, height: u32, channels: u16) -> Vec<u16> {
    let n = width as usize * height as usize;
    let ch = channels as usize;
    if ch == 1 {
        return interleaved[..n].to_vec();
    }
    let mut out = vec![0u16; n * ch];
    for (i, px) in interleaved.chunks_exact(ch).take(n).enumerate() {
        for (c, &v) in px.iter().enumerate() {
            out[c * n + i] = v;
        }
    }
    out
}
