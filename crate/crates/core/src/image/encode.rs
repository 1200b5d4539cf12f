use std::io::Write;

use flate2::write::ZlibEncoder;
use flate2::Compression;

use super::ImageError;

/// 16-bit PNG, grayscale for 1 channel or RGB for 3. `samples` are
/// pixel-interleaved.
pub fn encode_png16(
    width: u32,
    height: u32,
    channels: u16,
    samples: &[u16],
) -> Result<Vec<u8>, ImageError> {
    let color = match channels {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        n => {
            return Err(ImageError::PolicyMismatch(format!(
                "PNG output supports 1 or 3 channels, not {n}"
            )))
        }
    };
    let mut data = Vec::with_capacity(samples.len() * 2);
    for s in samples {
        data.extend_from_slice(&s.to_be_bytes());
    }
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, width, height);
        encoder.set_color(color);
        encoder.set_depth(png::BitDepth::Sixteen);
        let mut writer = encoder
            .write_header()
            .map_err(|e| ImageError::CorruptImage(format!("png encode: {e}")))?;
        writer
            .write_image_data(&data)
            .map_err(|e| ImageError::CorruptImage(format!("png encode: {e}")))?;
        writer
            .finish()
            .map_err(|e| ImageError::CorruptImage(format!("png encode: {e}")))?;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TiffCompression {
    None,
    Deflate,
}

impl TiffCompression {
    fn tag_value(self) -> u16 {
        match self {
            TiffCompression::None => 1,
            TiffCompression::Deflate => 8,
        }
    }
}

const SHORT: u16 = 3;
const LONG: u16 = 4;
const RATIONAL: u16 = 5;

struct Entry {
    tag: u16,
    kind: u16,
    count: u32,
    payload: Vec<u8>,
}

impl Entry {
    fn shorts(tag: u16, values: &[u16]) -> Self {
        Self {
            tag,
            kind: SHORT,
            count: values.len() as u32,
            payload: values.iter().flat_map(|v| v.to_le_bytes()).collect(),
        }
    }

    fn long(tag: u16, value: u32) -> Self {
        Self {
            tag,
            kind: LONG,
            count: 1,
            payload: value.to_le_bytes().to_vec(),
        }
    }

    fn rational(tag: u16, num: u32, den: u32) -> Self {
        let mut payload = num.to_le_bytes().to_vec();
        payload.extend_from_slice(&den.to_le_bytes());
        Self {
            tag,
            kind: RATIONAL,
            count: 1,
            payload,
        }
    }
}

fn pad_even(buf: &mut Vec<u8>) {
    if buf.len() % 2 == 1 {
        buf.push(0);
    }
}

fn offset_u32(len: usize) -> Result<u32, ImageError> {
    u32::try_from(len).map_err(|_| ImageError::PolicyMismatch("TIFF output exceeds 4 GiB".into()))
}

/// Little-endian baseline TIFF, 16 bits per unsigned sample, one strip per
/// page. Three channels are tagged RGB; any other count is BlackIsZero with
/// unspecified extra samples.
pub fn encode_tiff16(
    width: u32,
    height: u32,
    channels: u16,
    pages: &[Vec<u16>],
    compression: TiffCompression,
) -> Result<Vec<u8>, ImageError> {
    if pages.is_empty() || channels == 0 {
        return Err(ImageError::InvalidImage("TIFF needs at least one page and channel".into()));
    }
    let expected = width as usize * height as usize * channels as usize;
    let mut out: Vec<u8> = Vec::new();
    out.extend_from_slice(b"II");
    out.extend_from_slice(&42u16.to_le_bytes());
    let mut next_ifd_slot = out.len();
    out.extend_from_slice(&0u32.to_le_bytes());

    for page in pages {
        if page.len() != expected {
            return Err(ImageError::InvalidImage(format!(
                "TIFF page has {} samples, expected {expected}",
                page.len()
            )));
        }
        let raw: Vec<u8> = page.iter().flat_map(|s| s.to_le_bytes()).collect();
        let strip = match compression {
            TiffCompression::None => raw,
            TiffCompression::Deflate => {
                let mut enc = ZlibEncoder::new(Vec::new(), Compression::default());
                enc.write_all(&raw)
                    .and_then(|_| enc.finish())
                    .map_err(|e| ImageError::CorruptImage(format!("deflate: {e}")))?
            }
        };
        pad_even(&mut out);
        let strip_offset = offset_u32(out.len())?;
        let strip_len = offset_u32(strip.len())?;
        out.extend_from_slice(&strip);

        let photometric = if channels == 3 { 2 } else { 1 };
        let extra = if channels == 3 { 0 } else { channels - 1 };
        let mut entries = vec![
            Entry::long(256, width),
            Entry::long(257, height),
            Entry::shorts(258, &vec![16; channels as usize]),
            Entry::shorts(259, &[compression.tag_value()]),
            Entry::shorts(262, &[photometric]),
            Entry::long(273, strip_offset),
            Entry::shorts(277, &[channels]),
            Entry::long(278, height),
            Entry::long(279, strip_len),
            Entry::rational(282, 1, 1),
            Entry::rational(283, 1, 1),
            Entry::shorts(284, &[1]),
            Entry::shorts(296, &[1]),
        ];
        if extra > 0 {
            entries.push(Entry::shorts(338, &vec![0; extra as usize]));
        }
        entries.push(Entry::shorts(339, &vec![1; channels as usize]));

        // Out-of-line values first, then the IFD that points at them.
        let mut value_offsets = Vec::with_capacity(entries.len());
        for e in &entries {
            if e.payload.len() > 4 {
                pad_even(&mut out);
                value_offsets.push(Some(offset_u32(out.len())?));
                out.extend_from_slice(&e.payload);
            } else {
                value_offsets.push(None);
            }
        }
        pad_even(&mut out);
        let ifd_offset = offset_u32(out.len())?;
        out[next_ifd_slot..next_ifd_slot + 4].copy_from_slice(&ifd_offset.to_le_bytes());
        out.extend_from_slice(&(entries.len() as u16).to_le_bytes());
        for (e, off) in entries.iter().zip(&value_offsets) {
            out.extend_from_slice(&e.tag.to_le_bytes());
            out.extend_from_slice(&e.kind.to_le_bytes());
            out.extend_from_slice(&e.count.to_le_bytes());
            match off {
                Some(o) => out.extend_from_slice(&o.to_le_bytes()),
                None => {
                    let mut inline = [0u8; 4];
                    inline[..e.payload.len()].copy_from_slice(&e.payload);
                    out.extend_from_slice(&inline);
                }
            }
        }
        next_ifd_slot = out.len();
        out.extend_from_slice(&0u32.to_le_bytes());
    }
    Ok(out)
}
