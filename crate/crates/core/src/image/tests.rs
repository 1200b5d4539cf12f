use super::*;
use proptest::prelude::*;
use std::io::Cursor;

fn gray8_png(width: u32, height: u32, data: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, width, height);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let mut w = enc.write_header().unwrap();
    w.write_image_data(data).unwrap();
    w.finish().unwrap();
    out
}

/// Multi-page 16-bit gray TIFF written by the `tiff` crate, independent of
/// our own writer.
fn reference_tiff_gray16(width: u32, height: u32, pages: &[Vec<u16>]) -> Vec<u8> {
    let mut cursor = Cursor::new(Vec::new());
    {
        let mut enc = tiff::encoder::TiffEncoder::new(&mut cursor).unwrap();
        for page in pages {
            enc.write_image::<tiff::encoder::colortype::Gray16>(width, height, page)
                .unwrap();
        }
    }
    cursor.into_inner()
}

#[test]
fn decodes_hand_built_gray8_png() {
    let img = decode(&gray8_png(2, 2, &[0, 1, 2, 3]), "a.png").unwrap();
    assert_eq!(
        (img.width(), img.height(), img.channels(), img.planes(), img.bit_depth()),
        (2, 2, 1, 1, 8)
    );
    assert_eq!(img.samples(), &[0, 1, 2, 3]);
}

#[test]
fn decodes_multipage_tiff_as_planes() {
    let pages: Vec<Vec<u16>> = (0..3u16)
        .map(|p| (0..12u16).map(|i| p * 1000 + i * 77).collect())
        .collect();
    let img = decode(&reference_tiff_gray16(4, 3, &pages), "stack.tif").unwrap();
    assert_eq!(img.planes(), 3);
    assert_eq!(img.bit_depth(), 16);
    assert_eq!(img.samples(), pages.concat().as_slice());
}

#[test]
fn decodes_rgb8_tiff_into_planar_channels() {
    let data: Vec<u8> = vec![1, 2, 3, 4, 5, 6];
    let mut cursor = Cursor::new(Vec::new());
    tiff::encoder::TiffEncoder::new(&mut cursor)
        .unwrap()
        .write_image::<tiff::encoder::colortype::RGB8>(2, 1, &data)
        .unwrap();
    let img = decode(&cursor.into_inner(), "rgb.tif").unwrap();
    assert_eq!(img.channels(), 3);
    assert_eq!(img.slice(0, 0), &[1, 4]);
    assert_eq!(img.slice(0, 1), &[2, 5]);
    assert_eq!(img.slice(0, 2), &[3, 6]);
}

#[test]
fn empty_and_unknown_bytes_are_unsupported() {
    assert!(matches!(decode(&[], "x"), Err(ImageError::UnsupportedFormat(_))));
    assert!(matches!(decode(b"GIF89a....", "x.gif"), Err(ImageError::UnsupportedFormat(_))));
}

#[test]
fn truncated_png_is_corrupt() {
    let png = gray8_png(8, 8, &[9; 64]);
    let err = decode(&png[..png.len() - 20], "cut.png").unwrap_err();
    assert!(matches!(err, ImageError::CorruptImage(_)), "{err:?}");
}

#[test]
fn zero_width_png_is_zero_pixel() {
    let mut bytes = PNG_SIGNATURE.to_vec();
    let mut ihdr = Vec::new();
    ihdr.extend_from_slice(&0u32.to_be_bytes());
    ihdr.extend_from_slice(&5u32.to_be_bytes());
    ihdr.extend_from_slice(&[8, 0, 0, 0, 0]);
    bytes.extend_from_slice(&(ihdr.len() as u32).to_be_bytes());
    bytes.extend_from_slice(b"IHDR");
    bytes.extend_from_slice(&ihdr);
    bytes.extend_from_slice(&[0, 0, 0, 0]);
    assert_eq!(decode(&bytes, "z.png"), Err(ImageError::ZeroPixel));
}

const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

#[test]
fn raw_image_invariants() {
    assert_eq!(RawImage::new(0, 1, 1, 1, 8, vec![]), Err(ImageError::ZeroPixel));
    assert!(RawImage::new(1, 1, 1, 1, 8, vec![256]).is_err());
    assert!(RawImage::new(1, 1, 1, 1, 12, vec![4096]).is_err());
    assert!(RawImage::new(1, 1, 1, 1, 12, vec![4095]).is_ok());
    assert!(RawImage::new(2, 1, 1, 1, 16, vec![1]).is_err());
    assert!(RawImage::new(1, 1, 1, 1, 10, vec![1]).is_err());
}

#[test]
fn scale_examples() {
    assert_eq!(scale_sample(255, 8, Scaling::RescaleToFull), 65535);
    assert_eq!(scale_sample(128, 8, Scaling::RescaleToFull), 32896);
    assert_eq!(128u32 * 257, 32896);
    assert_eq!(scale_sample(4095, 12, Scaling::Preserve), 4095);
    assert_eq!(scale_sample(0, 12, Scaling::RescaleToFull), 0);
    assert_eq!(scale_sample(4095, 12, Scaling::RescaleToFull), 65535);
    assert_eq!(scale_sample(40000, 16, Scaling::RescaleToFull), 40000);
}

#[test]
fn rescale_is_monotone() {
    for d in [8u8, 12] {
        let max = (1u16 << d) - 1;
        let mut prev = 0;
        for v in 0..=max {
            let s = scale_sample(v, d, Scaling::RescaleToFull);
            assert!(s >= prev);
            prev = s;
        }
    }
}

fn gradient(w: u32, h: u32, ch: u16, planes: u32, depth: u8) -> RawImage {
    let n = (w * h) as usize * ch as usize * planes as usize;
    let max = max_sample(depth) as usize;
    let samples = (0..n).map(|i| ((i * 37) % (max + 1)) as u16).collect();
    RawImage::new(w, h, ch, planes, depth, samples).unwrap()
}

#[test]
fn single_plane_single_channel_has_no_suffix() {
    let out = convert(&gradient(3, 2, 1, 1, 16), &ConversionPolicy::default(), "images/a", "a.tif").unwrap();
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].relative_path, "images/a.png");
    assert!(out[0].derived.is_empty());
}

#[test]
fn both_splits_enumerate_grid() {
    let policy = ConversionPolicy {
        channel_split: true,
        plane_split: true,
        ..Default::default()
    };
    let out = convert(&gradient(2, 2, 3, 2, 16), &policy, "x", "x.tif").unwrap();
    let mut expected = Vec::new();
    for p in 0..2 {
        for c in 0..3 {
            expected.push(format!("x_z{p}_c{c}.png"));
        }
    }
    let names: Vec<_> = out.iter().map(|o| o.relative_path.clone()).collect();
    assert_eq!(names, expected);
    assert_eq!(out[4].derived.get("z_plane").map(String::as_str), Some("1"));
    assert_eq!(out[4].derived.get("channel").map(String::as_str), Some("1"));
}

#[test]
fn png_policy_mismatches() {
    let policy = ConversionPolicy::default();
    let five = gradient(2, 2, 5, 1, 16);
    assert!(matches!(convert(&five, &policy, "x", "x"), Err(ImageError::PolicyMismatch(_))));
    let stack = gradient(2, 2, 1, 3, 16);
    let no_plane_split = ConversionPolicy {
        plane_split: false,
        ..Default::default()
    };
    assert!(matches!(
        convert(&stack, &no_plane_split, "x", "x"),
        Err(ImageError::PolicyMismatch(_))
    ));
}

#[test]
fn tiff_unsplit_keeps_stack_and_channels() {
    let policy = ConversionPolicy {
        target_format: ImageFormat::Tiff16,
        plane_split: false,
        channel_split: false,
        ..Default::default()
    };
    for ch in 1..=5u16 {
        let img = gradient(5, 4, ch, 3, 16);
        let out = convert(&img, &policy, "s", "s.tif").unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].relative_path, "s.tif");
        let back = decode(&out[0].bytes, "s.tif").unwrap();
        assert_eq!(back, img, "channels={ch}");
    }
}

#[test]
fn uncompressed_tiff_readable_by_reference_decoder() {
    let pages = vec![(0..6u16).collect::<Vec<_>>()];
    let bytes = encode_tiff16(3, 2, 1, &pages, TiffCompression::None).unwrap();
    let mut dec = tiff::decoder::Decoder::new(Cursor::new(&bytes)).unwrap();
    assert_eq!(dec.dimensions().unwrap(), (3, 2));
    let mut result = tiff::decoder::DecodingResult::U8(vec![]);
    dec.read_image_to_buffer(&mut result).unwrap();
    match result {
        tiff::decoder::DecodingResult::U16(v) => assert_eq!(v, pages[0]),
        _ => panic!("expected 16-bit samples"),
    }
    assert_eq!(&bytes[..4], b"II*\0");
}

#[test]
fn eight_bit_source_records_depth_and_rescales() {
    let img = RawImage::new(2, 1, 1, 1, 8, vec![0, 255]).unwrap();
    let policy = ConversionPolicy {
        scaling: Scaling::RescaleToFull,
        ..Default::default()
    };
    let out = convert(&img, &policy, "a", "a.png").unwrap();
    assert_eq!(out[0].derived.get("acquisition_bit_depth").map(String::as_str), Some("8"));
    let back = decode(&out[0].bytes, "a.png").unwrap();
    assert_eq!(back.bit_depth(), 16);
    assert_eq!(back.samples(), &[0, 65535]);
}

#[test]
fn rgb_png_roundtrip_unsplit() {
    let img = gradient(4, 3, 3, 1, 16);
    let out = convert(&img, &ConversionPolicy::default(), "rgb", "rgb.tif").unwrap();
    assert_eq!(decode(&out[0].bytes, "rgb.png").unwrap(), img);
}

#[test]
fn conversion_is_deterministic_across_workers() {
    use rayon::prelude::*;
    let imgs: Vec<RawImage> = (1..8).map(|i| gradient(i * 3, i * 2, 1, 2, 16)).collect();
    let policy = ConversionPolicy::default();
    let seq: Vec<_> = imgs
        .iter()
        .enumerate()
        .map(|(i, img)| convert(img, &policy, &format!("i{i}"), "s").unwrap())
        .collect();
    let par: Vec<_> = imgs
        .par_iter()
        .enumerate()
        .map(|(i, img)| convert(img, &policy, &format!("i{i}"), "s").unwrap())
        .collect();
    assert_eq!(seq, par);
    assert!(seq.iter().flatten().all(ConvertedImage::verify));
}

fn arb_image16() -> impl Strategy<Value = RawImage> {
    (1u32..=64, 1u32..=64, 1u16..=3, 1u32..=2).prop_flat_map(|(w, h, c, p)| {
        let n = (w * h) as usize * c as usize * p as usize;
        proptest::collection::vec(any::<u16>(), n)
            .prop_map(move |samples| RawImage::new(w, h, c, p, 16, samples).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn preserve_roundtrip_tiff(img in arb_image16()) {
        let policy = ConversionPolicy {
            target_format: ImageFormat::Tiff16,
            plane_split: false,
            ..Default::default()
        };
        let out = convert(&img, &policy, "r", "r").unwrap();
        prop_assert!(out[0].verify());
        prop_assert_eq!(decode(&out[0].bytes, "r.tif").unwrap(), img);
    }

    #[test]
    fn preserve_roundtrip_png_split(img in arb_image16()) {
        let policy = ConversionPolicy {
            channel_split: true,
            plane_split: true,
            ..Default::default()
        };
        let out = convert(&img, &policy, "r", "r").unwrap();
        prop_assert_eq!(out.len(), img.planes() as usize * img.channels() as usize);
        let mut k = 0;
        for p in 0..img.planes() {
            for c in 0..img.channels() {
                let back = decode(&out[k].bytes, "r.png").unwrap();
                prop_assert_eq!(back.samples(), img.slice(p, c));
                k += 1;
            }
        }
    }
}
