//! 16-bit PNG codecs for sparse flow and disparity maps.
//!
//! Flow maps are RGB: the red and green channels hold `value * 64 + 2^15`
//! and the blue channel flags validity, so only magnitudes below 512 are
//! representable and quantization error stays within 1/128. Disparity maps
//! are grayscale `value * 256` with zero meaning no label, covering
//! (0, 256) at 1/512 accuracy.

use std::io::Cursor;

use image::{DynamicImage, ImageBuffer, ImageOutputFormat, Luma, Rgb};

use crate::error::{DwarfError, Result};

/// Decoded flow map, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowMap {
    pub width: usize,
    pub height: usize,
    pub u: Vec<f32>,
    pub v: Vec<f32>,
    pub valid: Vec<bool>,
}

const FLOW_OFFSET: f64 = 32768.0;
const FLOW_SCALE: f64 = 64.0;
const DISP_SCALE: f64 = 256.0;

fn check_lengths(op: &'static str, lens: &[usize], width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 || lens.iter().any(|&l| l != width * height) {
        return Err(DwarfError::shape(
            op,
            format!("{lens:?} values for {width}x{height}"),
        ));
    }
    Ok(())
}

// Quantize in f64 so the multiply cannot push a value across a rounding
// boundary and past the format's accuracy guarantee.
fn quantize(value: f32, scale: f64, offset: f64) -> Option<u16> {
    if !value.is_finite() {
        return None;
    }
    let stored = (value as f64 * scale + offset).round();
    if (0.0..=u16::MAX as f64).contains(&stored) {
        Some(stored as u16)
    } else {
        None
    }
}

fn range_error(kind: &str, limit: &str, bad: &[(usize, usize, f32)], total: usize) -> DwarfError {
    let listed: Vec<String> = bad
        .iter()
        .map(|(x, y, v)| format!("({x}, {y})={v}"))
        .collect();
    DwarfError::Encode(format!(
        "{kind}: {total} labelled pixels fall outside {limit}: {}{}",
        listed.join(", "),
        if total > bad.len() { ", ..." } else { "" }
    ))
}

/// Whether one flow component survives the quantizer. Useful for masking
/// predictions before encoding; ground truth should already be in range.
pub fn flow_value_encodable(c: f32) -> bool {
    c.abs() < 512.0 && quantize(c, FLOW_SCALE, FLOW_OFFSET).is_some()
}

/// Whether a disparity lands on a labelled code, i.e. lies in (0, 256).
pub fn disp_value_encodable(d: f32) -> bool {
    d > 0.0 && d < 256.0 && quantize(d, DISP_SCALE, 0.0).is_some()
}

/// Encode a flow field. Labelled pixels with |u| or |v| at or beyond 512
/// are rejected, naming the first offenders.
pub fn encode_flow_png(
    u: &[f32],
    v: &[f32],
    valid: &[bool],
    width: usize,
    height: usize,
) -> Result<Vec<u8>> {
    check_lengths("encode_flow_png", &[u.len(), v.len(), valid.len()], width, height)?;
    let mut buf = ImageBuffer::<Rgb<u16>, Vec<u16>>::new(width as u32, height as u32);
    let mut bad = Vec::new();
    let mut total = 0usize;
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            if !valid[i] {
                buf.put_pixel(x as u32, y as u32, Rgb([0, 0, 0]));
                continue;
            }
            let encodable = |c: f32| {
                if c.abs() < 512.0 {
                    quantize(c, FLOW_SCALE, FLOW_OFFSET)
                } else {
                    None
                }
            };
            match (encodable(u[i]), encodable(v[i])) {
                (Some(r), Some(g)) => buf.put_pixel(x as u32, y as u32, Rgb([r, g, 1])),
                (eu, _) => {
                    total += 1;
                    if bad.len() < 8 {
                        bad.push((x, y, if eu.is_none() { u[i] } else { v[i] }));
                    }
                }
            }
        }
    }
    if total > 0 {
        return Err(range_error("flow png", "|value| < 512", &bad, total));
    }
    let mut out = Cursor::new(Vec::new());
    DynamicImage::ImageRgb16(buf).write_to(&mut out, ImageOutputFormat::Png)?;
    Ok(out.into_inner())
}

pub fn decode_flow_png(bytes: &[u8]) -> Result<FlowMap> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?;
    let buf = match img {
        DynamicImage::ImageRgb16(buf) => buf,
        other => {
            return Err(DwarfError::invalid(format!(
                "flow png: expected 16-bit rgb, got {:?}",
                other.color()
            )))
        }
    };
    let (width, height) = (buf.width() as usize, buf.height() as usize);
    let mut map = FlowMap {
        width,
        height,
        u: vec![0.0; width * height],
        v: vec![0.0; width * height],
        valid: vec![false; width * height],
    };
    for (x, y, px) in buf.enumerate_pixels() {
        let i = y as usize * width + x as usize;
        if px[2] != 0 {
            map.u[i] = ((px[0] as f64 - FLOW_OFFSET) / FLOW_SCALE) as f32;
            map.v[i] = ((px[1] as f64 - FLOW_OFFSET) / FLOW_SCALE) as f32;
            map.valid[i] = true;
        }
    }
    Ok(map)
}

/// Encode a disparity field; zero pixels mean unlabelled. Labelled pixels
/// must lie in (0, 256). Values that would quantize to the unlabelled code
/// are bumped to the smallest labelled level.
pub fn encode_disp_png(d: &[f32], valid: &[bool], width: usize, height: usize) -> Result<Vec<u8>> {
    check_lengths("encode_disp_png", &[d.len(), valid.len()], width, height)?;
    let mut buf = ImageBuffer::<Luma<u16>, Vec<u16>>::new(width as u32, height as u32);
    let mut bad = Vec::new();
    let mut total = 0usize;
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            if !valid[i] {
                buf.put_pixel(x as u32, y as u32, Luma([0]));
                continue;
            }
            let ok = d[i] > 0.0 && d[i] < 256.0;
            match ok.then(|| quantize(d[i], DISP_SCALE, 0.0)).flatten() {
                Some(stored) => buf.put_pixel(x as u32, y as u32, Luma([stored.max(1)])),
                None => {
                    total += 1;
                    if bad.len() < 8 {
                        bad.push((x, y, d[i]));
                    }
                }
            }
        }
    }
    if total > 0 {
        return Err(range_error("disparity png", "(0, 256)", &bad, total));
    }
    let mut out = Cursor::new(Vec::new());
    DynamicImage::ImageLuma16(buf).write_to(&mut out, ImageOutputFormat::Png)?;
    Ok(out.into_inner())
}

/// Decode a disparity map; returns (width, height, values, valid).
pub fn decode_disp_png(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>, Vec<bool>)> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?;
    let buf = match img {
        DynamicImage::ImageLuma16(buf) => buf,
        other => {
            return Err(DwarfError::invalid(format!(
                "disparity png: expected 16-bit grayscale, got {:?}",
                other.color()
            )))
        }
    };
    let (width, height) = (buf.width() as usize, buf.height() as usize);
    let mut d = vec![0.0f32; width * height];
    let mut valid = vec![false; width * height];
    for (x, y, px) in buf.enumerate_pixels() {
        let i = y as usize * width + x as usize;
        if px[0] != 0 {
            d[i] = (px[0] as f64 / DISP_SCALE) as f32;
            valid[i] = true;
        }
    }
    Ok((width, height, d, valid))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_flow(w: usize, h: usize) -> (Vec<f32>, Vec<f32>, Vec<bool>) {
        let n = w * h;
        let u: Vec<f32> = (0..n).map(|i| (i as f32 * 0.37).sin() * 90.0).collect();
        let v: Vec<f32> = (0..n).map(|i| (i as f32 * 0.11).cos() * 40.0 - 3.0).collect();
        let valid: Vec<bool> = (0..n).map(|i| i % 7 != 3).collect();
        (u, v, valid)
    }

    #[test]
    fn flow_round_trip_stays_within_quantization() {
        let (u, v, valid) = sample_flow(21, 13);
        let bytes = encode_flow_png(&u, &v, &valid, 21, 13).unwrap();
        let map = decode_flow_png(&bytes).unwrap();
        assert_eq!((map.width, map.height), (21, 13));
        assert_eq!(map.valid, valid);
        for i in 0..u.len() {
            if valid[i] {
                assert!((map.u[i] - u[i]).abs() <= 0.5 / 64.0, "u[{i}]");
                assert!((map.v[i] - v[i]).abs() <= 0.5 / 64.0, "v[{i}]");
            } else {
                assert_eq!((map.u[i], map.v[i]), (0.0, 0.0));
            }
        }
    }

    #[test]
    fn flow_encoding_is_deterministic() {
        let (u, v, valid) = sample_flow(9, 9);
        let a = encode_flow_png(&u, &v, &valid, 9, 9).unwrap();
        let b = encode_flow_png(&u, &v, &valid, 9, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn oversized_flow_is_rejected_with_locations() {
        let mut u = vec![0.0f32; 16];
        let v = vec![0.0f32; 16];
        let valid = vec![true; 16];
        u[5] = 512.0;
        u[9] = -700.0;
        let err = encode_flow_png(&u, &v, &valid, 4, 4).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2 labelled pixels"), "{msg}");
        assert!(msg.contains("(1, 1)=512"), "{msg}");
        assert!(msg.contains("(1, 2)=-700"), "{msg}");

        // The same magnitude on an unlabelled pixel is fine.
        let mut valid_hole = valid.clone();
        valid_hole[5] = false;
        valid_hole[9] = false;
        encode_flow_png(&u, &v, &valid_hole, 4, 4).unwrap();
    }

    #[test]
    fn flow_values_at_the_edge_of_range_survive() {
        let u = vec![511.984375, -511.984375]; // extreme multiples of 1/64
        let v = vec![0.015625, -0.015625];
        let bytes = encode_flow_png(&u, &v, &[true, true], 2, 1).unwrap();
        let map = decode_flow_png(&bytes).unwrap();
        assert_eq!(map.u, u);
        assert_eq!(map.v, v);
    }

    #[test]
    fn disp_round_trip_stays_within_quantization() {
        let n = 15 * 11;
        let d: Vec<f32> = (0..n).map(|i| 0.4 + (i % 97) as f32 * 2.63).collect();
        let valid: Vec<bool> = (0..n).map(|i| i % 5 != 0).collect();
        let bytes = encode_disp_png(&d, &valid, 15, 11).unwrap();
        let (w, h, back, back_valid) = decode_disp_png(&bytes).unwrap();
        assert_eq!((w, h), (15, 11));
        assert_eq!(back_valid, valid);
        for i in 0..n {
            if valid[i] {
                assert!((back[i] - d[i]).abs() <= 0.5 / 256.0, "d[{i}]");
            } else {
                assert_eq!(back[i], 0.0);
            }
        }
    }

    #[test]
    fn disparity_out_of_range_is_rejected() {
        for bad in [0.0f32, -1.0, 256.0, 400.0, f32::NAN] {
            let err = encode_disp_png(&[1.0, bad], &[true, true], 2, 1).unwrap_err();
            assert!(err.to_string().contains("(0, 256)"), "{bad}: {err}");
        }
        // Unlabelled pixels may hold anything.
        encode_disp_png(&[1.0, 400.0], &[true, false], 2, 1).unwrap();
    }

    #[test]
    fn tiny_disparity_stays_labelled() {
        let bytes = encode_disp_png(&[0.0001], &[true], 1, 1).unwrap();
        let (_, _, d, valid) = decode_disp_png(&bytes).unwrap();
        assert!(valid[0], "quantizing must not silently unlabel a pixel");
        assert!(d[0] > 0.0 && d[0] <= 1.0 / 256.0);
    }

    #[test]
    fn eight_bit_files_are_rejected() {
        let mut out = Cursor::new(Vec::new());
        DynamicImage::ImageRgb8(ImageBuffer::new(2, 2))
            .write_to(&mut out, ImageOutputFormat::Png)
            .unwrap();
        let bytes = out.into_inner();
        assert!(decode_flow_png(&bytes).is_err());
        assert!(decode_disp_png(&bytes).is_err());
    }

    #[test]
    fn length_mismatch_is_rejected() {
        assert!(encode_flow_png(&[0.0; 3], &[0.0; 4], &[true; 4], 2, 2).is_err());
        assert!(encode_disp_png(&[1.0; 4], &[true; 4], 0, 4).is_err());
    }
}
