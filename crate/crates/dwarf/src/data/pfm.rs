//! Portable float map codec for single-channel fields. The header is three
//! whitespace-separated records (magic, dimensions, scale); a negative scale
//! marks little-endian payloads. Rows are stored bottom-to-top, so the last
//! row of the file is the top image row. Values round-trip bit for bit.

use crate::error::{DwarfError, Result};

/// Serialize a row-major (top-to-bottom) field.
pub fn encode_pfm(values: &[f32], width: usize, height: usize) -> Result<Vec<u8>> {
    if width == 0 || height == 0 || values.len() != width * height {
        return Err(DwarfError::invalid(format!(
            "pfm encode: {} values for {}x{}",
            values.len(),
            width,
            height
        )));
    }
    let mut out = Vec::with_capacity(32 + values.len() * 4);
    out.extend_from_slice(format!("Pf\n{width} {height}\n-1.0\n").as_bytes());
    for row in (0..height).rev() {
        for v in &values[row * width..(row + 1) * width] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn fail<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(DwarfError::Codec {
            offset: self.pos,
            message: message.into(),
        })
    }

    fn token(&mut self) -> Result<&'a str> {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return self.fail("unexpected end of header");
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| DwarfError::Codec {
                offset: start,
                message: "header is not ascii".into(),
            })
    }
}

struct Header {
    width: usize,
    height: usize,
    channels: usize,
    little: bool,
    payload: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut r = Reader { bytes, pos: 0 };
    let channels = match r.token()? {
        "Pf" => 1,
        "PF" => 3,
        other => return r.fail(format!("bad magic {other:?}, expected Pf or PF")),
    };
    let width: usize = r
        .token()?
        .parse()
        .ok()
        .filter(|&w| w > 0)
        .map_or_else(|| r.fail("bad width"), Ok)?;
    let height: usize = r
        .token()?
        .parse()
        .ok()
        .filter(|&h| h > 0)
        .map_or_else(|| r.fail("bad height"), Ok)?;
    let scale: f32 = r
        .token()?
        .parse()
        .map_err(|_| DwarfError::Codec {
            offset: r.pos,
            message: "bad scale".into(),
        })?;
    if scale == 0.0 || !scale.is_finite() {
        return r.fail("scale must be finite and nonzero");
    }
    // Exactly one whitespace byte separates the header from the payload.
    if r.pos >= bytes.len() || !bytes[r.pos].is_ascii_whitespace() {
        return r.fail("missing separator after scale");
    }
    r.pos += 1;

    let expected = width * height * channels * 4;
    if bytes.len() - r.pos != expected {
        return r.fail(format!(
            "payload holds {} bytes, expected {expected} for {width}x{height}x{channels}",
            bytes.len() - r.pos
        ));
    }
    Ok(Header {
        width,
        height,
        channels,
        little: scale < 0.0,
        payload: r.pos,
    })
}

// Payload values are interleaved by channel within a row, rows bottom-up.
fn read_values(bytes: &[u8], h: &Header) -> Vec<f32> {
    let row_len = h.width * h.channels * 4;
    let mut values = vec![0.0f32; h.width * h.height * h.channels];
    for row in 0..h.height {
        let src = &bytes[h.payload + (h.height - 1 - row) * row_len..];
        for i in 0..h.width * h.channels {
            let b: [u8; 4] = src[i * 4..i * 4 + 4].try_into().expect("length checked");
            values[row * h.width * h.channels + i] = if h.little {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            };
        }
    }
    values
}

/// Decode a grayscale map to a row-major (top-to-bottom) field.
pub fn decode_pfm(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    let h = parse_header(bytes)?;
    if h.channels != 1 {
        return Err(DwarfError::Codec {
            offset: 0,
            message: "expected a grayscale map, found the color variant".into(),
        });
    }
    let values = read_values(bytes, &h);
    Ok((h.width, h.height, values))
}

/// Serialize a two-component field as a color map with a zero third channel.
pub fn encode_pfm_flow(u: &[f32], v: &[f32], width: usize, height: usize) -> Result<Vec<u8>> {
    if width == 0 || height == 0 || u.len() != width * height || v.len() != u.len() {
        return Err(DwarfError::invalid(format!(
            "pfm flow encode: {}+{} values for {width}x{height}",
            u.len(),
            v.len()
        )));
    }
    let mut out = Vec::with_capacity(32 + u.len() * 12);
    out.extend_from_slice(format!("PF\n{width} {height}\n-1.0\n").as_bytes());
    for row in (0..height).rev() {
        for x in 0..width {
            out.extend_from_slice(&u[row * width + x].to_le_bytes());
            out.extend_from_slice(&v[row * width + x].to_le_bytes());
            out.extend_from_slice(&0.0f32.to_le_bytes());
        }
    }
    Ok(out)
}

/// Decode a color map's first two channels as a flow field.
pub fn decode_pfm_flow(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>, Vec<f32>)> {
    let h = parse_header(bytes)?;
    if h.channels != 3 {
        return Err(DwarfError::Codec {
            offset: 0,
            message: "expected the color variant for flow, found grayscale".into(),
        });
    }
    let values = read_values(bytes, &h);
    let n = h.width * h.height;
    let mut u = vec![0.0f32; n];
    let mut v = vec![0.0f32; n];
    for i in 0..n {
        u[i] = values[i * 3];
        v[i] = values[i * 3 + 1];
    }
    Ok((h.width, h.height, u, v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_value_file_has_fixed_bytes() {
        let bytes = encode_pfm(&[3.5], 1, 1).unwrap();
        assert_eq!(bytes, b"Pf\n1 1\n-1.0\n\x00\x00\x60\x40");
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let values: Vec<f32> = (0..12)
            .map(|i| (i as f32 - 5.5) * 1.7e-3 + (i as f32).sin())
            .chain([f32::INFINITY, -0.0, f32::MIN_POSITIVE, 1e30])
            .collect();
        let bytes = encode_pfm(&values, 4, 4).unwrap();
        let (w, h, back) = decode_pfm(&bytes).unwrap();
        assert_eq!((w, h), (4, 4));
        for (a, b) in values.iter().zip(&back) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(encode_pfm(&back, w, h).unwrap(), bytes);
    }

    #[test]
    fn rows_are_stored_bottom_up() {
        // 2x2 field: top row [1, 2], bottom row [3, 4].
        let bytes = encode_pfm(&[1.0, 2.0, 3.0, 4.0], 2, 2).unwrap();
        let payload = &bytes[bytes.len() - 16..];
        let first = f32::from_le_bytes(payload[0..4].try_into().unwrap());
        assert_eq!(first, 3.0, "file starts with the bottom row");
        let (_, _, back) = decode_pfm(&bytes).unwrap();
        assert_eq!(back, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn big_endian_payloads_decode() {
        let mut bytes = b"Pf\n2 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&2.25f32.to_be_bytes());
        bytes.extend_from_slice(&(-8.0f32).to_be_bytes());
        let (_, _, values) = decode_pfm(&bytes).unwrap();
        assert_eq!(values, vec![2.25, -8.0]);
    }

    #[test]
    fn flow_variant_round_trips_and_is_channel_checked() {
        let u: Vec<f32> = (0..6).map(|i| i as f32 * 1.25 - 3.0).collect();
        let v: Vec<f32> = (0..6).map(|i| (i as f32).cos()).collect();
        let bytes = encode_pfm_flow(&u, &v, 3, 2).unwrap();
        assert!(bytes.starts_with(b"PF\n3 2\n-1.0\n"));
        let (w, h, bu, bv) = decode_pfm_flow(&bytes).unwrap();
        assert_eq!((w, h), (3, 2));
        assert_eq!(bu, u);
        assert_eq!(bv, v);

        let gray = encode_pfm(&u, 3, 2).unwrap();
        assert!(decode_pfm_flow(&gray).unwrap_err().to_string().contains("grayscale"));
        assert!(decode_pfm(&bytes).unwrap_err().to_string().contains("color"));
    }

    #[test]
    fn malformed_inputs_report_the_offset() {
        let good = encode_pfm(&[1.0, 2.0], 2, 1).unwrap();

        let err = decode_pfm(&good[..good.len() - 2]).unwrap_err();
        match err {
            // Header is "Pf\n2 1\n-1.0\n", so the payload starts at byte 12.
            DwarfError::Codec { offset, .. } => assert_eq!(offset, 12),
            other => panic!("unexpected error {other}"),
        }

        assert!(decode_pfm(b"Pf\n0 2\n-1.0\n").is_err());
        assert!(decode_pfm(b"Pf\n2 1\n0.0\nxxxxxxxx").is_err());
        assert!(decode_pfm(b"Qq\n2 1\n-1.0\nxxxxxxxx").is_err());

        let mut trailing = good.clone();
        trailing.push(0);
        assert!(decode_pfm(&trailing).is_err());
    }

    #[test]
    fn size_mismatch_is_rejected_on_encode() {
        assert!(encode_pfm(&[1.0; 5], 2, 2).is_err());
        assert!(encode_pfm(&[], 0, 0).is_err());
    }
}
