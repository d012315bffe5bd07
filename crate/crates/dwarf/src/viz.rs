//! Field rendering: the standard flow color wheel (hue encodes direction,
//! saturation encodes magnitude) and a five-stop perceptual colormap for
//! scalar maps. Both produce [`Image`]s with values in [0, 1]; pixels that
//! carry no information render black.

use crate::data::Image;
use crate::error::{DwarfError, Result};

/// Colormap anchors at t = 0, 0.25, 0.5, 0.75, 1 (dark violet to yellow),
/// linearly interpolated between neighbors.
const SCALAR_STOPS: [[f32; 3]; 5] = [
    [0.267, 0.005, 0.329],
    [0.229, 0.322, 0.546],
    [0.128, 0.567, 0.551],
    [0.369, 0.789, 0.383],
    [0.993, 0.906, 0.144],
];

fn hsv_to_rgb(hue_deg: f32, saturation: f32, value: f32) -> [f32; 3] {
    let h = (hue_deg.rem_euclid(360.0)) / 60.0;
    let c = value * saturation;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = value - c;
    [r + m, g + m, b + m]
}

/// Color of a single displacement under the wheel, with saturation scaled
/// by `max`; non-finite components give black.
pub fn flow_color(u: f32, v: f32, max: f32) -> [f32; 3] {
    if !u.is_finite() || !v.is_finite() {
        return [0.0; 3];
    }
    let magnitude = u.hypot(v);
    let hue = v.atan2(u).to_degrees();
    let saturation = (magnitude / max).clamp(0.0, 1.0);
    hsv_to_rgb(hue, saturation, 1.0)
}

/// Largest finite displacement magnitude, or 1 if there is none; a handy
/// default for `colorize_flow`.
pub fn max_flow_magnitude(u: &[f32], v: &[f32]) -> f32 {
    let mut max = 0.0f32;
    for (&u, &v) in u.iter().zip(v) {
        let m = u.hypot(v);
        if m.is_finite() {
            max = max.max(m);
        }
    }
    if max > 0.0 { max } else { 1.0 }
}

/// Render a flow field: zero flow is white, direction selects the hue and
/// magnitude the saturation, fully saturated at `max` and beyond.
pub fn colorize_flow(u: &[f32], v: &[f32], width: usize, height: usize, max: f32) -> Result<Image> {
    if u.len() != width * height || v.len() != u.len() {
        return Err(DwarfError::shape(
            "colorize_flow",
            format!("{}x{} field with {}/{} components", width, height, u.len(), v.len()),
        ));
    }
    if !(max > 0.0) {
        return Err(DwarfError::invalid(format!("flow color max {max} must be positive")));
    }
    let mut img = Image::zeros(width, height, 3);
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            let rgb = flow_color(u[i], v[i], max);
            for c in 0..3 {
                img.set(c, y, x, rgb[c]);
            }
        }
    }
    Ok(img)
}

/// Colormap lookup for t in [0, 1] (clamped); anchors are hit exactly.
pub fn scalar_color(t: f32) -> [f32; 3] {
    let t = t.clamp(0.0, 1.0);
    let scaled = t * (SCALAR_STOPS.len() - 1) as f32;
    let lo = (scaled.floor() as usize).min(SCALAR_STOPS.len() - 2);
    let frac = scaled - lo as f32;
    if frac <= 0.0 {
        return SCALAR_STOPS[lo];
    }
    if frac >= 1.0 {
        return SCALAR_STOPS[lo + 1];
    }
    let (a, b) = (SCALAR_STOPS[lo], SCALAR_STOPS[lo + 1]);
    [
        a[0] + (b[0] - a[0]) * frac,
        a[1] + (b[1] - a[1]) * frac,
        a[2] + (b[2] - a[2]) * frac,
    ]
}

/// Render a scalar map over the given value range. Pixels outside the
/// optional validity mask, and non-finite values, come out black.
pub fn colorize_scalar(
    map: &[f32],
    valid: Option<&[bool]>,
    width: usize,
    height: usize,
    range: (f32, f32),
) -> Result<Image> {
    if map.len() != width * height {
        return Err(DwarfError::shape(
            "colorize_scalar",
            format!("{}x{} map with {} values", width, height, map.len()),
        ));
    }
    if let Some(mask) = valid {
        if mask.len() != map.len() {
            return Err(DwarfError::shape(
                "colorize_scalar",
                format!("mask length {} vs map {}", mask.len(), map.len()),
            ));
        }
    }
    let (lo, hi) = range;
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(DwarfError::invalid(format!("bad color range [{lo}, {hi}]")));
    }
    let mut img = Image::zeros(width, height, 3);
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            let masked_out = valid.is_some_and(|m| !m[i]);
            if masked_out || !map[i].is_finite() {
                continue;
            }
            let rgb = scalar_color((map[i] - lo) / (hi - lo));
            for c in 0..3 {
                img.set(c, y, x, rgb[c]);
            }
        }
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn zero_flow_renders_white() {
        let img = colorize_flow(&[0.0], &[0.0], 1, 1, 10.0).unwrap();
        for c in 0..3 {
            assert_eq!(img.at(c, 0, 0), 1.0);
        }
    }

    #[test]
    fn max_rightward_flow_is_fully_saturated_red() {
        let img = colorize_flow(&[10.0], &[0.0], 1, 1, 10.0).unwrap();
        assert_eq!(img.at(0, 0, 0), 1.0);
        assert_eq!(img.at(1, 0, 0), 0.0);
        assert_eq!(img.at(2, 0, 0), 0.0);
        // Saturation clamps past max.
        let img = colorize_flow(&[99.0], &[0.0], 1, 1, 10.0).unwrap();
        assert_eq!(img.at(0, 0, 0), 1.0);
        assert_eq!(img.at(1, 0, 0), 0.0);
    }

    #[test]
    fn opposite_vectors_get_complementary_hues() {
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..50 {
            let u = rng.gen_range(-8.0..8.0f32);
            let v = rng.gen_range(-8.0..8.0f32);
            let a = flow_color(u, v, 10.0);
            let b = flow_color(-u, -v, 10.0);
            // At equal saturation, hues 180 degrees apart sum to white.
            for c in 0..3 {
                assert!((a[c] + b[c] - (a[0] + b[0])).abs() < 1e-5);
                assert!(a[c] + b[c] <= 2.0);
            }
            let sum = a[0] + b[0];
            assert!((1.0..=2.0).contains(&sum));
        }
    }

    #[test]
    fn magnitude_controls_saturation_monotonically() {
        let weak = flow_color(1.0, 0.0, 10.0);
        let strong = flow_color(9.0, 0.0, 10.0);
        // Red channel stays 1; green/blue fall as saturation rises.
        assert!(weak[1] > strong[1]);
        assert_eq!(weak[0], 1.0);
        assert_eq!(strong[0], 1.0);
    }

    #[test]
    fn scalar_endpoints_hit_the_colormap_stops() {
        let img = colorize_scalar(&[2.0, 6.0], None, 2, 1, (2.0, 6.0)).unwrap();
        for c in 0..3 {
            assert_eq!(img.at(c, 0, 0), SCALAR_STOPS[0][c]);
            assert_eq!(img.at(c, 0, 1), SCALAR_STOPS[4][c]);
        }
        // Constant map, constant color.
        let img = colorize_scalar(&[3.0; 6], None, 3, 2, (0.0, 10.0)).unwrap();
        let first: Vec<f32> = (0..3).map(|c| img.at(c, 0, 0)).collect();
        for y in 0..2 {
            for x in 0..3 {
                for c in 0..3 {
                    assert_eq!(img.at(c, y, x), first[c]);
                }
            }
        }
    }

    #[test]
    fn invalid_and_nan_pixels_render_black() {
        let map = [1.0, f32::NAN, 5.0, f32::INFINITY];
        let valid = [true, true, false, true];
        let img = colorize_scalar(&map, Some(&valid), 4, 1, (0.0, 10.0)).unwrap();
        for x in 1..4 {
            for c in 0..3 {
                assert_eq!(img.at(c, 0, x), 0.0, "pixel {x} should be black");
            }
        }
        assert!(img.at(0, 0, 0) > 0.0 || img.at(1, 0, 0) > 0.0 || img.at(2, 0, 0) > 0.0);
        let img = colorize_flow(&[f32::NAN], &[0.0], 1, 1, 1.0).unwrap();
        for c in 0..3 {
            assert_eq!(img.at(c, 0, 0), 0.0);
        }
    }

    #[test]
    fn random_garbage_never_produces_non_finite_output() {
        let mut rng = StdRng::seed_from_u64(33);
        let specials = [f32::NAN, f32::INFINITY, f32::NEG_INFINITY, 0.0, -0.0];
        for _ in 0..20 {
            let n = 64;
            let draw = |rng: &mut StdRng| {
                (0..n)
                    .map(|_| {
                        if rng.gen_bool(0.2) {
                            specials[rng.gen_range(0..specials.len())]
                        } else {
                            rng.gen_range(-1e6..1e6)
                        }
                    })
                    .collect::<Vec<f32>>()
            };
            let (u, v, m) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
            let flow = colorize_flow(&u, &v, 8, 8, 5.0).unwrap();
            let scalar = colorize_scalar(&m, None, 8, 8, (-100.0, 100.0)).unwrap();
            assert!(flow.data.iter().all(|p| p.is_finite() && (0.0..=1.0).contains(p)));
            assert!(scalar.data.iter().all(|p| p.is_finite() && (0.0..=1.0).contains(p)));
        }
    }

    #[test]
    fn degenerate_arguments_are_rejected() {
        assert!(colorize_flow(&[0.0], &[0.0], 1, 1, 0.0).is_err());
        assert!(colorize_flow(&[0.0; 2], &[0.0], 2, 1, 1.0).is_err());
        assert!(colorize_scalar(&[0.0], None, 1, 1, (3.0, 3.0)).is_err());
        assert!(colorize_scalar(&[0.0], Some(&[true, false]), 1, 1, (0.0, 1.0)).is_err());
        assert!(colorize_scalar(&[0.0; 3], None, 2, 1, (0.0, 1.0)).is_err());
    }

    #[test]
    fn auto_max_tracks_the_largest_finite_magnitude() {
        assert_eq!(max_flow_magnitude(&[3.0, 0.0], &[4.0, 0.0]), 5.0);
        assert_eq!(max_flow_magnitude(&[0.0], &[0.0]), 1.0);
        assert_eq!(max_flow_magnitude(&[f32::INFINITY, 1.0], &[0.0, 0.0]), 1.0);
    }
}
