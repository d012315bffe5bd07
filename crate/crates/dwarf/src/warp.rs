//! Backward warping: pull source images toward a reference frame along a
//! flow field, a horizontal disparity, or a flow combined with a disparity
//! change.
//!
//! All warps resolve to one bilinear gather at computed coordinates, so a
//! combined warp is bit-identical to warping by the equivalent pre-summed
//! flow. Disparity displaces to the left: a pixel at x in the reference
//! reads the other view at x - d, matching a left-camera reference with
//! non-negative disparities. Samples falling outside the source read zero.

use crate::error::{DwarfError, Result};
use crate::tensor::{Scalar, Shape, Tensor};

/// Constant grid of pixel coordinates: channel 0 is x, channel 1 is y.
pub fn identity_grid<T: Scalar>(n: usize, h: usize, w: usize) -> Tensor<T> {
    let shape = Shape::new(n, 2, h, w);
    let mut data = vec![T::ZERO; shape.numel()];
    for ni in 0..n {
        for y in 0..h {
            for x in 0..w {
                data[shape.idx(ni, 0, y, x)] = T::from_f64(x as f64);
                data[shape.idx(ni, 1, y, x)] = T::from_f64(y as f64);
            }
        }
    }
    Tensor::from_vec(data, shape).expect("sized to shape")
}

/// Gather `src` at explicit per-pixel coordinates (x in channel 0, y in
/// channel 1), differentiable in both source and coordinates.
pub fn bilinear_sample<T: Scalar>(src: &Tensor<T>, coords: &Tensor<T>) -> Result<Tensor<T>> {
    src.bilinear_sample(coords)
}

fn check_field<T: Scalar>(
    op: &'static str,
    src: &Tensor<T>,
    field: &Tensor<T>,
    channels: usize,
) -> Result<()> {
    let (ss, fs) = (src.shape(), field.shape());
    if fs.n != ss.n || fs.c != channels || fs.h != ss.h || fs.w != ss.w {
        return Err(DwarfError::shape(
            op,
            format!("field {} for source {} (want {} channels)", fs, ss, channels),
        ));
    }
    Ok(())
}

/// src sampled at p + flow. Flow has 2 channels (horizontal u, vertical v).
pub fn warp_by_flow<T: Scalar>(src: &Tensor<T>, flow: &Tensor<T>) -> Result<Tensor<T>> {
    check_field("warp_by_flow", src, flow, 2)?;
    let s = src.shape();
    let grid = identity_grid::<T>(s.n, s.h, s.w);
    let coords = grid.add(flow)?;
    src.bilinear_sample(&coords)
}

/// src sampled at (x - d, y) for a 1-channel disparity d.
pub fn warp_by_disparity<T: Scalar>(src: &Tensor<T>, disparity: &Tensor<T>) -> Result<Tensor<T>> {
    check_field("warp_by_disparity", src, disparity, 1)?;
    let s = src.shape();
    let grid = identity_grid::<T>(s.n, s.h, s.w);
    let gx = grid.slice_channels(0, 1)?;
    let gy = grid.slice_channels(1, 2)?;
    let coords = Tensor::concat_channels(&[gx.sub(disparity)?, gy])?;
    src.bilinear_sample(&coords)
}

/// src sampled at (x + u - change, y + v): optical flow with the horizontal
/// component pulled back by a 1-channel disparity-style change field.
pub fn warp_by_flow_and_change<T: Scalar>(
    src: &Tensor<T>,
    flow: &Tensor<T>,
    change: &Tensor<T>,
) -> Result<Tensor<T>> {
    check_field("warp_by_flow_and_change", src, flow, 2)?;
    check_field("warp_by_flow_and_change", src, change, 1)?;
    let u = flow.slice_channels(0, 1)?;
    let v = flow.slice_channels(1, 2)?;
    let combined = Tensor::concat_channels(&[u.sub(change)?, v])?;
    warp_by_flow(src, &combined)
}

/// Convert a level-k prediction into pixel units at the next finer level:
/// upsample 2x and multiply by 20 / 2^k.
pub fn scale_prior<T: Scalar>(estimate: &Tensor<T>, level: u32) -> Result<Tensor<T>> {
    let up = estimate.bilinear_upsample(2)?;
    Ok(up.scale(T::from_f64(20.0 / f64::powi(2.0, level as i32))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::probe_data;

    fn image(shape: Shape, salt: u64) -> Tensor<f64> {
        Tensor::from_vec(probe_data(shape, salt), shape).unwrap()
    }

    #[test]
    fn zero_flow_is_identity() {
        let s = Shape::new(2, 3, 4, 5);
        let src = image(s, 1);
        let flow = Tensor::<f64>::zeros(Shape::new(2, 2, 4, 5));
        let out = warp_by_flow(&src, &flow).unwrap();
        for (a, b) in out.data().iter().zip(src.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn integer_flow_shifts_content() {
        let s = Shape::new(1, 1, 3, 5);
        let vals: Vec<f64> = (0..15).map(|i| i as f64).collect();
        let src = Tensor::from_vec(vals, s).unwrap();
        // flow (u, v) = (2, 1): output(y, x) = src(y + 1, x + 2), zero when outside.
        let mut f = vec![0.0; 2 * 15];
        f[..15].fill(2.0);
        f[15..].fill(1.0);
        let flow = Tensor::from_vec(f, Shape::new(1, 2, 3, 5)).unwrap();
        let out = warp_by_flow(&src, &flow).unwrap();
        for y in 0..3usize {
            for x in 0..5usize {
                let want = if y + 1 < 3 && x + 2 < 5 {
                    ((y + 1) * 5 + x + 2) as f64
                } else {
                    0.0
                };
                assert_eq!(out.data()[y * 5 + x], want, "({y},{x})");
            }
        }
    }

    #[test]
    fn disparity_displaces_left() {
        let s = Shape::new(1, 1, 1, 5);
        let src = Tensor::from_vec(vec![10.0, 11.0, 12.0, 13.0, 14.0], s).unwrap();
        let disp = Tensor::from_vec(vec![2.0; 5], Shape::new(1, 1, 1, 5)).unwrap();
        let out = warp_by_disparity(&src, &disp).unwrap();
        assert_eq!(out.data(), &[0.0, 0.0, 10.0, 11.0, 12.0]);
    }

    #[test]
    fn combined_warp_matches_pre_summed_flow_bitwise() {
        let s = Shape::new(1, 4, 6, 7);
        let src = image(s, 7);
        let fs = Shape::new(1, 2, 6, 7);
        let cs = Shape::new(1, 1, 6, 7);
        let flow = Tensor::from_vec(probe_data(fs, 8), fs).unwrap();
        let change = Tensor::from_vec(probe_data(cs, 9), cs).unwrap();

        let direct = warp_by_flow_and_change(&src, &flow, &change).unwrap();

        let u = flow.slice_channels(0, 1).unwrap();
        let v = flow.slice_channels(1, 2).unwrap();
        let summed = Tensor::concat_channels(&[u.sub(&change).unwrap(), v]).unwrap();
        let via_flow = warp_by_flow(&src, &summed).unwrap();

        for (a, b) in direct.data().iter().zip(via_flow.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn content_slides_out_instead_of_smearing() {
        let s = Shape::new(1, 1, 2, 3);
        let src = Tensor::<f64>::full(9.0, s);
        let flow = Tensor::from_vec(
            vec![100.0; 6].into_iter().chain(vec![0.0; 6]).collect(),
            Shape::new(1, 2, 2, 3),
        )
        .unwrap();
        let out = warp_by_flow(&src, &flow).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn field_shape_validation() {
        let src = Tensor::<f64>::zeros(Shape::new(1, 3, 4, 4));
        let bad_flow = Tensor::<f64>::zeros(Shape::new(1, 1, 4, 4));
        assert!(warp_by_flow(&src, &bad_flow).is_err());
        let bad_disp = Tensor::<f64>::zeros(Shape::new(1, 2, 4, 4));
        assert!(warp_by_disparity(&src, &bad_disp).is_err());
    }

    #[test]
    fn prior_scaling_doubles_size_and_applies_level_gain() {
        let s = Shape::new(1, 1, 2, 2);
        let est = Tensor::<f64>::full(1.0, s);
        // Level 5: gain 20 / 32 = 0.625.
        let out = scale_prior(&est, 5).unwrap();
        assert_eq!(out.shape(), Shape::new(1, 1, 4, 4));
        assert!(out.data().iter().all(|&v| (v - 0.625).abs() < 1e-12));
    }
}
