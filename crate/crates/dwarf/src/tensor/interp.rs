//! Bilinear interpolation kernels: fixed-factor upsampling and gather at
//! arbitrary per-pixel coordinates.
//!
//! Both use the half-pixel-center convention: output pixel `o` of an
//! upsampling by `f` reads source position `(o + 0.5) / f - 0.5`. Upsampling
//! clamps corner indices to the edge (constant fields stay constant);
//! coordinate gathers treat out-of-range corners as zero so content slides
//! out of frame instead of smearing the border.

use crate::error::{DwarfError, Result};
use crate::tensor::{Op, Scalar, Shape, Tensor};

/// Per-axis interpolation taps for upsampling: (low index, high index, frac).
fn up_taps(out_size: usize, in_size: usize, factor: usize) -> Vec<(usize, usize, f64)> {
    let hi = in_size as i64 - 1;
    (0..out_size)
        .map(|o| {
            let src = (o as f64 + 0.5) / factor as f64 - 0.5;
            let floor = src.floor();
            let frac = src - floor;
            // Clamp both taps from the unclamped floor: beyond either edge
            // they collapse onto the border element, so the fraction becomes
            // inert and border values extend outward unchanged.
            let i0 = (floor as i64).clamp(0, hi) as usize;
            let i1 = (floor as i64 + 1).clamp(0, hi) as usize;
            (i0, i1, frac)
        })
        .collect()
}

impl<T: Scalar> Tensor<T> {
    /// Upsample by an integer factor with edge-clamped bilinear filtering.
    pub fn bilinear_upsample(&self, factor: usize) -> Result<Tensor<T>> {
        if factor == 0 {
            return Err(DwarfError::invalid("bilinear_upsample: factor must be positive"));
        }
        let s = self.shape();
        let out_shape = Shape::new(s.n, s.c, s.h * factor, s.w * factor);
        let ty = up_taps(out_shape.h, s.h, factor);
        let tx = up_taps(out_shape.w, s.w, factor);
        let mut out = vec![T::ZERO; out_shape.numel()];
        let src = self.data();
        for nc in 0..s.n * s.c {
            let plane = &src[nc * s.plane()..(nc + 1) * s.plane()];
            let dst = &mut out[nc * out_shape.plane()..(nc + 1) * out_shape.plane()];
            for (yo, &(y0, y1, fy)) in ty.iter().enumerate() {
                let r0 = &plane[y0 * s.w..(y0 + 1) * s.w];
                let r1 = &plane[y1 * s.w..(y1 + 1) * s.w];
                let wy1 = T::from_f64(fy);
                let wy0 = T::from_f64(1.0 - fy);
                let drow = &mut dst[yo * out_shape.w..(yo + 1) * out_shape.w];
                for (xo, &(x0, x1, fx)) in tx.iter().enumerate() {
                    let wx1 = T::from_f64(fx);
                    let wx0 = T::from_f64(1.0 - fx);
                    drow[xo] = wy0 * (wx0 * r0[x0] + wx1 * r0[x1])
                        + wy1 * (wx0 * r1[x0] + wx1 * r1[x1]);
                }
            }
        }
        Ok(Tensor::from_op(
            out,
            out_shape,
            Op::BilinearUpsample {
                input: self.clone(),
                factor,
            },
        ))
    }

    /// Gather `self` at per-pixel positions. `coords` has 2 channels:
    /// channel 0 holds x, channel 1 holds y, both in source pixel units.
    /// Corners that fall outside the source contribute zero; the result is
    /// differentiable in both the source values and the coordinates.
    pub fn bilinear_sample(&self, coords: &Tensor<T>) -> Result<Tensor<T>> {
        let ss = self.shape();
        let cs = coords.shape();
        if cs.c != 2 || cs.n != ss.n {
            return Err(DwarfError::shape(
                "bilinear_sample",
                format!("coords {} for source {}", cs, ss),
            ));
        }
        let out_shape = Shape::new(ss.n, ss.c, cs.h, cs.w);
        let mut out = vec![T::ZERO; out_shape.numel()];
        let src = self.data();
        let crd = coords.data();
        let sp = ss.plane();
        let op = cs.plane();
        for n in 0..ss.n {
            let cx = &crd[(n * 2) * op..(n * 2 + 1) * op];
            let cy = &crd[(n * 2 + 1) * op..(n * 2 + 2) * op];
            for c in 0..ss.c {
                let plane = &src[(n * ss.c + c) * sp..(n * ss.c + c + 1) * sp];
                let dst = &mut out[(n * ss.c + c) * op..(n * ss.c + c + 1) * op];
                for i in 0..op {
                    dst[i] = sample_one(plane, ss.h, ss.w, cx[i].to_f64(), cy[i].to_f64());
                }
            }
        }
        Ok(Tensor::from_op(
            out,
            out_shape,
            Op::BilinearSample {
                src: self.clone(),
                coords: coords.clone(),
            },
        ))
    }
}

#[inline]
fn sample_one<T: Scalar>(plane: &[T], h: usize, w: usize, x: f64, y: f64) -> T {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = T::from_f64(x - x0);
    let fy = T::from_f64(y - y0);
    let (x0, y0) = (x0 as i64, y0 as i64);
    let at = |xx: i64, yy: i64| -> T {
        if xx >= 0 && yy >= 0 && (xx as usize) < w && (yy as usize) < h {
            plane[yy as usize * w + xx as usize]
        } else {
            T::ZERO
        }
    };
    let one = T::ONE;
    (one - fy) * ((one - fx) * at(x0, y0) + fx * at(x0 + 1, y0))
        + fy * ((one - fx) * at(x0, y0 + 1) + fx * at(x0 + 1, y0 + 1))
}

pub(crate) fn upsample_backward<T: Scalar>(
    input: &Tensor<T>,
    factor: usize,
    out_grad: &[T],
) -> Vec<T> {
    let s = input.shape();
    let (oh, ow) = (s.h * factor, s.w * factor);
    let ty = up_taps(oh, s.h, factor);
    let tx = up_taps(ow, s.w, factor);
    let mut grad = vec![T::ZERO; s.numel()];
    for nc in 0..s.n * s.c {
        let gsrc = &out_grad[nc * oh * ow..(nc + 1) * oh * ow];
        let gdst = &mut grad[nc * s.plane()..(nc + 1) * s.plane()];
        for (yo, &(y0, y1, fy)) in ty.iter().enumerate() {
            let wy1 = T::from_f64(fy);
            let wy0 = T::from_f64(1.0 - fy);
            for (xo, &(x0, x1, fx)) in tx.iter().enumerate() {
                let g = gsrc[yo * ow + xo];
                let wx1 = T::from_f64(fx);
                let wx0 = T::from_f64(1.0 - fx);
                gdst[y0 * s.w + x0] += wy0 * wx0 * g;
                gdst[y0 * s.w + x1] += wy0 * wx1 * g;
                gdst[y1 * s.w + x0] += wy1 * wx0 * g;
                gdst[y1 * s.w + x1] += wy1 * wx1 * g;
            }
        }
    }
    grad
}

/// Gradients of `bilinear_sample` for (source, coords).
pub(crate) fn sample_backward<T: Scalar>(
    src: &Tensor<T>,
    coords: &Tensor<T>,
    out_grad: &[T],
    need_src: bool,
    need_coords: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>) {
    let ss = src.shape();
    let cs = coords.shape();
    let sp = ss.plane();
    let op = cs.plane();
    let mut grad_src = need_src.then(|| vec![T::ZERO; ss.numel()]);
    let mut grad_coords = need_coords.then(|| vec![T::ZERO; cs.numel()]);
    let crd = coords.data();
    let data = src.data();
    for n in 0..ss.n {
        let cx = &crd[(n * 2) * op..(n * 2 + 1) * op];
        let cy = &crd[(n * 2 + 1) * op..(n * 2 + 2) * op];
        for i in 0..op {
            let x = cx[i].to_f64();
            let y = cy[i].to_f64();
            let xf = x.floor();
            let yf = y.floor();
            let fx = T::from_f64(x - xf);
            let fy = T::from_f64(y - yf);
            let (x0, y0) = (xf as i64, yf as i64);
            let inside = |xx: i64, yy: i64| {
                xx >= 0 && yy >= 0 && (xx as usize) < ss.w && (yy as usize) < ss.h
            };
            let one = T::ONE;
            let w00 = (one - fy) * (one - fx);
            let w10 = (one - fy) * fx;
            let w01 = fy * (one - fx);
            let w11 = fy * fx;
            let mut dx_acc = T::ZERO;
            let mut dy_acc = T::ZERO;
            for c in 0..ss.c {
                let g = out_grad[(n * ss.c + c) * op + i];
                let plane_base = (n * ss.c + c) * sp;
                let v = |xx: i64, yy: i64| -> T {
                    if inside(xx, yy) {
                        data[plane_base + yy as usize * ss.w + xx as usize]
                    } else {
                        T::ZERO
                    }
                };
                if let Some(gs) = grad_src.as_deref_mut() {
                    let mut add = |xx: i64, yy: i64, wgt: T| {
                        if inside(xx, yy) {
                            gs[plane_base + yy as usize * ss.w + xx as usize] += wgt * g;
                        }
                    };
                    add(x0, y0, w00);
                    add(x0 + 1, y0, w10);
                    add(x0, y0 + 1, w01);
                    add(x0 + 1, y0 + 1, w11);
                }
                if grad_coords.is_some() {
                    let (v00, v10) = (v(x0, y0), v(x0 + 1, y0));
                    let (v01, v11) = (v(x0, y0 + 1), v(x0 + 1, y0 + 1));
                    dx_acc += g * ((one - fy) * (v10 - v00) + fy * (v11 - v01));
                    dy_acc += g * ((one - fx) * (v01 - v00) + fx * (v11 - v10));
                }
            }
            if let Some(gc) = grad_coords.as_deref_mut() {
                gc[(n * 2) * op + i] += dx_acc;
                gc[(n * 2 + 1) * op + i] += dy_acc;
            }
        }
    }
    (grad_src, grad_coords)
}
