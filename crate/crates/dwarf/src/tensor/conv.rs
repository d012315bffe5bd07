//! 2D convolution and its transpose, via column matrices and GEMM.
//!
//! `conv2d` weights are laid out (C_out, C_in, k, k); `conv2d_transpose`
//! weights (C_in, C_out, k, k). With those layouts the transpose is the exact
//! adjoint of a stride-`s` convolution over the same weight buffer, which is
//! what ties the upsampling path to the downsampling gradients.

use super::gemm::{gemm_nn, gemm_nt, gemm_tn};
use crate::error::{DwarfError, Result};
use crate::tensor::{Op, Scalar, Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

impl ConvSpec {
    pub fn unit() -> Self {
        ConvSpec {
            stride: 1,
            padding: 0,
            dilation: 1,
        }
    }

    /// Padding that keeps spatial size for stride 1 and odd k: p = d*(k-1)/2.
    pub fn same(k: usize, stride: usize, dilation: usize) -> Self {
        ConvSpec {
            stride,
            padding: dilation * (k - 1) / 2,
            dilation,
        }
    }

    pub(crate) fn out_dim(&self, size: usize, k: usize) -> Option<usize> {
        let span = self.dilation * (k - 1) + 1;
        let padded = size + 2 * self.padding;
        if padded < span {
            return None;
        }
        Some((padded - span) / self.stride + 1)
    }
}

/// Scatter input patches into a (c*k*k) x (ho*wo) column matrix.
/// `src` is one sample (c contiguous planes of h*w).
fn im2col<T: Scalar>(
    src: &[T],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    spec: ConvSpec,
    ho: usize,
    wo: usize,
    cols: &mut [T],
) {
    let p = ho * wo;
    debug_assert_eq!(cols.len(), c * k * k * p);
    for ci in 0..c {
        let plane = &src[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ci * k + ky) * k + kx) * p;
                for yo in 0..ho {
                    let yi = (yo * spec.stride + ky * spec.dilation) as isize
                        - spec.padding as isize;
                    let out_row = &mut cols[row + yo * wo..row + (yo + 1) * wo];
                    if yi < 0 || yi >= h as isize {
                        out_row.fill(T::ZERO);
                        continue;
                    }
                    let src_row = &plane[yi as usize * w..(yi as usize + 1) * w];
                    let x_off = kx as isize * spec.dilation as isize - spec.padding as isize;
                    if spec.stride == 1 {
                        // Contiguous copy of the in-range window, zeros elsewhere.
                        for (xo, dst) in out_row.iter_mut().enumerate() {
                            let xi = xo as isize + x_off;
                            *dst = if xi >= 0 && (xi as usize) < w {
                                src_row[xi as usize]
                            } else {
                                T::ZERO
                            };
                        }
                    } else {
                        for (xo, dst) in out_row.iter_mut().enumerate() {
                            let xi = (xo * spec.stride) as isize + x_off;
                            *dst = if xi >= 0 && (xi as usize) < w {
                                src_row[xi as usize]
                            } else {
                                T::ZERO
                            };
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of `im2col`: accumulate columns back into the image.
fn col2im_add<T: Scalar>(
    cols: &[T],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    spec: ConvSpec,
    ho: usize,
    wo: usize,
    dst: &mut [T],
) {
    let p = ho * wo;
    debug_assert_eq!(cols.len(), c * k * k * p);
    for ci in 0..c {
        let plane = &mut dst[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ci * k + ky) * k + kx) * p;
                for yo in 0..ho {
                    let yi = (yo * spec.stride + ky * spec.dilation) as isize
                        - spec.padding as isize;
                    if yi < 0 || yi >= h as isize {
                        continue;
                    }
                    let src_row = &cols[row + yo * wo..row + (yo + 1) * wo];
                    let dst_row = &mut plane[yi as usize * w..(yi as usize + 1) * w];
                    let x_off = kx as isize * spec.dilation as isize - spec.padding as isize;
                    for (xo, &v) in src_row.iter().enumerate() {
                        let xi = (xo * spec.stride) as isize + x_off;
                        if xi >= 0 && (xi as usize) < w {
                            dst_row[xi as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

fn check_bias<T: Scalar>(bias: &Tensor<T>, c_out: usize, op: &'static str) -> Result<()> {
    let bs = bias.shape();
    if bs != Shape::new(1, c_out, 1, 1) {
        return Err(DwarfError::shape(
            op,
            format!("bias {} for {} output channels", bs, c_out),
        ));
    }
    Ok(())
}

impl<T: Scalar> Tensor<T> {
    /// Cross-correlation with square kernels. Weight (C_out, C_in, k, k),
    /// bias (1, C_out, 1, 1).
    pub fn conv2d(&self, weight: &Tensor<T>, bias: &Tensor<T>, spec: ConvSpec) -> Result<Tensor<T>> {
        let xs = self.shape();
        let ws = weight.shape();
        let (c_out, c_in, k) = (ws.n, ws.c, ws.h);
        if ws.h != ws.w {
            return Err(DwarfError::shape("conv2d", format!("non-square kernel {}", ws)));
        }
        if c_in != xs.c {
            return Err(DwarfError::shape(
                "conv2d",
                format!("input {} vs weight {}", xs, ws),
            ));
        }
        check_bias(bias, c_out, "conv2d")?;
        if spec.stride == 0 || spec.dilation == 0 {
            return Err(DwarfError::invalid("conv2d: stride and dilation must be positive"));
        }
        let ho = spec
            .out_dim(xs.h, k)
            .ok_or_else(|| DwarfError::shape("conv2d", format!("kernel does not fit {}", xs)))?;
        let wo = spec
            .out_dim(xs.w, k)
            .ok_or_else(|| DwarfError::shape("conv2d", format!("kernel does not fit {}", xs)))?;
        let out_shape = Shape::new(xs.n, c_out, ho, wo);
        let data = conv2d_forward(
            self.data(),
            xs,
            weight.data(),
            bias.data(),
            c_out,
            k,
            spec,
            ho,
            wo,
        );
        Ok(Tensor::from_op(
            data,
            out_shape,
            Op::Conv2d {
                input: self.clone(),
                weight: weight.clone(),
                bias: bias.clone(),
                spec,
            },
        ))
    }

    /// Transposed convolution that exactly doubles (for stride 2) the spatial
    /// size: implicit padding (k - stride) / 2, so output = stride * input.
    /// Weight (C_in, C_out, k, k), bias (1, C_out, 1, 1).
    pub fn conv2d_transpose(
        &self,
        weight: &Tensor<T>,
        bias: &Tensor<T>,
        stride: usize,
    ) -> Result<Tensor<T>> {
        let xs = self.shape();
        let ws = weight.shape();
        let (c_in, c_out, k) = (ws.n, ws.c, ws.h);
        if ws.h != ws.w {
            return Err(DwarfError::shape(
                "conv2d_transpose",
                format!("non-square kernel {}", ws),
            ));
        }
        if c_in != xs.c {
            return Err(DwarfError::shape(
                "conv2d_transpose",
                format!("input {} vs weight {}", xs, ws),
            ));
        }
        check_bias(bias, c_out, "conv2d_transpose")?;
        if stride == 0 || k < stride || (k - stride) % 2 != 0 {
            return Err(DwarfError::invalid(format!(
                "conv2d_transpose: kernel {k} incompatible with stride {stride}"
            )));
        }
        let out_shape = Shape::new(xs.n, c_out, xs.h * stride, xs.w * stride);
        let data = conv2d_transpose_forward(self.data(), xs, weight.data(), bias.data(), c_out, k, stride);
        Ok(Tensor::from_op(
            data,
            out_shape,
            Op::ConvTranspose2d {
                input: self.clone(),
                weight: weight.clone(),
                bias: bias.clone(),
                stride,
            },
        ))
    }
}

#[allow(clippy::too_many_arguments)]
fn conv2d_forward<T: Scalar>(
    x: &[T],
    xs: Shape,
    w: &[T],
    b: &[T],
    c_out: usize,
    k: usize,
    spec: ConvSpec,
    ho: usize,
    wo: usize,
) -> Vec<T> {
    let p = ho * wo;
    let rows = xs.c * k * k;
    let mut cols = vec![T::ZERO; rows * p];
    let mut out = vec![T::ZERO; xs.n * c_out * p];
    for n in 0..xs.n {
        let sample = &x[n * xs.c * xs.plane()..(n + 1) * xs.c * xs.plane()];
        im2col(sample, xs.c, xs.h, xs.w, k, spec, ho, wo, &mut cols);
        let dst = &mut out[n * c_out * p..(n + 1) * c_out * p];
        gemm_nn(c_out, rows, p, w, &cols, T::ZERO, dst);
        for co in 0..c_out {
            let bv = b[co];
            for v in &mut dst[co * p..(co + 1) * p] {
                *v += bv;
            }
        }
    }
    out
}

fn conv2d_transpose_forward<T: Scalar>(
    x: &[T],
    xs: Shape,
    w: &[T],
    b: &[T],
    c_out: usize,
    k: usize,
    stride: usize,
) -> Vec<T> {
    let spec = ConvSpec {
        stride,
        padding: (k - stride) / 2,
        dilation: 1,
    };
    let (ho, wo) = (xs.h * stride, xs.w * stride);
    let p = xs.plane();
    let rows = c_out * k * k;
    let mut cols = vec![T::ZERO; rows * p];
    let mut out = vec![T::ZERO; xs.n * c_out * ho * wo];
    for n in 0..xs.n {
        let sample = &x[n * xs.c * p..(n + 1) * xs.c * p];
        // cols = W^T x, W stored (C_in) x (C_out*k*k)
        gemm_tn(rows, xs.c, p, w, sample, T::ZERO, &mut cols);
        let dst = &mut out[n * c_out * ho * wo..(n + 1) * c_out * ho * wo];
        col2im_add(&cols, c_out, ho, wo, k, spec, xs.h, xs.w, dst);
        for co in 0..c_out {
            let bv = b[co];
            for v in &mut dst[co * ho * wo..(co + 1) * ho * wo] {
                *v += bv;
            }
        }
    }
    out
}

/// Gradients of conv2d; grad slots are written in (input, weight, bias) order.
pub(crate) fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    spec: ConvSpec,
    out_grad: &[T],
    need_input: bool,
    need_weight: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>, Vec<T>) {
    let xs = input.shape();
    let ws = weight.shape();
    let (c_out, k) = (ws.n, ws.h);
    let ho = spec.out_dim(xs.h, k).expect("shape already validated");
    let wo = spec.out_dim(xs.w, k).expect("shape already validated");
    let p = ho * wo;
    let rows = xs.c * k * k;

    let mut grad_bias = vec![T::ZERO; c_out];
    for n in 0..xs.n {
        for co in 0..c_out {
            let g = &out_grad[(n * c_out + co) * p..(n * c_out + co + 1) * p];
            let mut acc = T::ZERO;
            for &v in g {
                acc += v;
            }
            grad_bias[co] += acc;
        }
    }

    let mut grad_input = need_input.then(|| vec![T::ZERO; xs.numel()]);
    let mut grad_weight = need_weight.then(|| vec![T::ZERO; ws.numel()]);
    let mut cols = vec![T::ZERO; rows * p];
    for n in 0..xs.n {
        let g = &out_grad[n * c_out * p..(n + 1) * c_out * p];
        if let Some(gw) = grad_weight.as_deref_mut() {
            let sample = &input.data()[n * xs.c * xs.plane()..(n + 1) * xs.c * xs.plane()];
            im2col(sample, xs.c, xs.h, xs.w, k, spec, ho, wo, &mut cols);
            gemm_nt(c_out, p, rows, g, &cols, T::ONE, gw);
        }
        if let Some(gi) = grad_input.as_deref_mut() {
            gemm_tn(rows, c_out, p, weight.data(), g, T::ZERO, &mut cols);
            let dst = &mut gi[n * xs.c * xs.plane()..(n + 1) * xs.c * xs.plane()];
            col2im_add(&cols, xs.c, xs.h, xs.w, k, spec, ho, wo, dst);
        }
    }
    (grad_input, grad_weight, grad_bias)
}

/// Gradients of conv2d_transpose in (input, weight, bias) order.
pub(crate) fn conv2d_transpose_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    out_grad: &[T],
    need_input: bool,
    need_weight: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>, Vec<T>) {
    let xs = input.shape();
    let ws = weight.shape();
    let (c_out, k) = (ws.c, ws.h);
    let spec = ConvSpec {
        stride,
        padding: (k - stride) / 2,
        dilation: 1,
    };
    let (ho, wo) = (xs.h * stride, xs.w * stride);
    let p = xs.plane();
    let rows = c_out * k * k;

    let mut grad_bias = vec![T::ZERO; c_out];
    for n in 0..xs.n {
        for co in 0..c_out {
            let g = &out_grad[(n * c_out + co) * ho * wo..(n * c_out + co + 1) * ho * wo];
            let mut acc = T::ZERO;
            for &v in g {
                acc += v;
            }
            grad_bias[co] += acc;
        }
    }

    let mut grad_input = need_input.then(|| vec![T::ZERO; xs.numel()]);
    let mut grad_weight = need_weight.then(|| vec![T::ZERO; ws.numel()]);
    let mut cols = vec![T::ZERO; rows * p];
    for n in 0..xs.n {
        let g = &out_grad[n * c_out * ho * wo..(n + 1) * c_out * ho * wo];
        im2col(g, c_out, ho, wo, k, spec, xs.h, xs.w, &mut cols);
        if let Some(gi) = grad_input.as_deref_mut() {
            let dst = &mut gi[n * xs.c * p..(n + 1) * xs.c * p];
            gemm_nn(xs.c, rows, p, weight.data(), &cols, T::ZERO, dst);
        }
        if let Some(gw) = grad_weight.as_deref_mut() {
            let sample = &input.data()[n * xs.c * p..(n + 1) * xs.c * p];
            gemm_nt(xs.c, p, rows, sample, &cols, T::ONE, gw);
        }
    }
    (grad_input, grad_weight, grad_bias)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    /// Independent nested-loop convolution used as the oracle.
    fn conv_reference(
        x: &[f64],
        xs: Shape,
        w: &[f64],
        b: &[f64],
        c_out: usize,
        k: usize,
        spec: ConvSpec,
    ) -> Vec<f64> {
        let ho = spec.out_dim(xs.h, k).unwrap();
        let wo = spec.out_dim(xs.w, k).unwrap();
        let mut out = vec![0.0; xs.n * c_out * ho * wo];
        for n in 0..xs.n {
            for co in 0..c_out {
                for yo in 0..ho {
                    for xo in 0..wo {
                        let mut acc = b[co];
                        for ci in 0..xs.c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let yi = (yo * spec.stride + ky * spec.dilation) as isize
                                        - spec.padding as isize;
                                    let xi = (xo * spec.stride + kx * spec.dilation) as isize
                                        - spec.padding as isize;
                                    if yi < 0
                                        || xi < 0
                                        || yi >= xs.h as isize
                                        || xi >= xs.w as isize
                                    {
                                        continue;
                                    }
                                    acc += x[xs.idx(n, ci, yi as usize, xi as usize)]
                                        * w[((co * xs.c + ci) * k + ky) * k + kx];
                                }
                            }
                        }
                        out[((n * c_out + co) * ho + yo) * wo + xo] = acc;
                    }
                }
            }
        }
        out
    }

    fn rand_vec(rng: &mut StdRng, len: usize) -> Vec<f64> {
        (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn conv2d_matches_nested_loop_reference() {
        let mut rng = StdRng::seed_from_u64(11);
        let cases = [
            (1, 2, 3, 7, 9, 3, ConvSpec { stride: 1, padding: 1, dilation: 1 }),
            (2, 3, 4, 6, 5, 3, ConvSpec { stride: 2, padding: 1, dilation: 1 }),
            (1, 1, 2, 9, 9, 3, ConvSpec { stride: 1, padding: 4, dilation: 4 }),
            (2, 2, 2, 8, 8, 3, ConvSpec { stride: 1, padding: 2, dilation: 2 }),
            (1, 3, 1, 5, 5, 1, ConvSpec::unit()),
        ];
        for (n, ci, co, h, w, k, spec) in cases {
            let xs = Shape::new(n, ci, h, w);
            let x = rand_vec(&mut rng, xs.numel());
            let wt = rand_vec(&mut rng, co * ci * k * k);
            let b = rand_vec(&mut rng, co);
            let xt = Tensor::from_vec(x.clone(), xs).unwrap();
            let wtt = Tensor::from_vec(wt.clone(), Shape::new(co, ci, k, k)).unwrap();
            let bt = Tensor::from_vec(b.clone(), Shape::new(1, co, 1, 1)).unwrap();
            let got = xt.conv2d(&wtt, &bt, spec).unwrap();
            let want = conv_reference(&x, xs, &wt, &b, co, k, spec);
            assert_eq!(got.data().len(), want.len());
            for (g, e) in got.data().iter().zip(&want) {
                assert!((g - e).abs() < 1e-12, "conv mismatch: {g} vs {e}");
            }
        }
    }

    #[test]
    fn conv2d_shape_and_errors() {
        let x = Tensor::<f32>::zeros(Shape::new(1, 3, 8, 10));
        let w = Tensor::<f32>::zeros(Shape::new(5, 3, 3, 3));
        let b = Tensor::<f32>::zeros(Shape::new(1, 5, 1, 1));
        let y = x.conv2d(&w, &b, ConvSpec { stride: 2, padding: 1, dilation: 1 }).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 5, 4, 5));

        let wrong_b = Tensor::<f32>::zeros(Shape::new(1, 4, 1, 1));
        assert!(x.conv2d(&w, &wrong_b, ConvSpec::unit()).is_err());
        let wrong_w = Tensor::<f32>::zeros(Shape::new(5, 2, 3, 3));
        assert!(x.conv2d(&wrong_w, &b, ConvSpec::unit()).is_err());
    }

    #[test]
    fn transpose_doubles_spatial_size() {
        let x = Tensor::<f32>::zeros(Shape::new(2, 3, 5, 7));
        let w = Tensor::<f32>::zeros(Shape::new(3, 4, 4, 4));
        let b = Tensor::<f32>::zeros(Shape::new(1, 4, 1, 1));
        let y = x.conv2d_transpose(&w, &b, 2).unwrap();
        assert_eq!(y.shape(), Shape::new(2, 4, 10, 14));
    }

    #[test]
    fn transpose_is_adjoint_of_strided_conv() {
        // <convT(x), y> == <x, conv(y)> over the shared weight buffer.
        let mut rng = StdRng::seed_from_u64(7);
        let (ci, co, k, s) = (3, 2, 4, 2);
        let xs = Shape::new(2, ci, 4, 5);
        let ys = Shape::new(2, co, 8, 10);
        let x = rand_vec(&mut rng, xs.numel());
        let y = rand_vec(&mut rng, ys.numel());
        let w = rand_vec(&mut rng, ci * co * k * k);

        let xt = Tensor::from_vec(x.clone(), xs).unwrap();
        let wt = Tensor::from_vec(w.clone(), Shape::new(ci, co, k, k)).unwrap();
        let zb_co = Tensor::from_vec(vec![0.0; co], Shape::new(1, co, 1, 1)).unwrap();
        let up = xt.conv2d_transpose(&wt, &zb_co, s).unwrap();
        let lhs: f64 = up.data().iter().zip(&y).map(|(a, b)| a * b).sum();

        let yt = Tensor::from_vec(y, ys).unwrap();
        // Same buffer viewed as a conv weight (C_out = ci, C_in = co).
        let wc = Tensor::from_vec(w, Shape::new(ci, co, k, k)).unwrap();
        let zb_ci = Tensor::from_vec(vec![0.0; ci], Shape::new(1, ci, 1, 1)).unwrap();
        let down = yt
            .conv2d(&wc, &zb_ci, ConvSpec { stride: s, padding: (k - s) / 2, dilation: 1 })
            .unwrap();
        assert_eq!(down.shape(), xs);
        let rhs: f64 = down.data().iter().zip(&x).map(|(a, b)| a * b).sum();

        assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
    }

    #[test]
    fn transpose_rejects_odd_kernel_stride_gap() {
        let x = Tensor::<f32>::zeros(Shape::new(1, 2, 4, 4));
        let w = Tensor::<f32>::zeros(Shape::new(2, 2, 3, 3));
        let b = Tensor::<f32>::zeros(Shape::new(1, 2, 1, 1));
        assert!(x.conv2d_transpose(&w, &b, 2).is_err());
    }
}
