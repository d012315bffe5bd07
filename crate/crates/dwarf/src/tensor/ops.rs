//! Operation records and the elementwise / structural forward kernels.
//!
//! Each [`Op`] variant stores handles to its inputs plus whatever small
//! configuration the backward pass needs. Heavy kernels (convolution,
//! interpolation, correlation) live in sibling modules; this file holds the
//! cheap ones and the public `Tensor` methods that build graph nodes.

use super::conv::ConvSpec;
use crate::correlation::CorrSpec;
use crate::error::{DwarfError, Result};
use crate::tensor::{Scalar, Shape, Tensor};

pub(crate) enum Op<T: Scalar> {
    Add(Tensor<T>, Tensor<T>),
    Sub(Tensor<T>, Tensor<T>),
    Mul(Tensor<T>, Tensor<T>),
    Scale(Tensor<T>, T),
    Abs(Tensor<T>),
    LeakyRelu(Tensor<T>, T),
    /// Sum of all elements, to a 1x1x1x1 tensor.
    SumAll(Tensor<T>),
    /// Sum of squares of all elements, to a 1x1x1x1 tensor.
    SqSum(Tensor<T>),
    /// Channels [from, to) of the input.
    SliceChannels(Tensor<T>, usize, usize),
    /// Concatenation along the channel axis.
    ConcatChannels(Vec<Tensor<T>>),
    Conv2d {
        input: Tensor<T>,
        weight: Tensor<T>,
        bias: Tensor<T>,
        spec: ConvSpec,
    },
    ConvTranspose2d {
        input: Tensor<T>,
        weight: Tensor<T>,
        bias: Tensor<T>,
        stride: usize,
    },
    BilinearUpsample {
        input: Tensor<T>,
        factor: usize,
    },
    /// Gather `src` at per-pixel coordinates (channel 0 = x, channel 1 = y).
    BilinearSample {
        src: Tensor<T>,
        coords: Tensor<T>,
    },
    /// Displacement correlation between two feature maps; covers the 1D and
    /// 2D layouts (1D is the zero-vertical-radius case).
    CorrPlanar {
        a: Tensor<T>,
        b: Tensor<T>,
        spec: CorrSpec,
    },
    /// Correlation of two disparity cost curves over spatial and curve shifts.
    CorrCurve {
        a: Tensor<T>,
        b: Tensor<T>,
        spec: CorrSpec,
    },
}

impl<T: Scalar> Op<T> {
    pub(crate) fn inputs(&self) -> Vec<&Tensor<T>> {
        match self {
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![a, b],
            Op::Scale(a, _) | Op::Abs(a) | Op::LeakyRelu(a, _) => vec![a],
            Op::SumAll(a) | Op::SqSum(a) | Op::SliceChannels(a, _, _) => vec![a],
            Op::ConcatChannels(xs) => xs.iter().collect(),
            Op::Conv2d {
                input,
                weight,
                bias,
                ..
            }
            | Op::ConvTranspose2d {
                input,
                weight,
                bias,
                ..
            } => vec![input, weight, bias],
            Op::BilinearUpsample { input, .. } => vec![input],
            Op::BilinearSample { src, coords } => vec![src, coords],
            Op::CorrPlanar { a, b, .. } | Op::CorrCurve { a, b, .. } => vec![a, b],
        }
    }

}

fn same_shape<T: Scalar>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(DwarfError::shape(
            op,
            format!("{} vs {}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

impl<T: Scalar> Tensor<T> {
    pub fn add(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        same_shape("add", self, rhs)?;
        let data = self
            .data()
            .iter()
            .zip(rhs.data())
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(Tensor::from_op(
            data,
            self.shape(),
            Op::Add(self.clone(), rhs.clone()),
        ))
    }

    pub fn sub(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        same_shape("sub", self, rhs)?;
        let data = self
            .data()
            .iter()
            .zip(rhs.data())
            .map(|(&a, &b)| a - b)
            .collect();
        Ok(Tensor::from_op(
            data,
            self.shape(),
            Op::Sub(self.clone(), rhs.clone()),
        ))
    }

    pub fn mul(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        same_shape("mul", self, rhs)?;
        let data = self
            .data()
            .iter()
            .zip(rhs.data())
            .map(|(&a, &b)| a * b)
            .collect();
        Ok(Tensor::from_op(
            data,
            self.shape(),
            Op::Mul(self.clone(), rhs.clone()),
        ))
    }

    pub fn scale(&self, factor: T) -> Tensor<T> {
        let data = self.data().iter().map(|&a| a * factor).collect();
        Tensor::from_op(data, self.shape(), Op::Scale(self.clone(), factor))
    }

    pub fn abs(&self) -> Tensor<T> {
        let data = self.data().iter().map(|&a| a.abs()).collect();
        Tensor::from_op(data, self.shape(), Op::Abs(self.clone()))
    }

    /// max(x, 0) + alpha * min(x, 0).
    pub fn leaky_relu(&self, alpha: T) -> Tensor<T> {
        let data = self
            .data()
            .iter()
            .map(|&a| if a > T::ZERO { a } else { a * alpha })
            .collect();
        Tensor::from_op(data, self.shape(), Op::LeakyRelu(self.clone(), alpha))
    }

    pub fn sum_all(&self) -> Tensor<T> {
        let mut acc = T::ZERO;
        for &v in self.data() {
            acc += v;
        }
        Tensor::from_op(vec![acc], Shape::new(1, 1, 1, 1), Op::SumAll(self.clone()))
    }

    pub fn sq_sum(&self) -> Tensor<T> {
        let mut acc = T::ZERO;
        for &v in self.data() {
            acc += v * v;
        }
        Tensor::from_op(vec![acc], Shape::new(1, 1, 1, 1), Op::SqSum(self.clone()))
    }

    /// Channels `[from, to)` as a new tensor.
    pub fn slice_channels(&self, from: usize, to: usize) -> Result<Tensor<T>> {
        let s = self.shape();
        if from >= to || to > s.c {
            return Err(DwarfError::shape(
                "slice_channels",
                format!("[{from}, {to}) of {} channels", s.c),
            ));
        }
        let out_shape = Shape::new(s.n, to - from, s.h, s.w);
        let mut data = Vec::with_capacity(out_shape.numel());
        let src = self.data();
        for n in 0..s.n {
            let base = (n * s.c + from) * s.plane();
            data.extend_from_slice(&src[base..base + (to - from) * s.plane()]);
        }
        Ok(Tensor::from_op(
            data,
            out_shape,
            Op::SliceChannels(self.clone(), from, to),
        ))
    }

    /// Concatenate along the channel axis; batch and spatial sizes must agree.
    pub fn concat_channels(parts: &[Tensor<T>]) -> Result<Tensor<T>> {
        let first = parts
            .first()
            .ok_or_else(|| DwarfError::invalid("concat_channels of zero tensors"))?;
        let s0 = first.shape();
        let mut c_total = 0;
        for p in parts {
            let s = p.shape();
            if s.n != s0.n || s.h != s0.h || s.w != s0.w {
                return Err(DwarfError::shape(
                    "concat_channels",
                    format!("{} vs {}", s, s0),
                ));
            }
            c_total += s.c;
        }
        let out_shape = Shape::new(s0.n, c_total, s0.h, s0.w);
        let mut data = Vec::with_capacity(out_shape.numel());
        for n in 0..s0.n {
            for p in parts {
                let s = p.shape();
                let base = n * s.c * s.plane();
                data.extend_from_slice(&p.data()[base..base + s.c * s.plane()]);
            }
        }
        Ok(Tensor::from_op(
            data,
            out_shape,
            Op::ConcatChannels(parts.to_vec()),
        ))
    }
}

pub(crate) fn backward_elementwise<T: Scalar>(
    op: &Op<T>,
    out_grad: &[T],
    sink: &mut dyn FnMut(&Tensor<T>, Vec<T>),
) {
    match op {
        Op::Add(a, b) => {
            sink(a, out_grad.to_vec());
            sink(b, out_grad.to_vec());
        }
        Op::Sub(a, b) => {
            sink(a, out_grad.to_vec());
            sink(b, out_grad.iter().map(|&g| -g).collect());
        }
        Op::Mul(a, b) => {
            let ga = out_grad
                .iter()
                .zip(b.data())
                .map(|(&g, &bv)| g * bv)
                .collect();
            let gb = out_grad
                .iter()
                .zip(a.data())
                .map(|(&g, &av)| g * av)
                .collect();
            sink(a, ga);
            sink(b, gb);
        }
        Op::Scale(a, f) => {
            sink(a, out_grad.iter().map(|&g| g * *f).collect());
        }
        Op::Abs(a) => {
            // Subgradient 0 at the kink.
            let ga = out_grad
                .iter()
                .zip(a.data())
                .map(|(&g, &v)| {
                    if v > T::ZERO {
                        g
                    } else if v < T::ZERO {
                        -g
                    } else {
                        T::ZERO
                    }
                })
                .collect();
            sink(a, ga);
        }
        Op::LeakyRelu(a, alpha) => {
            let ga = out_grad
                .iter()
                .zip(a.data())
                .map(|(&g, &v)| if v > T::ZERO { g } else { g * *alpha })
                .collect();
            sink(a, ga);
        }
        Op::SumAll(a) => {
            let g = out_grad[0];
            sink(a, vec![g; a.shape().numel()]);
        }
        Op::SqSum(a) => {
            let g = out_grad[0];
            let two = T::from_f64(2.0);
            sink(a, a.data().iter().map(|&v| g * two * v).collect());
        }
        Op::SliceChannels(a, from, to) => {
            let s = a.shape();
            let mut ga = vec![T::ZERO; s.numel()];
            let cw = to - from;
            for n in 0..s.n {
                let dst = (n * s.c + from) * s.plane();
                let src = n * cw * s.plane();
                ga[dst..dst + cw * s.plane()]
                    .copy_from_slice(&out_grad[src..src + cw * s.plane()]);
            }
            sink(a, ga);
        }
        Op::ConcatChannels(parts) => {
            let s0 = parts[0].shape();
            let plane = s0.plane();
            let c_total: usize = parts.iter().map(|p| p.shape().c).sum();
            for (pi, p) in parts.iter().enumerate() {
                let s = p.shape();
                let mut gp = vec![T::ZERO; s.numel()];
                let c_before: usize = parts[..pi].iter().map(|q| q.shape().c).sum();
                for n in 0..s0.n {
                    let src = (n * c_total + c_before) * plane;
                    let dst = n * s.c * plane;
                    gp[dst..dst + s.c * plane]
                        .copy_from_slice(&out_grad[src..src + s.c * plane]);
                }
                sink(p, gp);
            }
        }
        _ => unreachable!("non-elementwise op routed to backward_elementwise"),
    }
}
