//! Dense NCHW tensors with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is an immutable value plus a record of the operation that
//! produced it. Ops build an implicit acyclic graph; [`Tensor::backward`]
//! walks it once in reverse topological order and accumulates gradients
//! into a [`GradStore`] keyed by [`TensorId`]. All kernels are sequential
//! and deterministic: the same inputs produce bit-identical outputs and
//! gradients across runs.

mod adam;
mod checkpoint;
mod conv;
mod fdcheck;
mod gemm;
mod graph;
mod interp;
mod ops;
mod params;

pub use adam::{AdamConfig, AdamState, StepOutcome};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointEntry};
pub use conv::ConvSpec;
pub use fdcheck::{finite_difference_check, probe_data, FdCheck};
pub use graph::{GradStore, Graph};
pub use params::ParamStore;
pub(crate) use ops::Op;

use crate::error::{DwarfError, Result};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

/// Element type for tensors: `f32` for deployment, `f64` for gradient checks.
/// A graph holds a single element type end to end; mixing requires an
/// explicit copy through [`Tensor::to_f64_vec`] / [`Tensor::from_vec`].
pub trait Scalar:
    Copy
    + Clone
    + PartialOrd
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
    + std::ops::AddAssign
{
    const ZERO: Self;
    const ONE: Self;
    /// Bit width of the on-disk representation this type round-trips through.
    const BITS: u32;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn from_f32(v: f32) -> Self;
    fn to_f32(self) -> f32;
    fn abs(self) -> Self;
    fn sqrt(self) -> Self;
    fn is_finite(self) -> bool;

    /// c[m x n] = a[m x k] * b[k x n] + beta * c, row-major, with explicit
    /// strides so transposed views need no copy.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
    );
}

macro_rules! impl_scalar {
    ($t:ty, $bits:expr, $gemm:path) => {
        impl Scalar for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;
            const BITS: u32 = $bits;

            #[inline(always)]
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            #[inline(always)]
            fn to_f64(self) -> f64 {
                self as f64
            }
            #[inline(always)]
            fn from_f32(v: f32) -> Self {
                v as $t
            }
            #[inline(always)]
            fn to_f32(self) -> f32 {
                self as f32
            }
            #[inline(always)]
            fn abs(self) -> Self {
                <$t>::abs(self)
            }
            #[inline(always)]
            fn sqrt(self) -> Self {
                <$t>::sqrt(self)
            }
            #[inline(always)]
            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
            ) {
                assert!(c.len() >= m * n);
                // Deterministic: matrixmultiply is sequential without threading.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, 32, matrixmultiply::sgemm);
impl_scalar!(f64, 64, matrixmultiply::dgemm);

/// Logical shape of a 4-dimensional tensor: batch, channels, height, width.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    pub fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    /// Flat index of element (n, c, y, x) in row-major NCHW order.
    #[inline(always)]
    pub fn idx(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.c + c) * self.h + y) * self.w + x
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

/// Unique identity of a tensor node, used as the gradient key.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct TensorId(u64);

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

impl TensorId {
    fn fresh() -> Self {
        TensorId(NEXT_ID.fetch_add(1, Ordering::Relaxed))
    }
}

pub(crate) struct TensorInner<T: Scalar> {
    id: TensorId,
    shape: Shape,
    data: Arc<Vec<T>>,
    requires_grad: bool,
    op: Option<Op<T>>,
}

/// Cheaply clonable handle to an immutable tensor node.
pub struct Tensor<T: Scalar> {
    inner: Arc<TensorInner<T>>,
}

impl<T: Scalar> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor {
            inner: Arc::clone(&self.inner),
        }
    }
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Tensor(id={:?}, shape={}, grad={})",
            self.inner.id,
            self.inner.shape,
            self.inner.requires_grad
        )
    }
}

impl<T: Scalar> Tensor<T> {
    /// Constant leaf (no gradient).
    pub fn from_vec(data: Vec<T>, shape: Shape) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(DwarfError::shape(
                "from_vec",
                format!("{} elements for shape {}", data.len(), shape),
            ));
        }
        Ok(Self::leaf(data, shape, false))
    }

    /// Trainable leaf: participates in backward and receives a gradient slot.
    pub fn param(data: Vec<T>, shape: Shape) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(DwarfError::shape(
                "param",
                format!("{} elements for shape {}", data.len(), shape),
            ));
        }
        Ok(Self::leaf(data, shape, true))
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::leaf(vec![T::ZERO; shape.numel()], shape, false)
    }

    pub fn full(value: T, shape: Shape) -> Self {
        Self::leaf(vec![value; shape.numel()], shape, false)
    }

    pub fn scalar(value: T) -> Self {
        Self::leaf(vec![value], Shape::new(1, 1, 1, 1), false)
    }

    fn leaf(data: Vec<T>, shape: Shape, requires_grad: bool) -> Self {
        Tensor {
            inner: Arc::new(TensorInner {
                id: TensorId::fresh(),
                shape,
                data: Arc::new(data),
                requires_grad,
                op: None,
            }),
        }
    }

    pub(crate) fn from_op(data: Vec<T>, shape: Shape, op: Op<T>) -> Self {
        debug_assert_eq!(data.len(), shape.numel());
        let requires_grad = op.inputs().iter().any(|t| t.requires_grad());
        Tensor {
            inner: Arc::new(TensorInner {
                id: TensorId::fresh(),
                shape,
                data: Arc::new(data),
                requires_grad,
                op: if requires_grad { Some(op) } else { None },
            }),
        }
    }

    pub fn id(&self) -> TensorId {
        self.inner.id
    }

    pub fn shape(&self) -> Shape {
        self.inner.shape
    }

    pub fn data(&self) -> &[T] {
        &self.inner.data
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub(crate) fn op(&self) -> Option<&Op<T>> {
        self.inner.op.as_ref()
    }

    /// Same values, fresh identity, cut off from the graph.
    pub fn detach(&self) -> Tensor<T> {
        Tensor {
            inner: Arc::new(TensorInner {
                id: TensorId::fresh(),
                shape: self.inner.shape,
                data: Arc::clone(&self.inner.data),
                requires_grad: false,
                op: None,
            }),
        }
    }

    /// In-place update of a leaf's storage (optimizer step). Fails on graph
    /// nodes: interior values are owned by the trace that produced them.
    pub(crate) fn update_data(&mut self, f: impl FnOnce(&mut [T])) -> Result<()> {
        if self.inner.op.is_some() {
            return Err(DwarfError::invalid(
                "update_data on a non-leaf tensor".to_string(),
            ));
        }
        let inner = Arc::make_mut_inner(&mut self.inner);
        let data = Arc::make_mut(&mut inner.data);
        f(data);
        Ok(())
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data().iter().map(|v| v.to_f64()).collect()
    }

    pub fn to_f32_vec(&self) -> Vec<f32> {
        self.data().iter().map(|v| v.to_f32()).collect()
    }

    /// Value of a 1-element tensor.
    pub fn item(&self) -> Result<T> {
        if self.shape().numel() != 1 {
            return Err(DwarfError::shape(
                "item",
                format!("tensor has shape {}", self.shape()),
            ));
        }
        Ok(self.data()[0])
    }
}

// Arc::make_mut on the inner struct: TensorInner is not Clone (op graph
// handles), so splitting a shared leaf copies only the id/shape and re-shares
// the data Arc, then make_mut on the data Arc does the actual copy-on-write.
trait MakeMutInner<T: Scalar> {
    fn make_mut_inner(this: &mut Arc<TensorInner<T>>) -> &mut TensorInner<T>;
}

impl<T: Scalar> MakeMutInner<T> for Arc<TensorInner<T>> {
    fn make_mut_inner(this: &mut Arc<TensorInner<T>>) -> &mut TensorInner<T> {
        if Arc::get_mut(this).is_none() {
            let copy = TensorInner {
                id: this.id,
                shape: this.shape,
                data: Arc::clone(&this.data),
                requires_grad: this.requires_grad,
                op: None,
            };
            *this = Arc::new(copy);
        }
        Arc::get_mut(this).expect("unique after clone")
    }
}
