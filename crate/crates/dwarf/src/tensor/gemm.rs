//! Thin matrix-product helpers over the `Scalar::gemm` hook.
//!
//! All matrices are dense row-major slices; the `_t` variants read an operand
//! as its transpose through strides, so no copies are made.

use crate::tensor::Scalar;

/// c[m x n] (+)= a[m x k] * b[k x n]
pub(crate) fn gemm_nn<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], beta: T, c: &mut [T]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n);
    T::gemm(m, k, n, a, k as isize, 1, b, n as isize, 1, beta, c);
}

/// c[m x n] (+)= a^T * b where a is stored [k x m]
pub(crate) fn gemm_tn<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], beta: T, c: &mut [T]) {
    debug_assert!(a.len() >= k * m && b.len() >= k * n);
    T::gemm(m, k, n, a, 1, m as isize, b, n as isize, 1, beta, c);
}

/// c[m x n] (+)= a * b^T where b is stored [n x k]
pub(crate) fn gemm_nt<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], beta: T, c: &mut [T]) {
    debug_assert!(a.len() >= m * k && b.len() >= n * k);
    T::gemm(m, k, n, a, k as isize, 1, b, 1, k as isize, beta, c);
}
