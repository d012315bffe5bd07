//! Correlation cost volumes.
//!
//! A planar correlation scores feature agreement between two maps at every
//! integer displacement within a search window: one output channel per
//! displacement, ordered row-major over (vertical i, horizontal j), each
//! score the channel-wise inner product divided by the channel count. The
//! horizontal-only case (`corr1d`) is the zero-vertical-radius case of the
//! same kernel, so both layouts agree bit for bit where they overlap.
//!
//! A curve correlation takes two 1D volumes (disparity cost curves) and
//! scores them against each other over spatial displacements (i, j) and a
//! curve shift h, ordered (i, then j, then h), normalized by curve length.
//! Matching curves whose best disparities differ by delta peak at h = delta.
//! Inputs should be the raw pre-activation curves.
//!
//! Displacements that reach outside the image contribute zero, so border
//! scores shrink instead of wrapping.

use crate::error::{DwarfError, Result};
use crate::tensor::{Op, Scalar, Shape, Tensor};

/// Search-window radii for a correlation op. `r_z` is the curve-shift radius
/// and is zero for planar correlation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CorrSpec {
    pub r_y: usize,
    pub r_x: usize,
    pub r_z: usize,
}

impl CorrSpec {
    pub fn channels(&self) -> usize {
        (2 * self.r_y + 1) * (2 * self.r_x + 1) * (2 * self.r_z + 1)
    }
}

/// A correlation result: the score tensor plus the radii that define its
/// channel layout.
#[derive(Clone)]
pub struct CostVolume<T: Scalar> {
    pub scores: Tensor<T>,
    pub spec: CorrSpec,
}

impl<T: Scalar> CostVolume<T> {
    /// Curve length when this volume is a pure disparity scan.
    pub fn curve_len(&self) -> usize {
        self.scores.shape().c
    }
}

fn check_pair<T: Scalar>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<Shape> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa != sb {
        return Err(DwarfError::shape(op, format!("{} vs {}", sa, sb)));
    }
    if sa.c == 0 {
        return Err(DwarfError::shape(op, "zero feature channels".to_string()));
    }
    Ok(sa)
}

/// Horizontal-window correlation: channels scan j in [-r_x, r_x].
pub fn corr1d<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, r_x: usize) -> Result<CostVolume<T>> {
    corr2d(a, b, 0, r_x)
}

/// Rectangular-window correlation: channels scan (i, j) row-major,
/// i in [-r_y, r_y] outer, j in [-r_x, r_x] inner.
pub fn corr2d<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, r_y: usize, r_x: usize) -> Result<CostVolume<T>> {
    let s = check_pair("correlation", a, b)?;
    let spec = CorrSpec { r_y, r_x, r_z: 0 };
    let out_shape = Shape::new(s.n, spec.channels(), s.h, s.w);
    let data = planar_forward(a.data(), b.data(), s, spec);
    let scores = Tensor::from_op(
        data,
        out_shape,
        Op::CorrPlanar {
            a: a.clone(),
            b: b.clone(),
            spec,
        },
    );
    Ok(CostVolume { scores, spec })
}

/// Correlation of two disparity cost curves over spatial displacements and
/// curve shifts; channels scan (i, j, h) with h innermost.
pub fn corr3d<T: Scalar>(
    c1: &CostVolume<T>,
    c2: &CostVolume<T>,
    r_y: usize,
    r_x: usize,
    r_z: usize,
) -> Result<CostVolume<T>> {
    for (name, c) in [("first", c1), ("second", c2)] {
        if c.spec.r_y != 0 || c.spec.r_z != 0 {
            return Err(DwarfError::invalid(format!(
                "curve correlation: {name} input is not a horizontal-scan volume"
            )));
        }
    }
    let s = check_pair("curve_correlation", &c1.scores, &c2.scores)?;
    let spec = CorrSpec { r_y, r_x, r_z };
    let out_shape = Shape::new(s.n, spec.channels(), s.h, s.w);
    let data = curve_forward(c1.scores.data(), c2.scores.data(), s, spec);
    let scores = Tensor::from_op(
        data,
        out_shape,
        Op::CorrCurve {
            a: c1.scores.clone(),
            b: c2.scores.clone(),
            spec,
        },
    );
    Ok(CostVolume { scores, spec })
}

/// In-range output x window for horizontal displacement j: x and x + j both
/// inside [0, w).
#[inline]
fn x_window(w: usize, j: isize) -> (usize, usize) {
    let lo = (-j).max(0) as usize;
    let hi = (w as isize - j.max(0)).max(0) as usize;
    (lo, hi.max(lo))
}

fn planar_forward<T: Scalar>(a: &[T], b: &[T], s: Shape, spec: CorrSpec) -> Vec<T> {
    let plane = s.plane();
    let ch = spec.channels();
    let mut out = vec![T::ZERO; s.n * ch * plane];
    let norm = T::from_f64(1.0 / s.c as f64);
    for n in 0..s.n {
        let a_n = &a[n * s.c * plane..(n + 1) * s.c * plane];
        let b_n = &b[n * s.c * plane..(n + 1) * s.c * plane];
        for i in -(spec.r_y as isize)..=(spec.r_y as isize) {
            for j in -(spec.r_x as isize)..=(spec.r_x as isize) {
                let chan = ((i + spec.r_y as isize) as usize) * (2 * spec.r_x + 1)
                    + (j + spec.r_x as isize) as usize;
                let dst = &mut out[(n * ch + chan) * plane..(n * ch + chan + 1) * plane];
                let (xl, xh) = x_window(s.w, j);
                for c in 0..s.c {
                    let ap = &a_n[c * plane..(c + 1) * plane];
                    let bp = &b_n[c * plane..(c + 1) * plane];
                    for y in 0..s.h {
                        let yb = y as isize + i;
                        if yb < 0 || yb >= s.h as isize {
                            continue;
                        }
                        let ar = &ap[y * s.w..(y + 1) * s.w];
                        let br = &bp[yb as usize * s.w..(yb as usize + 1) * s.w];
                        let dr = &mut dst[y * s.w..(y + 1) * s.w];
                        for x in xl..xh {
                            dr[x] += ar[x] * br[(x as isize + j) as usize];
                        }
                    }
                }
                for v in dst.iter_mut() {
                    *v = *v * norm;
                }
            }
        }
    }
    out
}

pub(crate) fn planar_backward<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    spec: CorrSpec,
    out_grad: &[T],
    need_a: bool,
    need_b: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>) {
    let s = a.shape();
    let plane = s.plane();
    let ch = spec.channels();
    let norm = T::from_f64(1.0 / s.c as f64);
    let mut ga = need_a.then(|| vec![T::ZERO; s.numel()]);
    let mut gb = need_b.then(|| vec![T::ZERO; s.numel()]);
    for n in 0..s.n {
        for i in -(spec.r_y as isize)..=(spec.r_y as isize) {
            for j in -(spec.r_x as isize)..=(spec.r_x as isize) {
                let chan = ((i + spec.r_y as isize) as usize) * (2 * spec.r_x + 1)
                    + (j + spec.r_x as isize) as usize;
                let g = &out_grad[(n * ch + chan) * plane..(n * ch + chan + 1) * plane];
                let (xl, xh) = x_window(s.w, j);
                for c in 0..s.c {
                    let base = (n * s.c + c) * plane;
                    for y in 0..s.h {
                        let yb = y as isize + i;
                        if yb < 0 || yb >= s.h as isize {
                            continue;
                        }
                        let gr = &g[y * s.w..(y + 1) * s.w];
                        for x in xl..xh {
                            let xb = (x as isize + j) as usize;
                            let gv = gr[x] * norm;
                            if let Some(ga) = ga.as_deref_mut() {
                                ga[base + y * s.w + x] +=
                                    gv * b.data()[base + yb as usize * s.w + xb];
                            }
                            if let Some(gb) = gb.as_deref_mut() {
                                gb[base + yb as usize * s.w + xb] +=
                                    gv * a.data()[base + y * s.w + x];
                            }
                        }
                    }
                }
            }
        }
    }
    (ga, gb)
}

fn curve_forward<T: Scalar>(c1: &[T], c2: &[T], s: Shape, spec: CorrSpec) -> Vec<T> {
    let plane = s.plane();
    let d_len = s.c;
    let ch = spec.channels();
    let mut out = vec![T::ZERO; s.n * ch * plane];
    let norm = T::from_f64(1.0 / d_len as f64);
    for n in 0..s.n {
        let c1n = &c1[n * d_len * plane..(n + 1) * d_len * plane];
        let c2n = &c2[n * d_len * plane..(n + 1) * d_len * plane];
        let mut chan = 0;
        for i in -(spec.r_y as isize)..=(spec.r_y as isize) {
            for j in -(spec.r_x as isize)..=(spec.r_x as isize) {
                for h in -(spec.r_z as isize)..=(spec.r_z as isize) {
                    let dst = &mut out[(n * ch + chan) * plane..(n * ch + chan + 1) * plane];
                    let (xl, xh) = x_window(s.w, j);
                    for d in 0..d_len as isize {
                        let dh = d + h;
                        if dh < 0 || dh >= d_len as isize {
                            continue;
                        }
                        let p1 = &c1n[d as usize * plane..(d as usize + 1) * plane];
                        let p2 = &c2n[dh as usize * plane..(dh as usize + 1) * plane];
                        for y in 0..s.h {
                            let yb = y as isize + i;
                            if yb < 0 || yb >= s.h as isize {
                                continue;
                            }
                            let r1 = &p1[y * s.w..(y + 1) * s.w];
                            let r2 = &p2[yb as usize * s.w..(yb as usize + 1) * s.w];
                            let dr = &mut dst[y * s.w..(y + 1) * s.w];
                            for x in xl..xh {
                                dr[x] += r1[x] * r2[(x as isize + j) as usize];
                            }
                        }
                    }
                    for v in dst.iter_mut() {
                        *v = *v * norm;
                    }
                    chan += 1;
                }
            }
        }
    }
    out
}

pub(crate) fn curve_backward<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    spec: CorrSpec,
    out_grad: &[T],
    need_a: bool,
    need_b: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>) {
    let s = a.shape();
    let plane = s.plane();
    let d_len = s.c;
    let ch = spec.channels();
    let norm = T::from_f64(1.0 / d_len as f64);
    let mut ga = need_a.then(|| vec![T::ZERO; s.numel()]);
    let mut gb = need_b.then(|| vec![T::ZERO; s.numel()]);
    for n in 0..s.n {
        let mut chan = 0;
        for i in -(spec.r_y as isize)..=(spec.r_y as isize) {
            for j in -(spec.r_x as isize)..=(spec.r_x as isize) {
                for h in -(spec.r_z as isize)..=(spec.r_z as isize) {
                    let g = &out_grad[(n * ch + chan) * plane..(n * ch + chan + 1) * plane];
                    let (xl, xh) = x_window(s.w, j);
                    for d in 0..d_len as isize {
                        let dh = d + h;
                        if dh < 0 || dh >= d_len as isize {
                            continue;
                        }
                        let b1 = (n * d_len + d as usize) * plane;
                        let b2 = (n * d_len + dh as usize) * plane;
                        for y in 0..s.h {
                            let yb = y as isize + i;
                            if yb < 0 || yb >= s.h as isize {
                                continue;
                            }
                            let gr = &g[y * s.w..(y + 1) * s.w];
                            for x in xl..xh {
                                let xb = (x as isize + j) as usize;
                                let gv = gr[x] * norm;
                                if let Some(ga) = ga.as_deref_mut() {
                                    ga[b1 + y * s.w + x] +=
                                        gv * b.data()[b2 + yb as usize * s.w + xb];
                                }
                                if let Some(gb) = gb.as_deref_mut() {
                                    gb[b2 + yb as usize * s.w + xb] +=
                                        gv * a.data()[b1 + y * s.w + x];
                                }
                            }
                        }
                    }
                    chan += 1;
                }
            }
        }
    }
    (ga, gb)
}

/// Independent pixel-major re-computation of planar correlation, used to
/// cross-check the production kernel.
pub fn planar_reference<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, r_y: usize, r_x: usize) -> Result<Vec<T>> {
    let s = check_pair("correlation_reference", a, b)?;
    let spec = CorrSpec { r_y, r_x, r_z: 0 };
    let mut out = vec![T::ZERO; s.n * spec.channels() * s.plane()];
    let mut pos = 0;
    for n in 0..s.n {
        for i in -(r_y as isize)..=(r_y as isize) {
            for j in -(r_x as isize)..=(r_x as isize) {
                for y in 0..s.h as isize {
                    for x in 0..s.w as isize {
                        let (yb, xb) = (y + i, x + j);
                        let mut acc = T::ZERO;
                        if yb >= 0 && xb >= 0 && yb < s.h as isize && xb < s.w as isize {
                            for c in 0..s.c {
                                acc += a.data()[s.idx(n, c, y as usize, x as usize)]
                                    * b.data()[s.idx(n, c, yb as usize, xb as usize)];
                            }
                        }
                        out[pos] = acc * T::from_f64(1.0 / s.c as f64);
                        pos += 1;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Independent pixel-major re-computation of curve correlation.
pub fn curve_reference<T: Scalar>(
    c1: &Tensor<T>,
    c2: &Tensor<T>,
    r_y: usize,
    r_x: usize,
    r_z: usize,
) -> Result<Vec<T>> {
    let s = check_pair("curve_correlation_reference", c1, c2)?;
    let spec = CorrSpec { r_y, r_x, r_z };
    let d_len = s.c as isize;
    let mut out = vec![T::ZERO; s.n * spec.channels() * s.plane()];
    let mut pos = 0;
    for n in 0..s.n {
        for i in -(r_y as isize)..=(r_y as isize) {
            for j in -(r_x as isize)..=(r_x as isize) {
                for h in -(r_z as isize)..=(r_z as isize) {
                    for y in 0..s.h as isize {
                        for x in 0..s.w as isize {
                            let (yb, xb) = (y + i, x + j);
                            let mut acc = T::ZERO;
                            if yb >= 0 && xb >= 0 && yb < s.h as isize && xb < s.w as isize {
                                for d in 0..d_len {
                                    let dh = d + h;
                                    if dh < 0 || dh >= d_len {
                                        continue;
                                    }
                                    acc += c1.data()[s.idx(n, d as usize, y as usize, x as usize)]
                                        * c2.data()
                                            [s.idx(n, dh as usize, yb as usize, xb as usize)];
                                }
                            }
                            out[pos] = acc * T::from_f64(1.0 / d_len as f64);
                            pos += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Outcome of aligning two cost curves by shifting the second.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShiftMatch {
    pub shift: i64,
    /// Best normalized score; 0 when degenerate.
    pub score: f64,
    /// Set when no informative alignment exists (a curve is all zero).
    pub degenerate: bool,
}

/// Best alignment shift between two curves under normalized correlation over
/// the overlapping window: score(h) compares curve1[d] against curve2[d - h],
/// so if curve2 is curve1 delayed by s samples the result is -s. Ties prefer
/// the smaller |h|, and among those the negative one.
pub fn best_curve_shift(curve1: &[f64], curve2: &[f64], max_shift: usize) -> Result<ShiftMatch> {
    if curve1.len() != curve2.len() || curve1.is_empty() {
        return Err(DwarfError::shape(
            "best_curve_shift",
            format!("curve lengths {} vs {}", curve1.len(), curve2.len()),
        ));
    }
    let all_zero = |c: &[f64]| c.iter().all(|&v| v == 0.0);
    if all_zero(curve1) || all_zero(curve2) {
        return Ok(ShiftMatch {
            shift: 0,
            score: 0.0,
            degenerate: true,
        });
    }
    let len = curve1.len() as i64;
    let mut best: Option<(i64, f64)> = None;
    // Visit shifts in order of increasing magnitude so strict improvement
    // implements the tie rule.
    let mut order = vec![0i64];
    for m in 1..=max_shift as i64 {
        order.push(-m);
        order.push(m);
    }
    for h in order {
        let lo = h.max(0);
        let hi = (len + h).min(len);
        if lo >= hi {
            continue;
        }
        let mut dot = 0.0;
        let mut n1 = 0.0;
        let mut n2 = 0.0;
        for d in lo..hi {
            let v1 = curve1[d as usize];
            let v2 = curve2[(d - h) as usize];
            dot += v1 * v2;
            n1 += v1 * v1;
            n2 += v2 * v2;
        }
        if n1 == 0.0 || n2 == 0.0 {
            continue;
        }
        let score = dot / (n1.sqrt() * n2.sqrt());
        if best.map_or(true, |(_, s)| score > s) {
            best = Some((h, score));
        }
    }
    match best {
        Some((shift, score)) => Ok(ShiftMatch {
            shift,
            score,
            degenerate: false,
        }),
        None => Ok(ShiftMatch {
            shift: 0,
            score: 0.0,
            degenerate: true,
        }),
    }
}

/// Number of matching scores considered per pixel by a coarse-to-fine search
/// over the given ranges: a (range/stride)^2 flow window, two horizontal
/// disparity scans of 2*range+1 samples, and, when the curve-shift radius is
/// given, a curve correlation adding (range/stride)^2 * (2*r_z + 1).
pub fn feature_count(
    flow_range: usize,
    disp_range: usize,
    stride: usize,
    curve_shift_radius: Option<usize>,
) -> usize {
    let window = (flow_range / stride) * (flow_range / stride);
    let disp = 2 * (2 * disp_range + 1);
    let curve = curve_shift_radius.map_or(0, |r| window * (2 * r + 1));
    window + disp + curve
}
