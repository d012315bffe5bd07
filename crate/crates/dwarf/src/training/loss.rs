//! Multi-scale supervision: per-level masked L1 over the three tasks plus a
//! parameter regularizer. Errors are summed, not averaged, over valid
//! pixels; fixed crop sizes keep sums comparable across steps.

use log::warn;

use crate::data::SceneFlowField;
use crate::error::{DwarfError, Result};
use crate::network::SceneFlowOutput;
use crate::tensor::{ParamStore, Scalar, Shape, Tensor};

/// Magnitudes are supervised in units of 1/20 pixel at every level; the
/// per-level 2^k factor lives in the warping path, not here.
pub const SUPERVISION_SCALE: f64 = 20.0;

/// Loss composition: per-level weights, per-task weights, regularizer.
#[derive(Clone, Debug)]
pub struct LossWeights {
    /// (pyramid level, weight) for estimator outputs.
    pub alpha: Vec<(u32, f64)>,
    /// Weight on the full-resolution upsampled output, in pixel units /20.
    pub full_res_alpha: Option<f64>,
    pub eps_disp: f64,
    pub eps_change: f64,
    pub eps_flow: f64,
    pub gamma: f64,
    /// Replace the squared-L2 regularizer with a squared sum of absolute
    /// values.
    pub abs_norm_reg: bool,
}

impl LossWeights {
    /// Deep supervision across the pyramid, used from scratch.
    pub fn pretrain() -> Self {
        LossWeights {
            alpha: vec![(6, 0.32), (5, 0.08), (4, 0.02), (3, 0.01), (2, 0.005)],
            full_res_alpha: None,
            eps_disp: 1.0,
            eps_change: 1.0,
            eps_flow: 0.5,
            gamma: 0.0004,
            abs_norm_reg: false,
        }
    }

    /// Fine-tuning supervises only the full-resolution output.
    pub fn finetune() -> Self {
        LossWeights {
            alpha: Vec::new(),
            full_res_alpha: Some(0.001),
            ..LossWeights::pretrain()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.eps_disp, self.eps_change, self.eps_flow, self.gamma];
        if all.iter().any(|&v| v < 0.0 || !v.is_finite())
            || self.alpha.iter().any(|&(_, a)| a < 0.0 || !a.is_finite())
            || self.full_res_alpha.is_some_and(|a| a < 0.0 || !a.is_finite())
        {
            return Err(DwarfError::invalid("loss weights must be non-negative"));
        }
        Ok(())
    }
}

/// Decimate ground truth to pyramid level `level` and rescale magnitudes to
/// supervision units. A decimated pixel averages the valid pixels of its
/// block and is valid iff at least one contributor is.
pub fn downscale_gt(gt: &SceneFlowField, level: u32) -> SceneFlowField {
    let block = 1usize << level;
    let ow = gt.width.div_ceil(block);
    let oh = gt.height.div_ceil(block);
    let mut out = SceneFlowField::zeros(ow, oh);
    let inv = 1.0 / SUPERVISION_SCALE as f32;
    for oy in 0..oh {
        for ox in 0..ow {
            let mut sums = [0.0f64; 4];
            let mut count = 0u32;
            for y in oy * block..((oy + 1) * block).min(gt.height) {
                for x in ox * block..((ox + 1) * block).min(gt.width) {
                    let i = y * gt.width + x;
                    if gt.valid[i] {
                        sums[0] += gt.u[i] as f64;
                        sums[1] += gt.v[i] as f64;
                        sums[2] += gt.d1[i] as f64;
                        sums[3] += gt.d2[i] as f64;
                        count += 1;
                    }
                }
            }
            let o = oy * ow + ox;
            out.valid[o] = count > 0;
            if count > 0 {
                let norm = inv / count as f32;
                out.u[o] = sums[0] as f32 * norm;
                out.v[o] = sums[1] as f32 * norm;
                out.d1[o] = sums[2] as f32 * norm;
                out.d2[o] = sums[3] as f32 * norm;
            }
        }
    }
    out
}

struct Targets<T: Scalar> {
    flow: Tensor<T>,
    disp: Tensor<T>,
    change: Tensor<T>,
    mask: Tensor<T>,
    valid_count: usize,
}

fn batch_targets<T: Scalar>(fields: &[SceneFlowField], level: u32) -> Result<Targets<T>> {
    let first = downscale_gt(&fields[0], level);
    let (w, h) = (first.width, first.height);
    let plane = w * h;
    let n = fields.len();
    let mut flow = Vec::with_capacity(n * 2 * plane);
    let mut disp = Vec::with_capacity(n * plane);
    let mut change = Vec::with_capacity(n * plane);
    let mut mask = Vec::with_capacity(n * plane);
    let mut valid_count = 0usize;
    for (i, field) in fields.iter().enumerate() {
        let scaled;
        let f = if i == 0 {
            &first
        } else {
            scaled = downscale_gt(field, level);
            &scaled
        };
        if f.width != w || f.height != h {
            return Err(DwarfError::shape(
                "batch_targets",
                format!("{}x{} vs {}x{}", f.width, f.height, w, h),
            ));
        }
        flow.extend(f.u.iter().map(|&v| T::from_f32(v)));
        flow.extend(f.v.iter().map(|&v| T::from_f32(v)));
        disp.extend(f.d1.iter().map(|&v| T::from_f32(v)));
        change.extend(f.d2.iter().map(|&v| T::from_f32(v)));
        valid_count += f.valid.iter().filter(|&&v| v).count();
        mask.extend(f.valid.iter().map(|&v| if v { T::ONE } else { T::ZERO }));
    }
    Ok(Targets {
        flow: Tensor::from_vec(flow, Shape::new(n, 2, h, w))?,
        disp: Tensor::from_vec(disp, Shape::new(n, 1, h, w))?,
        change: Tensor::from_vec(change, Shape::new(n, 1, h, w))?,
        mask: Tensor::from_vec(mask, Shape::new(n, 1, h, w))?,
        valid_count,
    })
}

/// Sum of absolute prediction errors over valid pixels.
fn masked_l1<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>, mask: &Tensor<T>) -> Result<Tensor<T>> {
    let mask = if pred.shape().c == mask.shape().c {
        mask.clone()
    } else {
        Tensor::concat_channels(&vec![mask.clone(); pred.shape().c])?
    };
    Ok(pred.sub(target)?.abs().mul(&mask)?.sum_all())
}

fn task_sum<T: Scalar>(
    pred: &crate::network::FieldTriple<T>,
    t: &Targets<T>,
    weights: &LossWeights,
    alpha: f64,
) -> Result<Tensor<T>> {
    let d = masked_l1(&pred.disp, &t.disp, &t.mask)?.scale(T::from_f64(alpha * weights.eps_disp));
    let c =
        masked_l1(&pred.change, &t.change, &t.mask)?.scale(T::from_f64(alpha * weights.eps_change));
    let f = masked_l1(&pred.flow, &t.flow, &t.mask)?.scale(T::from_f64(alpha * weights.eps_flow));
    d.add(&c)?.add(&f)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub data: f64,
    pub regularizer: f64,
}

/// Differentiable training loss over a batch. `gt` is full-resolution and
/// is decimated here to each supervised level. Pass the parameter store to
/// include the regularizer. A level with no valid pixels contributes zero
/// and logs a warning.
pub fn multiscale_loss<T: Scalar>(
    output: &SceneFlowOutput<T>,
    gt: &[SceneFlowField],
    weights: &LossWeights,
    params: Option<&ParamStore<T>>,
) -> Result<(Tensor<T>, LossBreakdown)> {
    weights.validate()?;
    let batch = output.full_res.flow.shape().n;
    if gt.len() != batch {
        return Err(DwarfError::shape(
            "multiscale_loss",
            format!("{} fields for batch {batch}", gt.len()),
        ));
    }
    let final_level = output.levels.last().map(|l| l.level);

    let mut data: Option<Tensor<T>> = None;
    let mut add_term = |term: Tensor<T>| -> Result<()> {
        data = Some(match data.take() {
            Some(acc) => acc.add(&term)?,
            None => term,
        });
        Ok(())
    };

    for &(level, alpha) in &weights.alpha {
        let triple = if Some(level) == final_level {
            output.quarter_res()
        } else {
            &output
                .levels
                .iter()
                .find(|l| l.level == level)
                .ok_or_else(|| {
                    DwarfError::invalid(format!("no level {level} output to supervise"))
                })?
                .fields
        };
        let targets = batch_targets::<T>(gt, level)?;
        check_dims("multiscale_loss", triple, &targets)?;
        if targets.valid_count == 0 {
            warn!("no valid ground truth at level {level}; term skipped");
            continue;
        }
        add_term(task_sum(triple, &targets, weights, alpha)?)?;
    }

    if let Some(alpha) = weights.full_res_alpha {
        let targets = batch_targets::<T>(gt, 0)?;
        let inv = T::from_f64(1.0 / SUPERVISION_SCALE);
        let scaled = crate::network::FieldTriple {
            flow: output.full_res.flow.scale(inv),
            disp: output.full_res.disp.scale(inv),
            change: output.full_res.change.scale(inv),
        };
        check_dims("multiscale_loss full-res", &scaled, &targets)?;
        if targets.valid_count == 0 {
            warn!("no valid ground truth at full resolution; term skipped");
        } else {
            add_term(task_sum(&scaled, &targets, weights, alpha)?)?;
        }
    }

    let data = data.unwrap_or_else(|| Tensor::scalar(T::ZERO));
    let data_value = data.item()?.to_f64();

    let mut reg_value = 0.0;
    let total = match params {
        Some(store) if weights.gamma > 0.0 => {
            let mut acc: Option<Tensor<T>> = None;
            for (_, p) in store.iter() {
                let part = if weights.abs_norm_reg {
                    p.abs().sum_all()
                } else {
                    p.sq_sum()
                };
                acc = Some(match acc {
                    Some(a) => a.add(&part)?,
                    None => part,
                });
            }
            let reg = match acc {
                Some(norm) if weights.abs_norm_reg => {
                    norm.mul(&norm)?.scale(T::from_f64(weights.gamma))
                }
                Some(norm) => norm.scale(T::from_f64(weights.gamma)),
                None => Tensor::scalar(T::ZERO),
            };
            reg_value = reg.item()?.to_f64();
            data.add(&reg)?
        }
        _ => data,
    };

    Ok((
        total,
        LossBreakdown {
            total: data_value + reg_value,
            data: data_value,
            regularizer: reg_value,
        },
    ))
}

fn check_dims<T: Scalar>(
    op: &'static str,
    pred: &crate::network::FieldTriple<T>,
    t: &Targets<T>,
) -> Result<()> {
    if pred.flow.shape() != t.flow.shape() {
        return Err(DwarfError::shape(
            op,
            format!("prediction {} vs target {}", pred.flow.shape(), t.flow.shape()),
        ));
    }
    Ok(())
}
