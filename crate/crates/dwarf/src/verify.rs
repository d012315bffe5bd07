//! The gradient suite: every differentiable operation checked against
//! central finite differences in f64, at probe points chosen away from
//! non-smooth loci (zeros of abs/leaky-relu, integer sampling positions).
//! One report row per op; the suite passes when every row stays under the
//! relative-error threshold.

use std::fmt::Write as _;

use crate::correlation::{corr1d, corr2d, corr3d};
use crate::data::SceneFlowField;
use crate::error::Result;
use crate::network::{FieldTriple, LevelOutput, SceneFlowOutput};
use crate::tensor::{finite_difference_check, probe_data, ConvSpec, FdCheck, Shape, Tensor};
use crate::training::{multiscale_loss, LossWeights};
use crate::warp::{bilinear_sample, scale_prior, warp_by_disparity, warp_by_flow, warp_by_flow_and_change};

pub const FD_STEP: f64 = 1e-6;
pub const FD_THRESHOLD: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub threshold: f64,
    pub checks: Vec<FdCheck>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passes(self.threshold))
    }

    pub fn max_rel_err(&self) -> f64 {
        self.checks.iter().map(|c| c.max_rel_err).fold(0.0, f64::max)
    }

    /// One line per op: name, coordinates checked, worst relative error.
    pub fn table(&self) -> String {
        let mut out = String::from("op                        coords   max rel err   status\n");
        for c in &self.checks {
            writeln!(
                out,
                "{:<24} {:>7} {:>13.3e}   {}",
                c.name,
                c.coords_checked,
                c.max_rel_err,
                if c.passes(self.threshold) { "pass" } else { "FAIL" }
            )
            .expect("string write");
        }
        writeln!(
            out,
            "suite {} ({} ops, threshold {:.0e})",
            if self.passed() { "passed" } else { "FAILED" },
            self.checks.len(),
            self.threshold
        )
        .expect("string write");
        out
    }
}

fn shifted(shape: Shape, salt: u64, scale: f64, offset: f64) -> Vec<f64> {
    probe_data(shape, salt).iter().map(|v| offset + scale * v).collect()
}

/// Ground truth for the loss checks: constants far from the prediction
/// probes so no absolute-error term sits at its kink, one pixel invalid to
/// exercise masking.
fn loss_gt(w: usize, h: usize) -> SceneFlowField {
    let n = w * h;
    let mut valid = vec![true; n];
    valid[1] = false;
    SceneFlowField {
        width: w,
        height: h,
        u: vec![60.0; n],
        v: vec![-40.0; n],
        d1: vec![80.0; n],
        d2: vec![100.0; n],
        valid,
    }
}

fn output_from(fields: FieldTriple<f64>, level: u32) -> SceneFlowOutput<f64> {
    SceneFlowOutput {
        levels: vec![LevelOutput {
            level,
            fields: FieldTriple {
                flow: fields.flow.clone(),
                disp: fields.disp.clone(),
                change: fields.change.clone(),
            },
        }],
        refined: None,
        full_res: fields,
    }
}

/// Run every check. Deterministic: same probes, same order, every time.
pub fn run_gradient_suite() -> Result<SuiteReport> {
    let mut checks = Vec::new();
    let mut run = |check: Result<FdCheck>| -> Result<()> {
        checks.push(check?);
        Ok(())
    };

    let s = Shape::new(1, 2, 3, 4);
    run(finite_difference_check(
        "add",
        &[(probe_data(s, 1), s), (probe_data(s, 2), s)],
        FD_STEP,
        |xs| xs[0].add(&xs[1]),
    ))?;
    run(finite_difference_check(
        "sub",
        &[(probe_data(s, 3), s), (probe_data(s, 4), s)],
        FD_STEP,
        |xs| xs[0].sub(&xs[1]),
    ))?;
    run(finite_difference_check(
        "mul",
        &[(probe_data(s, 5), s), (probe_data(s, 6), s)],
        FD_STEP,
        |xs| xs[0].mul(&xs[1]),
    ))?;
    run(finite_difference_check("scale", &[(probe_data(s, 7), s)], FD_STEP, |xs| {
        Ok(xs[0].scale(-1.7))
    }))?;
    run(finite_difference_check("abs", &[(probe_data(s, 8), s)], FD_STEP, |xs| {
        Ok(xs[0].abs())
    }))?;
    run(finite_difference_check(
        "leaky_relu",
        &[(probe_data(s, 9), s)],
        FD_STEP,
        |xs| Ok(xs[0].leaky_relu(0.1)),
    ))?;
    run(finite_difference_check("sum_all", &[(probe_data(s, 10), s)], FD_STEP, |xs| {
        Ok(xs[0].sum_all())
    }))?;
    run(finite_difference_check("sq_sum", &[(probe_data(s, 11), s)], FD_STEP, |xs| {
        Ok(xs[0].sq_sum())
    }))?;
    let s4 = Shape::new(1, 4, 3, 4);
    run(finite_difference_check(
        "slice_channels",
        &[(probe_data(s4, 12), s4)],
        FD_STEP,
        |xs| xs[0].slice_channels(1, 3),
    ))?;
    run(finite_difference_check(
        "concat_channels",
        &[(probe_data(s, 13), s), (probe_data(s4, 14), s4)],
        FD_STEP,
        |xs| Tensor::concat_channels(&[xs[0].clone(), xs[1].clone()]),
    ))?;

    let xin = Shape::new(1, 2, 5, 6);
    let w33 = Shape::new(3, 2, 3, 3);
    let b3 = Shape::new(1, 3, 1, 1);
    run(finite_difference_check(
        "conv2d_stride1",
        &[(probe_data(xin, 15), xin), (probe_data(w33, 16), w33), (probe_data(b3, 17), b3)],
        FD_STEP,
        |xs| xs[0].conv2d(&xs[1], &xs[2], ConvSpec::same(3, 1, 1)),
    ))?;
    run(finite_difference_check(
        "conv2d_stride2",
        &[(probe_data(xin, 18), xin), (probe_data(w33, 19), w33), (probe_data(b3, 20), b3)],
        FD_STEP,
        |xs| xs[0].conv2d(&xs[1], &xs[2], ConvSpec::same(3, 2, 1)),
    ))?;
    run(finite_difference_check(
        "conv2d_dilated",
        &[(probe_data(xin, 21), xin), (probe_data(w33, 22), w33), (probe_data(b3, 23), b3)],
        FD_STEP,
        |xs| xs[0].conv2d(&xs[1], &xs[2], ConvSpec::same(3, 1, 2)),
    ))?;
    let xt = Shape::new(1, 3, 3, 4);
    let wt = Shape::new(3, 2, 4, 4);
    let bt = Shape::new(1, 2, 1, 1);
    run(finite_difference_check(
        "conv2d_transpose",
        &[(probe_data(xt, 24), xt), (probe_data(wt, 25), wt), (probe_data(bt, 26), bt)],
        FD_STEP,
        |xs| xs[0].conv2d_transpose(&xs[1], &xs[2], 2),
    ))?;

    let su = Shape::new(1, 2, 3, 3);
    run(finite_difference_check(
        "bilinear_upsample",
        &[(probe_data(su, 27), su)],
        FD_STEP,
        |xs| xs[0].bilinear_upsample(2),
    ))?;
    // Absolute sample positions strictly inside the frame, off the integer
    // grid so the interpolant is smooth at the probe.
    let src_s = Shape::new(1, 2, 3, 4);
    let grid_s = Shape::new(1, 2, 2, 3);
    let coords: Vec<f64> = vec![
        0.4, 1.6, 2.3, 0.7, 2.6, 1.4, // x positions
        0.3, 1.7, 0.6, 1.2, 0.4, 1.6, // y positions
    ];
    run(finite_difference_check(
        "bilinear_sample",
        &[(probe_data(src_s, 28), src_s), (coords, grid_s)],
        FD_STEP,
        |xs| bilinear_sample(&xs[0], &xs[1]),
    ))?;

    let ws = Shape::new(1, 2, 4, 5);
    let flow_s = Shape::new(1, 2, 4, 5);
    let one_s = Shape::new(1, 1, 4, 5);
    run(finite_difference_check(
        "warp_by_flow",
        &[(probe_data(ws, 29), ws), (probe_data(flow_s, 30), flow_s)],
        FD_STEP,
        |xs| warp_by_flow(&xs[0], &xs[1]),
    ))?;
    run(finite_difference_check(
        "warp_by_disparity",
        &[(probe_data(ws, 31), ws), (shifted(one_s, 32, 0.4, 1.3), one_s)],
        FD_STEP,
        |xs| warp_by_disparity(&xs[0], &xs[1]),
    ))?;
    run(finite_difference_check(
        "warp_by_flow_and_change",
        &[
            (probe_data(ws, 33), ws),
            (probe_data(flow_s, 34), flow_s),
            (shifted(one_s, 35, 0.4, 2.2), one_s),
        ],
        FD_STEP,
        |xs| warp_by_flow_and_change(&xs[0], &xs[1], &xs[2]),
    ))?;
    run(finite_difference_check(
        "scale_prior",
        &[(probe_data(flow_s, 36), flow_s)],
        FD_STEP,
        |xs| scale_prior(&xs[0], 3),
    ))?;

    let feat = Shape::new(1, 3, 3, 4);
    run(finite_difference_check(
        "corr1d",
        &[(probe_data(feat, 37), feat), (probe_data(feat, 38), feat)],
        FD_STEP,
        |xs| Ok(corr1d(&xs[0], &xs[1], 3)?.scores),
    ))?;
    run(finite_difference_check(
        "corr2d",
        &[(probe_data(feat, 39), feat), (probe_data(feat, 40), feat)],
        FD_STEP,
        |xs| Ok(corr2d(&xs[0], &xs[1], 1, 1)?.scores),
    ))?;
    run(finite_difference_check(
        "corr3d",
        &[
            (probe_data(feat, 41), feat),
            (probe_data(feat, 42), feat),
            (probe_data(feat, 43), feat),
            (probe_data(feat, 44), feat),
        ],
        FD_STEP,
        |xs| {
            let first = corr1d(&xs[0], &xs[1], 2)?;
            let second = corr1d(&xs[2], &xs[3], 2)?;
            Ok(corr3d(&first, &second, 1, 1, 1)?.scores)
        },
    ))?;

    // Training loss straight through to the prediction tensors, both the
    // per-level path and the full-resolution fine-tune path.
    let lf = Shape::new(1, 2, 4, 4);
    let ls = Shape::new(1, 1, 4, 4);
    run(finite_difference_check(
        "multiscale_loss",
        &[(probe_data(lf, 45), lf), (probe_data(ls, 46), ls), (probe_data(ls, 47), ls)],
        FD_STEP,
        |xs| {
            let fields = FieldTriple {
                flow: xs[0].clone(),
                disp: xs[1].clone(),
                change: xs[2].clone(),
            };
            let mut weights = LossWeights::pretrain();
            weights.alpha = vec![(0, 0.32)];
            weights.gamma = 0.0;
            let (loss, _) = multiscale_loss(&output_from(fields, 0), &[loss_gt(4, 4)], &weights, None)?;
            Ok(loss)
        },
    ))?;
    run(finite_difference_check(
        "loss_full_resolution",
        &[(probe_data(lf, 48), lf), (probe_data(ls, 49), ls), (probe_data(ls, 50), ls)],
        FD_STEP,
        |xs| {
            let fields = FieldTriple {
                flow: xs[0].clone(),
                disp: xs[1].clone(),
                change: xs[2].clone(),
            };
            let weights = LossWeights::finetune();
            let (loss, _) = multiscale_loss(&output_from(fields, 2), &[loss_gt(4, 4)], &weights, None)?;
            Ok(loss)
        },
    ))?;

    Ok(SuiteReport {
        threshold: FD_THRESHOLD,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_op_beats_the_threshold() {
        let report = run_gradient_suite().unwrap();
        let table = report.table();
        assert!(report.passed(), "suite failed:\n{table}");
        assert!(report.checks.len() >= 20, "expected full coverage, got {}", report.checks.len());
        assert!(table.contains("corr3d"));
        assert!(table.contains("multiscale_loss"));
        assert!(report.max_rel_err() < FD_THRESHOLD);
    }

    #[test]
    fn report_flags_failures() {
        let report = SuiteReport {
            threshold: 1e-5,
            checks: vec![FdCheck {
                name: "broken".into(),
                max_rel_err: 0.5,
                worst: (0, 0),
                coords_checked: 1,
            }],
        };
        assert!(!report.passed());
        assert!(report.table().contains("FAIL"));
    }
}
