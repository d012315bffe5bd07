//! KITTI-style evaluation: endpoint error, outlier percentages, and the
//! combined scene-flow score. A pixel is an outlier when its error exceeds
//! 3 px AND 5% of the ground-truth magnitude, both strictly; the scene
//! score counts pixels that are outliers in any task (union semantics).

use std::fmt::Write as _;

use crate::data::SceneFlowField;
use crate::error::{DwarfError, Result};

pub const OUTLIER_ABS: f64 = 3.0;
pub const OUTLIER_REL: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Flow,
    Disp,
    Change,
}

fn check_same_size(op: &'static str, pred: &SceneFlowField, gt: &SceneFlowField) -> Result<()> {
    if pred.width != gt.width || pred.height != gt.height {
        return Err(DwarfError::shape(
            op,
            format!(
                "prediction {}x{} vs ground truth {}x{}",
                pred.width, pred.height, gt.width, gt.height
            ),
        ));
    }
    Ok(())
}

/// Per-pixel endpoint error, ignoring masks: |Δ| for the scalar tasks,
/// √(Δu² + Δv²) for flow.
pub fn endpoint_errors(pred: &SceneFlowField, gt: &SceneFlowField, task: Task) -> Result<Vec<f64>> {
    check_same_size("endpoint_errors", pred, gt)?;
    let n = gt.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        out.push(match task {
            Task::Flow => {
                let du = pred.u[i] as f64 - gt.u[i] as f64;
                let dv = pred.v[i] as f64 - gt.v[i] as f64;
                du.hypot(dv)
            }
            Task::Disp => (pred.d1[i] as f64 - gt.d1[i] as f64).abs(),
            Task::Change => (pred.d2[i] as f64 - gt.d2[i] as f64).abs(),
        });
    }
    Ok(out)
}

/// Per-pixel outlier flags, ignoring masks. Classification depends only on
/// the pixel itself, so any mask restriction leaves the flags unchanged.
pub fn outlier_flags(pred: &SceneFlowField, gt: &SceneFlowField, task: Task) -> Result<Vec<bool>> {
    let errors = endpoint_errors(pred, gt, task)?;
    let mut flags = Vec::with_capacity(errors.len());
    for (i, err) in errors.iter().enumerate() {
        let magnitude = match task {
            Task::Flow => (gt.u[i] as f64).hypot(gt.v[i] as f64),
            Task::Disp => (gt.d1[i] as f64).abs(),
            Task::Change => (gt.d2[i] as f64).abs(),
        };
        flags.push(*err > OUTLIER_ABS && *err > OUTLIER_REL * magnitude);
    }
    Ok(flags)
}

fn check_mask(op: &'static str, len: usize, mask: &[bool]) -> Result<()> {
    if mask.len() != len {
        return Err(DwarfError::shape(
            op,
            format!("mask length {} vs field {}", mask.len(), len),
        ));
    }
    Ok(())
}

/// Mean endpoint error over the mask; `None` when the mask is empty.
pub fn epe(
    pred: &SceneFlowField,
    gt: &SceneFlowField,
    mask: &[bool],
    task: Task,
) -> Result<Option<f64>> {
    check_mask("epe", gt.len(), mask)?;
    let errors = endpoint_errors(pred, gt, task)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (err, &m) in errors.iter().zip(mask) {
        if m {
            sum += err;
            count += 1;
        }
    }
    Ok((count > 0).then(|| sum / count as f64))
}

/// Percentage of masked pixels that are outliers; `None` on an empty mask.
pub fn outlier_rate(
    pred: &SceneFlowField,
    gt: &SceneFlowField,
    mask: &[bool],
    task: Task,
) -> Result<Option<f64>> {
    check_mask("outlier_rate", gt.len(), mask)?;
    let flags = outlier_flags(pred, gt, task)?;
    let mut hits = 0usize;
    let mut count = 0usize;
    for (&f, &m) in flags.iter().zip(mask) {
        if m {
            count += 1;
            hits += f as usize;
        }
    }
    Ok((count > 0).then(|| 100.0 * hits as f64 / count as f64))
}

/// Percentage of masked pixels that are outliers in any of the three
/// per-task flag vectors.
pub fn sf_all(
    f1: &[bool],
    d1: &[bool],
    d2: &[bool],
    mask: &[bool],
) -> Result<Option<f64>> {
    if f1.len() != mask.len() || d1.len() != mask.len() || d2.len() != mask.len() {
        return Err(DwarfError::shape(
            "sf_all",
            format!(
                "flag lengths {}/{}/{} vs mask {}",
                f1.len(),
                d1.len(),
                d2.len(),
                mask.len()
            ),
        ));
    }
    let mut hits = 0usize;
    let mut count = 0usize;
    for i in 0..mask.len() {
        if mask[i] {
            count += 1;
            hits += (f1[i] || d1[i] || d2[i]) as usize;
        }
    }
    Ok((count > 0).then(|| 100.0 * hits as f64 / count as f64))
}

#[derive(Clone, Copy, Debug, Default)]
struct TaskTally {
    err_sum: f64,
    outliers: usize,
    count: usize,
}

impl TaskTally {
    fn metrics(&self) -> Option<TaskMetrics> {
        (self.count > 0).then(|| TaskMetrics {
            epe: self.err_sum / self.count as f64,
            outlier_pct: 100.0 * self.outliers as f64 / self.count as f64,
            count: self.count,
        })
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Tally {
    flow: TaskTally,
    disp: TaskTally,
    change: TaskTally,
    union_outliers: usize,
    pixels: usize,
}

impl Tally {
    fn metrics(&self) -> MaskMetrics {
        MaskMetrics {
            flow: self.flow.metrics(),
            disp: self.disp.metrics(),
            change: self.change.metrics(),
            sf_all: (self.pixels > 0)
                .then(|| 100.0 * self.union_outliers as f64 / self.pixels as f64),
            pixels: self.pixels,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TaskMetrics {
    pub epe: f64,
    pub outlier_pct: f64,
    pub count: usize,
}

/// Metrics over one mask. Tasks are `None` when no pixel was evaluable.
#[derive(Clone, Debug)]
pub struct MaskMetrics {
    pub flow: Option<TaskMetrics>,
    pub disp: Option<TaskMetrics>,
    pub change: Option<TaskMetrics>,
    pub sf_all: Option<f64>,
    pub pixels: usize,
}

/// Evaluation summary: every metric over all valid pixels, plus the same
/// set restricted to non-occluded pixels when any sample supplied a mask.
#[derive(Clone, Debug)]
pub struct MetricReport {
    pub all: MaskMetrics,
    pub noc: Option<MaskMetrics>,
}

/// Streaming aggregator over (prediction, ground truth) pairs. Aggregation
/// is a sum of per-pixel contributions, so sample order never matters.
#[derive(Clone, Debug, Default)]
pub struct MetricAccumulator {
    all: Tally,
    noc: Tally,
    noc_seen: bool,
    samples: usize,
}

impl MetricAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn add(
        &mut self,
        pred: &SceneFlowField,
        gt: &SceneFlowField,
        noc: Option<&[bool]>,
    ) -> Result<()> {
        check_same_size("metrics", pred, gt)?;
        if let Some(mask) = noc {
            check_mask("metrics", gt.len(), mask)?;
        }
        let errors = [
            endpoint_errors(pred, gt, Task::Flow)?,
            endpoint_errors(pred, gt, Task::Disp)?,
            endpoint_errors(pred, gt, Task::Change)?,
        ];
        let flags = [
            outlier_flags(pred, gt, Task::Flow)?,
            outlier_flags(pred, gt, Task::Disp)?,
            outlier_flags(pred, gt, Task::Change)?,
        ];
        for i in 0..gt.len() {
            if !gt.valid[i] {
                continue;
            }
            let union = flags[0][i] || flags[1][i] || flags[2][i];
            for (tally, mask_ok) in [
                (&mut self.all, true),
                (&mut self.noc, noc.is_some_and(|m| m[i])),
            ] {
                if !mask_ok {
                    continue;
                }
                for (task, (errs, outs)) in [
                    (&mut tally.flow, (&errors[0], &flags[0])),
                    (&mut tally.disp, (&errors[1], &flags[1])),
                    (&mut tally.change, (&errors[2], &flags[2])),
                ] {
                    task.err_sum += errs[i];
                    task.outliers += outs[i] as usize;
                    task.count += 1;
                }
                tally.union_outliers += union as usize;
                tally.pixels += 1;
            }
        }
        self.noc_seen |= noc.is_some();
        self.samples += 1;
        Ok(())
    }

    pub fn report(&self) -> MetricReport {
        MetricReport {
            all: self.all.metrics(),
            noc: self.noc_seen.then(|| self.noc.metrics()),
        }
    }
}

fn push_mask_lines(out: &mut String, suffix: &str, m: &MaskMetrics) {
    let fmt = |v: Option<f64>| v.map_or("undefined".to_string(), |v| format!("{v}"));
    writeln!(out, "pixels{suffix}={}", m.pixels).unwrap();
    writeln!(out, "epe_flow{suffix}={}", fmt(m.flow.map(|t| t.epe))).unwrap();
    writeln!(out, "epe_disp{suffix}={}", fmt(m.disp.map(|t| t.epe))).unwrap();
    writeln!(out, "epe_change{suffix}={}", fmt(m.change.map(|t| t.epe))).unwrap();
    writeln!(out, "f1_all{suffix}={}", fmt(m.flow.map(|t| t.outlier_pct))).unwrap();
    writeln!(out, "d1_all{suffix}={}", fmt(m.disp.map(|t| t.outlier_pct))).unwrap();
    writeln!(out, "d2_all{suffix}={}", fmt(m.change.map(|t| t.outlier_pct))).unwrap();
    writeln!(out, "sf_all{suffix}={}", fmt(m.sf_all)).unwrap();
}

impl MetricReport {
    /// Flat key=value lines for scripting.
    pub fn lines(&self) -> String {
        let mut out = String::new();
        push_mask_lines(&mut out, "", &self.all);
        if let Some(noc) = &self.noc {
            push_mask_lines(&mut out, "_noc", noc);
        }
        out
    }

    /// Human-readable summary table.
    pub fn table(&self) -> String {
        let pct = |v: Option<f64>| v.map_or("   n/a".to_string(), |v| format!("{v:6.2}"));
        let epe = |v: Option<TaskMetrics>| {
            v.map_or("    n/a".to_string(), |t| format!("{:7.3}", t.epe))
        };
        let mut out = String::new();
        writeln!(out, "task        EPE   out%").unwrap();
        let rows = [
            ("flow  (F1)", self.all.flow),
            ("disp  (D1)", self.all.disp),
            ("change(D2)", self.all.change),
        ];
        for (name, t) in rows {
            writeln!(out, "{name} {} {}", epe(t), pct(t.map(|t| t.outlier_pct))).unwrap();
        }
        writeln!(out, "SF-All             {}", pct(self.all.sf_all)).unwrap();
        if let Some(noc) = &self.noc {
            writeln!(out, "SF-All (noc)       {}", pct(noc.sf_all)).unwrap();
        }
        out
    }
}
