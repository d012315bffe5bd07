//! Training schedules: step budget, batching, cropping, learning-rate
//! decay, loss preset, and the label-source curriculum. Serializes to a
//! key = value text file.

use std::fmt;
use std::str::FromStr;

use crate::error::{DwarfError, Result};
use crate::training::{AugmentSpec, LossWeights};

/// Which label pool feeds each step: ground truth, teacher predictions, a
/// mixture, or teacher first then ground truth after a split step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DistillMode {
    GtOnly,
    PxOnly,
    PxPlusGt,
    PxThenGt { split: u64 },
}

impl fmt::Display for DistillMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DistillMode::GtOnly => write!(f, "gt"),
            DistillMode::PxOnly => write!(f, "px"),
            DistillMode::PxPlusGt => write!(f, "px+gt"),
            DistillMode::PxThenGt { split } => write!(f, "px>gt:{split}"),
        }
    }
}

impl FromStr for DistillMode {
    type Err = DwarfError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gt" => Ok(DistillMode::GtOnly),
            "px" => Ok(DistillMode::PxOnly),
            "px+gt" => Ok(DistillMode::PxPlusGt),
            other => match other.strip_prefix("px>gt:").map(str::parse) {
                Some(Ok(split)) => Ok(DistillMode::PxThenGt { split }),
                _ => Err(DwarfError::invalid(format!(
                    "unknown distillation mode {other:?}, expected gt, px, px+gt, or px>gt:STEP"
                ))),
            },
        }
    }
}

/// Loss preset selector, kept symbolic so schedules serialize cleanly.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossPreset {
    Pretrain,
    Finetune,
}

impl LossPreset {
    pub fn weights(self) -> LossWeights {
        match self {
            LossPreset::Pretrain => LossWeights::pretrain(),
            LossPreset::Finetune => LossWeights::finetune(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainSchedule {
    pub steps: u64,
    pub batch_size: usize,
    /// Crop size (width, height); one random top-left draw per sample.
    pub crop: (usize, usize),
    /// Optional zero-pad target applied before cropping.
    pub pad: Option<(usize, usize)>,
    pub base_lr: f64,
    /// Steps at which the learning rate multiplies by `decay_factor`.
    pub decay_points: Vec<u64>,
    pub decay_factor: f64,
    pub loss: LossPreset,
    pub augment: AugmentSpec,
    pub photometric: bool,
    pub zoom: bool,
    pub mode: DistillMode,
}

impl TrainSchedule {
    /// Learning rate in effect at a step: the base times one decay factor
    /// per passed decay point.
    pub fn lr_at(&self, step: u64) -> f64 {
        let passed = self.decay_points.iter().filter(|&&p| p <= step).count();
        self.base_lr * self.decay_factor.powi(passed as i32)
    }

    /// Zero steps is legal and makes training a no-op.
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(DwarfError::invalid("schedule: batch must be positive"));
        }
        // The network rejects dims not divisible by 64, so catch it here.
        if self.crop.0 == 0 || self.crop.1 == 0 || self.crop.0 % 64 != 0 || self.crop.1 % 64 != 0 {
            return Err(DwarfError::invalid(
                "schedule: crop dims must be positive multiples of 64",
            ));
        }
        if let Some(pad) = self.pad {
            if pad.0 < self.crop.0 || pad.1 < self.crop.1 {
                return Err(DwarfError::invalid("schedule: pad smaller than crop"));
            }
        }
        if !(self.base_lr > 0.0) || !(self.decay_factor > 0.0) {
            return Err(DwarfError::invalid("schedule: rates must be positive"));
        }
        let sorted = self
            .decay_points
            .windows(2)
            .all(|w| w[0] < w[1]);
        let in_range = self
            .decay_points
            .iter()
            .all(|&p| p > 0 && p < self.steps);
        if !sorted || !in_range {
            return Err(DwarfError::invalid(
                "schedule: decay points must be strictly increasing and inside (0, steps)",
            ));
        }
        if let DistillMode::PxThenGt { split } = self.mode {
            if split == 0 || split >= self.steps {
                return Err(DwarfError::invalid(
                    "schedule: pool split must fall inside (0, steps)",
                ));
            }
        }
        self.augment.validate()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        kv("steps", self.steps.to_string());
        kv("batch", self.batch_size.to_string());
        kv("crop", format!("{}x{}", self.crop.0, self.crop.1));
        if let Some((w, h)) = self.pad {
            kv("pad", format!("{w}x{h}"));
        }
        kv("lr", format!("{:e}", self.base_lr));
        kv(
            "decay_points",
            self.decay_points
                .iter()
                .map(u64::to_string)
                .collect::<Vec<_>>()
                .join(","),
        );
        kv("decay_factor", self.decay_factor.to_string());
        kv(
            "loss",
            match self.loss {
                LossPreset::Pretrain => "pretrain".into(),
                LossPreset::Finetune => "finetune".into(),
            },
        );
        kv("photometric", self.photometric.to_string());
        kv("zoom", self.zoom.to_string());
        kv("mode", self.mode.to_string());
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut schedule = make_schedule("flyingthings")?;
        schedule.pad = None;
        let parse_size = |v: &str| -> Result<(usize, usize)> {
            let bad = || DwarfError::invalid(format!("schedule: bad size {v:?}, expected WxH"));
            let (w, h) = v.split_once('x').ok_or_else(bad)?;
            Ok((
                w.parse().map_err(|_| bad())?,
                h.parse().map_err(|_| bad())?,
            ))
        };
        for (num, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                DwarfError::invalid(format!("schedule line {}: expected key = value", num + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| {
                DwarfError::invalid(format!("schedule line {}: bad {what} {value:?}", num + 1))
            };
            match key {
                "steps" => schedule.steps = value.parse().map_err(|_| bad("step count"))?,
                "batch" => schedule.batch_size = value.parse().map_err(|_| bad("batch size"))?,
                "crop" => schedule.crop = parse_size(value)?,
                "pad" => schedule.pad = Some(parse_size(value)?),
                "lr" => schedule.base_lr = value.parse().map_err(|_| bad("learning rate"))?,
                "decay_points" => {
                    schedule.decay_points = if value.is_empty() {
                        Vec::new()
                    } else {
                        value
                            .split(',')
                            .map(|p| p.trim().parse().map_err(|_| bad("decay point")))
                            .collect::<Result<_>>()?
                    }
                }
                "decay_factor" => {
                    schedule.decay_factor = value.parse().map_err(|_| bad("decay factor"))?
                }
                "loss" => {
                    schedule.loss = match value {
                        "pretrain" => LossPreset::Pretrain,
                        "finetune" => LossPreset::Finetune,
                        _ => return Err(bad("loss preset")),
                    }
                }
                "photometric" => {
                    schedule.photometric = value.parse().map_err(|_| bad("flag"))?
                }
                "zoom" => schedule.zoom = value.parse().map_err(|_| bad("flag"))?,
                "mode" => schedule.mode = value.parse()?,
                other => {
                    return Err(DwarfError::invalid(format!(
                        "schedule line {}: unknown key {other:?}",
                        num + 1
                    )))
                }
            }
        }
        schedule.validate()?;
        Ok(schedule)
    }
}

/// Named schedules. `flyingthings` pretrains from scratch, `kitti_ft`
/// fine-tunes on sparse labels, and `distilled_ft` fine-tunes on teacher
/// predictions for 40K steps before switching to ground truth.
pub fn make_schedule(preset: &str) -> Result<TrainSchedule> {
    let base = TrainSchedule {
        steps: 1_200_000,
        batch_size: 4,
        crop: (768, 384),
        pad: None,
        base_lr: 1e-4,
        decay_points: vec![400_000, 600_000, 800_000, 1_000_000],
        decay_factor: 0.5,
        loss: LossPreset::Pretrain,
        augment: AugmentSpec::default(),
        photometric: true,
        zoom: true,
        mode: DistillMode::GtOnly,
    };
    let kitti = TrainSchedule {
        steps: 50_000,
        crop: (896, 320),
        pad: Some((1280, 384)),
        base_lr: 3e-5,
        decay_points: vec![25_000, 35_000, 45_000],
        loss: LossPreset::Finetune,
        ..base.clone()
    };
    match preset {
        "flyingthings" => Ok(base),
        "kitti_ft" => Ok(kitti),
        "distilled_ft" => Ok(TrainSchedule {
            mode: DistillMode::PxThenGt { split: 40_000 },
            ..kitti
        }),
        other => Err(DwarfError::invalid(format!(
            "unknown schedule preset {other:?}, expected flyingthings, kitti_ft, or distilled_ft"
        ))),
    }
}
