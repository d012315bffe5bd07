//! Architecture configuration and the ablation variants.

use crate::error::{DwarfError, Result};
use std::fmt;
use std::str::FromStr;

/// Task order used everywhere: optical flow, disparity, disparity change.
pub const TASKS: [&str; 3] = ["flow", "disp", "change"];
/// Output channels per task in the same order.
pub const TASK_CHANNELS: [usize; 3] = [2, 1, 1];

/// Shared-weight feature pyramid: six levels of three 3x3 convolutions, the
/// first at stride 2, so level k sits at 1/2^k resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderConfig {
    pub channels: [usize; 6],
    pub strides: [usize; 3],
    /// Negative slope of the leaky rectifier used throughout the network.
    pub alpha: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            channels: [16, 32, 64, 96, 128, 196],
            strides: [2, 1, 1],
            alpha: 0.1,
        }
    }
}

impl EncoderConfig {
    pub fn conv_count(&self) -> usize {
        self.channels.len() * self.strides.len()
    }
}

/// Per-level estimator: a three-conv trunk and a two-conv head per task,
/// followed by a linear 3x3 prediction convolution. `zeta_carry` is the
/// channel count each head feature is compressed to when handed down a level.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorConfig {
    pub backbone: [usize; 3],
    pub head: [usize; 2],
    pub zeta_carry: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            backbone: [128, 128, 96],
            head: [64, 32],
            zeta_carry: 2,
        }
    }
}

/// Dilated residual refinement applied per task at the finest level.
#[derive(Clone, Debug, PartialEq)]
pub struct RefinementConfig {
    pub channels: [usize; 6],
    pub dilations: [usize; 6],
}

impl Default for RefinementConfig {
    fn default() -> Self {
        RefinementConfig {
            channels: [128, 128, 128, 96, 64, 32],
            dilations: [1, 2, 4, 8, 16, 1],
        }
    }
}

impl RefinementConfig {
    /// Receptive field of the dilated stack (3x3 kernels): 1 + 2 * sum of
    /// dilations. Wide enough to out-span the correlation search window.
    pub fn receptive_field(&self) -> usize {
        1 + 2 * self.dilations.iter().sum::<usize>()
    }
}

/// Ablation presets, smallest to largest.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// Plain estimators, no curve correlation, no refinement.
    Base,
    /// Densely connected estimators.
    Dense,
    /// Dense estimators plus the curve correlation input.
    Dense3d,
    /// Everything, including residual refinement.
    Full,
}

impl Variant {
    pub fn all() -> [Variant; 4] {
        [Variant::Base, Variant::Dense, Variant::Dense3d, Variant::Full]
    }

    pub fn config(self) -> ModelConfig {
        let mut cfg = ModelConfig::default();
        match self {
            Variant::Base => {
                cfg.dense = false;
                cfg.corr3d = false;
                cfg.refine = false;
            }
            Variant::Dense => {
                cfg.dense = true;
                cfg.corr3d = false;
                cfg.refine = false;
            }
            Variant::Dense3d => {
                cfg.dense = true;
                cfg.corr3d = true;
                cfg.refine = false;
            }
            Variant::Full => {
                cfg.dense = true;
                cfg.corr3d = true;
                cfg.refine = true;
            }
        }
        cfg
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Variant::Base => "base",
            Variant::Dense => "dense",
            Variant::Dense3d => "dense3d",
            Variant::Full => "full",
        };
        f.write_str(s)
    }
}

impl FromStr for Variant {
    type Err = DwarfError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(Variant::Base),
            "dense" => Ok(Variant::Dense),
            "dense3d" => Ok(Variant::Dense3d),
            "full" => Ok(Variant::Full),
            other => Err(DwarfError::invalid(format!(
                "unknown variant {other}; expected base, dense, dense3d or full"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub estimator: EstimatorConfig,
    pub refinement: RefinementConfig,
    /// Dense in-estimator connections (trunk and head convs see the running
    /// concatenation of the volume and earlier trunk outputs).
    pub dense: bool,
    /// Feed the curve correlation of the two disparity scans into the volume.
    pub corr3d: bool,
    /// Apply the dilated residual refinement at the finest level.
    pub refine: bool,
    /// Cut gradients at the warping displacements so coarser levels learn
    /// only from their own losses.
    pub detach_priors: bool,
    /// (vertical, horizontal) radius of the flow correlation window.
    pub flow_radii: (usize, usize),
    /// Horizontal radius of both disparity scans.
    pub disp_radius: usize,
    /// (vertical, horizontal, curve-shift) radii of the curve correlation.
    pub curve_radii: (usize, usize, usize),
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder: EncoderConfig::default(),
            estimator: EstimatorConfig::default(),
            refinement: RefinementConfig::default(),
            dense: true,
            corr3d: true,
            refine: true,
            detach_priors: false,
            flow_radii: (4, 4),
            disp_radius: 4,
            curve_radii: (4, 4, 0),
        }
    }
}

impl ModelConfig {
    pub fn full() -> Self {
        Variant::Full.config()
    }

    /// Coarsest pyramid level (and the level estimation starts at).
    pub fn top_level(&self) -> u32 {
        self.encoder.channels.len() as u32
    }

    /// Channels contributed by the correlation volumes.
    pub fn corr_channels(&self) -> usize {
        let disp_scan = 2 * self.disp_radius + 1;
        let flow_win = (2 * self.flow_radii.0 + 1) * (2 * self.flow_radii.1 + 1);
        let curve = if self.corr3d {
            (2 * self.curve_radii.0 + 1) * (2 * self.curve_radii.1 + 1) * (2 * self.curve_radii.2 + 1)
        } else {
            0
        };
        2 * disp_scan + flow_win + curve
    }

    /// Estimator input width at a level: reference features, correlation
    /// scores, and below the top level the carried predictions and head
    /// features from the coarser estimator.
    pub fn volume_channels(&self, level: u32) -> usize {
        let feats = self.encoder.channels[(level - 1) as usize];
        let carried = if level < self.top_level() {
            TASK_CHANNELS.iter().sum::<usize>() + TASKS.len() * self.estimator.zeta_carry
        } else {
            0
        };
        feats + self.corr_channels() + carried
    }

    pub fn validate(&self) -> Result<()> {
        let ch = &self.encoder.channels;
        if ch.windows(2).any(|w| w[0] >= w[1]) || ch[0] == 0 {
            return Err(DwarfError::invalid(
                "encoder channels must increase strictly".to_string(),
            ));
        }
        if self.encoder.strides[0] != 2 || self.encoder.strides[1..].iter().any(|&s| s != 1) {
            return Err(DwarfError::invalid(
                "encoder level must open with stride 2 and continue at stride 1".to_string(),
            ));
        }
        if self.encoder.alpha <= 0.0 || self.encoder.alpha >= 1.0 {
            return Err(DwarfError::invalid("rectifier slope must be in (0, 1)".to_string()));
        }
        if self.disp_radius == 0 || self.flow_radii.1 == 0 {
            return Err(DwarfError::invalid("search radii must be positive".to_string()));
        }
        if self.refinement.dilations.iter().any(|&d| d == 0) {
            return Err(DwarfError::invalid("dilations must be positive".to_string()));
        }
        Ok(())
    }

    /// Serialize the ablation switches and radii as key=value lines. The
    /// layer plans are architecture constants and are not written.
    pub fn to_text(&self) -> String {
        format!(
            "dense={}\ncorr3d={}\nrefine={}\ndetach_priors={}\nflow_radius_y={}\nflow_radius_x={}\ndisp_radius={}\ncurve_radius_y={}\ncurve_radius_x={}\ncurve_radius_z={}\n",
            self.dense,
            self.corr3d,
            self.refine,
            self.detach_priors,
            self.flow_radii.0,
            self.flow_radii.1,
            self.disp_radius,
            self.curve_radii.0,
            self.curve_radii.1,
            self.curve_radii.2,
        )
    }

    /// Parse key=value lines produced by [`to_text`]. Unlisted keys keep
    /// their defaults; unknown keys are rejected.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                DwarfError::invalid(format!("model config line {}: missing '='", ln + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let parse_bool = |v: &str| -> Result<bool> {
                v.parse::<bool>()
                    .map_err(|_| DwarfError::invalid(format!("model config line {}: bad bool {v}", ln + 1)))
            };
            let parse_usize = |v: &str| -> Result<usize> {
                v.parse::<usize>()
                    .map_err(|_| DwarfError::invalid(format!("model config line {}: bad number {v}", ln + 1)))
            };
            match key {
                "dense" => cfg.dense = parse_bool(value)?,
                "corr3d" => cfg.corr3d = parse_bool(value)?,
                "refine" => cfg.refine = parse_bool(value)?,
                "detach_priors" => cfg.detach_priors = parse_bool(value)?,
                "flow_radius_y" => cfg.flow_radii.0 = parse_usize(value)?,
                "flow_radius_x" => cfg.flow_radii.1 = parse_usize(value)?,
                "disp_radius" => cfg.disp_radius = parse_usize(value)?,
                "curve_radius_y" => cfg.curve_radii.0 = parse_usize(value)?,
                "curve_radius_x" => cfg.curve_radii.1 = parse_usize(value)?,
                "curve_radius_z" => cfg.curve_radii.2 = parse_usize(value)?,
                other => {
                    return Err(DwarfError::invalid(format!(
                        "model config line {}: unknown key {other}",
                        ln + 1
                    )))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
