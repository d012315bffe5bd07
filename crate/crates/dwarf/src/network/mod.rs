//! The scene-flow network: a shared-weight feature pyramid over all four
//! input views, per-level estimators that turn correlation volumes into flow,
//! disparity and disparity-change predictions, learned transposed-conv
//! upsampling between levels, and optional dilated refinement heads at the
//! finest estimation level.
//!
//! Estimation runs from level 6 (coarsest) down to level 2; the level-2
//! result, optionally refined, is upsampled 4x and scaled by 20 to produce
//! full-resolution fields in pixel units. Predictions inside the pyramid are
//! kept in scaled units: multiplying by 20 / 2^k converts a level-k estimate
//! into displacement pixels at that level's resolution.

mod config;

pub use config::{
    EncoderConfig, EstimatorConfig, ModelConfig, RefinementConfig, Variant, TASKS, TASK_CHANNELS,
};

use crate::correlation::{corr1d, corr2d, corr3d};
use crate::error::{DwarfError, Result};
use crate::tensor::{
    load_checkpoint, save_checkpoint, ConvSpec, ParamStore, Scalar, Shape, Tensor,
};
use crate::warp::{warp_by_disparity, warp_by_flow, warp_by_flow_and_change};
use rand::rngs::StdRng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use std::path::Path;

/// One prediction per task at a common resolution.
pub struct FieldTriple<T: Scalar> {
    pub flow: Tensor<T>,
    pub disp: Tensor<T>,
    pub change: Tensor<T>,
}

impl<T: Scalar> FieldTriple<T> {
    pub fn by_task(&self, task: usize) -> &Tensor<T> {
        match task {
            0 => &self.flow,
            1 => &self.disp,
            _ => &self.change,
        }
    }
}

pub struct LevelOutput<T: Scalar> {
    pub level: u32,
    pub fields: FieldTriple<T>,
}

pub struct SceneFlowOutput<T: Scalar> {
    /// Estimator outputs in processing order, level 6 first, level 2 last.
    pub levels: Vec<LevelOutput<T>>,
    /// Residual-refined level-2 fields when refinement is enabled.
    pub refined: Option<FieldTriple<T>>,
    /// Quarter-resolution result upsampled 4x and scaled to pixel units.
    pub full_res: FieldTriple<T>,
}

impl<T: Scalar> SceneFlowOutput<T> {
    /// The finest scaled-unit result: refined if present, else the level-2
    /// estimator output.
    pub fn quarter_res(&self) -> &FieldTriple<T> {
        self.refined
            .as_ref()
            .unwrap_or_else(|| &self.levels.last().expect("levels nonempty").fields)
    }
}

struct Carried<T: Scalar> {
    preds: [Tensor<T>; 3],
    zetas: [Tensor<T>; 3],
}

pub struct Dwarf<T: Scalar> {
    cfg: ModelConfig,
    params: ParamStore<T>,
}

impl<T: Scalar> Dwarf<T> {
    /// Build a model with freshly initialized parameters. Weights draw from
    /// a zero-mean Gaussian with variance 2 / fan-in; biases start at zero;
    /// refinement output convolutions start at zero so refinement begins as
    /// the identity. The same (config, seed) always yields the same model.
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamStore::new();
        let mut rng = StdRng::seed_from_u64(seed);
        register_params(&cfg, &mut params, &mut rng)?;
        Ok(Dwarf { cfg, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.total_elements()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(&self.params, path)
    }

    pub fn load(&mut self, path: &Path) -> Result<()> {
        let entries = load_checkpoint(path)?;
        self.params.load_values(&entries)
    }

    fn p(&self, name: &str) -> Result<&Tensor<T>> {
        self.params
            .get(name)
            .ok_or_else(|| DwarfError::invalid(format!("missing parameter {name}")))
    }

    fn act(&self, t: Tensor<T>) -> Tensor<T> {
        t.leaky_relu(T::from_f64(self.cfg.encoder.alpha))
    }

    fn conv(&self, x: &Tensor<T>, name: &str, spec: ConvSpec) -> Result<Tensor<T>> {
        let w = self.p(&format!("{name}.w"))?;
        let b = self.p(&format!("{name}.b"))?;
        x.conv2d(w, b, spec)
    }

    fn conv3_act(&self, x: &Tensor<T>, name: &str) -> Result<Tensor<T>> {
        Ok(self.act(self.conv(x, name, ConvSpec::same(3, 1, 1))?))
    }

    /// Feature pyramid for one image: levels 1..=6, halving resolution each
    /// level. Requires 3 channels and spatial sizes divisible by 64.
    pub fn encode(&self, image: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let s = image.shape();
        if s.c != 3 {
            return Err(DwarfError::shape(
                "encode",
                format!("expected 3 input channels, got {}", s),
            ));
        }
        if s.h % 64 != 0 || s.w % 64 != 0 || s.h == 0 || s.w == 0 {
            return Err(DwarfError::shape(
                "encode",
                format!("spatial size {}x{} not divisible by 64", s.h, s.w),
            ));
        }
        let enc = &self.cfg.encoder;
        let mut levels = Vec::with_capacity(enc.channels.len());
        let mut x = image.clone();
        for (li, _) in enc.channels.iter().enumerate() {
            for (ci, &stride) in enc.strides.iter().enumerate() {
                let spec = ConvSpec::same(3, stride, 1);
                x = self.act(self.conv(&x, &format!("encoder.l{}.c{}", li + 1, ci), spec)?);
            }
            levels.push(x.clone());
        }
        Ok(levels)
    }

    /// Channel count the level-k estimator expects.
    pub fn volume_channels(&self, level: u32) -> usize {
        self.cfg.volume_channels(level)
    }

    /// Run one estimator on an assembled input volume. The volume's channel
    /// count is validated against the level's expectation.
    fn estimate(&self, level: u32, volume: &Tensor<T>) -> Result<EstimateOut<T>> {
        let want = self.volume_channels(level);
        let got = volume.shape().c;
        if got != want {
            return Err(DwarfError::shape(
                "estimate",
                format!("level {level} volume has {got} channels, expected {want}"),
            ));
        }
        let pre = format!("est.k{level}");
        let (trunk, dense_ctx) = if self.cfg.dense {
            let b1 = self.conv3_act(volume, &format!("{pre}.b0"))?;
            let x2 = Tensor::concat_channels(&[volume.clone(), b1.clone()])?;
            let b2 = self.conv3_act(&x2, &format!("{pre}.b1"))?;
            let x3 = Tensor::concat_channels(&[volume.clone(), b1.clone(), b2.clone()])?;
            let b3 = self.conv3_act(&x3, &format!("{pre}.b2"))?;
            let ctx = Tensor::concat_channels(&[volume.clone(), b1, b2, b3])?;
            (ctx.clone(), Some(ctx))
        } else {
            let b1 = self.conv3_act(volume, &format!("{pre}.b0"))?;
            let b2 = self.conv3_act(&b1, &format!("{pre}.b1"))?;
            let b3 = self.conv3_act(&b2, &format!("{pre}.b2"))?;
            (b3, None)
        };
        let mut preds = Vec::with_capacity(3);
        let mut zetas = Vec::with_capacity(3);
        for task in TASKS {
            let h1 = self.conv3_act(&trunk, &format!("{pre}.{task}.h0"))?;
            let h_in = match &dense_ctx {
                Some(ctx) => Tensor::concat_channels(&[ctx.clone(), h1])?,
                None => h1,
            };
            let zeta = self.conv3_act(&h_in, &format!("{pre}.{task}.h1"))?;
            let pred = self.conv(&zeta, &format!("{pre}.{task}.pred"), ConvSpec::same(3, 1, 1))?;
            preds.push(pred);
            zetas.push(zeta);
        }
        Ok(EstimateOut {
            preds: [preds.remove(0), preds.remove(0), preds.remove(0)],
            zetas: [zetas.remove(0), zetas.remove(0), zetas.remove(0)],
        })
    }

    fn upsample_carried(&self, level: u32, est: &EstimateOut<T>) -> Result<Carried<T>> {
        let pre = format!("est.k{level}");
        let mut preds = Vec::with_capacity(3);
        let mut zetas = Vec::with_capacity(3);
        for (ti, task) in TASKS.iter().enumerate() {
            let pw = self.p(&format!("{pre}.{task}.up_pred.w"))?;
            let pb = self.p(&format!("{pre}.{task}.up_pred.b"))?;
            preds.push(est.preds[ti].conv2d_transpose(pw, pb, 2)?);
            let zw = self.p(&format!("{pre}.{task}.up_zeta.w"))?;
            let zb = self.p(&format!("{pre}.{task}.up_zeta.b"))?;
            zetas.push(est.zetas[ti].conv2d_transpose(zw, zb, 2)?);
        }
        Ok(Carried {
            preds: [preds.remove(0), preds.remove(0), preds.remove(0)],
            zetas: [zetas.remove(0), zetas.remove(0), zetas.remove(0)],
        })
    }

    fn refine(&self, est: &EstimateOut<T>) -> Result<FieldTriple<T>> {
        let rc = &self.cfg.refinement;
        let mut out = Vec::with_capacity(3);
        for (ti, task) in TASKS.iter().enumerate() {
            let mut x = Tensor::concat_channels(&[est.zetas[ti].clone(), est.preds[ti].clone()])?;
            for (ci, &dil) in rc.dilations.iter().enumerate() {
                let spec = ConvSpec::same(3, 1, dil);
                x = self.act(self.conv(&x, &format!("refine.{task}.c{ci}"), spec)?);
            }
            let res = self.conv(&x, &format!("refine.{task}.out"), ConvSpec::same(3, 1, 1))?;
            out.push(est.preds[ti].add(&res)?);
        }
        Ok(FieldTriple {
            flow: out.remove(0),
            disp: out.remove(0),
            change: out.remove(0),
        })
    }

    /// Full forward pass over two stereo pairs (first/second frame, left and
    /// right views). All images must share one shape.
    pub fn forward(
        &self,
        l1: &Tensor<T>,
        r1: &Tensor<T>,
        l2: &Tensor<T>,
        r2: &Tensor<T>,
    ) -> Result<SceneFlowOutput<T>> {
        for other in [r1, l2, r2] {
            if other.shape() != l1.shape() {
                return Err(DwarfError::shape(
                    "forward",
                    format!("{} vs {}", other.shape(), l1.shape()),
                ));
            }
        }
        let p_l1 = self.encode(l1)?;
        let p_r1 = self.encode(r1)?;
        let p_l2 = self.encode(l2)?;
        let p_r2 = self.encode(r2)?;

        let alpha = T::from_f64(self.cfg.encoder.alpha);
        let (ry, rx) = self.cfg.flow_radii;
        let rd = self.cfg.disp_radius;
        let (cry, crx, crz) = self.cfg.curve_radii;

        let mut carried: Option<Carried<T>> = None;
        let mut levels: Vec<LevelOutput<T>> = Vec::new();
        let mut final_est: Option<EstimateOut<T>> = None;
        for level in (2..=self.cfg.top_level()).rev() {
            let li = (level - 1) as usize;
            let f_l1 = &p_l1[li];
            let (w_r1, w_l2, w_r2) = match &carried {
                None => (p_r1[li].clone(), p_l2[li].clone(), p_r2[li].clone()),
                Some(c) => {
                    let gain = T::from_f64(20.0 / f64::powi(2.0, level as i32));
                    let mut flow_px = c.preds[0].scale(gain);
                    let mut disp_px = c.preds[1].scale(gain);
                    let mut change_px = c.preds[2].scale(gain);
                    if self.cfg.detach_priors {
                        flow_px = flow_px.detach();
                        disp_px = disp_px.detach();
                        change_px = change_px.detach();
                    }
                    (
                        warp_by_disparity(&p_r1[li], &disp_px)?,
                        warp_by_flow(&p_l2[li], &flow_px)?,
                        warp_by_flow_and_change(&p_r2[li], &flow_px, &change_px)?,
                    )
                }
            };
            let c_d1 = corr1d(f_l1, &w_r1, rd)?;
            let c_f1 = corr2d(f_l1, &w_l2, ry, rx)?;
            let c_d2 = corr1d(&w_l2, &w_r2, rd)?;
            let mut parts = vec![
                f_l1.clone(),
                c_d1.scores.leaky_relu(alpha),
                c_f1.scores.leaky_relu(alpha),
                c_d2.scores.leaky_relu(alpha),
            ];
            if self.cfg.corr3d {
                // The curve correlation reads the raw pre-activation curves.
                let c_dd = corr3d(&c_d1, &c_d2, cry, crx, crz)?;
                parts.push(c_dd.scores.leaky_relu(alpha));
            }
            if let Some(c) = &carried {
                parts.extend(c.preds.iter().cloned());
                parts.extend(c.zetas.iter().cloned());
            }
            let volume = Tensor::concat_channels(&parts)?;
            let est = self.estimate(level, &volume)?;
            levels.push(LevelOutput {
                level,
                fields: FieldTriple {
                    flow: est.preds[0].clone(),
                    disp: est.preds[1].clone(),
                    change: est.preds[2].clone(),
                },
            });
            if level > 2 {
                carried = Some(self.upsample_carried(level, &est)?);
            } else {
                final_est = Some(est);
            }
        }
        let final_est = final_est.expect("level 2 always runs");
        let refined = if self.cfg.refine {
            Some(self.refine(&final_est)?)
        } else {
            None
        };
        let quarter = refined.as_ref().unwrap_or(&levels.last().unwrap().fields);
        let to_full = |t: &Tensor<T>| -> Result<Tensor<T>> {
            Ok(t.bilinear_upsample(4)?.scale(T::from_f64(20.0)))
        };
        let full_res = FieldTriple {
            flow: to_full(&quarter.flow)?,
            disp: to_full(&quarter.disp)?,
            change: to_full(&quarter.change)?,
        };
        Ok(SceneFlowOutput {
            levels,
            refined,
            full_res,
        })
    }
}

struct EstimateOut<T: Scalar> {
    preds: [Tensor<T>; 3],
    zetas: [Tensor<T>; 3],
}

fn he_conv<T: Scalar>(
    store: &mut ParamStore<T>,
    rng: &mut StdRng,
    name: &str,
    shape: Shape,
    fan_in: usize,
    zero: bool,
) -> Result<()> {
    let n = shape.numel();
    let data = if zero {
        vec![T::ZERO; n]
    } else {
        let sigma = (2.0 / fan_in as f64).sqrt();
        let dist = Normal::new(0.0, sigma).expect("positive sigma");
        (0..n).map(|_| T::from_f64(dist.sample(rng))).collect()
    };
    store.insert(format!("{name}.w"), data, shape)?;
    store.insert(
        format!("{name}.b"),
        vec![T::ZERO; shape.n],
        Shape::new(1, shape.n, 1, 1),
    )?;
    Ok(())
}

fn conv_entry<T: Scalar>(
    store: &mut ParamStore<T>,
    rng: &mut StdRng,
    name: &str,
    c_out: usize,
    c_in: usize,
    k: usize,
    zero: bool,
) -> Result<()> {
    he_conv(store, rng, name, Shape::new(c_out, c_in, k, k), c_in * k * k, zero)
}

/// Transposed-conv weights are stored (C_in, C_out, k, k); the bias spans C_out.
fn convt_entry<T: Scalar>(
    store: &mut ParamStore<T>,
    rng: &mut StdRng,
    name: &str,
    c_in: usize,
    c_out: usize,
    k: usize,
) -> Result<()> {
    let shape = Shape::new(c_in, c_out, k, k);
    let sigma = (2.0 / (c_in * k * k) as f64).sqrt();
    let dist = Normal::new(0.0, sigma).expect("positive sigma");
    let data = (0..shape.numel()).map(|_| T::from_f64(dist.sample(rng))).collect();
    store.insert(format!("{name}.w"), data, shape)?;
    store.insert(
        format!("{name}.b"),
        vec![T::ZERO; c_out],
        Shape::new(1, c_out, 1, 1),
    )?;
    Ok(())
}

/// Registration defines the canonical parameter order: encoder levels
/// outside-in, then estimators coarse to fine (backbone, task heads with
/// their upsamplers), then refinement heads.
fn register_params<T: Scalar>(
    cfg: &ModelConfig,
    store: &mut ParamStore<T>,
    rng: &mut StdRng,
) -> Result<()> {
    let enc = &cfg.encoder;
    let mut c_in = 3;
    for (li, &c_out) in enc.channels.iter().enumerate() {
        for ci in 0..enc.strides.len() {
            let ins = if ci == 0 { c_in } else { c_out };
            conv_entry(store, rng, &format!("encoder.l{}.c{}", li + 1, ci), c_out, ins, 3, false)?;
        }
        c_in = c_out;
    }

    let est = &cfg.estimator;
    for level in (2..=cfg.top_level()).rev() {
        let v = cfg.volume_channels(level);
        let pre = format!("est.k{level}");
        let b = est.backbone;
        if cfg.dense {
            conv_entry(store, rng, &format!("{pre}.b0"), b[0], v, 3, false)?;
            conv_entry(store, rng, &format!("{pre}.b1"), b[1], v + b[0], 3, false)?;
            conv_entry(store, rng, &format!("{pre}.b2"), b[2], v + b[0] + b[1], 3, false)?;
        } else {
            conv_entry(store, rng, &format!("{pre}.b0"), b[0], v, 3, false)?;
            conv_entry(store, rng, &format!("{pre}.b1"), b[1], b[0], 3, false)?;
            conv_entry(store, rng, &format!("{pre}.b2"), b[2], b[1], 3, false)?;
        }
        let trunk_out = if cfg.dense { v + b[0] + b[1] + b[2] } else { b[2] };
        for (ti, task) in TASKS.iter().enumerate() {
            let h = est.head;
            conv_entry(store, rng, &format!("{pre}.{task}.h0"), h[0], trunk_out, 3, false)?;
            let h1_in = if cfg.dense { trunk_out + h[0] } else { h[0] };
            conv_entry(store, rng, &format!("{pre}.{task}.h1"), h[1], h1_in, 3, false)?;
            conv_entry(store, rng, &format!("{pre}.{task}.pred"), TASK_CHANNELS[ti], h[1], 3, false)?;
            if level > 2 {
                convt_entry(
                    store,
                    rng,
                    &format!("{pre}.{task}.up_pred"),
                    TASK_CHANNELS[ti],
                    TASK_CHANNELS[ti],
                    4,
                )?;
                convt_entry(store, rng, &format!("{pre}.{task}.up_zeta"), h[1], est.zeta_carry, 4)?;
            }
        }
    }

    if cfg.refine {
        let rc = &cfg.refinement;
        for (ti, task) in TASKS.iter().enumerate() {
            let mut prev = est.head[1] + TASK_CHANNELS[ti];
            for (ci, &ch) in rc.channels.iter().enumerate() {
                conv_entry(store, rng, &format!("refine.{task}.c{ci}"), ch, prev, 3, false)?;
                prev = ch;
            }
            // Zero start: refinement initially passes estimates through.
            conv_entry(store, rng, &format!("refine.{task}.out"), TASK_CHANNELS[ti], prev, 3, true)?;
        }
    }
    Ok(())
}
