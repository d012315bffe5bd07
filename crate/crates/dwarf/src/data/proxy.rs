//! Proxy-label corruption: turn exact ground truth into something shaped
//! like a teacher network's output, with per-pixel jitter plus coherent
//! rectangular error patches standing in for the teacher's blunders.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};

use crate::data::{Provenance, SceneFlowField, SceneSample};
use crate::error::{DwarfError, Result};

/// Corruption parameters. `outlier_rate` is the fraction of the frame the
/// error patches aim to cover; each patch shifts one task's values by a
/// constant drawn from `±[outlier_min, outlier_max]`.
#[derive(Clone, Debug)]
pub struct ProxyNoise {
    pub sigma_flow: f32,
    pub sigma_disp: f32,
    pub sigma_change: f32,
    pub outlier_rate: f64,
    pub outlier_min: f32,
    pub outlier_max: f32,
}

impl Default for ProxyNoise {
    fn default() -> Self {
        ProxyNoise {
            sigma_flow: 0.25,
            sigma_disp: 0.2,
            sigma_change: 0.25,
            outlier_rate: 0.04,
            outlier_min: 4.0,
            outlier_max: 9.0,
        }
    }
}

const PATCH_MIN: usize = 3;
const PATCH_MAX: usize = 8;

/// Corrupt a label field. Deterministic in (gt, noise, seed). Invalid
/// pixels keep their values and stay invalid.
pub fn make_proxy(gt: &SceneFlowField, noise: &ProxyNoise, seed: u64) -> Result<SceneFlowField> {
    if noise.sigma_flow < 0.0
        || noise.sigma_disp < 0.0
        || noise.sigma_change < 0.0
        || !(0.0..1.0).contains(&noise.outlier_rate)
        || noise.outlier_min > noise.outlier_max
        || noise.outlier_min < 0.0
    {
        return Err(DwarfError::invalid("proxy: noise parameters out of range"));
    }
    let (w, h) = (gt.width, gt.height);
    if w < PATCH_MIN || h < PATCH_MIN {
        return Err(DwarfError::invalid("proxy: frame smaller than a patch"));
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let mut out = gt.clone();

    for (field, sigma) in [
        (&mut out.u, noise.sigma_flow),
        (&mut out.v, noise.sigma_flow),
        (&mut out.d1, noise.sigma_disp),
        (&mut out.d2, noise.sigma_change),
    ] {
        let normal = Normal::new(0.0f32, sigma).expect("sigma checked non-negative");
        for (i, v) in field.iter_mut().enumerate() {
            let n = normal.sample(&mut rng);
            if gt.valid[i] {
                *v += n;
            }
        }
    }

    let max_side = PATCH_MAX.min(w).min(h);
    let mean_area = {
        let sides = PATCH_MIN..=max_side;
        let mean_side = sides.clone().sum::<usize>() as f64 / sides.count() as f64;
        mean_side * mean_side
    };
    let target = noise.outlier_rate * (w * h) as f64;
    let patches = (target / mean_area).round() as usize;
    for _ in 0..patches {
        let pw = rng.gen_range(PATCH_MIN..=max_side);
        let ph = rng.gen_range(PATCH_MIN..=max_side);
        let px = rng.gen_range(0..=w - pw);
        let py = rng.gen_range(0..=h - ph);
        let magnitude = rng.gen_range(noise.outlier_min..=noise.outlier_max)
            * if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let task = rng.gen_range(0..3u8);
        for y in py..py + ph {
            for x in px..px + pw {
                let i = y * w + x;
                if !gt.valid[i] {
                    continue;
                }
                match task {
                    0 => {
                        out.u[i] += magnitude;
                        out.v[i] += magnitude;
                    }
                    1 => out.d1[i] += magnitude,
                    _ => out.d2[i] += magnitude,
                }
            }
        }
    }
    Ok(out)
}

/// Rebuild a sample with corrupted labels and teacher provenance. The
/// visibility mask is dropped: predicted labels carry no occlusion record.
pub fn make_proxy_sample(sample: &SceneSample, noise: &ProxyNoise, seed: u64) -> Result<SceneSample> {
    Ok(SceneSample {
        l1: sample.l1.clone(),
        r1: sample.r1.clone(),
        l2: sample.l2.clone(),
        r2: sample.r2.clone(),
        gt: make_proxy(&sample.gt, noise, seed)?,
        noc: None,
        provenance: Provenance::Px,
    })
}
