//! Training-time augmentation: photometric jitter drawn independently per
//! image, and a shared zoom that rescales all four views and the labels
//! together.

use rand::Rng;

use crate::data::{Image, SceneFlowField, SceneSample};
use crate::error::{DwarfError, Result};

/// Jitter ranges. Photometric draws are per image; the zoom factor is one
/// draw per sample, applied identically everywhere.
#[derive(Clone, Debug)]
pub struct AugmentSpec {
    pub gamma: (f32, f32),
    pub brightness: (f32, f32),
    pub color: (f32, f32),
    pub zoom_probability: f64,
    pub zoom: (f32, f32),
}

impl Default for AugmentSpec {
    fn default() -> Self {
        AugmentSpec {
            gamma: (0.8, 1.2),
            brightness: (0.5, 2.0),
            color: (0.8, 1.2),
            zoom_probability: 0.5,
            zoom: (1.0, 1.8),
        }
    }
}

impl AugmentSpec {
    pub fn validate(&self) -> Result<()> {
        let ranges = [self.gamma, self.brightness, self.color, self.zoom];
        if ranges.iter().any(|&(lo, hi)| !(lo <= hi) || lo <= 0.0)
            || !(0.0..=1.0).contains(&self.zoom_probability)
            || self.zoom.0 < 1.0
        {
            return Err(DwarfError::invalid("augment ranges out of order"));
        }
        Ok(())
    }
}

/// Per-image gamma, brightness, and per-channel color jitter, clipped back
/// to [0, 1]. Labels are untouched. Draw order is fixed: for each of the
/// four views in L1 R1 L2 R2 order, gamma, brightness, then one color
/// factor per channel.
pub fn augment_photometric<R: Rng>(sample: &mut SceneSample, spec: &AugmentSpec, rng: &mut R) {
    for img in [
        &mut sample.l1,
        &mut sample.r1,
        &mut sample.l2,
        &mut sample.r2,
    ] {
        let gamma = rng.gen_range(spec.gamma.0..=spec.gamma.1);
        let brightness = rng.gen_range(spec.brightness.0..=spec.brightness.1);
        let color: Vec<f32> = (0..img.channels)
            .map(|_| rng.gen_range(spec.color.0..=spec.color.1))
            .collect();
        let plane = img.width * img.height;
        for (i, v) in img.data.iter_mut().enumerate() {
            let factor = brightness * color[i / plane];
            *v = (v.max(0.0).powf(gamma) * factor).clamp(0.0, 1.0);
        }
    }
}

/// With the configured probability, draw one zoom factor and magnify the
/// whole sample. The visibility mask is dropped: it is not tracked through
/// resampling.
pub fn augment_zoom<R: Rng>(sample: &mut SceneSample, spec: &AugmentSpec, rng: &mut R) {
    let apply = rng.gen_bool(spec.zoom_probability);
    let z = rng.gen_range(spec.zoom.0..=spec.zoom.1);
    if apply {
        zoom_exact(sample, z);
    }
}

fn sample_clamped(img: &Image, c: usize, x: f32, y: f32) -> f32 {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let cl = |v: f32, hi: usize| (v.max(0.0) as usize).min(hi);
    let (x0, x1) = (cl(x0, img.width - 1), cl(x0 + 1.0, img.width - 1));
    let (y0, y1) = (cl(y0, img.height - 1), cl(y0 + 1.0, img.height - 1));
    let top = img.at(c, y0, x0) * (1.0 - fx) + img.at(c, y0, x1) * fx;
    let bot = img.at(c, y1, x0) * (1.0 - fx) + img.at(c, y1, x1) * fx;
    top * (1.0 - fy) + bot * fy
}

/// Magnify about the frame center by `z`: images are resampled bilinearly,
/// labels by nearest neighbour carrying their validity, and displacement
/// magnitudes scale by `z`.
pub(crate) fn zoom_exact(sample: &mut SceneSample, z: f32) {
    let zoom_image = |img: &Image| -> Image {
        let mut out = Image::zeros(img.width, img.height, img.channels);
        let (cx, cy) = (img.width as f32 / 2.0, img.height as f32 / 2.0);
        for c in 0..img.channels {
            for y in 0..img.height {
                let sy = cy + (y as f32 - cy) / z;
                for x in 0..img.width {
                    let sx = cx + (x as f32 - cx) / z;
                    out.set(c, y, x, sample_clamped(img, c, sx, sy));
                }
            }
        }
        out
    };
    sample.l1 = zoom_image(&sample.l1);
    sample.r1 = zoom_image(&sample.r1);
    sample.l2 = zoom_image(&sample.l2);
    sample.r2 = zoom_image(&sample.r2);

    let gt = &sample.gt;
    let (w, h) = (gt.width, gt.height);
    let (cx, cy) = (w as f32 / 2.0, h as f32 / 2.0);
    let mut out = SceneFlowField::zeros(w, h);
    for y in 0..h {
        let sy = (cy + (y as f32 - cy) / z).round().clamp(0.0, h as f32 - 1.0) as usize;
        for x in 0..w {
            let sx = (cx + (x as f32 - cx) / z).round().clamp(0.0, w as f32 - 1.0) as usize;
            let s = sy * w + sx;
            let d = y * w + x;
            out.u[d] = gt.u[s] * z;
            out.v[d] = gt.v[s] * z;
            out.d1[d] = gt.d1[s] * z;
            out.d2[d] = gt.d2[s] * z;
            out.valid[d] = gt.valid[s];
        }
    }
    sample.gt = out;
    sample.noc = None;
}
