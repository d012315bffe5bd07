//! Data handling: in-memory images and ground-truth fields, synthetic scene
//! generation, proxy-label corruption, file codecs and dataset manifests.

mod kitti_png;
mod manifest;
mod pfm;
mod proxy;
mod scene;

pub use kitti_png::{
    decode_disp_png, decode_flow_png, disp_value_encodable, encode_disp_png, encode_flow_png,
    flow_value_encodable, FlowMap,
};
pub use manifest::{load_manifest, Dataset, DatasetWriter, GtFormat, GtPaths, ManifestEntry};
pub use pfm::{decode_pfm, decode_pfm_flow, encode_pfm, encode_pfm_flow};
pub use proxy::{make_proxy, make_proxy_sample, ProxyNoise};
pub use scene::{generate_scene, SceneObject, SceneSpec};
pub(crate) use scene::splitmix;

use crate::error::{DwarfError, Result};
use crate::tensor::{Scalar, Shape, Tensor};

/// Planar float image, channel-major, values nominally in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Image {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    /// Read an 8-bit image file as RGB, scaled to [0, 1].
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let rgb = image::open(path)?.to_rgb8();
        let (w, h) = (rgb.width() as usize, rgb.height() as usize);
        let mut img = Image::zeros(w, h, 3);
        for (x, y, px) in rgb.enumerate_pixels() {
            for c in 0..3 {
                img.set(c, y as usize, x as usize, px[c] as f32 / 255.0);
            }
        }
        Ok(img)
    }

    /// Write as an 8-bit RGB PNG; values are clamped to [0, 1].
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        if self.channels != 3 {
            return Err(DwarfError::invalid(format!(
                "image save: {} channels, expected 3",
                self.channels
            )));
        }
        let mut rgb = image::RgbImage::new(self.width as u32, self.height as u32);
        for (x, y, px) in rgb.enumerate_pixels_mut() {
            for c in 0..3 {
                let v = self.at(c, y as usize, x as usize).clamp(0.0, 1.0);
                px[c] = (v * 255.0).round() as u8;
            }
        }
        rgb.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        let shape = Shape::new(1, self.channels, self.height, self.width);
        let data = self.data.iter().map(|&v| T::from_f32(v)).collect();
        Tensor::from_vec(data, shape).expect("image buffer sized to shape")
    }

    /// Stack images of one size into a batch tensor.
    pub fn batch<T: Scalar>(images: &[&Image]) -> Result<Tensor<T>> {
        let first = images
            .first()
            .ok_or_else(|| DwarfError::invalid("empty image batch"))?;
        let shape = Shape::new(images.len(), first.channels, first.height, first.width);
        let mut data = Vec::with_capacity(shape.numel());
        for img in images {
            if img.width != first.width || img.height != first.height || img.channels != first.channels
            {
                return Err(DwarfError::shape(
                    "image_batch",
                    format!(
                        "{}x{}x{} vs {}x{}x{}",
                        img.channels, img.height, img.width, first.channels, first.height, first.width
                    ),
                ));
            }
            data.extend(img.data.iter().map(|&v| T::from_f32(v)));
        }
        Tensor::from_vec(data, shape)
    }

    /// Zero-pad on the right and bottom up to the target size.
    pub fn pad(&self, width: usize, height: usize) -> Result<Image> {
        if width < self.width || height < self.height {
            return Err(DwarfError::invalid(format!(
                "pad target {width}x{height} smaller than image {}x{}",
                self.width, self.height
            )));
        }
        let mut out = Image::zeros(width, height, self.channels);
        for c in 0..self.channels {
            for y in 0..self.height {
                for x in 0..self.width {
                    out.set(c, y, x, self.at(c, y, x));
                }
            }
        }
        Ok(out)
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Image> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(DwarfError::invalid(format!(
                "crop {width}x{height}+{x0}+{y0} exceeds image {}x{}",
                self.width, self.height
            )));
        }
        let mut out = Image::zeros(width, height, self.channels);
        for c in 0..self.channels {
            for y in 0..height {
                for x in 0..width {
                    out.set(c, y, x, self.at(c, y0 + y, x0 + x));
                }
            }
        }
        Ok(out)
    }
}

/// Dense scene-flow ground truth in the first left frame: optical flow
/// (u, v), disparity at the first frame, and the second-frame disparity
/// carried back along the flow. `valid` marks pixels that carry labels at
/// all; visibility masks are tracked separately.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneFlowField {
    pub width: usize,
    pub height: usize,
    pub u: Vec<f32>,
    pub v: Vec<f32>,
    pub d1: Vec<f32>,
    pub d2: Vec<f32>,
    pub valid: Vec<bool>,
}

impl SceneFlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        let n = width * height;
        SceneFlowField {
            width,
            height,
            u: vec![0.0; n],
            v: vec![0.0; n],
            d1: vec![0.0; n],
            d2: vec![0.0; n],
            valid: vec![true; n],
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Build from single-batch prediction tensors (2-channel flow plus two
    /// scalar fields); every pixel is marked valid.
    pub fn from_tensors<T: Scalar>(
        flow: &Tensor<T>,
        disp: &Tensor<T>,
        change: &Tensor<T>,
    ) -> Result<Self> {
        let fs = flow.shape();
        if fs.n != 1 || fs.c != 2 {
            return Err(DwarfError::shape("from_tensors", format!("flow {}", fs)));
        }
        for (name, t) in [("disp", disp), ("change", change)] {
            let s = t.shape();
            if s.n != 1 || s.c != 1 || s.h != fs.h || s.w != fs.w {
                return Err(DwarfError::shape("from_tensors", format!("{name} {}", s)));
            }
        }
        let plane = fs.plane();
        Ok(SceneFlowField {
            width: fs.w,
            height: fs.h,
            u: flow.data()[..plane].iter().map(|v| v.to_f32()).collect(),
            v: flow.data()[plane..].iter().map(|v| v.to_f32()).collect(),
            d1: disp.data().iter().map(|v| v.to_f32()).collect(),
            d2: change.data().iter().map(|v| v.to_f32()).collect(),
            valid: vec![true; plane],
        })
    }

    /// Pad on the right and bottom; padded pixels carry no labels.
    pub fn pad(&self, width: usize, height: usize) -> Result<Self> {
        if width < self.width || height < self.height {
            return Err(DwarfError::invalid(format!(
                "pad target {width}x{height} smaller than field {}x{}",
                self.width, self.height
            )));
        }
        let mut out = SceneFlowField::zeros(width, height);
        out.valid = vec![false; width * height];
        for y in 0..self.height {
            for x in 0..self.width {
                let (src, dst) = (y * self.width + x, y * width + x);
                out.u[dst] = self.u[src];
                out.v[dst] = self.v[src];
                out.d1[dst] = self.d1[src];
                out.d2[dst] = self.d2[src];
                out.valid[dst] = self.valid[src];
            }
        }
        Ok(out)
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(DwarfError::invalid(format!(
                "crop {width}x{height}+{x0}+{y0} exceeds field {}x{}",
                self.width, self.height
            )));
        }
        let mut out = SceneFlowField::zeros(width, height);
        for y in 0..height {
            for x in 0..width {
                let (src, dst) = ((y0 + y) * self.width + x0 + x, y * width + x);
                out.u[dst] = self.u[src];
                out.v[dst] = self.v[src];
                out.d1[dst] = self.d1[src];
                out.d2[dst] = self.d2[src];
                out.valid[dst] = self.valid[src];
            }
        }
        Ok(out)
    }
}

/// Where a sample's labels came from: hand-made ground truth or a teacher's
/// predictions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Gt,
    Px,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Provenance::Gt => "gt",
            Provenance::Px => "px",
        })
    }
}

/// One training or evaluation item: the four input views, labels, and an
/// optional non-occlusion mask for pixels whose correspondences are visible
/// in every other view.
#[derive(Clone, Debug)]
pub struct SceneSample {
    pub l1: Image,
    pub r1: Image,
    pub l2: Image,
    pub r2: Image,
    pub gt: SceneFlowField,
    pub noc: Option<Vec<bool>>,
    pub provenance: Provenance,
}

impl SceneSample {
    pub fn width(&self) -> usize {
        self.l1.width
    }

    pub fn height(&self) -> usize {
        self.l1.height
    }
}
