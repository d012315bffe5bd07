//! Synthetic stereo-pair scene generator: textured rectangles drifting in
//! front of a textured backdrop, rendered into the four views with exact
//! ground truth and a visibility mask derived from the same geometry.
//!
//! Every surface is fronto-parallel and rigid, so flow and disparity are
//! constant over a surface and occlusion reduces to a z-order test. Textures
//! are smooth value noise evaluated in surface-anchored coordinates, which
//! keeps bilinear resampling of a rendered view close to the true signal.

use rand::Rng;

use crate::data::{Image, Provenance, SceneFlowField, SceneSample};
use crate::error::{DwarfError, Result};

/// A rectangle at the first time step, its stereo disparities, and its
/// motion between frames. Coordinates are first-left-view pixels.
#[derive(Clone, Debug)]
pub struct SceneObject {
    pub x0: f32,
    pub y0: f32,
    pub w: f32,
    pub h: f32,
    pub disp1: f32,
    pub disp2: f32,
    pub motion: (f32, f32),
    pub texture_seed: u64,
}

/// Scene description: backdrop plus objects ordered back to front.
#[derive(Clone, Debug)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub background_disp: f32,
    pub background_seed: u64,
    pub objects: Vec<SceneObject>,
}

impl SceneSpec {
    /// Draw a plausible desk-scale scene. Disparities increase from back to
    /// front so the z-order matches depth.
    pub fn random<R: Rng>(width: usize, height: usize, objects: usize, rng: &mut R) -> Self {
        let background_disp = rng.gen_range(0.8..2.2);
        let objs = (0..objects)
            .map(|i| {
                let w = rng.gen_range(0.22..0.45) * width as f32;
                let h = rng.gen_range(0.25..0.5) * height as f32;
                SceneObject {
                    x0: rng.gen_range(-0.1 * w..width as f32 - 0.9 * w),
                    y0: rng.gen_range(-0.1 * h..height as f32 - 0.9 * h),
                    w,
                    h,
                    disp1: background_disp + 1.0 + 1.5 * i as f32 + rng.gen_range(0.0..1.0),
                    disp2: (background_disp + 1.0 + 1.5 * i as f32 + rng.gen_range(0.0..1.0)
                        + rng.gen_range(-1.2..1.2))
                    .max(0.5),
                    motion: (rng.gen_range(-4.5..4.5), rng.gen_range(-4.5..4.5)),
                    texture_seed: rng.gen(),
                }
            })
            .collect();
        SceneSpec {
            width,
            height,
            background_disp,
            background_seed: rng.gen(),
            objects: objs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(DwarfError::invalid("scene: empty frame"));
        }
        if !self.background_disp.is_finite() || self.background_disp < 0.0 {
            return Err(DwarfError::invalid("scene: background disparity must be finite and non-negative"));
        }
        for (i, o) in self.objects.iter().enumerate() {
            let fields = [o.x0, o.y0, o.w, o.h, o.disp1, o.disp2, o.motion.0, o.motion.1];
            if fields.iter().any(|v| !v.is_finite()) || o.w <= 0.0 || o.h <= 0.0 {
                return Err(DwarfError::invalid(format!("scene: object {i} is degenerate")));
            }
            if o.disp1 < 0.0 || o.disp2 < 0.0 {
                return Err(DwarfError::invalid(format!("scene: object {i} has negative disparity")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum View {
    L1,
    R1,
    L2,
    R2,
}

const VIEWS: [View; 4] = [View::L1, View::R1, View::L2, View::R2];

/// Internal surface: the backdrop is an unbounded static rectangle, so one
/// code path renders everything. Index order is z-order, back to front.
struct Surface {
    x0: f32,
    y0: f32,
    w: f32,
    h: f32,
    disp1: f32,
    disp2: f32,
    motion: (f32, f32),
    tex_seed: u64,
    bounded: bool,
}

impl Surface {
    /// Offset added to a view-pixel position to express it in first-left
    /// coordinates of this surface at the first time step.
    fn view_offset(&self, view: View) -> (f32, f32) {
        match view {
            View::L1 => (0.0, 0.0),
            View::R1 => (self.disp1, 0.0),
            View::L2 => (-self.motion.0, -self.motion.1),
            View::R2 => (self.disp2 - self.motion.0, -self.motion.1),
        }
    }

    /// Texture coordinates if the view position lands on this surface.
    fn hit(&self, view: View, x: f32, y: f32) -> Option<(f32, f32)> {
        let (ox, oy) = self.view_offset(view);
        let u = x + ox - self.x0;
        let v = y + oy - self.y0;
        if !self.bounded || (u >= 0.0 && u < self.w && v >= 0.0 && v < self.h) {
            Some((u, v))
        } else {
            None
        }
    }
}

fn surfaces(spec: &SceneSpec, texture_salt: u64) -> Vec<Surface> {
    let salt = |seed: u64| seed ^ texture_salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut list = vec![Surface {
        x0: 0.0,
        y0: 0.0,
        w: 0.0,
        h: 0.0,
        disp1: spec.background_disp,
        disp2: spec.background_disp,
        motion: (0.0, 0.0),
        tex_seed: salt(spec.background_seed),
        bounded: false,
    }];
    list.extend(spec.objects.iter().map(|o| Surface {
        x0: o.x0,
        y0: o.y0,
        w: o.w,
        h: o.h,
        disp1: o.disp1,
        disp2: o.disp2,
        motion: o.motion,
        tex_seed: salt(o.texture_seed),
        bounded: true,
    }));
    list
}

/// Frontmost surface covering a view position. The backdrop always hits, so
/// this is total.
fn topmost(list: &[Surface], view: View, x: f32, y: f32) -> (usize, (f32, f32)) {
    for (i, s) in list.iter().enumerate().rev() {
        if let Some(tex) = s.hit(view, x, y) {
            return (i, tex);
        }
    }
    unreachable!("backdrop covers every position");
}

pub(crate) fn splitmix(mut h: u64) -> u64 {
    h ^= h >> 30;
    h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94D0_49BB_1331_11EB);
    h ^ (h >> 31)
}

fn lattice(seed: u64, xi: i64, yi: i64) -> f32 {
    let h = splitmix(
        seed ^ (xi as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
            ^ (yi as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F),
    );
    (h >> 40) as f32 / (1u64 << 24) as f32
}

fn smoothstep(t: f32) -> f32 {
    t * t * (3.0 - 2.0 * t)
}

fn value_noise(seed: u64, cell: f32, x: f32, y: f32) -> f32 {
    let gx = x / cell;
    let gy = y / cell;
    let fx = gx.floor();
    let fy = gy.floor();
    let tx = smoothstep(gx - fx);
    let ty = smoothstep(gy - fy);
    let (xi, yi) = (fx as i64, fy as i64);
    let a = lattice(seed, xi, yi);
    let b = lattice(seed, xi + 1, yi);
    let c = lattice(seed, xi, yi + 1);
    let d = lattice(seed, xi + 1, yi + 1);
    let top = a + (b - a) * tx;
    let bot = c + (d - c) * tx;
    top + (bot - top) * ty
}

/// Two-octave smooth texture in [0.12, 0.88], continuous in (x, y).
fn texture_value(seed: u64, channel: usize, x: f32, y: f32) -> f32 {
    let s = seed ^ (channel as u64).wrapping_mul(0xA24B_AED4_963E_E407);
    let n = 0.7 * value_noise(s, 10.0, x, y) + 0.3 * value_noise(splitmix(s), 4.0, x, y);
    0.12 + 0.76 * n
}

const CHANNELS: usize = 3;

fn render(list: &[Surface], view: View, width: usize, height: usize) -> Image {
    let mut img = Image::zeros(width, height, CHANNELS);
    for y in 0..height {
        for x in 0..width {
            let (i, (u, v)) = topmost(list, view, x as f32, y as f32);
            for c in 0..CHANNELS {
                img.set(c, y, x, texture_value(list[i].tex_seed, c, u, v));
            }
        }
    }
    img
}

/// All bilinear taps with nonzero weight land inside the frame and on the
/// expected surface. Matches the sampler, which zero-fills stray corners.
fn visible(list: &[Surface], view: View, px: f32, py: f32, expect: usize, w: usize, h: usize) -> bool {
    let x0 = px.floor();
    let y0 = py.floor();
    let fx = px - x0;
    let fy = py - y0;
    let mut xs = vec![x0 as i64];
    if fx != 0.0 {
        xs.push(x0 as i64 + 1);
    }
    let mut ys = vec![y0 as i64];
    if fy != 0.0 {
        ys.push(y0 as i64 + 1);
    }
    for &cy in &ys {
        for &cx in &xs {
            if cx < 0 || cy < 0 || cx as usize >= w || cy as usize >= h {
                return false;
            }
            if topmost(list, view, cx as f32, cy as f32).0 != expect {
                return false;
            }
        }
    }
    true
}

/// Render a spec into the four views with dense ground truth. Every pixel is
/// labelled; the non-occlusion mask keeps only pixels whose correspondences
/// are visible in all three other views. `texture_salt` reskins the scene
/// without moving anything.
pub fn generate_scene(spec: &SceneSpec, texture_salt: u64) -> Result<SceneSample> {
    spec.validate()?;
    let list = surfaces(spec, texture_salt);
    let (w, h) = (spec.width, spec.height);

    let mut views = VIEWS.iter().map(|&v| render(&list, v, w, h));
    let l1 = views.next().unwrap();
    let r1 = views.next().unwrap();
    let l2 = views.next().unwrap();
    let r2 = views.next().unwrap();

    let mut gt = SceneFlowField::zeros(w, h);
    let mut noc = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let (s, _) = topmost(&list, View::L1, x as f32, y as f32);
            let p = &list[s];
            gt.u[i] = p.motion.0;
            gt.v[i] = p.motion.1;
            gt.d1[i] = p.disp1;
            gt.d2[i] = p.disp2;
            let (xf, yf) = (x as f32, y as f32);
            noc[i] = visible(&list, View::R1, xf - p.disp1, yf, s, w, h)
                && visible(&list, View::L2, xf + p.motion.0, yf + p.motion.1, s, w, h)
                && visible(
                    &list,
                    View::R2,
                    xf + p.motion.0 - p.disp2,
                    yf + p.motion.1,
                    s,
                    w,
                    h,
                );
        }
    }

    Ok(SceneSample {
        l1,
        r1,
        l2,
        r2,
        gt,
        noc: Some(noc),
        provenance: Provenance::Gt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Scalar, Shape, Tensor};
    use crate::warp::{warp_by_disparity, warp_by_flow, warp_by_flow_and_change};
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn one_object_spec() -> SceneSpec {
        SceneSpec {
            width: 48,
            height: 32,
            background_disp: 1.3,
            background_seed: 7,
            objects: vec![SceneObject {
                x0: 10.0,
                y0: 8.0,
                w: 16.0,
                h: 12.0,
                disp1: 4.5,
                disp2: 5.25,
                motion: (3.0, -2.0),
                texture_seed: 99,
            }],
        }
    }

    #[test]
    fn ground_truth_follows_construction() {
        let sample = generate_scene(&one_object_spec(), 0).unwrap();
        let gt = &sample.gt;
        let inside = 15 * 48 + 18; // (18, 15): object interior
        assert_eq!(gt.u[inside], 3.0);
        assert_eq!(gt.v[inside], -2.0);
        assert_eq!(gt.d1[inside], 4.5);
        assert_eq!(gt.d2[inside], 5.25);
        let backdrop = 2 * 48 + 2;
        assert_eq!(gt.u[backdrop], 0.0);
        assert_eq!(gt.d1[backdrop], 1.3);
        assert!(gt.valid.iter().all(|&v| v));
    }

    #[test]
    fn front_object_wins_in_overlap() {
        let mut spec = one_object_spec();
        spec.objects.push(SceneObject {
            x0: 14.0,
            y0: 10.0,
            w: 20.0,
            h: 14.0,
            disp1: 7.0,
            disp2: 7.0,
            motion: (0.0, 0.0),
            texture_seed: 4,
        });
        let sample = generate_scene(&spec, 0).unwrap();
        // (16, 12) lies inside both rectangles; the later object is closer.
        assert_eq!(sample.gt.d1[12 * 48 + 16], 7.0);
    }

    #[test]
    fn occluded_and_out_of_frame_pixels_leave_the_mask() {
        let mut spec = one_object_spec();
        // Static front object covering where the back object's flow lands.
        spec.objects.push(SceneObject {
            x0: 20.0,
            y0: 2.0,
            w: 14.0,
            h: 12.0,
            disp1: 8.0,
            disp2: 8.0,
            motion: (0.0, 0.0),
            texture_seed: 5,
        });
        let sample = generate_scene(&spec, 0).unwrap();
        let noc = sample.noc.as_ref().unwrap();
        // (18, 10) is on the back object; its flow target (21, 8) sits under
        // the front object.
        let covered = 10 * 48 + 18;
        assert_eq!(sample.gt.d1[covered], 4.5);
        assert!(!noc[covered]);
        // Backdrop at x=0 looks left of the frame in the right view.
        assert!(!noc[5 * 48]);
        assert!(sample.gt.valid[covered] && sample.gt.valid[5 * 48]);
        // Plenty of the frame is still unoccluded.
        let kept = noc.iter().filter(|&&v| v).count();
        assert!(kept > sample.gt.len() / 2, "only {kept} mask pixels");
    }

    fn masked_mae(recon: &Tensor<f32>, target: &Image, mask: &[bool]) -> f64 {
        let s = recon.shape();
        let data = recon.data();
        let mut sum = 0.0;
        let mut count = 0usize;
        for c in 0..s.c {
            for i in 0..s.plane() {
                if mask[i] {
                    sum += (data[c * s.plane() + i].to_f64() - target.data[c * s.plane() + i] as f64)
                        .abs();
                    count += 1;
                }
            }
        }
        sum / count as f64
    }

    #[test]
    fn warping_views_by_ground_truth_reconstructs_the_reference() {
        let mut rng = StdRng::seed_from_u64(11);
        let spec = SceneSpec::random(64, 40, 3, &mut rng);
        let sample = generate_scene(&spec, 1).unwrap();
        let noc = sample.noc.clone().unwrap();
        let n = sample.gt.len();
        let plane = Shape::new(1, 1, 40, 64);

        let flow = Tensor::<f32>::from_vec(
            sample
                .gt
                .u
                .iter()
                .chain(sample.gt.v.iter())
                .copied()
                .collect(),
            Shape::new(1, 2, 40, 64),
        )
        .unwrap();
        let d1 = Tensor::from_vec(sample.gt.d1.clone(), plane).unwrap();
        let d2 = Tensor::from_vec(sample.gt.d2.clone(), plane).unwrap();

        let from_r1 = warp_by_disparity(&sample.r1.to_tensor(), &d1).unwrap();
        let from_l2 = warp_by_flow(&sample.l2.to_tensor(), &flow).unwrap();
        let from_r2 = warp_by_flow_and_change(&sample.r2.to_tensor(), &flow, &d2).unwrap();

        assert!(noc.iter().filter(|&&v| v).count() > n / 3);
        for (name, recon) in [("r1", from_r1), ("l2", from_l2), ("r2", from_r2)] {
            let mae = masked_mae(&recon, &sample.l1, &noc);
            assert!(mae < 0.02, "{name} reconstruction off by {mae}");
        }
    }

    #[test]
    fn same_inputs_render_identically() {
        let spec = one_object_spec();
        let a = generate_scene(&spec, 3).unwrap();
        let b = generate_scene(&spec, 3).unwrap();
        assert_eq!(a.l1, b.l1);
        assert_eq!(a.r2, b.r2);
        assert_eq!(a.gt, b.gt);
        let c = generate_scene(&spec, 4).unwrap();
        assert_ne!(a.l1.data, c.l1.data);
        assert_eq!(a.gt, c.gt, "texture salt must not move geometry");
    }

    #[test]
    fn random_specs_are_valid_and_in_range() {
        let mut rng = StdRng::seed_from_u64(0);
        for _ in 0..20 {
            let spec = SceneSpec::random(96, 64, 4, &mut rng);
            spec.validate().unwrap();
            for o in &spec.objects {
                assert!(o.disp1 > spec.background_disp);
                assert!(o.motion.0.abs() <= 4.5 && o.motion.1.abs() <= 4.5);
            }
        }
    }
}
