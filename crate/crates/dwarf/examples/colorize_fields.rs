//! Render ground-truth fields as color images.
//!
//! Flow uses the standard color wheel: hue encodes direction, saturation
//! encodes magnitude against the frame maximum, zero motion is white.
//! Scalar maps (disparity here) go through a fixed five-stop colormap
//! with invalid pixels black. Outputs land in a temp directory.

use rand::rngs::StdRng;
use rand::SeedableRng;

use dwarf::data::{generate_scene, SceneSpec};
use dwarf::viz::{colorize_flow, colorize_scalar, flow_color, max_flow_magnitude};

fn main() -> dwarf::Result<()> {
    let mut rng = StdRng::seed_from_u64(33);
    let spec = SceneSpec::random(160, 96, 4, &mut rng);
    let sample = generate_scene(&spec, 2)?;
    let gt = &sample.gt;
    let out = std::env::temp_dir().join("dwarf_colorize");
    std::fs::create_dir_all(&out)?;

    let max = max_flow_magnitude(&gt.u, &gt.v);
    println!("max flow magnitude {max:.2} px");
    println!("zero flow renders as {:?}", flow_color(0.0, 0.0, max));

    let flow_img = colorize_flow(&gt.u, &gt.v, gt.width, gt.height, max)?;
    flow_img.save(&out.join("flow.png"))?;

    let lo = gt.d1.iter().copied().fold(f32::INFINITY, f32::min);
    let hi = gt.d1.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let disp_img = colorize_scalar(&gt.d1, Some(&gt.valid), gt.width, gt.height, (lo, hi + 1e-3))?;
    disp_img.save(&out.join("disp.png"))?;

    sample.l1.save(&out.join("frame.png"))?;
    println!("wrote frame.png, flow.png, disp.png under {}", out.display());
    Ok(())
}
