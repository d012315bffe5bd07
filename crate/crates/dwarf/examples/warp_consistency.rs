//! Reconstruct the reference frame from the other three views.
//!
//! A pixel of the first left frame reappears displaced by the disparity in
//! the right view, by the optical flow in the next left frame, and by flow
//! minus the carried disparity in the next right frame. Backward-warping
//! each view by the ground truth should therefore reproduce the reference
//! almost exactly wherever the surface stays visible.

use rand::rngs::StdRng;
use rand::SeedableRng;

use dwarf::data::{generate_scene, Image, SceneSpec};
use dwarf::warp::{warp_by_disparity, warp_by_flow, warp_by_flow_and_change};
use dwarf::{Shape, Tensor};

fn masked_mae(recon: &Tensor<f32>, target: &Image, mask: &[bool]) -> f64 {
    let t = target.to_tensor::<f32>();
    let (mut sum, mut count) = (0.0f64, 0usize);
    let plane = mask.len();
    for c in 0..target.channels {
        for (i, &keep) in mask.iter().enumerate() {
            if keep {
                sum += (recon.data()[c * plane + i] - t.data()[c * plane + i]).abs() as f64;
                count += 1;
            }
        }
    }
    sum / count as f64
}

fn main() -> dwarf::Result<()> {
    let mut rng = StdRng::seed_from_u64(11);
    let spec = SceneSpec::random(96, 64, 3, &mut rng);
    let sample = generate_scene(&spec, 1)?;
    let noc = sample.noc.clone().expect("generated scenes carry a mask");
    let visible = noc.iter().filter(|&&v| v).count();
    println!(
        "{}x{} scene, {visible}/{} pixels visible in all four views",
        sample.width(),
        sample.height(),
        noc.len()
    );

    let n = sample.gt.len();
    let plane = Shape::new(1, 1, sample.height(), sample.width());
    let mut uv = sample.gt.u.clone();
    uv.extend_from_slice(&sample.gt.v);
    let flow = Tensor::<f32>::from_vec(uv, Shape::new(1, 2, sample.height(), sample.width()))?;
    let d1 = Tensor::from_vec(sample.gt.d1.clone(), plane)?;
    let d2 = Tensor::from_vec(sample.gt.d2.clone(), plane)?;
    assert_eq!(n, noc.len());

    for (view, recon) in [
        ("right frame 1 by disparity", warp_by_disparity(&sample.r1.to_tensor(), &d1)?),
        ("left frame 2 by flow", warp_by_flow(&sample.l2.to_tensor(), &flow)?),
        (
            "right frame 2 by flow and carried disparity",
            warp_by_flow_and_change(&sample.r2.to_tensor(), &flow, &d2)?,
        ),
    ] {
        let mae = masked_mae(&recon, &sample.l1, &noc);
        println!("{view:<44} mae {mae:.5}");
    }
    Ok(())
}
