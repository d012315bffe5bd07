//! Show the correlation layers recovering a known displacement.
//!
//! The second feature map is a shifted copy of the first, so the matching
//!-score curve at any interior pixel should peak exactly at the true
//! shift: +3 px horizontally for the 1D scan, (+1, +2) for the 2D scan.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use dwarf::correlation::{corr1d, corr2d};
use dwarf::{Shape, Tensor};

const C: usize = 32;
const H: usize = 8;
const W: usize = 16;

fn random_features(rng: &mut StdRng) -> Vec<f32> {
    (0..C * H * W).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Copy `src` displaced by (dy, dx), zero-filling uncovered pixels.
fn shifted(src: &[f32], dy: isize, dx: isize) -> Vec<f32> {
    let mut out = vec![0.0f32; src.len()];
    for c in 0..C {
        for y in 0..H as isize {
            for x in 0..W as isize {
                let (sy, sx) = (y - dy, x - dx);
                if (0..H as isize).contains(&sy) && (0..W as isize).contains(&sx) {
                    out[(c * H + y as usize) * W + x as usize] =
                        src[(c * H + sy as usize) * W + sx as usize];
                }
            }
        }
    }
    out
}

fn main() -> dwarf::Result<()> {
    let mut rng = StdRng::seed_from_u64(6);
    let base = random_features(&mut rng);
    let shape = Shape::new(1, C, H, W);
    let a = Tensor::from_vec(base.clone(), shape)?;

    // 1D: the partner moved 3 px right, so score(j) peaks at j = +3.
    let b = Tensor::from_vec(shifted(&base, 0, 3), shape)?;
    let volume = corr1d(&a, &b, 4)?;
    let (y, x) = (H / 2, W / 2);
    let plane = H * W;
    println!("horizontal scan at pixel ({y}, {x}):");
    let mut best = (0isize, f32::MIN);
    for chan in 0..volume.spec.channels() {
        let j = chan as isize - 4;
        let score = volume.scores.data()[chan * plane + y * W + x];
        if score > best.1 {
            best = (j, score);
        }
        println!("  shift {j:>2}: {score:>8.4}");
    }
    println!("peak at shift {} (true shift 3)\n", best.0);

    // 2D: a diagonal move, decoded from the row-major channel layout.
    let b = Tensor::from_vec(shifted(&base, 1, 2), shape)?;
    let volume = corr2d(&a, &b, 3, 3)?;
    let side = 2 * 3 + 1;
    let mut best = (0, f32::MIN);
    for chan in 0..volume.spec.channels() {
        let score = volume.scores.data()[chan * plane + y * W + x];
        if score > best.1 {
            best = (chan, score);
        }
    }
    let (dy, dx) = ((best.0 / side) as isize - 3, (best.0 % side) as isize - 3);
    println!("2d window peak at ({dy}, {dx}) (true shift (1, 2))");
    Ok(())
}
