//! Round-trip label maps through both on-disk encodings.
//!
//! Float maps (PFM) come back bit-exact and carry any value. The 16-bit
//! sparse PNG pair follows the KITTI layout instead: flow components are
//! stored as value * 64 + 2^15 so quantization error stays within 1/128,
//! disparity as value * 256 within 1/512, and zero marks missing labels.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use dwarf::data::{
    decode_disp_png, decode_flow_png, decode_pfm, encode_disp_png, encode_flow_png, encode_pfm,
};

const W: usize = 64;
const H: usize = 48;

fn main() -> dwarf::Result<()> {
    let mut rng = StdRng::seed_from_u64(8);
    let n = W * H;
    let u: Vec<f32> = (0..n).map(|_| rng.gen_range(-300.0..300.0)).collect();
    let v: Vec<f32> = (0..n).map(|_| rng.gen_range(-300.0..300.0)).collect();
    let d: Vec<f32> = (0..n).map(|_| rng.gen_range(0.1..200.0)).collect();
    let valid: Vec<bool> = (0..n).map(|i| i % 7 != 0).collect();

    let bytes = encode_pfm(&d, W, H)?;
    let (_, _, back) = decode_pfm(&bytes)?;
    assert!(d.iter().zip(&back).all(|(a, b)| a.to_bits() == b.to_bits()));
    println!("pfm: {} bytes, bit-exact round trip", bytes.len());

    let bytes = encode_flow_png(&u, &v, &valid, W, H)?;
    let flow = decode_flow_png(&bytes)?;
    let mut worst = 0.0f32;
    for i in 0..n {
        assert_eq!(flow.valid[i], valid[i]);
        if valid[i] {
            worst = worst.max((flow.u[i] - u[i]).abs()).max((flow.v[i] - v[i]).abs());
        }
    }
    println!("flow png: {} bytes, worst error {worst:.6} (bound {:.6})", bytes.len(), 1.0 / 128.0);

    let bytes = encode_disp_png(&d, &valid, W, H)?;
    let (_, _, coded, kept) = decode_disp_png(&bytes)?;
    let mut worst = 0.0f32;
    for i in 0..n {
        assert_eq!(kept[i], valid[i]);
        if valid[i] {
            worst = worst.max((coded[i] - d[i]).abs());
        }
    }
    println!("disp png: {} bytes, worst error {worst:.6} (bound {:.6})", bytes.len(), 1.0 / 512.0);
    Ok(())
}
