//! Central-difference gradient verification.
//!
//! A candidate map f from input tensors to an output tensor is reduced to a
//! scalar through a fixed weighting of the output, differentiated both ways,
//! and compared coordinate by coordinate. Run in f64: with step h = 1e-6 a
//! correct gradient lands far below the 1e-5 acceptance line while a wrong
//! one shows up at order one.

use crate::error::Result;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct FdCheck {
    pub name: String,
    pub max_rel_err: f64,
    /// (input index, coordinate) of the worst disagreement.
    pub worst: (usize, usize),
    pub coords_checked: usize,
}

impl FdCheck {
    pub fn passes(&self, threshold: f64) -> bool {
        self.max_rel_err < threshold
    }
}

/// Deterministic output weighting: varied, non-zero, independent of run order.
fn probe_weights(n: usize) -> Vec<f64> {
    (0..n).map(|i| 1.1 + (0.37 * i as f64).sin()).collect()
}

fn scalarize(out: &Tensor<f64>, w: &[f64]) -> f64 {
    out.data().iter().zip(w).map(|(a, b)| a * b).sum()
}

pub fn finite_difference_check<F>(
    name: &str,
    inputs: &[(Vec<f64>, crate::tensor::Shape)],
    h: f64,
    f: F,
) -> Result<FdCheck>
where
    F: Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
{
    let leaves: Vec<Tensor<f64>> = inputs
        .iter()
        .map(|(data, shape)| Tensor::param(data.clone(), *shape))
        .collect::<Result<_>>()?;
    let out = f(&leaves)?;
    let w = probe_weights(out.shape().numel());
    let w_t = Tensor::from_vec(w.clone(), out.shape())?;
    let loss = out.mul(&w_t)?.sum_all();
    let grads = loss.backward()?;

    let eval = |probe: &[(Vec<f64>, crate::tensor::Shape)]| -> Result<f64> {
        let consts: Vec<Tensor<f64>> = probe
            .iter()
            .map(|(d, s)| Tensor::from_vec(d.clone(), *s))
            .collect::<Result<_>>()?;
        Ok(scalarize(&f(&consts)?, &w))
    };

    let mut max_rel = 0.0f64;
    let mut worst = (0, 0);
    let mut checked = 0;
    for (ji, leaf) in leaves.iter().enumerate() {
        let analytic: Vec<f64> = match grads.get(leaf) {
            Some(g) => g.to_vec(),
            None => vec![0.0; leaf.shape().numel()],
        };
        for ci in 0..leaf.shape().numel() {
            let mut probe: Vec<(Vec<f64>, crate::tensor::Shape)> = inputs.to_vec();
            probe[ji].0[ci] += h;
            let up = eval(&probe)?;
            probe[ji].0[ci] -= 2.0 * h;
            let down = eval(&probe)?;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[ci];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            checked += 1;
            if rel > max_rel {
                max_rel = rel;
                worst = (ji, ci);
            }
        }
    }
    Ok(FdCheck {
        name: name.to_string(),
        max_rel_err: max_rel,
        worst,
        coords_checked: checked,
    })
}

/// Convenience: fill a shape with reproducible non-integer values in (-1, 1),
/// offset so kinks (zeros, integer grid lines) are avoided.
pub fn probe_data(shape: crate::tensor::Shape, salt: u64) -> Vec<f64> {
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    let mut rng = StdRng::seed_from_u64(0x5eed ^ salt);
    (0..shape.numel())
        .map(|_| {
            let v: f64 = rng.gen_range(-0.95..0.95);
            if v.abs() < 0.05 {
                v + 0.11
            } else {
                v
            }
        })
        .collect()
}
