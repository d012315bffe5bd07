//! Forward-pass timing across the ablation variants, with parameter counts.
//! Warmup iterations run first and are excluded from the statistics.

use std::fmt::Write as _;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::error::{DwarfError, Result};
use crate::network::{Dwarf, Variant};
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Debug)]
pub struct BenchResult {
    pub variant: Variant,
    pub params: usize,
    pub mean_ms: f64,
    pub min_ms: f64,
    pub runs: usize,
}

fn random_frame(rng: &mut StdRng, width: usize, height: usize) -> Tensor<f32> {
    let shape = Shape::new(1, 3, height, width);
    let data = (0..shape.numel()).map(|_| rng.gen_range(0.0..1.0)).collect();
    Tensor::from_vec(data, shape).expect("buffer sized to shape")
}

/// Time `runs` forward passes of one variant at the given input size.
pub fn bench_variant(
    variant: Variant,
    width: usize,
    height: usize,
    warmup: usize,
    runs: usize,
    seed: u64,
) -> Result<BenchResult> {
    if runs == 0 {
        return Err(DwarfError::invalid("benchmark needs at least one timed run"));
    }
    let model = Dwarf::<f32>::new(variant.config(), seed)?;
    let mut rng = StdRng::seed_from_u64(seed ^ 0x5EED);
    let frames: Vec<Tensor<f32>> = (0..4).map(|_| random_frame(&mut rng, width, height)).collect();

    for _ in 0..warmup {
        model.forward(&frames[0], &frames[1], &frames[2], &frames[3])?;
    }
    let mut total = 0.0f64;
    let mut min = f64::INFINITY;
    for _ in 0..runs {
        let start = Instant::now();
        model.forward(&frames[0], &frames[1], &frames[2], &frames[3])?;
        let ms = start.elapsed().as_secs_f64() * 1e3;
        total += ms;
        min = min.min(ms);
    }
    Ok(BenchResult {
        variant,
        params: model.param_count(),
        mean_ms: total / runs as f64,
        min_ms: min,
        runs,
    })
}

/// Benchmark every requested variant at one input size.
pub fn bench_variants(
    variants: &[Variant],
    width: usize,
    height: usize,
    warmup: usize,
    runs: usize,
    seed: u64,
) -> Result<Vec<BenchResult>> {
    variants
        .iter()
        .map(|&v| bench_variant(v, width, height, warmup, runs, seed))
        .collect()
}

/// Render results as an aligned table with parameter counts.
pub fn bench_table(results: &[BenchResult]) -> String {
    let mut out = String::from("variant    params      mean ms     min ms   runs\n");
    for r in results {
        writeln!(
            out,
            "{:<9} {:>8} {:>11.2} {:>10.2} {:>6}",
            r.variant.to_string(),
            r.params,
            r.mean_ms,
            r.min_ms,
            r.runs
        )
        .expect("string write");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timings_are_positive_and_counted() {
        let r = bench_variant(Variant::Base, 64, 64, 0, 2, 0).unwrap();
        assert!(r.mean_ms > 0.0);
        assert!(r.min_ms > 0.0);
        assert!(r.min_ms <= r.mean_ms);
        assert_eq!(r.runs, 2);
        assert!(r.params > 1_000_000);
    }

    #[test]
    fn table_lists_every_variant_with_params() {
        let results = vec![
            BenchResult {
                variant: Variant::Base,
                params: 123,
                mean_ms: 1.5,
                min_ms: 1.2,
                runs: 3,
            },
            BenchResult {
                variant: Variant::Full,
                params: 456,
                mean_ms: 2.5,
                min_ms: 2.0,
                runs: 3,
            },
        ];
        let table = bench_table(&results);
        assert!(table.contains("base"));
        assert!(table.contains("full"));
        assert!(table.contains("123"));
        assert!(table.contains("456"));
        assert_eq!(table.lines().count(), 3);
    }

    #[test]
    fn zero_runs_is_rejected() {
        assert!(bench_variant(Variant::Base, 64, 64, 0, 0, 0).is_err());
    }
}
