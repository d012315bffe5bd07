//! Time forward passes for the four ablation variants.
//!
//! Variants stack up the same way their parameter counts do: dense
//! estimator connections, then the 3D correlation path, then residual
//! refinement, each adding work on top of the previous row. Timings are
//! hardware-specific; the shape of the table is the point.

use dwarf::bench::{bench_table, bench_variants};
use dwarf::network::Variant;

fn main() -> dwarf::Result<()> {
    let results = bench_variants(&Variant::all(), 128, 64, 1, 2, 0)?;
    print!("{}", bench_table(&results));
    Ok(())
}
