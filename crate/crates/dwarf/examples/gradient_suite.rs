//! Run the finite-difference gradient suite and print its table.
//!
//! Every differentiable op (elementwise pieces, convolutions, the
//! bilinear sampler and warps, the three correlation layers, and the
//! multi-scale loss) is checked against central differences in f64.

use dwarf::verify::{run_gradient_suite, FD_THRESHOLD};

fn main() -> dwarf::Result<()> {
    let report = run_gradient_suite()?;
    print!("{}", report.table());
    println!(
        "worst op sits at {:.3e} against a {:.0e} threshold",
        report.max_rel_err(),
        FD_THRESHOLD
    );
    std::process::exit(if report.passed() { 0 } else { 1 });
}
