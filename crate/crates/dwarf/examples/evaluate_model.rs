//! Evaluate a model over a handful of scenes and print the metric report.
//!
//! The report follows the KITTI scene-flow convention: endpoint error per
//! task, plus outlier percentages where a pixel is wrong when its error
//! exceeds 3 px and 5% of the target magnitude. SF-All counts pixels wrong
//! in any task. An untrained network is used here, so expect large
//! numbers; the point is the reporting path, including the non-occlusion
//! variant driven by the scenes' visibility masks.

use rand::rngs::StdRng;
use rand::SeedableRng;

use dwarf::data::{generate_scene, SceneFlowField, SceneSpec};
use dwarf::metrics::MetricAccumulator;
use dwarf::network::{Dwarf, Variant};

fn main() -> dwarf::Result<()> {
    let model = Dwarf::<f32>::new(Variant::Base.config(), 77)?;
    let mut acc = MetricAccumulator::new();
    let mut rng = StdRng::seed_from_u64(50);
    for k in 0..3 {
        let spec = SceneSpec::random(64, 64, 2, &mut rng);
        let sample = generate_scene(&spec, k)?;
        let output = model.forward(
            &sample.l1.to_tensor(),
            &sample.r1.to_tensor(),
            &sample.l2.to_tensor(),
            &sample.r2.to_tensor(),
        )?;
        let full = &output.full_res;
        let pred = SceneFlowField::from_tensors(&full.flow, &full.disp, &full.change)?;
        acc.add(&pred, &sample.gt, sample.noc.as_deref())?;
    }

    let report = acc.report();
    println!("machine-readable:");
    print!("{}", report.lines());
    println!();
    print!("{}", report.table());
    Ok(())
}
