//! Overfit the full model on a single tiny scene.
//!
//! A short Adam run on one 64x64 synthetic sample: the multi-scale loss
//! should fall steadily, and the full-resolution endpoint errors shrink
//! toward zero. The acceptance suite runs this mechanism much longer and
//! demands sub-pixel accuracy; this is the one-minute version.

use rand::rngs::StdRng;
use rand::SeedableRng;

use dwarf::data::{generate_scene, SceneFlowField, SceneSpec};
use dwarf::metrics::MetricAccumulator;
use dwarf::network::{Dwarf, Variant};
use dwarf::training::{make_schedule, train, MemorySamples};

fn main() -> dwarf::Result<()> {
    let mut rng = StdRng::seed_from_u64(3);
    let spec = SceneSpec::random(64, 64, 2, &mut rng);
    let sample = generate_scene(&spec, 0)?;
    let source = MemorySamples(vec![sample.clone()]);

    let mut schedule = make_schedule("flyingthings")?;
    schedule.steps = 80;
    schedule.batch_size = 1;
    schedule.crop = (64, 64);
    schedule.decay_points = Vec::new();
    schedule.photometric = false;
    schedule.zoom = false;

    let mut model = Dwarf::<f32>::new(Variant::Full.config(), 1)?;
    println!("full variant, {} parameters", model.param_count());

    let records = train(&mut model, &source, &schedule, 0, |r| {
        if r.step % 10 == 0 || r.step + 1 == schedule.steps {
            println!("step {:>3}  loss {:.5}", r.step, r.loss);
        }
    })?;
    let first = records.first().expect("nonzero steps").loss;
    let last = records.last().expect("nonzero steps").loss;
    println!("loss {first:.5} -> {last:.5}");

    let output = model.forward(
        &sample.l1.to_tensor(),
        &sample.r1.to_tensor(),
        &sample.l2.to_tensor(),
        &sample.r2.to_tensor(),
    )?;
    let full = &output.full_res;
    let pred = SceneFlowField::from_tensors(&full.flow, &full.disp, &full.change)?;
    let mut acc = MetricAccumulator::new();
    acc.add(&pred, &sample.gt, None)?;
    print!("{}", acc.report().table());
    Ok(())
}
