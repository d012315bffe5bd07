//! Compare plain supervised training with the distillation schedule.
//!
//! The motivating setup: dense proxy labels from a teacher are plentiful
//! but noisy, exact ground truth is scarce. Training on proxies first and
//! then fine-tuning on the clean pool ("px>gt") tends to beat training on
//! the small clean pool alone. This is a toy-sized run of that
//! comparison; the acceptance suite repeats it across seeds and checks
//! the median ordering.

use rand::rngs::StdRng;
use rand::SeedableRng;

use dwarf::data::{generate_scene, make_proxy_sample, ProxyNoise, SceneFlowField, SceneSpec};
use dwarf::metrics::MetricAccumulator;
use dwarf::network::{Dwarf, Variant};
use dwarf::training::{make_schedule, train, DistillMode, MemorySamples, TrainSchedule};

fn scenes(count: usize, rng: &mut StdRng, salt: u64) -> dwarf::Result<Vec<dwarf::data::SceneSample>> {
    (0..count)
        .map(|k| generate_scene(&SceneSpec::random(64, 64, 2, rng), salt + k as u64))
        .collect()
}

fn run(
    schedule: &TrainSchedule,
    source: &MemorySamples,
    held_out: &[dwarf::data::SceneSample],
) -> dwarf::Result<Option<f64>> {
    let mut model = Dwarf::<f32>::new(Variant::Base.config(), 5)?;
    train(&mut model, source, schedule, 7, |_| {})?;
    let mut acc = MetricAccumulator::new();
    for sample in held_out {
        let output = model.forward(
            &sample.l1.to_tensor(),
            &sample.r1.to_tensor(),
            &sample.l2.to_tensor(),
            &sample.r2.to_tensor(),
        )?;
        let full = &output.full_res;
        let pred = SceneFlowField::from_tensors(&full.flow, &full.disp, &full.change)?;
        acc.add(&pred, &sample.gt, None)?;
    }
    Ok(acc.report().all.sf_all)
}

fn main() -> dwarf::Result<()> {
    let mut rng = StdRng::seed_from_u64(19);
    let clean = scenes(2, &mut rng, 100)?;
    let noise = ProxyNoise::default();
    let proxies: Vec<_> = scenes(8, &mut rng, 200)?
        .iter()
        .enumerate()
        .map(|(k, s)| make_proxy_sample(s, &noise, k as u64))
        .collect::<dwarf::Result<_>>()?;
    let held_out = scenes(3, &mut rng, 300)?;

    let mut pool = clean.clone();
    pool.extend(proxies);
    let source = MemorySamples(pool);

    let mut schedule = make_schedule("flyingthings")?;
    schedule.steps = 30;
    schedule.batch_size = 1;
    schedule.crop = (64, 64);
    schedule.decay_points = Vec::new();
    schedule.photometric = false;
    schedule.zoom = false;

    schedule.mode = DistillMode::GtOnly;
    let gt_only = run(&schedule, &source, &held_out)?;
    schedule.mode = DistillMode::PxThenGt { split: 20 };
    let px_then_gt = run(&schedule, &source, &held_out)?;

    let show = |v: Option<f64>| v.map_or("n/a".into(), |v| format!("{v:.2}"));
    println!("held-out SF-All after {} steps:", schedule.steps);
    println!("  clean pool only (2 samples):        {}", show(gt_only));
    println!("  proxies first, then clean (px>gt):  {}", show(px_then_gt));
    Ok(())
}
