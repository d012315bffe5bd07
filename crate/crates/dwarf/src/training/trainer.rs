//! Deterministic training loop: per-step batch assembly (pool selection,
//! sampling, augmentation, padding, random cropping), the multiscale loss,
//! and Adam. The batch consumed at step s is a pure function of (seed, s),
//! so assembly can run ahead of the optimizer without changing results.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::data::{splitmix, Dataset, Image, Provenance, SceneFlowField, SceneSample};
use crate::error::{DwarfError, Result};
use crate::network::Dwarf;
use crate::tensor::{AdamConfig, AdamState, Scalar, StepOutcome};
use crate::training::{augment_photometric, augment_zoom, multiscale_loss, DistillMode, TrainSchedule};

/// Anything the trainer can draw samples from. `labelled` gates whether an
/// item enters a sampling pool at all.
pub trait SampleSource {
    fn len(&self) -> usize;
    fn labelled(&self, index: usize) -> bool;
    fn provenance(&self, index: usize) -> Provenance;
    fn load(&self, index: usize) -> Result<SceneSample>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl SampleSource for Dataset {
    fn len(&self) -> usize {
        self.entries.len()
    }

    fn labelled(&self, index: usize) -> bool {
        self.entries[index].gt.is_some()
    }

    fn provenance(&self, index: usize) -> Provenance {
        self.entries[index].provenance
    }

    fn load(&self, index: usize) -> Result<SceneSample> {
        self.load_sample(index)
    }
}

/// In-memory sample list, handy for synthetic data and tests.
pub struct MemorySamples(pub Vec<SceneSample>);

impl SampleSource for MemorySamples {
    fn len(&self) -> usize {
        self.0.len()
    }

    fn labelled(&self, _index: usize) -> bool {
        true
    }

    fn provenance(&self, index: usize) -> Provenance {
        self.0[index].provenance
    }

    fn load(&self, index: usize) -> Result<SceneSample> {
        self.0
            .get(index)
            .cloned()
            .ok_or_else(|| DwarfError::invalid(format!("sample index {index} out of range")))
    }
}

/// Label pool a step draws from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolChoice {
    Gt,
    Px,
    Mixed,
}

impl fmt::Display for PoolChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PoolChoice::Gt => "gt",
            PoolChoice::Px => "px",
            PoolChoice::Mixed => "px+gt",
        })
    }
}

fn pool_at(mode: DistillMode, step: u64) -> PoolChoice {
    match mode {
        DistillMode::GtOnly => PoolChoice::Gt,
        DistillMode::PxOnly => PoolChoice::Px,
        DistillMode::PxPlusGt => PoolChoice::Mixed,
        DistillMode::PxThenGt { split } => {
            if step < split {
                PoolChoice::Px
            } else {
                PoolChoice::Gt
            }
        }
    }
}

/// Labelled indices by provenance: (ground truth, teacher predictions).
fn pools<S: SampleSource + ?Sized>(source: &S) -> (Vec<usize>, Vec<usize>) {
    let mut gt = Vec::new();
    let mut px = Vec::new();
    for i in 0..source.len() {
        if !source.labelled(i) {
            continue;
        }
        match source.provenance(i) {
            Provenance::Gt => gt.push(i),
            Provenance::Px => px.push(i),
        }
    }
    (gt, px)
}

fn check_pools(mode: DistillMode, gt: &[usize], px: &[usize]) -> Result<()> {
    let (needs_gt, needs_px) = match mode {
        DistillMode::GtOnly => (true, false),
        DistillMode::PxOnly => (false, true),
        DistillMode::PxPlusGt | DistillMode::PxThenGt { .. } => (true, true),
    };
    if needs_gt && gt.is_empty() {
        return Err(DwarfError::invalid(format!(
            "mode {mode} needs ground-truth samples but the dataset has none"
        )));
    }
    if needs_px && px.is_empty() {
        return Err(DwarfError::invalid(format!(
            "mode {mode} needs teacher-labelled samples but the dataset has none"
        )));
    }
    Ok(())
}

fn step_rng(seed: u64, step: u64) -> StdRng {
    let mixed = splitmix(splitmix(seed).wrapping_add(step.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
    StdRng::seed_from_u64(mixed)
}

fn pad_sample(sample: &mut SceneSample, width: usize, height: usize) -> Result<()> {
    let (w, h) = (sample.l1.width, sample.l1.height);
    if (w, h) == (width, height) {
        return Ok(());
    }
    for img in [&mut sample.l1, &mut sample.r1, &mut sample.l2, &mut sample.r2] {
        *img = img.pad(width, height)?;
    }
    if let Some(noc) = &mut sample.noc {
        let mut grown = vec![false; width * height];
        for y in 0..h {
            grown[y * width..y * width + w].copy_from_slice(&noc[y * w..(y + 1) * w]);
        }
        *noc = grown;
    }
    sample.gt = sample.gt.pad(width, height)?;
    Ok(())
}

fn crop_sample(sample: &mut SceneSample, x0: usize, y0: usize, width: usize, height: usize) -> Result<()> {
    let w = sample.l1.width;
    for img in [&mut sample.l1, &mut sample.r1, &mut sample.l2, &mut sample.r2] {
        *img = img.crop(x0, y0, width, height)?;
    }
    if let Some(noc) = &mut sample.noc {
        let mut cut = vec![false; width * height];
        for y in 0..height {
            let src = (y0 + y) * w + x0;
            cut[y * width..(y + 1) * width].copy_from_slice(&noc[src..src + width]);
        }
        *noc = cut;
    }
    sample.gt = sample.gt.crop(x0, y0, width, height)?;
    Ok(())
}

/// Build the batch for one step. Per sample the draw order is fixed: index,
/// photometric jitter, zoom, crop position; changing any flag leaves earlier
/// draws untouched.
pub fn assemble_batch<S: SampleSource + ?Sized>(
    source: &S,
    schedule: &TrainSchedule,
    seed: u64,
    step: u64,
) -> Result<(Vec<SceneSample>, PoolChoice)> {
    let (gt, px) = pools(source);
    let choice = pool_at(schedule.mode, step);
    let pool: Vec<usize> = match choice {
        PoolChoice::Gt => gt,
        PoolChoice::Px => px,
        PoolChoice::Mixed => {
            let mut all = gt;
            all.extend(px);
            all.sort_unstable();
            all
        }
    };
    if pool.is_empty() {
        return Err(DwarfError::invalid(format!(
            "step {step}: pool {choice} is empty"
        )));
    }

    let mut rng = step_rng(seed, step);
    let indices: Vec<usize> = (0..schedule.batch_size)
        .map(|_| pool[rng.gen_range(0..pool.len())])
        .collect();

    let (cw, ch) = schedule.crop;
    let mut batch = Vec::with_capacity(indices.len());
    for index in indices {
        let mut sample = source.load(index)?;
        if schedule.photometric {
            augment_photometric(&mut sample, &schedule.augment, &mut rng);
        }
        if schedule.zoom {
            augment_zoom(&mut sample, &schedule.augment, &mut rng);
        }
        if let Some((pw, ph)) = schedule.pad {
            pad_sample(&mut sample, pw, ph)?;
        }
        let (w, h) = (sample.l1.width, sample.l1.height);
        if w < cw || h < ch {
            return Err(DwarfError::invalid(format!(
                "sample {w}x{h} smaller than crop {cw}x{ch}; pad the schedule"
            )));
        }
        let x0 = rng.gen_range(0..=(w - cw));
        let y0 = rng.gen_range(0..=(h - ch));
        crop_sample(&mut sample, x0, y0, cw, ch)?;
        batch.push(sample);
    }
    Ok((batch, choice))
}

#[derive(Clone, Debug)]
pub struct StepRecord {
    pub step: u64,
    pub loss: f64,
    pub data_loss: f64,
    pub reg_loss: f64,
    pub lr: f64,
    pub pool: PoolChoice,
}

pub fn step_log_csv(records: &[StepRecord]) -> String {
    let mut out = String::from("step,loss,data_loss,reg_loss,lr,pool\n");
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.step, r.loss, r.data_loss, r.reg_loss, r.lr, r.pool
        )
        .expect("string write");
    }
    out
}

pub fn write_step_log(records: &[StepRecord], path: &Path) -> Result<()> {
    std::fs::write(path, step_log_csv(records))?;
    Ok(())
}

/// Run the schedule against the model in place, returning one record per
/// step. `on_step` fires after each optimizer update, for streaming logs.
pub fn train<T: Scalar, S: SampleSource + ?Sized>(
    model: &mut Dwarf<T>,
    source: &S,
    schedule: &TrainSchedule,
    seed: u64,
    mut on_step: impl FnMut(&StepRecord),
) -> Result<Vec<StepRecord>> {
    schedule.validate()?;
    let (gt, px) = pools(source);
    check_pools(schedule.mode, &gt, &px)?;

    let weights = schedule.loss.weights();
    let mut adam = AdamState::new(model.params(), AdamConfig::default());
    let mut records = Vec::with_capacity(schedule.steps.min(1 << 20) as usize);
    for step in 0..schedule.steps {
        let (batch, pool) = assemble_batch(source, schedule, seed, step)?;
        let views: [Vec<&Image>; 4] = [
            batch.iter().map(|s| &s.l1).collect(),
            batch.iter().map(|s| &s.r1).collect(),
            batch.iter().map(|s| &s.l2).collect(),
            batch.iter().map(|s| &s.r2).collect(),
        ];
        let l1 = Image::batch::<T>(&views[0])?;
        let r1 = Image::batch::<T>(&views[1])?;
        let l2 = Image::batch::<T>(&views[2])?;
        let r2 = Image::batch::<T>(&views[3])?;
        let gts: Vec<SceneFlowField> = batch.into_iter().map(|s| s.gt).collect();

        let output = model.forward(&l1, &r1, &l2, &r2)?;
        let (loss, breakdown) = multiscale_loss(&output, &gts, &weights, Some(model.params()))?;
        let grads = loss.backward()?;
        let lr = schedule.lr_at(step);
        match adam.step(model.params_mut(), &grads, lr)? {
            StepOutcome::Applied => {}
            StepOutcome::SkippedNonFinite { param } => {
                log::warn!("step {step}: non-finite gradient in {param}, update skipped");
            }
        }

        let record = StepRecord {
            step,
            loss: breakdown.total,
            data_loss: breakdown.data,
            reg_loss: breakdown.regularizer,
            lr,
            pool,
        };
        on_step(&record);
        records.push(record);
    }
    Ok(records)
}
