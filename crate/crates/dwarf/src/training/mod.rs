//! Supervision and optimization: the multiscale training loss, photometric
//! and zoom augmentation, schedule presets, and the deterministic trainer.

mod augment;
mod loss;
mod schedule;
mod trainer;

pub use augment::{augment_photometric, augment_zoom, AugmentSpec};
pub use loss::{downscale_gt, multiscale_loss, LossBreakdown, LossWeights, SUPERVISION_SCALE};
pub use schedule::{make_schedule, DistillMode, LossPreset, TrainSchedule};
pub use trainer::{
    assemble_batch, step_log_csv, train, write_step_log, MemorySamples, PoolChoice, SampleSource,
    StepRecord,
};
