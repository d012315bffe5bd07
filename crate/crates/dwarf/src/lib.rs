//! Compact end-to-end scene flow estimation on stereo video: joint optical
//! flow, disparity and disparity change from two stereo pairs, built on a
//! small self-contained tensor engine with reverse-mode differentiation.
//!
//! The runnable examples under `examples/` walk through each capability:
//! gradient verification, correlation volumes, synthetic scene generation,
//! training, evaluation, visualization and benchmarking. The `dwarf` binary
//! wraps the same code behind a subcommand interface.

pub mod bench;
pub mod cli;
pub mod correlation;
pub mod data;
pub mod metrics;
pub mod network;
pub mod error;
pub mod tensor;
pub mod training;
pub mod verify;
pub mod viz;
pub mod warp;

pub use error::{DwarfError, Result};
pub use tensor::{Scalar, Shape, Tensor};
