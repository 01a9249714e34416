//! Incremental sound event detection.
//!
//! A source detector trained on N classes is kept frozen. A small neural
//! adapter maps its outputs onto N+1 logits, which are summed with the logits
//! of an expanded copy of the source that also learns the new class.
//!
//! * [`nncore`]: tensors and differentiable layers
//! * [`training`]: BCE loss, Adam, early stopping
//! * [`models`]: the detector, adapter, composite and checkpoints
//! * [`datagen`]: synthetic soundscapes and segment labels
//! * [`metrics`]: segment F1, the experiment matrix and reports

pub mod datagen;
pub mod error;
pub mod format;
pub mod metrics;
pub mod models;
pub mod nncore;
pub mod training;

pub use error::{Error, Result};
