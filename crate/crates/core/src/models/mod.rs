//! The sound event detector, the neural adapter, and their composition.

pub mod adapter;
pub mod checkpoint;
pub mod composite;
pub mod incremental;
pub mod sedcnn;

pub use adapter::{AdapterInput, NeuralAdapter, ADAPTER_HIDDEN};
pub use checkpoint::{
    decode_checkpoint, encode_composite, encode_model, load_checkpoint, load_model, parameter_hash,
    save_composite, save_model, Checkpoint,
};
pub use composite::{AdapterComposite, CompositeLogits};
pub use incremental::{build_source, expand_source, train_adapter_tl, train_simple_tl, train_source};
pub use sedcnn::{SedCnn, SedCnnConfig};
