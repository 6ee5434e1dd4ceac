//! Minimal reverse-mode differentiation over dense arrays, the layer set the
//! backbone needs, the RMSProp optimizer, and checkpoint IO.

pub mod checkpoint;
pub mod optim;
pub mod tape;
pub mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use optim::RmsProp;
pub use tape::{BatchStats, NodeId, Tape};
pub use tensor::Tensor;
