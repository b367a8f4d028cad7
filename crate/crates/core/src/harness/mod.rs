//! Data loading, loss composition, training and inference.

pub mod data;
pub mod loss;
pub mod synth;
pub mod train;

pub use data::{load_dataset, load_embeddings, load_gazetteer, Example};
pub use loss::{example_loss, forward_teacher, prepare, total_loss, Prepared};
pub use train::{predict, TrainConfig, Trainer};
