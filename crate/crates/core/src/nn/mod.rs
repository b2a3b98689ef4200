//! Feed-forward heads, losses, Adam and training.

pub mod adam;
pub mod codec;
pub mod heads;
pub mod layer;
pub mod loss;
pub mod train;

pub use adam::AdamState;
pub use codec::Head;
pub use heads::{AttributeHead, IdentityHead};
pub use layer::{prelu, DenseLayer, Gradients, Layer, Prelu, PreluMode, Stack};
pub use loss::{attribute_loss, cross_entropy};
pub use train::{
    train_attribute_head, train_identity_head, AttributeDataset, EpochStats, IdentityDataset,
    TrainConfig, TrainReport,
};
