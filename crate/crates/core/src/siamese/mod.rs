//! The twin embedding network, its similarity head and the pair training step.

mod arch;
mod model;
mod pairwise;

pub use arch::{ArchitectureSpec, FeatureActivation, LayerSpec, CONV_LAYERS, EMBED_DIM};
pub use model::{build_model, ConvBlock, Model, SimilarityHead, Trace};
pub use pairwise::{
    pair_loss, pair_loss_and_grads, similarity, similarity_logit, train_step, PairBatch, PairIndex,
};
