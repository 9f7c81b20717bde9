//! Siamese template matching for handwritten character recognition.
//!
//! A single embedding network maps 64×64 normalized glyphs to 128-dimensional
//! features; a similarity head scores `σ(w·|f(x) − f(t)| + b)` between a
//! handwritten sample `x` and a clean template `t`. Classification embeds the
//! templates once and picks the template of maximum similarity, which also
//! works for classes never seen during training.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root name the 32-bit instantiations used by the pipelines.

pub mod dataio;
pub mod error;
pub mod evalsuite;
pub mod matcher;
pub mod nnkernel;
pub mod pairs;
pub mod prep;
pub mod scalar;
pub mod selfcheck;
pub mod siamese;
pub mod toygen;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor32 = nnkernel::Tensor<f32>;
pub type Model32 = siamese::Model<f32>;
pub type SimilarityHead32 = siamese::SimilarityHead<f32>;
pub type TemplateMatrix32 = matcher::TemplateMatrix<f32>;
pub type SgdState32 = nnkernel::SgdState<f32>;
pub type Classifier32 = evalsuite::Classifier<f32>;

pub type Tensor64 = nnkernel::Tensor<f64>;
pub type Model64 = siamese::Model<f64>;
