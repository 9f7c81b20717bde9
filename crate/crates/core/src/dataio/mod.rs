//! Images, manifests, feature matrices and checkpoints on disk.

mod binary;
mod manifest;
mod pgm;

pub use binary::{
    decode_feature_matrix, decode_normalized, decode_tensors, encode_feature_matrix,
    encode_normalized, encode_tensors, load_checkpoint_into, load_normalized, read_feature_matrix,
    restore_tensors, save_checkpoint, save_normalized, write_feature_matrix, ParameterSet,
    CHECKPOINT_MAGIC, FEATURE_MAGIC, FEATURE_VERSION, IMAGE_MAGIC,
};
pub use manifest::{load_manifest, parse_manifest, save_manifest, Manifest, ManifestEntry};
pub use pgm::{decode_pgm, encode_pgm, load_pgm, save_pgm, GrayImage};
