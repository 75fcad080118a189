//! Synthetic paired data: parametric global edits, templated instructions, procedural
//! textures and the heuristic bucket assignment used to pretrain the bucket model.

mod buckets;
mod corpus;
mod templates;
mod texture;
mod transform;

pub use buckets::{assign_buckets, assign_buckets_images, BucketThresholds, BUCKET_NAMES};
pub use corpus::{generate_corpus, generate_pairs, CorpusOptions, ImageSource, SyntheticPair};
pub use templates::{TemplateBank, DEFAULT_TEMPLATES};
pub use texture::procedural_texture;
pub use transform::{
    apply_transform, apply_transform_in, Direction, GlobalTransform, TransformKind, TransformRanges,
};
