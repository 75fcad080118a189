//! Word embeddings and the recurrent encoders that turn an instruction into a text vector.

mod embedding;
mod encoder;
mod graph;

pub use embedding::{load_pretrained_embeddings, EmbeddingCoverage, EMBED_INIT_BOUND};
pub use encoder::{GruCell, TextEncoder, TextEncoderConfig, TextEncoderKind, TextVector};
pub use graph::TokenDependencyGraph;
