//! Shared data types: vocabulary, tokenized descriptions, edit pairs and manifests.

mod manifest;
mod pair;
mod vocab;

pub use manifest::{load_manifest, DatasetManifest, ManifestRecord, Split, SplitCounts};
pub use pair::{reverse_pair, EditPair};
pub use vocab::{
    build_vocabulary, split_words, tokenize, TextDescription, Vocabulary, PAD_ID, UNK_ID,
};
