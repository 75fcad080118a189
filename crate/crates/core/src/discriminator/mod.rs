//! Text-aware conditional discriminator, labeled-instance construction and the
//! co-occurrence based sampler for mismatched ("random") descriptions.

mod cooccurrence;
mod instances;
mod network;

pub use cooccurrence::{
    build_cooccurrence, sample_random_index, sample_random_text, UnigramCooccurrence,
    DEFAULT_TOP_M, STOPWORDS,
};
pub use instances::{
    bce, build_instances, discriminator_loss, CandidateSource, Label, LabeledInstance, TextSource,
    INSTANCE_PATTERN,
};
pub use network::{Discriminator, DiscriminatorConfig, TextAwareDiscriminator};
