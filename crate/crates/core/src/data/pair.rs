use std::collections::BTreeSet;

use crate::error::{invalid, Result};
use crate::image::Image;

/// One training record: an input image, its edited target and the instructions describing the edit.
#[derive(Debug, Clone, PartialEq)]
pub struct EditPair {
    pub input: Image,
    pub target: Image,
    /// Raw instruction strings; tokenized against a vocabulary when needed.
    pub descriptions: Vec<String>,
    pub buckets: BTreeSet<usize>,
    pub reversed: bool,
}

impl EditPair {
    pub fn new(input: Image, target: Image, descriptions: Vec<String>) -> Result<Self> {
        input.same_dims(&target)?;
        if descriptions.is_empty() {
            return Err(invalid("an edit pair needs at least one description"));
        }
        Ok(Self {
            input,
            target,
            descriptions,
            buckets: BTreeSet::new(),
            reversed: false,
        })
    }

    pub fn with_buckets(mut self, buckets: impl IntoIterator<Item = usize>) -> Self {
        self.buckets = buckets.into_iter().collect();
        self
    }

    /// Reversed pairs carry no descriptions until they are annotated.
    pub fn is_annotated(&self) -> bool {
        !self.descriptions.is_empty()
    }
}

/// Swaps input and target to sample the opposite edit. The descriptions of the forward
/// direction do not apply to the reverse one, so they are dropped.
pub fn reverse_pair(pair: &EditPair) -> EditPair {
    EditPair {
        input: pair.target.clone(),
        target: pair.input.clone(),
        descriptions: Vec::new(),
        buckets: BTreeSet::new(),
        reversed: !pair.reversed,
    }
}
