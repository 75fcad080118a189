use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Token ↔ id table. Ids 0 and 1 are reserved for padding and unknown words.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyFile", into = "VocabularyFile")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    min_count: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabularyFile {
    tokens: Vec<String>,
    min_count: usize,
}

impl From<Vocabulary> for VocabularyFile {
    fn from(v: Vocabulary) -> Self {
        Self {
            tokens: v.tokens,
            min_count: v.min_count,
        }
    }
}

impl TryFrom<VocabularyFile> for Vocabulary {
    type Error = Error;

    fn try_from(file: VocabularyFile) -> Result<Self> {
        match file.tokens.as_slice() {
            [pad, unk, ..] if pad == PAD_TOKEN && unk == UNK_TOKEN => {}
            _ => {
                return Err(Error::Format(format!(
                    "vocabulary must start with {PAD_TOKEN} and {UNK_TOKEN}"
                )))
            }
        }
        Self::from_tokens(file.tokens.into_iter().skip(2), file.min_count)
    }
}

impl Vocabulary {
    /// Builds from non-special tokens in id order (ids start at 2).
    pub fn from_tokens(words: impl IntoIterator<Item = String>, min_count: usize) -> Result<Self> {
        let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        let mut index = HashMap::new();
        index.insert(PAD_TOKEN.to_string(), PAD_ID);
        index.insert(UNK_TOKEN.to_string(), UNK_ID);
        for word in words {
            if index.contains_key(&word) {
                return Err(invalid(format!("duplicate vocabulary token {word:?}")));
            }
            index.insert(word.clone(), tokens.len() as u32);
            tokens.push(word);
        }
        Ok(Self {
            tokens,
            index,
            min_count,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// All tokens in id order, specials included.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// A tokenized instruction. `raw` keeps the original string.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TextDescription {
    raw: String,
    tokens: Vec<u32>,
}

impl TextDescription {
    pub fn from_ids(raw: impl Into<String>, tokens: Vec<u32>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(invalid("a description needs at least one token"));
        }
        Ok(Self {
            raw: raw.into(),
            tokens,
        })
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Lowercases and splits on whitespace; every punctuation character becomes its own token.
pub fn split_words(raw: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    for ch in raw.chars().flat_map(char::to_lowercase) {
        if ch.is_alphanumeric() {
            current.push(ch);
            continue;
        }
        if !current.is_empty() {
            out.push(std::mem::take(&mut current));
        }
        if !ch.is_whitespace() && !ch.is_control() {
            out.push(ch.to_string());
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

pub fn tokenize(raw: &str, vocab: &Vocabulary) -> Result<TextDescription> {
    let words = split_words(raw);
    if words.is_empty() {
        return Err(invalid("description is empty"));
    }
    let ids = words
        .iter()
        .map(|w| vocab.id(w).unwrap_or(UNK_ID))
        .collect();
    TextDescription::from_ids(raw, ids)
}

/// Frequency-sorted vocabulary over tokens seen at least `min_count` times.
/// Ties are broken lexicographically, so the result does not depend on corpus order.
pub fn build_vocabulary<S: AsRef<str>>(corpus: &[S], min_count: usize) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(invalid("cannot build a vocabulary from an empty corpus"));
    }
    if min_count == 0 {
        return Err(invalid("min_count must be at least 1"));
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for line in corpus {
        for word in split_words(line.as_ref()) {
            *counts.entry(word).or_default() += 1;
        }
    }
    let mut kept: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(w, c)| *c >= min_count && w != PAD_TOKEN && w != UNK_TOKEN)
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Vocabulary::from_tokens(kept.into_iter().map(|(w, _)| w), min_count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tokenize_lowercases_and_maps_unknowns() {
        let vocab = build_vocabulary(&["increase saturation"], 1).unwrap();
        let t = tokenize("Increase Saturation", &vocab).unwrap();
        assert_eq!(
            t.tokens(),
            &[
                vocab.id("increase").unwrap(),
                vocab.id("saturation").unwrap()
            ]
        );
        assert_eq!(t.raw(), "Increase Saturation");
        let t = tokenize("increase zzzqq", &vocab).unwrap();
        assert_eq!(t.tokens(), &[vocab.id("increase").unwrap(), UNK_ID]);
        assert!(tokenize("", &vocab).is_err());
        assert!(tokenize("   \t", &vocab).is_err());
    }

    #[test]
    fn punctuation_splits_into_tokens() {
        assert_eq!(
            split_words("Brighter, please!"),
            ["brighter", ",", "please", "!"]
        );
        assert_eq!(split_words("don't"), ["don", "'", "t"]);
    }

    #[test]
    fn vocabulary_thresholds() {
        let v = build_vocabulary(&["a b", "a"], 1).unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(v.id("a"), Some(2));
        assert_eq!(v.id("b"), Some(3));
        let v = build_vocabulary(&["a b", "a"], 2).unwrap();
        assert_eq!(v.tokens(), &["<pad>", "<unk>", "a"]);
        assert!(build_vocabulary::<&str>(&[], 1).is_err());
    }

    #[test]
    fn vocabulary_json_round_trip() {
        let v = build_vocabulary(&["make it brighter", "make it darker"], 1).unwrap();
        let back = Vocabulary::from_json(&v.to_json().unwrap()).unwrap();
        assert_eq!(back, v);
        assert!(Vocabulary::from_json(r#"{"tokens":["a"],"min_count":1}"#).is_err());
    }

    proptest! {
        #[test]
        fn vocabulary_ignores_corpus_order(
            mut lines in proptest::collection::vec("[a-d ]{1,12}", 1..8),
            seed in any::<u64>(),
        ) {
            let v1 = build_vocabulary(&lines, 1);
            let k = (seed as usize) % lines.len();
            lines.rotate_left(k);
            lines.reverse();
            let v2 = build_vocabulary(&lines, 1);
            prop_assert_eq!(v1.ok().map(|v| v.tokens().to_vec()), v2.ok().map(|v| v.tokens().to_vec()));
        }

        #[test]
        fn tokenize_is_deterministic(s in "[A-Za-z ,.!]{1,30}") {
            let vocab = build_vocabulary(&["a b c"], 1).unwrap();
            prop_assert_eq!(tokenize(&s, &vocab).ok(), tokenize(&s, &vocab).ok());
        }
    }
}
