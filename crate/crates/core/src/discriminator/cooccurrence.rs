use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::{split_words, TextDescription};
use crate::error::{invalid, Result};

pub const DEFAULT_TOP_M: usize = 100;

/// Function words ignored when ranking unigrams.
pub const STOPWORDS: [&str; 25] = [
    "a", "an", "the", "is", "are", "it", "its", "this", "that", "of", "to", "in", "and", "or",
    "for", "on", "with", "be", "as", "at", "by", "i", "me", "my", "so",
];

/// Most frequent content words and, for each pair of them, the number of descriptions
/// containing both. The diagonal holds each word's description count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UnigramCooccurrence {
    pub unigrams: Vec<String>,
    pub counts: Vec<Vec<u64>>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl UnigramCooccurrence {
    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn count(&self, a: &str, b: &str) -> Option<u64> {
        Some(self.counts[self.index_of(a)?][self.index_of(b)?])
    }

    /// Distinct top-M unigram indices present in `raw`, sorted.
    pub fn unigrams_in(&self, raw: &str) -> Vec<usize> {
        let set: BTreeSet<usize> = split_words(raw)
            .iter()
            .filter_map(|w| self.index_of(w))
            .collect();
        set.into_iter().collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn is_content_word(w: &str) -> bool {
    w.chars().any(char::is_alphanumeric) && !STOPWORDS.contains(&w)
}

pub fn build_cooccurrence(corpus: &[TextDescription], top_m: usize) -> Result<UnigramCooccurrence> {
    if corpus.is_empty() {
        return Err(invalid("co-occurrence needs a non-empty corpus"));
    }
    let mut freq: BTreeMap<String, u64> = BTreeMap::new();
    for d in corpus {
        for w in split_words(d.raw()) {
            if is_content_word(&w) {
                *freq.entry(w).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(String, u64)> = freq.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(top_m);
    let unigrams: Vec<String> = ranked.into_iter().map(|(w, _)| w).collect();
    let index: HashMap<String, usize> = unigrams
        .iter()
        .enumerate()
        .map(|(i, w)| (w.clone(), i))
        .collect();
    let m = unigrams.len();
    let mut out = UnigramCooccurrence {
        unigrams,
        counts: vec![vec![0; m]; m],
        index,
    };
    for d in corpus {
        let present = out.unigrams_in(d.raw());
        for &a in &present {
            for &b in &present {
                out.counts[a][b] += 1;
            }
        }
    }
    Ok(out)
}

/// Picks the index of a mismatched description for `desc`.
///
/// Finds the top-M unigrams that never co-occur with any of `desc`'s top-M unigrams and
/// draws uniformly among descriptions containing one of them. If there is none, returns
/// the description with the least total co-occurrence (lowest index on ties). A query
/// without top-M unigrams gets a uniform draw. Descriptions equal to `desc` are never chosen.
pub fn sample_random_index(
    desc: &TextDescription,
    corpus: &[TextDescription],
    cooc: &UnigramCooccurrence,
    seed: u64,
) -> Result<usize> {
    if corpus.len() < 2 {
        return Err(invalid(
            "random-text sampling needs at least two descriptions",
        ));
    }
    let eligible: Vec<usize> = (0..corpus.len())
        .filter(|&i| corpus[i].raw() != desc.raw() || corpus[i].tokens() != desc.tokens())
        .collect();
    if eligible.is_empty() {
        return Err(invalid("every corpus description equals the query"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let query = cooc.unigrams_in(desc.raw());
    if query.is_empty() {
        return Ok(eligible[rng.gen_range(0..eligible.len())]);
    }
    let unrelated: BTreeSet<usize> = (0..cooc.unigrams.len())
        .filter(|&u| query.iter().all(|&q| cooc.counts[u][q] == 0))
        .collect();
    let candidates: Vec<usize> = eligible
        .iter()
        .copied()
        .filter(|&i| {
            cooc.unigrams_in(corpus[i].raw())
                .iter()
                .any(|u| unrelated.contains(u))
        })
        .collect();
    if !candidates.is_empty() {
        return Ok(candidates[rng.gen_range(0..candidates.len())]);
    }
    let total = |i: usize| -> u64 {
        cooc.unigrams_in(corpus[i].raw())
            .iter()
            .map(|&u| query.iter().map(|&q| cooc.counts[u][q]).sum::<u64>())
            .sum()
    };
    Ok(eligible
        .iter()
        .copied()
        .min_by_key(|&i| (total(i), i))
        .expect("eligible is non-empty"))
}

pub fn sample_random_text(
    desc: &TextDescription,
    corpus: &[TextDescription],
    cooc: &UnigramCooccurrence,
    seed: u64,
) -> Result<TextDescription> {
    Ok(corpus[sample_random_index(desc, corpus, cooc, seed)?].clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(lines: &[&str]) -> Vec<TextDescription> {
        lines
            .iter()
            .map(|l| TextDescription::from_ids(*l, vec![1]).unwrap())
            .collect()
    }

    #[test]
    fn counts_pairs_per_description() {
        let c = corpus(&["bright image", "dark image"]);
        let m = build_cooccurrence(&c, 10).unwrap();
        assert_eq!(m.count("bright", "dark"), Some(0));
        assert_eq!(m.count("bright", "image"), Some(1));
        assert_eq!(m.count("image", "image"), Some(2));
        for i in 0..m.unigrams.len() {
            for j in 0..m.unigrams.len() {
                assert_eq!(m.counts[i][j], m.counts[j][i]);
            }
        }
    }

    #[test]
    fn stopwords_are_excluded() {
        let m =
            build_cooccurrence(&corpus(&["make the image brighter", "it is good"]), 10).unwrap();
        assert!(m.index_of("the").is_none());
        assert!(m.index_of("it").is_none());
        assert!(m.index_of("brighter").is_some());
    }

    #[test]
    fn picks_an_unrelated_description() {
        let c = corpus(&[
            "increase brightness",
            "decrease saturation",
            "increase brightness a lot",
        ]);
        let m = build_cooccurrence(&c, 10).unwrap();
        for seed in 0..20 {
            let got = sample_random_text(&c[0], &c, &m, seed).unwrap();
            assert_eq!(got.raw(), "decrease saturation");
        }
    }

    #[test]
    fn falls_back_to_least_cooccurring() {
        // Every word co-occurs with "photo", so no zero-co-occurrence candidate exists.
        let c = corpus(&["photo warm", "photo warm cool", "photo cool", "photo"]);
        let m = build_cooccurrence(&c, 10).unwrap();
        let got = sample_random_index(&c[0], &c, &m, 3).unwrap();
        assert_ne!(got, 0);
        let totals: Vec<u64> = (0..c.len())
            .map(|i| {
                let q = m.unigrams_in(c[0].raw());
                m.unigrams_in(c[i].raw())
                    .iter()
                    .map(|&u| q.iter().map(|&v| m.counts[u][v]).sum::<u64>())
                    .sum()
            })
            .collect();
        let best = (1..c.len()).min_by_key(|&i| (totals[i], i)).unwrap();
        assert_eq!(got, best);
    }

    #[test]
    fn single_description_corpus_is_rejected() {
        let c = corpus(&["brighter"]);
        let m = build_cooccurrence(&c, 10).unwrap();
        assert!(sample_random_text(&c[0], &c, &m, 0).is_err());
    }
}
