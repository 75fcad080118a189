use std::collections::HashMap;
use std::path::Path;

use candle_core::{Device, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Vocabulary, PAD_ID};
use crate::error::{Error, Result};

/// Rows for words missing from a pretrained file are drawn from `U(-b, b)`.
pub const EMBED_INIT_BOUND: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbeddingCoverage {
    pub found: usize,
    pub total: usize,
}

/// Reads a whitespace-separated `token v1 .. vd` file and builds a `[V, d]` table for `vocab`.
///
/// Found rows are copied verbatim, the rest are seeded random, and the padding row is zero.
/// Coverage counts non-special vocabulary entries found in the file.
pub fn load_pretrained_embeddings(
    path: impl AsRef<Path>,
    vocab: &Vocabulary,
    dim: usize,
    seed: u64,
) -> Result<(Tensor, EmbeddingCoverage)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut vectors: HashMap<&str, Vec<f64>> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else { continue };
        let values = parts
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Format(format!("{}: line {}: {e}", path.display(), i + 1)))?;
        if values.len() != dim {
            return Err(Error::Format(format!(
                "{}: line {}: expected {dim} values, found {}",
                path.display(),
                i + 1,
                values.len()
            )));
        }
        vectors.entry(token).or_insert(values);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = Vec::with_capacity(vocab.len() * dim);
    let mut found = 0;
    for (id, token) in vocab.tokens().iter().enumerate() {
        // Draw for every row so a row's random values do not depend on file coverage.
        let random: Vec<f64> = (0..dim)
            .map(|_| rng.gen_range(-EMBED_INIT_BOUND..=EMBED_INIT_BOUND))
            .collect();
        if id as u32 == PAD_ID {
            table.extend(std::iter::repeat_n(0.0, dim));
        } else if let Some(v) = vectors.get(token.as_str()) {
            found += usize::from(id >= 2);
            table.extend_from_slice(v);
        } else {
            table.extend(random);
        }
    }
    let tensor = Tensor::from_vec(table, (vocab.len(), dim), &Device::Cpu)?;
    Ok((
        tensor,
        EmbeddingCoverage {
            found,
            total: vocab.len() - 2,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::build_vocabulary;

    #[test]
    fn copies_found_rows_and_randomizes_the_rest() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.txt");
        std::fs::write(&path, "a 0.5 -1.0 2.0\nzzz 1 1 1\n").unwrap();
        let vocab = build_vocabulary(&["a b"], 1).unwrap();
        let (t, cov) = load_pretrained_embeddings(&path, &vocab, 3, 7).unwrap();
        assert_eq!(cov, EmbeddingCoverage { found: 1, total: 2 });
        let rows: Vec<Vec<f64>> = t.to_vec2().unwrap();
        assert_eq!(rows[0], vec![0.0; 3]);
        assert_eq!(rows[vocab.id("a").unwrap() as usize], vec![0.5, -1.0, 2.0]);
        let b = &rows[vocab.id("b").unwrap() as usize];
        assert!(b.iter().all(|v| v.abs() <= EMBED_INIT_BOUND));
        let (t2, _) = load_pretrained_embeddings(&path, &vocab, 3, 7).unwrap();
        assert_eq!(t2.to_vec2::<f64>().unwrap(), rows);
    }

    #[test]
    fn dimension_mismatch_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.txt");
        std::fs::write(&path, "a 1 2 3\nb 1 2\n").unwrap();
        let vocab = build_vocabulary(&["a b"], 1).unwrap();
        let err = load_pretrained_embeddings(&path, &vocab, 3, 0).unwrap_err();
        assert!(
            matches!(err, Error::Format(ref m) if m.contains("line 2")),
            "{err}"
        );
        assert!(matches!(
            load_pretrained_embeddings(dir.path().join("missing"), &vocab, 3, 0),
            Err(Error::Io { .. })
        ));
    }
}
