use std::collections::HashMap;
use std::path::Path;

use rand::Rng;

use super::vocab::Vocab;
use super::RerankerError;
use crate::numerics::Tensor;

/// Pretrained word vectors from a `token v1 ... vd` text file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Embeddings {
    pub dim: usize,
    pub tokens: Vec<String>,
    vectors: HashMap<String, Vec<f64>>,
}

impl Embeddings {
    /// Parses vectors of dimension `dim`. A first line of exactly two
    /// integers (`<count> <dim>`) is treated as a header and skipped.
    pub fn parse(text: &str, dim: usize) -> Result<Self, RerankerError> {
        let mut emb = Embeddings { dim, ..Default::default() };
        for (index, line) in text.lines().enumerate() {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if index == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
                let header_dim: usize = fields[1].parse().unwrap();
                if header_dim != dim {
                    return Err(RerankerError::EmbeddingDim { line: 1, expected: dim, found: header_dim });
                }
                continue;
            }
            if fields.len() - 1 != dim {
                return Err(RerankerError::EmbeddingDim { line: index + 1, expected: dim, found: fields.len() - 1 });
            }
            let values = fields[1..]
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| RerankerError::Embedding { line: index + 1, message: e.to_string() })?;
            let token = fields[0].to_string();
            if emb.vectors.insert(token.clone(), values).is_none() {
                emb.tokens.push(token);
            }
        }
        Ok(emb)
    }

    pub fn load(path: &Path, dim: usize) -> Result<Self, RerankerError> {
        Self::parse(&std::fs::read_to_string(path)?, dim)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }
}

/// Half-width of the uniform range for randomly initialized rows.
pub fn oov_bound(dim: usize) -> f64 {
    (3.0 / dim as f64).sqrt()
}

/// A `[vocab, dim]` table: rows found in `pretrained` (exact, then
/// lowercase) are copied, all others are uniform in `±sqrt(3/dim)`.
pub fn init_embeddings(pretrained: Option<&Embeddings>, vocab: &Vocab, dim: usize, rng: &mut impl Rng) -> Result<Tensor, RerankerError> {
    if let Some(p) = pretrained {
        if p.dim != dim {
            return Err(RerankerError::EmbeddingDim { line: 0, expected: dim, found: p.dim });
        }
    }
    let bound = oov_bound(dim);
    let mut data = Vec::with_capacity(vocab.n_words() * dim);
    for word in vocab.words() {
        let row: Vec<f64> = (0..dim).map(|_| rng.random_range(-bound..bound)).collect();
        let copied = pretrained.and_then(|p| p.get(word).or_else(|| p.get(&word.to_lowercase())));
        data.extend_from_slice(copied.unwrap_or(&row));
    }
    Ok(Tensor::new(vec![vocab.n_words(), dim], data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bound_for_fifty_dims() {
        assert!((oov_bound(50) - 0.244_948_974_278_317_8).abs() < 1e-15);
    }

    #[test]
    fn copies_and_randomizes() {
        let emb = Embeddings::parse("2 3\nobama 0.1 0.2 0.3\nwas 1 2 3\n", 3).unwrap();
        assert_eq!(emb.len(), 2);
        let vocab = Vocab::build(["Obama", "hawaii"], emb.tokens.iter().map(String::as_str), 1);
        let table = init_embeddings(Some(&emb), &vocab, 3, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(table.row(vocab.word_id("Obama")), &[0.1, 0.2, 0.3]);
        assert_eq!(table.row(vocab.word_id("was")), &[1.0, 2.0, 3.0]);
        let bound = oov_bound(3);
        for w in ["hawaii", "<unk>", "PER"] {
            assert!(table.row(vocab.word_id(w)).iter().all(|v| v.abs() <= bound));
        }
    }

    #[test]
    fn empty_file_is_all_random() {
        let emb = Embeddings::parse("", 50).unwrap();
        let vocab = Vocab::build(["a", "b"], [], 1);
        let table = init_embeddings(Some(&emb), &vocab, 50, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(table.data().iter().all(|v| v.abs() <= 0.2449));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        assert!(matches!(Embeddings::parse("a 1 2\n", 3), Err(RerankerError::EmbeddingDim { found: 2, .. })));
        assert!(matches!(Embeddings::parse("10 4\n", 3), Err(RerankerError::EmbeddingDim { found: 4, .. })));
        let emb = Embeddings::parse("a 1 2\n", 2).unwrap();
        assert!(init_embeddings(Some(&emb), &Vocab::new(), 3, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }
}
