use serde::{Deserialize, Serialize};

use super::{Embedder, GatewayError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub components: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(components: Vec<f64>) -> Self {
        Self { components }
    }

    pub fn dimension(&self) -> usize {
        self.components.len()
    }

    pub fn norm(&self) -> f64 {
        self.components.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().all(|c| c.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimilarityError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("vector has non-finite components")]
    NonFinite,
}

/// Cosine of the angle between `a` and `b`, clamped to [-1, 1].
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, SimilarityError> {
    if a.dimension() != b.dimension() {
        return Err(SimilarityError::DimensionMismatch(a.dimension(), b.dimension()));
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(SimilarityError::NonFinite);
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(SimilarityError::ZeroVector);
    }
    let dot: f64 = a.components.iter().zip(&b.components).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Offline embedder: token frequencies hashed (FNV-1a) into a fixed number
/// of buckets, then L2-normalised.
///
/// Tokens are maximal runs of ASCII alphanumerics and underscores, lowercased.
/// Tokens in the stop list carry no signal and are skipped; by default that is
/// file boilerplate every Solidity source shares (licence and pragma lines)
/// and purely numeric tokens.
#[derive(Debug, Clone)]
pub struct TokenHashEmbedder {
    dimension: usize,
    stopwords: Vec<String>,
    skip_numeric: bool,
}

pub const DEFAULT_STOPWORDS: &[&str] = &["spdx", "license", "identifier", "mit", "unlicensed", "pragma", "solidity"];

impl Default for TokenHashEmbedder {
    fn default() -> Self {
        Self::new(64)
    }
}

impl TokenHashEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self {
            dimension,
            stopwords: DEFAULT_STOPWORDS.iter().map(|s| s.to_string()).collect(),
            skip_numeric: true,
        }
    }

    /// Plain token hashing with no stop list.
    pub fn raw(dimension: usize) -> Self {
        Self {
            stopwords: Vec::new(),
            skip_numeric: false,
            ..Self::new(dimension)
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn tokens(&self, text: &str) -> Vec<String> {
        text.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .filter(|t| !t.is_empty())
            .map(|t| t.to_ascii_lowercase())
            .filter(|t| !(self.skip_numeric && t.bytes().all(|b| b.is_ascii_digit())))
            .filter(|t| !self.stopwords.iter().any(|s| s == t))
            .collect()
    }

    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a(token.as_bytes()) % self.dimension as u64) as usize
    }

    pub fn embed_one(&self, text: &str) -> EmbeddingVector {
        let mut counts = vec![0.0f64; self.dimension];
        for token in self.tokens(text) {
            counts[self.bucket(&token)] += 1.0;
        }
        let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm > 0.0 {
            for c in &mut counts {
                *c /= norm;
            }
        }
        EmbeddingVector::new(counts)
    }
}

impl Embedder for TokenHashEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn v(c: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(c.to_vec())
    }

    #[test]
    fn self_similarity_is_one() {
        let a = v(&[0.3, -2.0, 5.5]);
        assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_vectors_have_zero_similarity() {
        assert_eq!(cosine_similarity(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
    }

    #[test]
    fn hand_computed_similarity() {
        let expected = 32.0 / (14f64.sqrt() * 77f64.sqrt());
        let got = cosine_similarity(&v(&[1.0, 2.0, 3.0]), &v(&[4.0, 5.0, 6.0])).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.974631846).abs() < 1e-9);
    }

    #[test]
    fn rejects_mismatched_and_zero_vectors() {
        assert_eq!(
            cosine_similarity(&v(&[1.0]), &v(&[1.0, 2.0])),
            Err(SimilarityError::DimensionMismatch(1, 2))
        );
        assert_eq!(cosine_similarity(&v(&[0.0, 0.0]), &v(&[1.0, 2.0])), Err(SimilarityError::ZeroVector));
    }

    #[test]
    fn fnv_matches_published_vectors() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn identical_texts_embed_identically() {
        let e = TokenHashEmbedder::default();
        assert_eq!(e.embed_one("uint256 x = a * b;"), e.embed_one("uint256 x = a * b;"));
    }

    #[test]
    fn mock_embedding_matches_hand_count() {
        // "alpha beta alpha": bucket(alpha) gets 2, bucket(beta) gets 1 unless they collide.
        let e = TokenHashEmbedder::default();
        let (a, b) = (e.bucket("alpha"), e.bucket("beta"));
        assert_ne!(a, b);
        let got = e.embed_one("alpha beta alpha");
        let norm = 5f64.sqrt();
        assert!((got.components[a] - 2.0 / norm).abs() < 1e-12);
        assert!((got.components[b] - 1.0 / norm).abs() < 1e-12);
        assert_eq!(got.components.iter().filter(|c| **c != 0.0).count(), 2);
    }

    #[test]
    fn disjoint_tokens_are_dissimilar() {
        let e = TokenHashEmbedder::default();
        let left = "balance owner transfer";
        let right = "mapping keccak loop";
        let lb: Vec<_> = e.tokens(left).iter().map(|t| e.bucket(t)).collect();
        let rb: Vec<_> = e.tokens(right).iter().map(|t| e.bucket(t)).collect();
        // Hand oracle: no shared bucket means a dot product of exactly zero.
        assert!(lb.iter().all(|b| !rb.contains(b)));
        let s = cosine_similarity(&e.embed_one(left), &e.embed_one(right)).unwrap();
        assert!(s < 0.1, "similarity {s}");
    }

    #[test]
    fn stopwords_and_numbers_are_ignored() {
        let e = TokenHashEmbedder::default();
        assert_eq!(e.tokens("// SPDX-License-Identifier: MIT\npragma solidity ^0.8.20; contract A {}"), vec!["contract", "a"]);
        assert_eq!(TokenHashEmbedder::raw(64).tokens("pragma 0"), vec!["pragma", "0"]);
    }

    proptest! {
        #[test]
        fn similarity_is_symmetric_and_bounded(a in prop::collection::vec(-1e6f64..1e6, 1..16), seed in any::<u64>()) {
            let b: Vec<f64> = a.iter().enumerate().map(|(i, x)| x * ((seed >> (i % 64)) & 3) as f64 - 1.0).collect();
            let (va, vb) = (v(&a), v(&b));
            if let (Ok(s), Ok(t)) = (cosine_similarity(&va, &vb), cosine_similarity(&vb, &va)) {
                prop_assert!((-1.0..=1.0).contains(&s));
                prop_assert!((s - t).abs() < 1e-12);
            }
        }

        #[test]
        fn mock_vectors_are_unit_or_zero(text in "[a-z_ ;(){}0-9]{0,200}") {
            let e = TokenHashEmbedder::default().embed_one(&text);
            let n = e.norm();
            prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-9);
            prop_assert!(e.components.iter().all(|c| *c >= 0.0));
        }
    }
}
