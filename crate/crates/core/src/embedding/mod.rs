//! Article embeddings and cosine-similarity relevance filtering.
//!
//! Vectors come either from an HTTP embedding service (see [`service`]) or
//! from [`stub_embed`], a deterministic hashed bag of tokens that needs no
//! model but still puts documents with overlapping vocabulary close together.

pub mod server;
pub mod service;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{tokenize, Article};
use crate::error::{Error, Result};

pub const DEFAULT_DIM: usize = 768;

/// Default cosine-similarity cut-off for article relevance.
pub const DEFAULT_TAU: f64 = 0.75;

const STUB_SEED: u64 = 0x6d65_7263_6174_6f72;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub article_id: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelevanceThreshold(f64);

impl RelevanceThreshold {
    pub fn new(tau: f64) -> Result<Self> {
        if tau > 0.0 && tau <= 1.0 {
            Ok(RelevanceThreshold(tau))
        } else {
            Err(Error::Config(format!(
                "relevance threshold must lie in (0, 1], got {tau}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for RelevanceThreshold {
    fn default() -> Self {
        RelevanceThreshold(DEFAULT_TAU)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EmbedBackend {
    Stub { dim: usize },
    Service { url: String, dim: usize },
}

impl EmbedBackend {
    pub fn dim(&self) -> usize {
        match self {
            EmbedBackend::Stub { dim } | EmbedBackend::Service { dim, .. } => *dim,
        }
    }
}

impl Default for EmbedBackend {
    fn default() -> Self {
        EmbedBackend::Stub { dim: DEFAULT_DIM }
    }
}

fn token_slot(token: &str, dim: usize) -> usize {
    let mut hasher = Sha256::new();
    hasher.update(STUB_SEED.to_le_bytes());
    hasher.update(token.as_bytes());
    let digest = hasher.finalize();
    let head = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
    (head % dim as u64) as usize
}

/// Hashed bag-of-tokens embedding, scaled to unit length. Text without
/// tokens maps to the basis vector at the seed's slot.
pub fn stub_embed(text: &str, dim: usize) -> Vec<f64> {
    assert!(dim > 0, "embedding dimension must be positive");
    let mut v = vec![0.0; dim];
    let tokens = tokenize(text);
    if tokens.is_empty() {
        v[(STUB_SEED % dim as u64) as usize] = 1.0;
        return v;
    }
    for token in &tokens {
        v[token_slot(token, dim)] += 1.0;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

/// One vector per input text, in input order.
pub fn embed(texts: &[String], backend: &EmbedBackend) -> Result<Vec<Vec<f64>>> {
    let vectors = match backend {
        EmbedBackend::Stub { dim } => texts.iter().map(|t| stub_embed(t, *dim)).collect(),
        EmbedBackend::Service { url, dim } => service::EmbedClient::new(url, *dim).embed(texts)?,
    };
    for v in &vectors {
        check_vector(v, backend.dim())?;
    }
    Ok(vectors)
}

pub fn embed_articles(articles: &[Article], backend: &EmbedBackend) -> Result<Vec<Embedding>> {
    let texts: Vec<String> = articles.iter().map(Article::text).collect();
    Ok(embed(&texts, backend)?
        .into_iter()
        .zip(articles)
        .map(|(vector, a)| Embedding {
            article_id: a.id.clone(),
            vector,
        })
        .collect())
}

pub(crate) fn check_vector(v: &[f64], dim: usize) -> Result<()> {
    if v.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: v.len(),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(
            "embedding has non-finite entries".into(),
        ));
    }
    Ok(())
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let norm_a = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let norm_b = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm_a == 0.0 || norm_b == 0.0 {
        return Err(Error::InvalidInput(
            "cosine similarity of a zero vector is undefined".into(),
        ));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (norm_a * norm_b)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceReport {
    pub kept: Vec<Embedding>,
    /// Similarity of every input to the event vector, in input order.
    pub similarities: Vec<f64>,
    pub dropped: usize,
}

/// Keeps the embeddings whose similarity to `event_vec` is at least `tau`.
pub fn relevance_filter(
    event_vec: &[f64],
    embeddings: &[Embedding],
    tau: RelevanceThreshold,
) -> Result<RelevanceReport> {
    let similarities = embeddings
        .iter()
        .map(|e| cosine_similarity(event_vec, &e.vector))
        .collect::<Result<Vec<_>>>()?;
    let kept: Vec<Embedding> = embeddings
        .iter()
        .zip(&similarities)
        .filter(|(_, &s)| s >= tau.value())
        .map(|(e, _)| e.clone())
        .collect();
    let dropped = embeddings.len() - kept.len();
    tracing::info!(
        kept = kept.len(),
        dropped,
        tau = tau.value(),
        "relevance filter"
    );
    Ok(RelevanceReport {
        kept,
        similarities,
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(dim: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        v
    }

    #[test]
    fn stub_is_unit_and_deterministic() {
        let v = stub_embed("a", DEFAULT_DIM);
        assert_eq!(v.len(), 768);
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert_eq!(v, stub_embed("a", DEFAULT_DIM));
    }

    #[test]
    fn stub_empty_text_is_the_seed_basis_vector() {
        let v = stub_embed("", 16);
        assert_eq!(v, unit(16, (STUB_SEED % 16) as usize));
        assert_eq!(stub_embed("  ,;  ", 16), v);
    }

    #[test]
    fn stub_reflects_token_overlap() {
        let d = DEFAULT_DIM;
        let close = cosine_similarity(
            &stub_embed("tariff tariff EU", d),
            &stub_embed("tariff EU", d),
        )
        .unwrap();
        let far =
            cosine_similarity(&stub_embed("tariff EU", d), &stub_embed("weather", d)).unwrap();
        assert!(close > far, "{close} vs {far}");
    }

    #[test]
    fn cosine_examples() {
        let v = vec![0.3, -1.2, 4.0];
        assert!((cosine_similarity(&v, &v).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&unit(4, 0), &unit(4, 1)).unwrap(), 0.0);
        let c = cosine_similarity(&[1.0, 1.0, 0.0], &[1.0, 0.0, 0.0]).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(cosine_similarity(&[1.0], &[1.0, 0.0]).is_err());
    }

    fn with_similarity(s: f64) -> Embedding {
        // a unit vector at angle acos(s) from e0
        Embedding {
            article_id: format!("{s}"),
            vector: vec![s, (1.0 - s * s).sqrt(), 0.0, 0.0, 0.0],
        }
    }

    #[test]
    fn filter_keeps_the_boundary() {
        let exact = |id: &str, v: [f64; 5]| Embedding {
            article_id: id.into(),
            vector: v.to_vec(),
        };
        // 4/5 and 3/4 exactly against e0
        let items = [
            exact("0.8", [4.0, 3.0, 0.0, 0.0, 0.0]),
            with_similarity(0.74),
            exact("0.75", [3.0, 2.0, 1.0, 1.0, 1.0]),
        ];
        let e0 = [1.0, 0.0, 0.0, 0.0, 0.0];
        let report = relevance_filter(&e0, &items, RelevanceThreshold::new(0.75).unwrap()).unwrap();
        assert_eq!(report.similarities[2], 0.75);
        let kept: Vec<_> = report.kept.iter().map(|e| e.article_id.as_str()).collect();
        assert_eq!(kept, ["0.8", "0.75"]);
        assert_eq!(report.dropped, 1);
    }

    #[test]
    fn tiny_tau_keeps_nonnegative_corpus() {
        let items: Vec<_> = [0.01, 0.1, 0.5, 1.0]
            .into_iter()
            .map(with_similarity)
            .collect();
        let report = relevance_filter(
            &[1.0, 0.0, 0.0, 0.0, 0.0],
            &items,
            RelevanceThreshold::new(1e-6).unwrap(),
        )
        .unwrap();
        assert_eq!(report.kept.len(), 4);
        assert_eq!(report.dropped, 0);
    }

    #[test]
    fn threshold_bounds() {
        assert!(RelevanceThreshold::new(0.0).is_err());
        assert!(RelevanceThreshold::new(1.0).is_ok());
        assert!(RelevanceThreshold::new(1.01).is_err());
    }

    fn vec_strategy(dim: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, dim)
            .prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
    }

    proptest! {
        #[test]
        fn cosine_is_symmetric_and_bounded(a in vec_strategy(8), b in vec_strategy(8)) {
            let ab = cosine_similarity(&a, &b).unwrap();
            let ba = cosine_similarity(&b, &a).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!(ab.abs() <= 1.0 + 1e-12);
        }

        #[test]
        fn cosine_is_scale_invariant(a in vec_strategy(8), c in 1e-3f64..1e3) {
            let scaled: Vec<f64> = a.iter().map(|x| x * c).collect();
            prop_assert!((cosine_similarity(&a, &scaled).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn filter_is_monotone_in_tau(
            vs in prop::collection::vec(vec_strategy(4), 1..20),
            t1 in 0.01f64..1.0,
            t2 in 0.01f64..1.0,
        ) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let items: Vec<_> = vs.into_iter().enumerate()
                .map(|(i, v)| Embedding { article_id: i.to_string(), vector: v })
                .collect();
            let event = vec![1.0, 0.5, -0.2, 0.1];
            let loose = relevance_filter(&event, &items, RelevanceThreshold::new(lo).unwrap()).unwrap();
            let strict = relevance_filter(&event, &items, RelevanceThreshold::new(hi).unwrap()).unwrap();
            prop_assert!(strict.kept.len() <= loose.kept.len());
            for e in &strict.kept {
                prop_assert!(loose.kept.contains(e));
            }
        }
    }
}
