//! Claim to NGO-myth matching by sentence-embedding cosine similarity and
//! knowledge-bundle assembly.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{BundlePair, Claim, KnowledgeBundle, NGOReport};
use crate::tokenize::tokens;

pub const DEFAULT_THRESHOLD: f64 = 0.4;
pub const DEFAULT_MODEL_ID: &str = "all-mpnet-base-v2";
pub const DEFAULT_BATCH_SIZE: usize = 64;

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("embedding provider unreachable: {0}")]
    Unreachable(String),
    #[error("embedding provider error: {0}")]
    Provider(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("provider returned {got} vectors for {expected} texts")]
    CountMismatch { expected: usize, got: usize },
    #[error("non-finite value in embedding")]
    NonFinite,
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("threshold {0} outside [-1, 1]")]
    InvalidThreshold(f64),
    #[error("stub table: {0}")]
    Table(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Self {
        EmbeddingVector { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Request body of the `/embed` wire contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
}

/// Response body of the `/embed` wire contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub dim: usize,
    pub vectors: Vec<Vec<f64>>,
}

impl EmbedResponse {
    /// Check the response against the request size and its own declared dim.
    pub fn into_vectors(self, expected: usize) -> Result<Vec<Vec<f64>>, MatchError> {
        if self.vectors.len() != expected {
            return Err(MatchError::CountMismatch { expected, got: self.vectors.len() });
        }
        for v in &self.vectors {
            if v.len() != self.dim {
                return Err(MatchError::DimMismatch { expected: self.dim, got: v.len() });
            }
        }
        Ok(self.vectors)
    }
}

pub trait EmbeddingProvider: Send + Sync {
    fn model_id(&self) -> &str;
    /// Embed one batch; one vector per input text, in order.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, MatchError>;
}

/// Embed `texts` in batches of `batch_size`, checking that every vector is
/// finite and shares one dimension.
pub fn embed(
    provider: &dyn EmbeddingProvider,
    texts: &[String],
    batch_size: usize,
) -> Result<Vec<EmbeddingVector>, MatchError> {
    if texts.iter().any(|t| t.trim().is_empty()) {
        return Err(MatchError::EmptyText);
    }
    let mut out: Vec<EmbeddingVector> = Vec::with_capacity(texts.len());
    for chunk in texts.chunks(batch_size.max(1)) {
        let vectors = provider.embed_batch(chunk)?;
        if vectors.len() != chunk.len() {
            return Err(MatchError::CountMismatch { expected: chunk.len(), got: vectors.len() });
        }
        for v in vectors {
            if let Some(first) = out.first() {
                if v.len() != first.dim() {
                    return Err(MatchError::DimMismatch { expected: first.dim(), got: v.len() });
                }
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(MatchError::NonFinite);
            }
            out.push(EmbeddingVector::new(v));
        }
    }
    Ok(out)
}

pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, MatchError> {
    if a.dim() != b.dim() {
        return Err(MatchError::DimMismatch { expected: a.dim(), got: b.dim() });
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.values.iter().zip(&b.values) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(MatchError::ZeroVector);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// Deterministic offline provider: exact-text lookup table, falling back to
/// the mean of per-token pseudo-random unit vectors seeded from the token.
#[derive(Debug, Clone)]
pub struct StubProvider {
    dim: usize,
    seed: u64,
    table: HashMap<String, Vec<f64>>,
}

#[derive(Debug, Deserialize)]
struct StubTableFile {
    dim: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    table: BTreeMap<String, Vec<f64>>,
}

impl Default for StubProvider {
    fn default() -> Self {
        StubProvider::new(64, 0)
    }
}

impl StubProvider {
    pub fn new(dim: usize, seed: u64) -> Self {
        StubProvider { dim: dim.max(1), seed, table: HashMap::new() }
    }

    pub fn with_entry(mut self, text: impl Into<String>, vector: Vec<f64>) -> Result<Self, MatchError> {
        if vector.len() != self.dim {
            return Err(MatchError::DimMismatch { expected: self.dim, got: vector.len() });
        }
        self.table.insert(text.into(), vector);
        Ok(self)
    }

    /// Load `{"dim": D, "seed": S, "table": {"text": [..], ...}}`.
    pub fn from_table_file(path: &Path) -> Result<Self, MatchError> {
        let raw = std::fs::read_to_string(path).map_err(|e| MatchError::Table(format!("{}: {e}", path.display())))?;
        let file: StubTableFile = serde_json::from_str(&raw).map_err(|e| MatchError::Table(e.to_string()))?;
        file.table
            .into_iter()
            .try_fold(StubProvider::new(file.dim, file.seed), |p, (t, v)| p.with_entry(t, v))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Unit vector derived only from (seed, token).
    pub fn token_vector(&self, token: &str) -> Vec<f64> {
        let digest = Sha256::new()
            .chain_update(self.seed.to_le_bytes())
            .chain_update(token.as_bytes())
            .finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(seed);
        loop {
            let v: Vec<f64> = (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                return v.into_iter().map(|x| x / norm).collect();
            }
        }
    }

    pub fn embed_one(&self, text: &str) -> Result<Vec<f64>, MatchError> {
        if let Some(v) = self.table.get(text) {
            return Ok(v.clone());
        }
        let toks = tokens(text);
        if toks.is_empty() {
            return Err(MatchError::EmptyText);
        }
        let mut acc = vec![0.0; self.dim];
        for t in &toks {
            for (a, x) in acc.iter_mut().zip(self.token_vector(t)) {
                *a += x;
            }
        }
        let n = toks.len() as f64;
        Ok(acc.into_iter().map(|a| a / n).collect())
    }
}

impl EmbeddingProvider for StubProvider {
    fn model_id(&self) -> &str {
        "stub"
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, MatchError> {
        texts.iter().map(|t| self.embed_one(t)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MythRef {
    pub report_id: String,
    pub pair_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub claim_id: String,
    pub myth_ref: MythRef,
    pub similarity: f64,
    /// Manual review outcome; matches are accepted unless rejected.
    #[serde(default = "yes")]
    pub accepted: bool,
}

fn yes() -> bool {
    true
}

/// Score every claim against every myth; keep similarities strictly above
/// `threshold`, sorted per claim by descending similarity then myth ref.
/// Claims keep their input order.
pub fn match_claims(
    claims: &[Claim],
    reports: &[NGOReport],
    provider: &dyn EmbeddingProvider,
    threshold: f64,
    batch_size: usize,
) -> Result<Vec<MatchResult>, MatchError> {
    if !(-1.0..=1.0).contains(&threshold) {
        return Err(MatchError::InvalidThreshold(threshold));
    }
    let myths: Vec<(MythRef, &str)> = reports
        .iter()
        .flat_map(|r| {
            r.pairs.iter().enumerate().map(|(i, p)| {
                (MythRef { report_id: r.id.clone(), pair_index: i }, p.myth.as_str())
            })
        })
        .collect();
    if claims.is_empty() || myths.is_empty() {
        return Ok(Vec::new());
    }
    // Embed each distinct text once.
    let mut unique: Vec<String> = claims
        .iter()
        .map(|c| c.text.clone())
        .chain(myths.iter().map(|(_, m)| m.to_string()))
        .collect();
    unique.sort();
    unique.dedup();
    let vectors = embed(provider, &unique, batch_size)?;
    let index: HashMap<&str, &EmbeddingVector> = unique.iter().map(String::as_str).zip(&vectors).collect();

    let per_claim: Vec<Vec<MatchResult>> = claims
        .par_iter()
        .map(|claim| {
            let cv = index[claim.text.as_str()];
            let mut hits = Vec::new();
            for (myth_ref, text) in &myths {
                let sim = cosine(cv, index[text])?;
                if sim > threshold {
                    hits.push(MatchResult {
                        claim_id: claim.id.clone(),
                        myth_ref: myth_ref.clone(),
                        similarity: sim,
                        accepted: true,
                    });
                }
            }
            sort_matches(&mut hits);
            Ok(hits)
        })
        .collect::<Result<_, MatchError>>()?;
    Ok(per_claim.into_iter().flatten().collect())
}

fn sort_matches(hits: &mut [MatchResult]) {
    hits.sort_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then_with(|| a.myth_ref.cmp(&b.myth_ref))
    });
}

/// Keep results strictly above a (possibly raised) threshold.
pub fn filter_threshold(results: &[MatchResult], threshold: f64) -> Vec<MatchResult> {
    results.iter().filter(|r| r.similarity > threshold).cloned().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleSet {
    pub bundles: Vec<KnowledgeBundle>,
    /// Claims with no accepted match, in input order.
    pub unmatched: Vec<String>,
}

/// One bundle per claim with at least one accepted match; pairs keep the
/// sorted match order. Results referring to unknown reports are ignored.
pub fn build_bundles(results: &[MatchResult], claims: &[Claim], reports: &[NGOReport]) -> BundleSet {
    let by_id: HashMap<&str, &NGOReport> = reports.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut grouped: HashMap<&str, Vec<&MatchResult>> = HashMap::new();
    for r in results.iter().filter(|r| r.accepted) {
        grouped.entry(r.claim_id.as_str()).or_default().push(r);
    }
    let mut out = BundleSet { bundles: Vec::new(), unmatched: Vec::new() };
    for claim in claims {
        let mut hits: Vec<MatchResult> = grouped
            .get(claim.id.as_str())
            .map(|v| v.iter().map(|r| (*r).clone()).collect())
            .unwrap_or_default();
        sort_matches(&mut hits);
        let pairs: Vec<BundlePair> = hits
            .iter()
            .filter_map(|m| {
                let report = by_id.get(m.myth_ref.report_id.as_str())?;
                let pair = report.pairs.get(m.myth_ref.pair_index)?;
                Some(BundlePair {
                    report_id: report.id.clone(),
                    pair_index: m.myth_ref.pair_index,
                    myth: pair.myth.clone(),
                    anti_stereotype: pair.anti_stereotype.clone(),
                    similarity: m.similarity,
                })
            })
            .collect();
        if pairs.is_empty() {
            out.unmatched.push(claim.id.clone());
        } else {
            out.bundles.push(KnowledgeBundle {
                claim_id: claim.id.clone(),
                fc_article_id: claim.source_article_id.clone(),
                ngo_pairs: pairs,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{NgoPair, TargetGroup};

    fn v(x: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(x.to_vec())
    }

    #[test]
    fn cosine_cases() {
        assert!((cosine(&v(&[1.0, 2.0]), &v(&[1.0, 2.0])).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        let c = cosine(&v(&[1.0, 0.0]), &v(&[1.0, 1.0])).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
        assert!(matches!(cosine(&v(&[0.0, 0.0]), &v(&[1.0, 1.0])), Err(MatchError::ZeroVector)));
        assert!(matches!(cosine(&v(&[1.0]), &v(&[1.0, 1.0])), Err(MatchError::DimMismatch { .. })));
    }

    #[test]
    fn stub_table_and_fallback() {
        let p = StubProvider::new(3, 7).with_entry("abc", vec![1.0, 2.0, 3.0]).unwrap();
        let out = embed(&p, &["abc".to_string(), "x y".to_string(), "x y".to_string()], 2).unwrap();
        assert_eq!(out[0].values, [1.0, 2.0, 3.0]);
        assert_eq!(out[1], out[2]);
        assert!(embed(&p, &[], 4).unwrap().is_empty());
        let unit = p.token_vector("women");
        assert!((unit.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(StubProvider::new(3, 0).with_entry("bad", vec![1.0]).is_err());
    }

    #[test]
    fn wire_response_checks() {
        let ok = EmbedResponse { dim: 2, vectors: vec![vec![1.0, 0.0]] };
        assert!(ok.clone().into_vectors(1).is_ok());
        assert!(matches!(ok.into_vectors(2), Err(MatchError::CountMismatch { .. })));
        let bad = EmbedResponse { dim: 2, vectors: vec![vec![1.0]] };
        assert!(matches!(bad.into_vectors(1), Err(MatchError::DimMismatch { .. })));
    }

    fn claim(id: &str, text: &str) -> Claim {
        Claim {
            id: id.into(),
            text: text.into(),
            target_group: TargetGroup::Women,
            source_article_id: format!("fc-{id}"),
        }
    }

    fn report(id: &str, myths: &[&str]) -> NGOReport {
        NGOReport {
            id: id.into(),
            source_url: "https://adl.org/x".into(),
            target_group: TargetGroup::Women,
            pairs: myths
                .iter()
                .map(|m| NgoPair { myth: m.to_string(), anti_stereotype: format!("not {m}") })
                .collect(),
        }
    }

    #[test]
    fn strict_threshold_and_identity() {
        // cos((1,0),(0.4, sqrt(0.84))) = 0.4 exactly
        let p = StubProvider::new(2, 0)
            .with_entry("claim", vec![1.0, 0.0])
            .unwrap()
            .with_entry("edge", vec![0.4, 0.84f64.sqrt()])
            .unwrap();
        let claims = [claim("c1", "claim")];
        let reports = [report("r1", &["edge", "claim"])];
        let res = match_claims(&claims, &reports, &p, 0.4, 8).unwrap();
        assert_eq!(res.len(), 1);
        assert_eq!(res[0].myth_ref.pair_index, 1);
        assert!((res[0].similarity - 1.0).abs() < 1e-12);
        let lower = match_claims(&claims, &reports, &p, 0.39, 8).unwrap();
        assert_eq!(lower.len(), 2);
        assert!(matches!(match_claims(&claims, &reports, &p, 1.5, 8), Err(MatchError::InvalidThreshold(_))));
    }

    #[test]
    fn bundles_and_unmatched() {
        let p = StubProvider::new(2, 0)
            .with_entry("a", vec![1.0, 0.0])
            .unwrap()
            .with_entry("b", vec![0.0, 1.0])
            .unwrap()
            .with_entry("m1", vec![1.0, 0.1])
            .unwrap()
            .with_entry("m2", vec![1.0, 0.3])
            .unwrap();
        let claims = [claim("c1", "a"), claim("c2", "b")];
        let reports = [report("r1", &["m1", "m2"])];
        let res = match_claims(&claims, &reports, &p, 0.4, 8).unwrap();
        let set = build_bundles(&res, &claims, &reports);
        assert_eq!(set.unmatched, ["c2"]);
        assert_eq!(set.bundles.len(), 1);
        let b = &set.bundles[0];
        assert_eq!(b.fc_article_id, "fc-c1");
        assert_eq!(b.ngo_pairs.iter().map(|p| p.myth.as_str()).collect::<Vec<_>>(), ["m1", "m2"]);

        let mut rejected = res.clone();
        rejected[0].accepted = false;
        assert_eq!(build_bundles(&rejected, &claims, &reports).bundles[0].ngo_pairs.len(), 1);
    }
}
