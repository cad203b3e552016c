use counterkit::matcher::*;
use counterkit::corpus::NgoPair;
use counterkit::{Claim, NGOReport, TargetGroup};
use proptest::prelude::{prop_assert, prop_assert_eq, proptest, ProptestConfig};

fn claim(id: &str, text: &str) -> Claim {
    Claim { id: id.into(), text: text.into(), target_group: TargetGroup::Migrants, source_article_id: "a".into() }
}

fn report(id: &str, myths: &[&str]) -> NGOReport {
    NGOReport {
        id: id.into(),
        source_url: format!("https://ngo.example/{id}"),
        target_group: TargetGroup::Migrants,
        pairs: myths.iter().map(|m| NgoPair { myth: m.to_string(), anti_stereotype: format!("not {m}") }).collect(),
    }
}

/// Three claims, four myths, vectors chosen so every cosine is a hand-checkable fraction.
fn fixture() -> (Vec<Claim>, Vec<NGOReport>, StubProvider) {
    let table: &[(&str, [f64; 4])] = &[
        ("claim a", [1.0, 0.0, 0.0, 0.0]),
        ("claim b", [0.0, 1.0, 0.0, 0.0]),
        ("claim c", [0.0, 0.0, 3.0, 4.0]),
        ("myth 1", [2.0, 4.0, 2.0, 1.0]),
        ("myth 2", [1.0, 0.0, 0.0, 0.0]),
        ("myth 3", [0.0, 0.0, 0.0, 1.0]),
        ("myth 4", [0.0, 1.0, 1.0, 0.0]),
    ];
    let provider = table
        .iter()
        .try_fold(StubProvider::new(4, 0), |p, (t, v)| p.with_entry(*t, v.to_vec()))
        .unwrap();
    let claims = vec![claim("a", "claim a"), claim("b", "claim b"), claim("c", "claim c")];
    let reports = vec![report("r1", &["myth 1", "myth 2"]), report("r2", &["myth 3", "myth 4"])];
    (claims, reports, provider)
}

fn key(r: &MatchResult) -> (String, String, usize) {
    (r.claim_id.clone(), r.myth_ref.report_id.clone(), r.myth_ref.pair_index)
}

#[test]
fn hand_scored_fixture() {
    let (claims, reports, provider) = fixture();
    let got = match_claims(&claims, &reports, &provider, DEFAULT_THRESHOLD, 2).unwrap();
    // claim a: myth 1 = 2/5 (not strictly above), myth 2 = 1
    // claim b: myth 1 = 4/5, myth 4 = 1/sqrt(2)
    // claim c: myth 1 = 10/25 (not strictly above), myth 3 = 4/5, myth 4 = 3/(5 sqrt(2))
    let expected = [
        ("a", "r1", 1, 1.0),
        ("b", "r1", 0, 0.8),
        ("b", "r2", 1, 1.0 / 2f64.sqrt()),
        ("c", "r2", 0, 0.8),
        ("c", "r2", 1, 3.0 / (5.0 * 2f64.sqrt())),
    ];
    assert_eq!(got.len(), expected.len());
    for (r, (c, rep, i, sim)) in got.iter().zip(expected) {
        assert_eq!(key(r), (c.to_string(), rep.to_string(), i));
        assert!((r.similarity - sim).abs() < 1e-12, "{r:?}");
        assert!(r.accepted);
    }

    let bundles = build_bundles(&got, &claims, &reports);
    assert!(bundles.unmatched.is_empty());
    assert_eq!(bundles.bundles.len(), 3);
    assert_eq!(bundles.bundles[1].report_ids(), ["r1", "r2"]);
    assert_eq!(bundles.bundles[0].ngo_pairs[0].myth, "myth 2");
}

#[test]
fn rejected_matches_leave_claims_unmatched() {
    let (claims, reports, provider) = fixture();
    let mut got = match_claims(&claims, &reports, &provider, DEFAULT_THRESHOLD, 64).unwrap();
    got.iter_mut().filter(|r| r.claim_id == "a").for_each(|r| r.accepted = false);
    let set = build_bundles(&got, &claims, &reports);
    assert_eq!(set.unmatched, ["a"]);
    assert_eq!(set.bundles.len(), 2);
}

#[test]
fn threshold_outside_range_is_rejected() {
    let (claims, reports, provider) = fixture();
    assert!(matches!(
        match_claims(&claims, &reports, &provider, 1.5, 8),
        Err(MatchError::InvalidThreshold(_))
    ));
}

struct ShortProvider;

impl EmbeddingProvider for ShortProvider {
    fn model_id(&self) -> &str {
        "short"
    }
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, MatchError> {
        Ok(texts.iter().skip(1).map(|_| vec![1.0, 0.0]).collect())
    }
}

#[test]
fn provider_contract_violations_surface() {
    let texts = vec!["x".to_string(), "y".to_string()];
    assert!(matches!(embed(&ShortProvider, &texts, 8), Err(MatchError::CountMismatch { expected: 2, got: 1 })));
    assert!(matches!(embed(&StubProvider::default(), &["  ".to_string()], 8), Err(MatchError::EmptyText)));
    let resp: EmbedResponse = serde_json::from_str(r#"{"dim":2,"vectors":[[1,0],[0,1,2]]}"#).unwrap();
    assert!(matches!(resp.into_vectors(2), Err(MatchError::DimMismatch { expected: 2, got: 3 })));
    let req = serde_json::to_value(EmbedRequest { texts }).unwrap();
    assert_eq!(req, serde_json::json!({"texts": ["x", "y"]}));
}

#[test]
fn stub_table_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("stub.json");
    std::fs::write(&path, r#"{"dim":3,"seed":9,"table":{"hello":[1,2,3]}}"#).unwrap();
    let p = StubProvider::from_table_file(&path).unwrap();
    assert_eq!(p.embed_one("hello").unwrap(), vec![1.0, 2.0, 3.0]);
    assert_eq!(p.embed_one("other words").unwrap(), StubProvider::new(3, 9).embed_one("other words").unwrap());
    std::fs::write(&path, r#"{"dim":2,"table":{"hello":[1,2,3]}}"#).unwrap();
    assert!(StubProvider::from_table_file(&path).is_err());
}

fn vec4() -> impl proptest::strategy::Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-10.0f64..10.0, 4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn cosine_symmetric_and_bounded(a in vec4(), b in vec4()) {
        let (a, b) = (EmbeddingVector::new(a), EmbeddingVector::new(b));
        if let (Ok(x), Ok(y)) = (cosine(&a, &b), cosine(&b, &a)) {
            prop_assert_eq!(x, y);
            prop_assert!((-1.0..=1.0).contains(&x));
        }
    }

    #[test]
    fn raising_threshold_only_removes(t1 in -1.0f64..1.0, t2 in -1.0f64..1.0, words in proptest::collection::vec("[a-e]{1,3}", 6)) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let claims = vec![claim("x", &words[..3].join(" ")), claim("y", &words[3..].join(" "))];
        let reports = vec![report("r", &[words[0].as_str(), words[4].as_str(), "e d c"])];
        let provider = StubProvider::new(16, 3);
        let low = match_claims(&claims, &reports, &provider, lo, 4).unwrap();
        let high = match_claims(&claims, &reports, &provider, hi, 4).unwrap();
        prop_assert!(high.iter().all(|h| low.iter().any(|l| key(l) == key(h))));
        prop_assert_eq!(filter_threshold(&low, hi).iter().map(key).collect::<Vec<_>>(), high.iter().map(key).collect::<Vec<_>>());
    }
}
