mod common;

use chrono::{DateTime, Utc};
use counterkit::corpus::{
    load_corpus, parse_corpus, save_corpus, to_jsonl, CorpusError, Dimension, DocKind, ResponseValue, SurveyKind,
};
use counterkit::{AnnotatorRole, CSRecord, Corpus, GroundSpan, Strategy, SurveyResponse};
use proptest::prelude::{prop_assert, prop_assert_eq, proptest, ProptestConfig};
use proptest::strategy::Strategy as _;

#[derive(Debug, Clone)]
struct RecordSpec {
    text: String,
    edit: Option<(String, u32, usize, usize, i64)>,
}

fn record_spec() -> impl proptest::strategy::Strategy<Value = RecordSpec> {
    let edit = proptest::option::of(("\\PC{1,40}", 0u32..2, 0usize..30, 1usize..20, 0i64..2_000_000_000));
    ("\\PC{1,60}".prop_filter("non-blank", |s| !s.trim().is_empty()), edit).prop_map(|(text, edit)| RecordSpec { text, edit })
}

fn build(n: usize, specs: &[(RecordSpec, RecordSpec, RecordSpec)], sim: f64) -> Corpus {
    let mut parts = common::small_parts(n);
    for b in &mut parts.bundles {
        b.ngo_pairs[0].similarity = sim;
    }
    for (i, triple) in specs.iter().enumerate().take(n) {
        for (s, spec) in Strategy::ALL.iter().zip([&triple.0, &triple.1, &triple.2]) {
            let mut r = common::generated(i, *s, &spec.text);
            if let Some((ed, role_pick, start, len, ts)) = &spec.edit {
                let role = match s {
                    Strategy::FC => AnnotatorRole::FC,
                    Strategy::NGO => AnnotatorRole::NGO,
                    Strategy::MIX => if *role_pick == 0 { AnnotatorRole::FC } else { AnnotatorRole::NGO },
                };
                r.edited_text = Some(ed.clone());
                r.annotator_role = Some(role);
                r.comments = (role_pick % 2 == 1).then(|| "note".to_string());
                r.edited_at = DateTime::<Utc>::from_timestamp(*ts, 0);
                let (doc_id, kind) = if *s == Strategy::NGO { ("r0".to_string(), DocKind::Ngo) } else { (format!("a{i}"), DocKind::Fc) };
                r.ground_spans.push(GroundSpan { doc_id, doc_kind: kind, start: *start, end: start + len });
            }
            parts.records.push(r);
        }
        parts.responses.push(SurveyResponse {
            respondent_id: format!("p{i}"),
            item_id: CSRecord::make_id(&format!("c{i}"), Strategy::MIX),
            kind: SurveyKind::Rating,
            dimension: Dimension::FACT,
            value: ResponseValue::RATING_SCALE[i % 5],
        });
    }
    Corpus::from_parts(parts).unwrap()
}

#[test]
fn dangling_and_out_of_bounds_are_rejected() {
    let mut parts = common::small_parts(1);
    parts.claims[0].source_article_id = "nope".into();
    assert!(matches!(Corpus::from_parts(parts), Err(CorpusError::Dangling { .. })));

    let mut parts = common::small_parts(1);
    let mut r = common::generated(0, Strategy::FC, "x");
    r.edited_text = Some("y".into());
    r.annotator_role = Some(AnnotatorRole::FC);
    r.ground_spans.push(GroundSpan { doc_id: "a0".into(), doc_kind: DocKind::Fc, start: 0, end: 10_000 });
    parts.records.push(r);
    assert!(matches!(Corpus::from_parts(parts), Err(CorpusError::Invariant(v)) if v[0].field == "ground_spans"));

    let mut parts = common::small_parts(1);
    let mut r = common::generated(0, Strategy::NGO, "x");
    r.edited_text = Some("y".into());
    r.annotator_role = Some(AnnotatorRole::FC);
    parts.records.push(r);
    assert!(matches!(Corpus::from_parts(parts), Err(CorpusError::Invariant(_))));
}

#[test]
fn malformed_lines_report_their_number() {
    let c = Corpus::from_parts(common::small_parts(1)).unwrap();
    let mut text = to_jsonl(&c);
    text.push_str("{\"v\":1,\"kind\":\"claim\"}\n");
    let lines = text.lines().count();
    assert!(matches!(parse_corpus(&text, None), Err(CorpusError::Malformed { line, .. }) if line == lines));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn corpus_round_trips(
        specs in proptest::collection::vec((record_spec(), record_spec(), record_spec()), 1..4),
        sim in -1.0f64..=1.0,
    ) {
        let n = specs.len();
        // Spans must fit the shortest document involved.
        let specs: Vec<_> = specs
            .into_iter()
            .map(|(a, b, c)| {
                let clip = |mut s: RecordSpec| {
                    if let Some(e) = s.edit.as_mut() {
                        e.2 = e.2.min(20);
                        e.3 = e.3.min(20);
                    }
                    s
                };
                (clip(a), clip(b), clip(c))
            })
            .collect();
        let corpus = build(n, &specs, sim);
        let text = to_jsonl(&corpus);
        let back = parse_corpus(&text, None).unwrap();
        prop_assert_eq!(back.parts(), corpus.parts());
        prop_assert_eq!(to_jsonl(&back), text.clone());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        save_corpus(&corpus, &path).unwrap();
        let loaded = load_corpus(&path).unwrap();
        prop_assert_eq!(loaded.parts(), corpus.parts());
        prop_assert!(std::fs::read_dir(dir.path()).unwrap().count() == 1);
    }
}
