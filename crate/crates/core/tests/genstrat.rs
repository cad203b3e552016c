mod common;

use counterkit::genstrat::*;
use counterkit::{Corpus, Strategy};
use proptest::prelude::{prop_assert, prop_assert_eq, proptest, ProptestConfig};

fn corpus(n: usize) -> Corpus {
    Corpus::from_parts(common::small_parts(n)).unwrap()
}

#[test]
fn prompts_are_pure_and_fully_filled() {
    let c = corpus(1);
    let book = PromptBook::default();
    for s in Strategy::ALL {
        let claim = c.claim("c0").unwrap();
        let bundle = c.bundle("c0").unwrap();
        let a = build_prompt(s, claim, bundle, c.article("a0"), &book).unwrap();
        let b = build_prompt(s, claim, bundle, c.article("a0"), &book).unwrap();
        assert_eq!(a, b);
        assert!(placeholders(&a.filled_template).is_empty(), "{s:?}");
        assert!(a.filled_template.contains(&book.guidelines(s).body));
        let expected_refs: Vec<&str> = match s {
            Strategy::FC => vec!["a0"],
            Strategy::NGO => vec!["r0"],
            Strategy::MIX => vec!["a0", "r0"],
        };
        assert_eq!(a.knowledge_refs, expected_refs);
    }
}

#[test]
fn missing_knowledge_is_reported() {
    let c = corpus(1);
    let mut bundle = c.bundle("c0").unwrap().clone();
    bundle.ngo_pairs.clear();
    let book = PromptBook::default();
    let claim = c.claim("c0").unwrap();
    assert!(matches!(build_prompt(Strategy::NGO, claim, &bundle, c.article("a0"), &book), Err(GenError::MissingKnowledge("NGO"))));
    assert!(matches!(build_prompt(Strategy::MIX, claim, &bundle, c.article("a0"), &book), Err(GenError::MissingKnowledge("NGO"))));
    assert!(matches!(build_prompt(Strategy::FC, claim, &bundle, None, &book), Err(GenError::MissingKnowledge("FC"))));
    assert!(build_prompt(Strategy::FC, claim, &bundle, c.article("a0"), &book).is_ok());
}

#[test]
fn request_wire_shape() {
    let c = corpus(1);
    let p = build_prompt(Strategy::FC, c.claim("c0").unwrap(), c.bundle("c0").unwrap(), c.article("a0"), &PromptBook::default()).unwrap();
    let req = ChatRequest::new(&p, &GenerationConfig::default());
    let v = serde_json::to_value(&req).unwrap();
    assert_eq!(v["model"], DEFAULT_MODEL_ID);
    assert_eq!(v["max_tokens"], 100);
    assert_eq!(v["temperature"], 0.8);
    assert_eq!(v["messages"][0]["role"], "user");
    assert_eq!(v["messages"][0]["content"], p.filled_template.as_str());
    assert_eq!(req.key().len(), 64);
    let split = GenerationConfig { placement: MessagePlacement::Split, ..Default::default() };
    let r2 = ChatRequest::new(&p, &split);
    assert_eq!(r2.messages.len(), 2);
    assert_ne!(r2.key(), req.key());
}

#[test]
fn campaign_generates_once_and_resumes() {
    let c = corpus(2);
    let provider = StubChatProvider { reply: Some("  Fixed reply.  ".into()) };
    let cfg = GenerationConfig::default();
    let book = PromptBook::default();
    let dir = tempfile::tempdir().unwrap();
    let audit = AuditLog::open(&dir.path().join("audit.jsonl")).unwrap();
    let out = run_generation_campaign(&c, &[Strategy::FC], &cfg, &book, &provider, 2, Some(&audit)).unwrap();
    assert_eq!(out.records.iter().map(|r| r.id.as_str()).collect::<Vec<_>>(), ["c0:fc", "c1:fc"]);
    assert!(out.errors.is_empty());
    assert_eq!(out.records[0].generated_text, "Fixed reply.");
    let audit_lines = std::fs::read_to_string(dir.path().join("audit.jsonl")).unwrap();
    assert_eq!(audit_lines.lines().count(), 2);

    let mut parts = c.into_parts();
    parts.records.extend(out.records);
    let c2 = Corpus::from_parts(parts).unwrap();
    let again = run_generation_campaign(&c2, &[Strategy::FC], &cfg, &book, &provider, 2, None).unwrap();
    assert!(again.records.is_empty());
    assert_eq!(again.skipped, 2);
    let all = run_generation_campaign(&c2, &Strategy::ALL, &cfg, &book, &provider, 4, None).unwrap();
    assert_eq!(all.records.len(), 4);
    assert_eq!(all.skipped, 2);
}

#[test]
fn recorded_fixtures_replay_identically() {
    let c = corpus(3);
    let cfg = GenerationConfig::default();
    let book = PromptBook::default();
    let dir = tempfile::tempdir().unwrap();
    let fx = dir.path().join("chat.jsonl");
    let recorder = RecordingProvider::new(StubChatProvider::default(), &fx).unwrap();
    let live = run_generation_campaign(&c, &Strategy::ALL, &cfg, &book, &recorder, 3, None).unwrap();
    assert_eq!(live.records.len(), 9);

    let replay = ReplayProvider::from_path(dir.path()).unwrap();
    assert_eq!(replay.len(), 9);
    let again = run_generation_campaign(&c, &Strategy::ALL, &cfg, &book, &replay, 1, None).unwrap();
    assert_eq!(again.records, live.records);

    let hotter = GenerationConfig { temperature: 0.9, ..Default::default() };
    let miss = run_generation_campaign(&c, &[Strategy::FC], &hotter, &book, &replay, 1, None).unwrap();
    assert!(miss.records.is_empty());
    assert_eq!(miss.errors.len(), 3);
    assert!(miss.errors[0].message.contains("fixture"));
}

#[test]
fn provider_errors_and_empty_completions() {
    assert!(matches!(
        parse_chat_response(serde_json::json!({"error": {"message": "quota"}})),
        Err(GenError::Provider(m)) if m == "quota"
    ));
    let c = corpus(1);
    let out = run_generation_campaign(
        &c,
        &[Strategy::NGO],
        &GenerationConfig::default(),
        &PromptBook::default(),
        &StubChatProvider { reply: Some("   ".into()) },
        1,
        None,
    )
    .unwrap();
    assert_eq!(out.errors.len(), 1);
    let bad = GenerationConfig { max_tokens: 0, ..Default::default() };
    assert!(run_generation_campaign(&c, &[Strategy::FC], &bad, &PromptBook::default(), &StubChatProvider::default(), 1, None).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn claim_text_appears_exactly_once(
        body in "[a-z ]{0,20}",
        inject in proptest::sample::select(vec!["", "<FC_ARTICLE>", "<NGO_ARTICLE>", "<HATER_TURN>", "<MIX_GUIDELINES>", "<"]),
        s in proptest::sample::select(Strategy::ALL.to_vec()),
    ) {
        let text = format!("QZXJ{body}{inject}QZXJ");
        let c = corpus(1);
        let mut claim = c.claim("c0").unwrap().clone();
        claim.text = text.clone();
        let p = build_prompt(s, &claim, c.bundle("c0").unwrap(), c.article("a0"), &PromptBook::default()).unwrap();
        prop_assert_eq!(p.filled_template.matches(&text).count(), 1);
        let line = format!("HATER_TURN: {text}\n");
        prop_assert!(p.filled_template.contains(&line));
    }
}
