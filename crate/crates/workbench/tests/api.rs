use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use chrono::{TimeZone, Utc};
use counterkit::corpus::{BundlePair, CorpusParts, DocKind, NgoPair, SelectionFlags};
use counterkit::workbench::{AnnotatorProfile, ItemPayload, ItemView, ManualClock, ProgressReport, SubmitAck, Workbench, WorkbenchConfig};
use counterkit::genstrat::GuidelineText;
use counterkit::{
    AnnotatorRole, CSRecord, Claim, Corpus, FactCheckArticle, KnowledgeBundle, NGOReport, Strategy, TargetGroup,
};
use counterkit_workbench::{router, ApiError, AppState};
use http_body_util::BodyExt;
use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use tower::ServiceExt;

fn corpus(n: usize) -> Corpus {
    let mut parts = CorpusParts {
        reports: vec![NGOReport {
            id: "r0".into(),
            source_url: "https://www.ngo.example/myths".into(),
            target_group: TargetGroup::Migrants,
            pairs: (0..n)
                .map(|i| NgoPair { myth: format!("Myth {i}."), anti_stereotype: format!("Answer {i}.") })
                .collect(),
        }],
        ..Default::default()
    };
    for i in 0..n {
        parts.articles.push(FactCheckArticle {
            id: format!("a{i}"),
            url: format!("https://fullfact.org/check/{i}"),
            publisher: "fullfact.org".into(),
            is_signatory: true,
            claim_reviewed: format!("Migrants cause problem {i}."),
            verdict_text: "False.".into(),
            body: format!("Statistics show problem {i} is unrelated."),
            matched_keywords: vec!["migrant".into()],
            selection: SelectionFlags { group_focused: true, counters_false_claim: true, contextualizes_true_claim: false },
        });
        parts.claims.push(Claim {
            id: format!("c{i}"),
            text: format!("Migrants cause problem {i}."),
            target_group: TargetGroup::Migrants,
            source_article_id: format!("a{i}"),
        });
        parts.bundles.push(KnowledgeBundle {
            claim_id: format!("c{i}"),
            fc_article_id: format!("a{i}"),
            ngo_pairs: vec![BundlePair {
                report_id: "r0".into(),
                pair_index: i,
                myth: format!("Myth {i}."),
                anti_stereotype: format!("Answer {i}."),
                similarity: 0.5,
            }],
        });
        for s in Strategy::ALL {
            parts.records.push(CSRecord {
                id: CSRecord::make_id(&format!("c{i}"), s),
                claim_id: format!("c{i}"),
                strategy: s,
                generated_text: "The claim is wrong and here is why".into(),
                edited_text: None,
                annotator_role: None,
                ground_spans: vec![],
                comments: None,
                edited_at: None,
            });
        }
    }
    Corpus::from_parts(parts).unwrap()
}

fn app(token: Option<&str>, static_dir: Option<std::path::PathBuf>) -> Router {
    let people = vec![
        AnnotatorProfile { id: "fc1".into(), role: AnnotatorRole::FC, display_name: "F".into() },
        AnnotatorProfile { id: "ngo1".into(), role: AnnotatorRole::NGO, display_name: "N".into() },
    ];
    let clock = Arc::new(ManualClock::new(Utc.with_ymd_and_hms(2025, 3, 1, 9, 0, 0).unwrap()));
    let wb = Workbench::new(corpus(1), people, WorkbenchConfig::default(), clock);
    router(AppState { workbench: Arc::new(wb), token: token.map(str::to_string) }, static_dir)
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>, auth: Option<&str>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = auth {
        req = req.header(header::AUTHORIZATION, format!("Bearer {t}"));
    }
    let req = match body {
        Some(v) => req.header(header::CONTENT_TYPE, "application/json").body(Body::from(v.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

fn parse<T: DeserializeOwned>(bytes: &[u8]) -> T {
    serde_json::from_slice(bytes).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(bytes)))
}

async fn get<T: DeserializeOwned>(app: &Router, uri: &str) -> (StatusCode, T) {
    let (s, b) = call(app, Method::GET, uri, None, None).await;
    (s, parse(&b))
}

async fn post<T: DeserializeOwned>(app: &Router, uri: &str, body: Value) -> (StatusCode, T) {
    let (s, b) = call(app, Method::POST, uri, Some(body), None).await;
    (s, parse(&b))
}

#[tokio::test]
async fn full_editing_round_trip() {
    let app = app(None, None);
    let (s, item): (_, ItemPayload) = get(&app, "/api/next?annotator=fc1").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(item.item_id, "c0:fc");
    assert_eq!(item.documents[0].doc_kind, DocKind::Fc);
    assert!(item.lease_expires_at.is_some());

    let (s, view): (_, ItemView) = get(&app, "/api/items/c0:fc").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(view.annotator_id.as_deref(), Some("fc1"));

    let body = json!({
        "annotator_id": "fc1",
        "edited_text": "The claim is wrong and here is why today",
        "ground_spans": [{"doc_id": "a0", "doc_kind": "fc", "start": 0, "end": 5}],
    });
    let (s, ack): (_, SubmitAck) = post(&app, "/api/items/c0:fc/edit", body.clone()).await;
    assert_eq!(s, StatusCode::OK, "{ack:?}");
    assert!(ack.accepted);
    // one insertion over a nine-token reference
    assert!((ack.live_hter - 1.0 / 9.0).abs() < 1e-12);

    let (s, err): (_, ApiError) = post(&app, "/api/items/c0:fc/edit", body).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(err.error, "duplicate_submission");

    let (s, prog): (_, ProgressReport) = get(&app, "/api/progress?strategy=fc").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(prog.cells.iter().map(|c| c.submitted).sum::<usize>(), 1);
    assert!(prog.cells.iter().all(|c| c.strategy == Strategy::FC));
}

#[tokio::test]
async fn errors_map_to_distinct_statuses() {
    let app = app(None, None);
    let (s, e): (_, ApiError) = get(&app, "/api/next?annotator=ghost").await;
    assert_eq!((s, e.error.as_str()), (StatusCode::NOT_FOUND, "unknown_annotator"));
    let (s, e): (_, ApiError) = get(&app, "/api/next").await;
    assert_eq!((s, e.error.as_str()), (StatusCode::BAD_REQUEST, "bad_request"));
    let (s, e): (_, ApiError) = get(&app, "/api/items/nope").await;
    assert_eq!((s, e.error.as_str()), (StatusCode::NOT_FOUND, "unknown_item"));
    let (s, e): (_, ApiError) = get(&app, "/api/guidelines/xyz").await;
    assert_eq!((s, e.error.as_str()), (StatusCode::BAD_REQUEST, "bad_request"));
    let (s, e): (_, ApiError) = get(&app, "/api/progress?role=MIX").await;
    assert_eq!((s, e.error.as_str()), (StatusCode::BAD_REQUEST, "bad_request"));
    let (s, e): (_, ApiError) = get(&app, "/api/nowhere").await;
    assert_eq!((s, e.error.as_str()), (StatusCode::NOT_FOUND, "not_found"));

    // not leased yet
    let edit = json!({"annotator_id": "fc1", "edited_text": "x"});
    let (s, e): (_, ApiError) = post(&app, "/api/items/c0:fc/edit", edit).await;
    assert_eq!((s, e.error.as_str()), (StatusCode::CONFLICT, "not_held"));

    let (_, item): (_, ItemPayload) = get(&app, "/api/next?annotator=fc1").await;
    let uri = format!("/api/items/{}/edit", item.item_id);
    let (s, e): (_, ApiError) = post(&app, &uri, json!({"annotator_id": "fc1", "edited_text": " "})).await;
    assert_eq!((s, e.error.as_str()), (StatusCode::UNPROCESSABLE_ENTITY, "empty_edit"));

    let len = item.documents[0].text.chars().count();
    let span = json!([{"doc_id": "a0", "doc_kind": "fc", "start": 2, "end": len + 4}]);
    let (s, e): (_, ApiError) =
        post(&app, &uri, json!({"annotator_id": "fc1", "edited_text": "x", "ground_spans": span})).await;
    assert_eq!((s, e.error.as_str()), (StatusCode::UNPROCESSABLE_ENTITY, "span_out_of_bounds"));
    assert_eq!(e.detail, Some(json!({"doc_id": "a0", "start": 2, "end": len + 4, "len": len})));

    let span = json!([{"doc_id": "r0", "doc_kind": "ngo", "start": 0, "end": 1}]);
    let (s, e): (_, ApiError) =
        post(&app, &uri, json!({"annotator_id": "fc1", "edited_text": "x", "ground_spans": span})).await;
    assert_eq!((s, e.error.as_str()), (StatusCode::UNPROCESSABLE_ENTITY, "unknown_document"));

    let (s, b) = call(&app, Method::POST, &uri, Some(json!({"edited_text": 3})), None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(parse::<ApiError>(&b).error, "bad_request");

    // fc1 takes c0:mix next, then nothing is left for the FC role
    let (s, _): (_, ItemPayload) = get(&app, "/api/next?annotator=fc1").await;
    assert_eq!(s, StatusCode::OK);
    let (s, e): (_, ApiError) = get(&app, "/api/next?annotator=fc1").await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert!(e.error == "no_eligible_items" || e.error == "no_items_left", "{e:?}");
}

#[tokio::test]
async fn guidelines_follow_the_strategy() {
    let app = app(None, None);
    for (path, s) in [("fc", Strategy::FC), ("NGO", Strategy::NGO), ("mix", Strategy::MIX)] {
        let (code, g): (_, GuidelineText) = get(&app, &format!("/api/guidelines/{path}")).await;
        assert_eq!(code, StatusCode::OK);
        assert_eq!(g, GuidelineText::default_for(s));
    }
}

#[tokio::test]
async fn bearer_token_guards_the_api() {
    let app = app(Some("s3cret"), None);
    let (s, b) = call(&app, Method::GET, "/api/guidelines/fc", None, None).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    assert_eq!(parse::<ApiError>(&b).error, "unauthorized");
    let (s, _) = call(&app, Method::GET, "/api/guidelines/fc", None, Some("wrong")).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let (s, _) = call(&app, Method::GET, "/api/guidelines/fc", None, Some("s3cret")).await;
    assert_eq!(s, StatusCode::OK);
}

#[tokio::test]
async fn static_bundle_is_served_outside_the_api() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<h1>ui</h1>").unwrap();
    let app = app(Some("t"), Some(dir.path().to_path_buf()));
    let (s, b) = call(&app, Method::GET, "/index.html", None, None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(b, b"<h1>ui</h1>");
    let (s, b) = call(&app, Method::GET, "/", None, None).await;
    assert_eq!((s, b.as_slice()), (StatusCode::OK, b"<h1>ui</h1>".as_slice()));
    let (s, _) = call(&app, Method::GET, "/api/next?annotator=fc1", None, None).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn serves_over_tcp() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let people = vec![AnnotatorProfile { id: "fc1".into(), role: AnnotatorRole::FC, display_name: "F".into() }];
    let wb = Workbench::new(corpus(1), people, WorkbenchConfig::default(), Arc::new(counterkit::workbench::SystemClock));
    let state = AppState { workbench: Arc::new(wb), token: None };
    tokio::spawn(counterkit_workbench::serve(addr, state, None));
    let mut last = None;
    for _ in 0..50 {
        match tokio::net::TcpStream::connect(addr).await {
            Ok(s) => {
                last = Some(s);
                break;
            }
            Err(_) => tokio::time::sleep(std::time::Duration::from_millis(20)).await,
        }
    }
    let mut stream = last.expect("server did not start");
    use tokio::io::{AsyncReadExt, AsyncWriteExt};
    stream
        .write_all(b"GET /api/guidelines/fc HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n")
        .await
        .unwrap();
    let mut out = String::new();
    stream.read_to_string(&mut out).await.unwrap();
    assert!(out.starts_with("HTTP/1.1 200"), "{out}");
    assert!(out.contains("\"strategy\":\"FC\""));
}
