use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use eipl_core::bank::QuestionBank;
use eipl_core::llm::{CompletionBackend, MockReply, ScriptedMock};
use eipl_core::model::InstructionMode;
use eipl_service::api::{router, AttemptView, ProgressView, QuestionView, SessionView};
use eipl_service::config::Config;
use eipl_service::{load_bank, open_grader};
use serde_json::{json, Value};
use tower::ServiceExt;

const GOOD: &str = "```python\ndef foo(s):\n    return s[::-1]\n```";
const BAD: &str = "def foo(s):\n    return s";

fn bank_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../bank")
}

fn app_with(bank: QuestionBank, backend: Arc<dyn CompletionBackend>, journal: &Path) -> Router {
    let grader = open_grader(&Config::default(), bank, backend, journal).unwrap();
    router(Arc::new(grader), None)
}

fn app(mock: Arc<ScriptedMock>, journal: &Path) -> Router {
    app_with(load_bank(&bank_dir(), None).unwrap(), mock, journal)
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, String) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn new_session(app: &Router) -> String {
    let (status, body) = call(app, Method::POST, "/api/sessions", None).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    serde_json::from_str::<SessionView>(&body).unwrap().session_id
}

async fn submit(app: &Router, sid: &str, qid: &str, text: &str) -> (StatusCode, String) {
    let uri = format!("/api/sessions/{sid}/questions/{qid}/attempts");
    call(app, Method::POST, &uri, Some(json!({ "response_text": text, "declared_language": "Hindi" }))).await
}

async fn progress(app: &Router, sid: &str) -> (StatusCode, String) {
    call(app, Method::GET, &format!("/api/sessions/{sid}/progress"), None).await
}

#[tokio::test]
async fn question_listing() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(Arc::new(ScriptedMock::default()), &dir.path().join("j.jsonl"));
    let (status, body) = call(&app, Method::GET, "/api/questions", None).await;
    assert_eq!(status, StatusCode::OK);
    let qs: Vec<QuestionView> = serde_json::from_str(&body).unwrap();
    assert_eq!(qs.len(), 11);

    let profile = load_bank(&bank_dir(), Some(&bank_dir().join("profiles/classroom.toml"))).unwrap();
    let app = app_with(profile, Arc::new(ScriptedMock::default()), &dir.path().join("j2.jsonl"));
    let qs: Vec<QuestionView> = serde_json::from_str(&call(&app, Method::GET, "/api/questions", None).await.1).unwrap();
    assert_eq!(qs.len(), 8);
    let modes: Vec<_> = qs.iter().map(|q| q.instruction_language_mode).collect();
    for pair in modes.chunks(2) {
        assert_eq!(pair, [InstructionMode::English, InstructionMode::MotherTongue]);
    }

    let empty = tempfile::tempdir().unwrap();
    let app = app_with(load_bank(empty.path(), None).unwrap(), Arc::new(ScriptedMock::default()), &dir.path().join("j3.jsonl"));
    assert_eq!(call(&app, Method::GET, "/api/questions", None).await.1, "[]");
}

#[tokio::test]
async fn sessions_are_distinct() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(Arc::new(ScriptedMock::default()), &dir.path().join("j.jsonl"));
    assert_ne!(new_session(&app).await, new_session(&app).await);
}

#[tokio::test]
async fn grading_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(Arc::new(ScriptedMock::with_texts([BAD, GOOD])), &dir.path().join("j.jsonl"));
    let sid = new_session(&app).await;

    let (status, body) = progress(&app, &sid).await;
    assert_eq!(status, StatusCode::OK);
    let p: ProgressView = serde_json::from_str(&body).unwrap();
    assert!(p.questions.values().all(|q| q.attempts_used == 0 && q.best_verdict.is_none()));

    let (status, body) = submit(&app, &sid, "reverse_string", "स्ट्रिंग को उल्टा करो").await;
    assert_eq!(status, StatusCode::OK, "Incorrect is still a 200");
    let a: AttemptView = serde_json::from_str(&body).unwrap();
    assert_eq!(a.verdict.failed_vector_index, Some(2));
    assert_eq!(a.attempts_remaining, 19);
    assert!(!a.per_test[2].passed);
    assert_eq!(a.per_test[2].expected, "'ba'");

    let (status, body) = submit(&app, &sid, "reverse_string", "reverse it").await;
    assert_eq!(status, StatusCode::OK);
    let a: AttemptView = serde_json::from_str(&body).unwrap();
    assert!(a.verdict.is_correct());
    assert_eq!(a.generated_code.as_deref(), Some("def foo(s):\n    return s[::-1]"));
    assert_eq!(a.attempts_remaining, 18);

    let p: ProgressView = serde_json::from_str(&progress(&app, &sid).await.1).unwrap();
    assert_eq!(p.questions["reverse_string"].attempts_used, 2);
    assert_eq!(p.questions["reverse_string"].best_verdict, Some(eipl_core::VerdictKind::Correct));
}

#[tokio::test]
async fn request_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mock = Arc::new(ScriptedMock::new([MockReply::Unavailable]));
    let app = app(mock.clone(), &dir.path().join("j.jsonl"));
    let sid = new_session(&app).await;

    assert_eq!(submit(&app, "nope", "reverse_string", "x").await.0, StatusCode::NOT_FOUND);
    assert_eq!(submit(&app, &sid, "nope", "x").await.0, StatusCode::NOT_FOUND);
    assert_eq!(progress(&app, "nope").await.0, StatusCode::NOT_FOUND);
    assert_eq!(submit(&app, &sid, "reverse_string", "  ").await.0, StatusCode::UNPROCESSABLE_ENTITY);
    let uri = format!("/api/sessions/{sid}/questions/reverse_string/attempts");
    assert_eq!(call(&app, Method::POST, &uri, Some(json!({}))).await.0, StatusCode::UNPROCESSABLE_ENTITY);

    let (status, body) = submit(&app, &sid, "reverse_string", "reverse it").await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE, "{body}");
    let p: ProgressView = serde_json::from_str(&progress(&app, &sid).await.1).unwrap();
    assert_eq!(p.questions["reverse_string"].attempts_used, 0, "outage must not consume an attempt");
    assert_eq!(mock.call_count(), 1);
}

#[tokio::test]
async fn attempt_cap_gives_409() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(Arc::new(ScriptedMock::with_texts(vec!["no code at all"; 25])), &dir.path().join("j.jsonl"));
    let sid = new_session(&app).await;
    for i in 1..=20u32 {
        let (status, body) = submit(&app, &sid, "reverse_string", "reverse it").await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(serde_json::from_str::<AttemptView>(&body).unwrap().attempts_remaining, 20 - i);
    }
    let (status, body) = submit(&app, &sid, "reverse_string", "reverse it").await;
    assert_eq!(status, StatusCode::CONFLICT, "{body}");
    assert!(body.contains("attempts_exhausted"));
    // Other questions keep their own budget.
    assert_eq!(submit(&app, &sid, "prime_check", "is it prime").await.0, StatusCode::OK);
}

#[tokio::test]
async fn read_only_storage_gives_503() {
    let dir = tempfile::tempdir().unwrap();
    let journal = dir.path().join("j.jsonl");
    let app = app(Arc::new(ScriptedMock::with_texts([GOOD])), &journal);
    let sid = new_session(&app).await;
    // Running as root, permission bits do not stop writes, so the journal
    // path is swapped for a directory instead.
    fs::remove_file(&journal).unwrap();
    fs::create_dir(&journal).unwrap();
    assert_eq!(call(&app, Method::POST, "/api/sessions", None).await.0, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(submit(&app, &sid, "reverse_string", "reverse it").await.0, StatusCode::SERVICE_UNAVAILABLE);
    let p: ProgressView = serde_json::from_str(&progress(&app, &sid).await.1).unwrap();
    assert_eq!(p.questions["reverse_string"].attempts_used, 0);
}

#[tokio::test]
async fn restart_replays_progress() {
    let dir = tempfile::tempdir().unwrap();
    let journal = dir.path().join("j.jsonl");
    let app1 = app(Arc::new(ScriptedMock::with_texts([BAD, GOOD, BAD])), &journal);
    let sid = new_session(&app1).await;
    submit(&app1, &sid, "reverse_string", "a").await;
    submit(&app1, &sid, "reverse_string", "b").await;
    submit(&app1, &sid, "count_even", "c").await;
    let before = progress(&app1, &sid).await.1;
    drop(app1);
    let app2 = app(Arc::new(ScriptedMock::default()), &journal);
    assert_eq!(progress(&app2, &sid).await.1, before);
}

/// No response body may carry a reference solution or a test vector.
#[tokio::test]
async fn nothing_hidden_leaks() {
    let dir = tempfile::tempdir().unwrap();
    let bank = load_bank(&bank_dir(), None).unwrap();
    let replies: Vec<String> = bank.questions().iter().map(|q| q.reference_source.clone()).collect();
    let app = app(Arc::new(ScriptedMock::with_texts(replies)), &dir.path().join("j.jsonl"));

    let mut bodies = vec![call(&app, Method::GET, "/api/questions", None).await.1];
    let sid = new_session(&app).await;
    for q in bank.questions() {
        let (status, body) = submit(&app, &sid, &q.id, "do the thing").await;
        assert_eq!(status, StatusCode::OK);
        bodies.push(body);
    }
    bodies.push(progress(&app, &sid).await.1);
    bodies.push(submit(&app, &sid, "missing", "x").await.1);

    for q in bank.questions() {
        let reference = q.reference_source.trim();
        let escaped = serde_json::to_string(reference).unwrap();
        let escaped = escaped.trim_matches('"');
        for body in &bodies {
            // A reference that was echoed back as the generated code is the
            // candidate, not a leak; compare against bodies of other questions only.
            let own = body.contains(&format!("\"question_id\":\"{}\"", q.id));
            if !own {
                assert!(!body.contains(escaped), "{} reference leaked", q.id);
            }
            for v in &q.test_vectors {
                assert!(!body.contains(&v.to_string()), "{} vector {v} leaked", q.id);
                let as_json = serde_json::to_string(&v.values).unwrap();
                assert!(!body.contains(&as_json), "{} vector {v} leaked as json", q.id);
            }
            assert!(!body.contains("test_vectors") && !body.contains("reference_source"));
        }
    }
}

#[tokio::test]
async fn static_ui_is_served() {
    let dir = tempfile::tempdir().unwrap();
    let ui = dir.path().join("ui");
    fs::create_dir(&ui).unwrap();
    fs::write(ui.join("index.html"), "<h1>ui</h1>").unwrap();
    let grader = open_grader(
        &Config::default(),
        load_bank(&bank_dir(), None).unwrap(),
        Arc::new(ScriptedMock::default()),
        &dir.path().join("j.jsonl"),
    )
    .unwrap();
    let app = router(Arc::new(grader), Some(&ui));
    assert_eq!(call(&app, Method::GET, "/", None).await, (StatusCode::OK, "<h1>ui</h1>".into()));
    assert_eq!(call(&app, Method::GET, "/api/questions", None).await.0, StatusCode::OK);
    assert_eq!(call(&app, Method::GET, "/missing.js", None).await.0, StatusCode::NOT_FOUND);
}
