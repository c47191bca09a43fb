mod common;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use clinicode::service::{router, LetterView, SubmitResponse};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use common::app_state;

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let builder = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(v) => builder
            .header("content-type", "application/json")
            .body(Body::from(v.to_string()))
            .unwrap(),
        None => builder.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn submit(app: &Router, text: &str) -> String {
    let (status, body) = call(app, "POST", "/api/letters", Some(json!({ "text": text }))).await;
    assert_eq!(status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&body));
    serde_json::from_slice::<SubmitResponse>(&body).unwrap().id
}

async fn letter(app: &Router, id: &str) -> LetterView {
    let (status, body) = call(app, "GET", &format!("/api/letters/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    serde_json::from_slice(&body).unwrap()
}

async fn decide(app: &Router, id: &str, body: Value) -> StatusCode {
    call(app, "POST", &format!("/api/letters/{id}/decisions"), Some(body)).await.0
}

const LETTER: &str = "Patient admitted with fever and atrial fibrillation. Knee pain; pneumonia 500 mg.";

#[tokio::test]
async fn submit_then_fetch_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(app_state(dir.path(), true));
    let id = submit(&app, LETTER).await;
    assert_eq!(id.len(), 16);
    assert!(id.chars().all(|c| c.is_ascii_hexdigit()));

    let view = letter(&app, &id).await;
    assert_eq!(view.status, clinicode::service::LetterStatus::Pending);
    let codes: Vec<&str> = view.codes.iter().map(|c| c.code.as_str()).collect();
    assert_eq!(codes, ["427.31", "719.46", "480.8", "999.99"]);
    assert!(view.codes.windows(2).all(|w| w[0].probability >= w[1].probability));
    assert_eq!(view.cleaned_text, "patient admitted with fever and atrial fibrillation knee pain pneumonia mg");

    let af = &view.codes[0].resolution;
    assert_eq!(format!("{:?}", af.category), "OneToOne");
    assert_eq!(af.candidates[0].snomed_cid, "49436004");
    assert_eq!(view.codes[1].resolution.candidates.len(), 3);
    assert_eq!(format!("{:?}", view.codes[2].category), "NoMap");
    let nodesc = &view.codes[3].resolution;
    assert_eq!(format!("{:?}", nodesc.category), "NoDesc");
    assert!(nodesc.candidates.is_empty());
    assert_eq!(view.attention_url, format!("/api/letters/{id}/attention"));
}

#[tokio::test]
async fn repeated_gets_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(app_state(dir.path(), true));
    let id = submit(&app, LETTER).await;
    let a = call(&app, "GET", &format!("/api/letters/{id}"), None).await;
    let b = call(&app, "GET", &format!("/api/letters/{id}"), None).await;
    assert_eq!(a, b);
    let a = call(&app, "GET", &format!("/api/letters/{id}/attention?label=480.8"), None).await;
    let b = call(&app, "GET", &format!("/api/letters/{id}/attention?label=480.8"), None).await;
    assert_eq!(a, b);
}

#[tokio::test]
async fn same_letter_twice_gets_two_ids() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(app_state(dir.path(), true));
    assert_ne!(submit(&app, LETTER).await, submit(&app, LETTER).await);
}

#[tokio::test]
async fn rejects_letters_without_words() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(app_state(dir.path(), true));
    let (status, _) = call(&app, "POST", "/api/letters", Some(json!({ "text": "500 -- 12/3 (1)" }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn no_model_means_unavailable() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(app_state(dir.path(), false));
    let (status, _) = call(&app, "POST", "/api/letters", Some(json!({ "text": LETTER }))).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
}

#[tokio::test]
async fn unknown_letter_is_404() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(app_state(dir.path(), true));
    assert_eq!(call(&app, "GET", "/api/letters/0000000000000000", None).await.0, StatusCode::NOT_FOUND);
    let d = json!({"icd_code": "427.31", "action": "accept", "reviewer": "r"});
    assert_eq!(decide(&app, "0000000000000000", d).await, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, "GET", "/api/letters/0000000000000000/attention", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn attention_html_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(app_state(dir.path(), true));
    let id = submit(&app, LETTER).await;
    let (status, body) = call(&app, "GET", &format!("/api/letters/{id}/attention?label=427.31"), None).await;
    assert_eq!(status, StatusCode::OK);
    let html = String::from_utf8(body).unwrap();
    assert!(html.starts_with("<!DOCTYPE html>"));
    assert!(html.contains("Attention for 427.31"));
    assert!(html.contains("49436004 Atrial fibrillation (disorder)"));
    assert!(!html.contains("<script"));

    let (status, body) = call(&app, "GET", &format!("/api/letters/{id}/attention?label=427.31&format=json"), None).await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_slice(&body).unwrap();
    let tokens = v["tokens"].as_array().unwrap();
    assert!(!tokens.is_empty());
    assert!(tokens.iter().any(|t| t["display_weight"] == 1.0));

    let (status, _) = call(&app, "GET", &format!("/api/letters/{id}/attention?label=123.45"), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn decision_rules() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(app_state(dir.path(), true));
    let id = submit(&app, LETTER).await;

    let accept_af = json!({"icd_code": "427.31", "action": "accept", "reviewer": "ana"});
    assert_eq!(decide(&app, &id, accept_af).await, StatusCode::CREATED);

    let accept_many = json!({"icd_code": "719.46", "action": "accept", "reviewer": "ana"});
    assert_eq!(decide(&app, &id, accept_many).await, StatusCode::UNPROCESSABLE_ENTITY);
    let wrong_pick = json!({"icd_code": "719.46", "action": "accept", "chosen_snomed_cid": "49436004", "reviewer": "ana"});
    assert_eq!(decide(&app, &id, wrong_pick).await, StatusCode::UNPROCESSABLE_ENTITY);
    let pick = json!({"icd_code": "719.46", "action": "accept", "chosen_snomed_cid": "239733006", "reviewer": "ana"});
    assert_eq!(decide(&app, &id, pick).await, StatusCode::CREATED);

    let replace_no_cid = json!({"icd_code": "480.8", "action": "replace", "reviewer": "ana"});
    assert_eq!(decide(&app, &id, replace_no_cid).await, StatusCode::UNPROCESSABLE_ENTITY);
    let replace_blank = json!({"icd_code": "480.8", "action": "replace", "chosen_snomed_cid": " ", "reviewer": "ana"});
    assert_eq!(decide(&app, &id, replace_blank).await, StatusCode::UNPROCESSABLE_ENTITY);

    let reject_unpredicted = json!({"icd_code": "401.9", "action": "reject", "reviewer": "ana"});
    assert_eq!(decide(&app, &id, reject_unpredicted).await, StatusCode::UNPROCESSABLE_ENTITY);
    let no_reviewer = json!({"icd_code": "480.8", "action": "reject", "reviewer": ""});
    assert_eq!(decide(&app, &id, no_reviewer).await, StatusCode::UNPROCESSABLE_ENTITY);
    let bad_action = json!({"icd_code": "480.8", "action": "maybe", "reviewer": "ana"});
    assert!(decide(&app, &id, bad_action).await.is_client_error());

    // Rejected requests never reach the log.
    let (_, body) = call(&app, "GET", &format!("/api/decisions?letter_id={id}"), None).await;
    assert_eq!(String::from_utf8(body).unwrap().lines().count(), 2);
}

#[tokio::test]
async fn status_flips_when_every_code_is_decided() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(app_state(dir.path(), true));
    let id = submit(&app, LETTER).await;
    let decisions = [
        json!({"icd_code": "427.31", "action": "accept", "reviewer": "ana"}),
        json!({"icd_code": "719.46", "action": "reject", "reviewer": "ana"}),
        json!({"icd_code": "480.8", "action": "replace", "chosen_snomed_cid": "12345678", "reviewer": "ana"}),
    ];
    for d in decisions {
        assert_eq!(decide(&app, &id, d).await, StatusCode::CREATED);
        assert_eq!(letter(&app, &id).await.status, clinicode::service::LetterStatus::Pending);
    }
    let last = json!({"icd_code": "999.99", "action": "reject", "reviewer": "ana"});
    assert_eq!(decide(&app, &id, last).await, StatusCode::CREATED);
    let view = letter(&app, &id).await;
    assert_eq!(view.status, clinicode::service::LetterStatus::Reviewed);

    // Last decision per code wins.
    let again = json!({"icd_code": "719.46", "action": "accept", "chosen_snomed_cid": "202489000", "reviewer": "bo"});
    assert_eq!(decide(&app, &id, again).await, StatusCode::CREATED);
    let view = letter(&app, &id).await;
    let knee = view.codes.iter().find(|c| c.code == "719.46").unwrap();
    assert_eq!(knee.decision.as_ref().unwrap().reviewer, "bo");

    // A coder-supplied code.
    let added = json!({"icd_code": "038.9", "action": "replace", "chosen_snomed_cid": "91302008", "reviewer": "bo"});
    assert_eq!(decide(&app, &id, added).await, StatusCode::CREATED);
    assert_eq!(letter(&app, &id).await.added_codes.len(), 1);
}

#[tokio::test]
async fn export_is_ordered_and_filterable() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(app_state(dir.path(), true));
    let a = submit(&app, LETTER).await;
    let b = submit(&app, "Fever again.").await;
    for (id, code, who) in [(&a, "427.31", "ana"), (&b, "427.31", "bo"), (&a, "480.8", "bo")] {
        let d = json!({"icd_code": code, "action": "reject", "reviewer": who});
        assert_eq!(decide(&app, id, d).await, StatusCode::CREATED);
    }
    let lines = |body: Vec<u8>| -> Vec<Value> {
        String::from_utf8(body).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
    };
    let (status, body) = call(&app, "GET", "/api/decisions", None).await;
    assert_eq!(status, StatusCode::OK);
    let all = lines(body);
    assert_eq!(all.len(), 3);
    assert_eq!(all[0]["reviewer"], "ana");
    assert_eq!(all[2]["icd_code"], "480.8");
    let (_, body) = call(&app, "GET", &format!("/api/decisions?letter_id={a}"), None).await;
    assert!(lines(body).iter().all(|d| d["letter_id"] == a.as_str()));
    let (_, body) = call(&app, "GET", "/api/decisions?reviewer=bo", None).await;
    assert_eq!(lines(body).len(), 2);
}

#[tokio::test]
async fn decisions_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let id = {
        let app = router(app_state(dir.path(), true));
        let id = submit(&app, LETTER).await;
        for code in ["427.31", "480.8", "999.99"] {
            let d = json!({"icd_code": code, "action": "reject", "reviewer": "ana"});
            assert_eq!(decide(&app, &id, d).await, StatusCode::CREATED);
        }
        id
    };
    let app = router(app_state(dir.path(), true));
    let (_, body) = call(&app, "GET", "/api/decisions", None).await;
    assert_eq!(String::from_utf8(body).unwrap().lines().count(), 3);
    assert_eq!(letter(&app, &id).await.codes.len(), 4);
}

#[tokio::test]
async fn failed_append_is_not_acknowledged() {
    let dir = tempfile::tempdir().unwrap();
    let state = app_state(dir.path(), true);
    let store = state.store.clone();
    let app = router(state);
    let id = submit(&app, LETTER).await;
    store.inject_write_failure(true);
    let d = json!({"icd_code": "427.31", "action": "accept", "reviewer": "ana"});
    assert_eq!(decide(&app, &id, d.clone()).await, StatusCode::INTERNAL_SERVER_ERROR);
    let (status, _) = call(&app, "POST", "/api/letters", Some(json!({ "text": LETTER }))).await;
    assert_eq!(status, StatusCode::INTERNAL_SERVER_ERROR);
    store.inject_write_failure(false);
    drop(app);
    drop(store);

    let app = router(app_state(dir.path(), true));
    let (_, body) = call(&app, "GET", "/api/decisions", None).await;
    assert!(body.is_empty());
    assert_eq!(decide(&app, &id, d).await, StatusCode::CREATED);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_appends_are_serialized() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(app_state(dir.path(), true));
    let id = submit(&app, LETTER).await;
    let mut tasks = Vec::new();
    for i in 0..32 {
        let app = app.clone();
        let id = id.clone();
        tasks.push(tokio::spawn(async move {
            let d = json!({"icd_code": "427.31", "action": "reject", "reviewer": format!("r{i}")});
            decide(&app, &id, d).await
        }));
    }
    for t in tasks {
        assert_eq!(t.await.unwrap(), StatusCode::CREATED);
    }
    let text = std::fs::read_to_string(dir.path().join(clinicode::service::DECISIONS_FILE)).unwrap();
    assert_eq!(text.lines().count(), 32);
    assert!(text.lines().all(|l| serde_json::from_str::<Value>(l).is_ok()));
}
