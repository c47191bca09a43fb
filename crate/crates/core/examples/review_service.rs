// Drive the review API in process: submit, inspect, decide, export.

use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::Request;
use clinicode::corpus::{generate_synthetic_corpus, SyntheticConfig};
use clinicode::service::{router, AppState, Pipeline, Store};
use clinicode::snomed::SnomedMapper;
use clinicode::text::{label_space_of, EmbeddingTable, Vocabulary};
use clinicode::train::{encode_examples, train, TrainConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

async fn send(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> Result<(u16, String), Box<dyn std::error::Error>> {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = req.body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))?;
    let resp = app.clone().oneshot(req).await?;
    let status = resp.status().as_u16();
    let bytes = resp.into_body().collect().await?.to_bytes();
    Ok((status, String::from_utf8(bytes.to_vec())?))
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = generate_synthetic_corpus(&SyntheticConfig {
        n_docs: 24,
        n_labels: 6,
        mean_labels_per_doc: 2.0,
        mean_tokens_per_doc: 40.0,
        ..Default::default()
    })?;
    let notes = corpus.labeled_notes();
    let vocab = Vocabulary::build(&notes, 1)?;
    let labels = label_space_of(&notes);
    let config = TrainConfig {
        learning_rate: 0.01,
        hidden_size: 8,
        attention_size: 8,
        max_sentences: 6,
        max_tokens: 10,
        epochs: 10,
        ..Default::default()
    };
    let examples = encode_examples(&notes, &vocab, &labels, config.max_sentences, config.max_tokens);
    let embeddings = EmbeddingTable::random(vocab.len(), 8, 1);
    let checkpoint = train(&examples, &config, &vocab, &labels, &embeddings, None)?;

    let maps = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/maps");
    let data = tempfile::tempdir()?;
    let state = AppState {
        pipeline: Some(Arc::new(Pipeline::new(checkpoint, SnomedMapper::load_dir(&maps)?, Some(0.3)))),
        store: Arc::new(Store::open(data.path())?),
    };
    let app = router(state);

    tokio::runtime::Runtime::new()?.block_on(async {
        let (status, body) = send(&app, "POST", "/api/letters", Some(json!({ "text": notes[0].text }))).await?;
        println!("POST /api/letters -> {status} {body}");
        let id = serde_json::from_str::<Value>(&body)?["id"].as_str().unwrap().to_string();

        let (_, body) = send(&app, "GET", &format!("/api/letters/{id}"), None).await?;
        let letter: Value = serde_json::from_str(&body)?;
        for code in letter["codes"].as_array().unwrap() {
            println!("  {} p={:.3} {}", code["code"], code["probability"].as_f64().unwrap(), code["category"]);
            let d = json!({ "icd_code": code["code"], "action": "reject", "reviewer": "demo" });
            send(&app, "POST", &format!("/api/letters/{id}/decisions"), Some(d)).await?;
        }
        let (_, body) = send(&app, "GET", "/api/decisions?reviewer=demo", None).await?;
        println!("{} decisions exported", body.lines().count());
        let (_, body) = send(&app, "GET", &format!("/api/letters/{id}"), None).await?;
        println!("status {}", serde_json::from_str::<Value>(&body)?["status"]);
        Ok::<_, Box<dyn std::error::Error>>(())
    })
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
