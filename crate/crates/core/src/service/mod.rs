//! HTTP review service: submit letters, fetch predictions with SNOMED
//! candidates and attention, record coder decisions.

mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tracing::{error, info};

use crate::corpus::clean_text;
use crate::error::{Error, Result};
use crate::model::{forward, AttentionMap, Mode, PredictionSet};
use crate::snomed::{MapCategory, ResolveOptions, SnomedMapper, SnomedResolution};
use crate::text::structure_document;
use crate::train::Checkpoint;
use crate::viz::{render_html, VizCode, VizDocument};

pub use store::{
    Action, CodePrediction, DecisionRecord, LetterRecord, Store, DECISIONS_FILE, LETTERS_FILE,
};

/// Checkpoint and mapper shared read-only by every request.
#[derive(Debug)]
pub struct Pipeline {
    pub checkpoint: Checkpoint,
    pub mapper: SnomedMapper,
    pub threshold: f64,
    pub resolve: ResolveOptions,
}

impl Pipeline {
    pub fn new(checkpoint: Checkpoint, mapper: SnomedMapper, threshold: Option<f64>) -> Self {
        let threshold = threshold.unwrap_or(checkpoint.config.threshold);
        Pipeline {
            checkpoint,
            mapper,
            threshold,
            resolve: ResolveOptions::default(),
        }
    }

    pub fn score(&self, cleaned: &str) -> Result<(PredictionSet, AttentionMap)> {
        let cfg = &self.checkpoint.config;
        let doc = structure_document(cleaned, &self.checkpoint.vocab, cfg.max_sentences, cfg.max_tokens);
        forward(&doc, &self.checkpoint.params)
    }

    /// Thresholded codes, highest probability first, each resolved to SNOMED.
    pub fn predict(&self, cleaned: &str) -> Result<Vec<CodePrediction>> {
        let (pred, _) = self.score(cleaned)?;
        Ok(pred
            .ranked()
            .into_iter()
            .filter(|(_, p)| *p >= self.threshold)
            .map(|(code, probability)| CodePrediction {
                resolution: self.mapper.resolve(&code, self.resolve),
                code,
                probability,
            })
            .collect())
    }
}

#[derive(Clone)]
pub struct AppState {
    pub pipeline: Option<Arc<Pipeline>>,
    pub store: Arc<Store>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }
    fn not_found(what: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("{what} not found"))
    }
    fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        error!(error = %e, "request failed");
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/letters", post(submit_letter))
        .route("/api/letters/{id}", get(get_letter))
        .route("/api/letters/{id}/attention", get(get_attention))
        .route("/api/letters/{id}/decisions", post(record_decision))
        .route("/api/decisions", get(export_decisions))
        .with_state(state)
}

#[derive(Debug, Deserialize)]
pub struct SubmitRequest {
    pub text: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub id: String,
}

pub fn new_letter_id() -> String {
    format!("{:016x}", rand::random::<u64>())
}

fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

async fn submit_letter(
    State(state): State<AppState>,
    Json(req): Json<SubmitRequest>,
) -> ApiResult<(StatusCode, Json<SubmitResponse>)> {
    let pipeline = state
        .pipeline
        .clone()
        .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no model loaded"))?;
    let cleaned = clean_text(&req.text);
    if cleaned.is_empty() {
        return Err(ApiError::unprocessable("letter has no words left after cleaning"));
    }
    let store = state.store.clone();
    let id = tokio::task::spawn_blocking(move || -> Result<String> {
        let predictions = pipeline.predict(&cleaned)?;
        let record = LetterRecord {
            id: String::new(),
            created_at: now_rfc3339(),
            raw_text: req.text,
            cleaned_text: cleaned,
            threshold: pipeline.threshold,
            predictions,
        };
        store.append_letter(record, new_letter_id)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    info!(%id, "letter stored");
    Ok((StatusCode::CREATED, Json(SubmitResponse { id })))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LetterStatus {
    Pending,
    Reviewed,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CodeView {
    pub code: String,
    pub probability: f64,
    pub category: MapCategory,
    pub resolution: SnomedResolution,
    /// Latest decision on this code, if any.
    pub decision: Option<DecisionRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LetterView {
    pub id: String,
    pub created_at: String,
    pub status: LetterStatus,
    pub raw_text: String,
    pub cleaned_text: String,
    pub threshold: f64,
    pub codes: Vec<CodeView>,
    /// Codes a coder introduced through `replace`.
    pub added_codes: Vec<DecisionRecord>,
    pub attention_url: String,
}

/// Reviewed once every predicted code has a decision; a letter with no
/// predicted codes needs at least one decision.
pub fn letter_status(letter: &LetterRecord, decisions: &[DecisionRecord]) -> LetterStatus {
    let decided = |code: &str| decisions.iter().any(|d| d.icd_code == code);
    let done = if letter.predictions.is_empty() {
        !decisions.is_empty()
    } else {
        letter.predictions.iter().all(|p| decided(&p.code))
    };
    if done {
        LetterStatus::Reviewed
    } else {
        LetterStatus::Pending
    }
}

fn letter_view(letter: LetterRecord, decisions: Vec<DecisionRecord>) -> LetterView {
    let status = letter_status(&letter, &decisions);
    let latest = |code: &str| decisions.iter().rev().find(|d| d.icd_code == code).cloned();
    let codes = letter
        .predictions
        .iter()
        .map(|p| CodeView {
            code: p.code.clone(),
            probability: p.probability,
            category: p.resolution.category,
            resolution: p.resolution.clone(),
            decision: latest(&p.code),
        })
        .collect();
    let added_codes = decisions
        .iter()
        .filter(|d| !letter.predictions.iter().any(|p| p.code == d.icd_code))
        .cloned()
        .collect();
    LetterView {
        attention_url: format!("/api/letters/{}/attention", letter.id),
        id: letter.id,
        created_at: letter.created_at,
        status,
        raw_text: letter.raw_text,
        cleaned_text: letter.cleaned_text,
        threshold: letter.threshold,
        codes,
        added_codes,
    }
}

async fn get_letter(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<LetterView>> {
    let letter = state.store.letter(&id).ok_or_else(|| ApiError::not_found("letter"))?;
    let decisions = state.store.decisions(Some(&id), None);
    Ok(Json(letter_view(letter, decisions)))
}

#[derive(Debug, Deserialize)]
pub struct AttentionQuery {
    pub label: Option<String>,
    /// `html` (default) or `json`.
    pub format: Option<String>,
}

async fn get_attention(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<AttentionQuery>,
) -> ApiResult<Response> {
    let letter = state.store.letter(&id).ok_or_else(|| ApiError::not_found("letter"))?;
    let pipeline = state
        .pipeline
        .clone()
        .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no model loaded"))?;
    let viz = tokio::task::spawn_blocking(move || attention_viz(&pipeline, &letter, q.label.as_deref()))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    match q.format.as_deref() {
        None | Some("html") => Ok(Html(render_html(&viz)).into_response()),
        Some("json") => Ok(Json(viz).into_response()),
        Some(other) => Err(ApiError::unprocessable(format!("unknown format `{other}`"))),
    }
}

/// Per-label maps default to the top predicted code, or the first label of
/// the model when nothing was predicted.
fn attention_viz(pipeline: &Pipeline, letter: &LetterRecord, label: Option<&str>) -> ApiResult<VizDocument> {
    let (_, map) = pipeline.score(&letter.cleaned_text)?;
    let params = &pipeline.checkpoint.params;
    let label = match (params.mode, label) {
        (Mode::Han, _) => None,
        (Mode::Hlan, Some(l)) => {
            if !params.labels.iter().any(|x| x == l) {
                return Err(ApiError::unprocessable(format!("model has no label `{l}`")));
            }
            Some(l.to_string())
        }
        (Mode::Hlan, None) => letter
            .predictions
            .first()
            .map(|p| p.code.clone())
            .or_else(|| params.labels.first().cloned()),
    };
    let codes = letter
        .predictions
        .iter()
        .map(|p| VizCode {
            code: p.code.clone(),
            probability: p.probability,
            resolution: Some(p.resolution.clone()),
        })
        .collect();
    Ok(VizDocument::build(&letter.cleaned_text, &map, label.as_deref(), codes)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub icd_code: String,
    pub action: Action,
    #[serde(default)]
    pub chosen_snomed_cid: Option<String>,
    pub reviewer: String,
}

/// Check a decision against the letter it targets.
pub fn validate_decision(letter: &LetterRecord, req: &DecisionRequest) -> std::result::Result<(), String> {
    if req.reviewer.trim().is_empty() {
        return Err("reviewer is required".into());
    }
    if req.icd_code.trim().is_empty() {
        return Err("icd_code is required".into());
    }
    let cid = req.chosen_snomed_cid.as_deref().filter(|c| !c.trim().is_empty());
    let predicted = letter.predictions.iter().find(|p| p.code == req.icd_code);
    match req.action {
        Action::Replace => {
            if cid.is_none() {
                return Err("replace requires chosen_snomed_cid".into());
            }
        }
        Action::Accept | Action::Reject => {
            let Some(p) = predicted else {
                return Err(format!("{} was not predicted for this letter; use replace to add it", req.icd_code));
            };
            if req.action == Action::Accept {
                let candidates = &p.resolution.candidates;
                match (p.resolution.category, cid) {
                    (MapCategory::OneToMany, None) => {
                        return Err(format!("{} has several SNOMED candidates; choose one", req.icd_code))
                    }
                    (_, Some(c)) if !candidates.iter().any(|m| m.snomed_cid == c) => {
                        return Err(format!("{c} is not a candidate for {}", req.icd_code))
                    }
                    _ => {}
                }
            }
        }
    }
    Ok(())
}

async fn record_decision(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<DecisionRequest>,
) -> ApiResult<(StatusCode, Json<DecisionRecord>)> {
    let letter = state.store.letter(&id).ok_or_else(|| ApiError::not_found("letter"))?;
    validate_decision(&letter, &req).map_err(ApiError::unprocessable)?;
    let record = DecisionRecord {
        timestamp: now_rfc3339(),
        letter_id: id,
        icd_code: req.icd_code,
        action: req.action,
        chosen_snomed_cid: req.chosen_snomed_cid.filter(|c| !c.trim().is_empty()),
        reviewer: req.reviewer,
    };
    let store = state.store.clone();
    let stored = record.clone();
    tokio::task::spawn_blocking(move || store.append_decision(stored))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok((StatusCode::CREATED, Json(record)))
}

#[derive(Debug, Deserialize)]
pub struct DecisionFilter {
    pub letter_id: Option<String>,
    pub reviewer: Option<String>,
}

async fn export_decisions(State(state): State<AppState>, Query(f): Query<DecisionFilter>) -> ApiResult<Response> {
    let mut body = String::new();
    for d in state.store.decisions(f.letter_id.as_deref(), f.reviewer.as_deref()) {
        body.push_str(&serde_json::to_string(&d).map_err(Error::from)?);
        body.push('\n');
    }
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub checkpoint: Option<PathBuf>,
    pub maps_dir: Option<PathBuf>,
    pub data_dir: PathBuf,
    pub port: u16,
    pub threshold: Option<f64>,
    pub parent_first: bool,
}

/// Build the shared state from files on disk.
pub fn load_state(cfg: &ServeConfig) -> Result<AppState> {
    let store = Arc::new(Store::open(&cfg.data_dir)?);
    let pipeline = match &cfg.checkpoint {
        Some(path) => {
            let checkpoint = Checkpoint::load(path)?;
            let mapper = match &cfg.maps_dir {
                Some(dir) => SnomedMapper::load_dir(dir)?,
                None => {
                    tracing::warn!("no maps directory; every code will resolve to No Desc");
                    SnomedMapper::empty()
                }
            };
            let mut p = Pipeline::new(checkpoint, mapper, cfg.threshold);
            p.resolve.parent_first = cfg.parent_first;
            Some(Arc::new(p))
        }
        None => {
            tracing::warn!("no checkpoint; letter submission will answer 503");
            None
        }
    };
    Ok(AppState { pipeline, store })
}

pub async fn serve(cfg: ServeConfig) -> Result<()> {
    let state = load_state(&cfg)?;
    let addr = SocketAddr::from(([0, 0, 0, 0], cfg.port));
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::invalid(format!("cannot bind {addr}: {e}")))?;
    info!(%addr, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Error::invalid(format!("server error: {e}")))
}
