//! HTTP API. Each session is serialized behind its own mutex; handling runs
//! on the blocking pool so a slow adapter call never stalls other sessions.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use defect_sage_core::kb::CausalRelation;
use defect_sage_core::session::{
    export_report, render_main_menu, AgentMessage, Engine, ImageInput, Input, Role, Session, State as FlowState,
    TranscriptEntry,
};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use serde_json::json;

pub const MAX_UPLOAD_BYTES: usize = 20 * 1024 * 1024;

type SessionHandle = Arc<Mutex<Session>>;

pub struct AppState {
    engine: Engine,
    sessions: RwLock<HashMap<String, SessionHandle>>,
}

impl AppState {
    fn session(&self, id: &str) -> Result<SessionHandle, ApiError> {
        let sessions = self.sessions.read().unwrap_or_else(|p| p.into_inner());
        sessions.get(id).cloned().ok_or_else(|| ApiError::NotFound(format!("no session {id:?}")))
    }
}

#[derive(Debug)]
pub enum ApiError {
    NotFound(String),
    BadRequest(String),
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, message) = match self {
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, m),
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, m),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, m),
        };
        (status, Json(json!({ "error": message }))).into_response()
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Reply {
    pub session_id: String,
    pub state: FlowState,
    pub messages: Vec<AgentMessage>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub session_id: String,
    pub state: FlowState,
    pub menu: String,
    pub messages: Vec<AgentMessage>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub state: FlowState,
    pub transcript: Vec<TranscriptEntry>,
}

#[derive(Debug, Deserialize)]
pub struct MessageBody {
    pub text: String,
}

pub fn router(engine: Engine) -> Router {
    let state = Arc::new(AppState { engine, sessions: RwLock::new(HashMap::new()) });
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/sessions/{id}/images", post(post_image))
        .route("/sessions/{id}/report", get(get_report))
        .route("/kb/defects", get(list_defects))
        .route("/kb/defects/{name}", get(get_defect))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(state)
}

fn new_session_id() -> String {
    let mut bytes = [0u8; 16];
    rand::rngs::OsRng.fill_bytes(&mut bytes);
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

async fn healthz(State(app): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "leaf_defects": app.engine.kb.leaf_count() }))
}

async fn create_session(State(app): State<Arc<AppState>>) -> (StatusCode, Json<Created>) {
    let session = Session::new(&app.engine);
    let messages = session
        .transcript()
        .entries()
        .iter()
        .filter(|e| e.role == Role::Agent)
        .filter_map(|e| e.payload.clone().map(AgentMessage::from))
        .collect();
    let created = Created { session_id: new_session_id(), state: session.state(), menu: render_main_menu(), messages };
    app.sessions
        .write()
        .unwrap_or_else(|p| p.into_inner())
        .insert(created.session_id.clone(), Arc::new(Mutex::new(session)));
    (StatusCode::CREATED, Json(created))
}

async fn get_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let handle = app.session(&id)?;
    let session = handle.lock().unwrap_or_else(|p| p.into_inner());
    Ok(Json(SessionView { session_id: id, state: session.state(), transcript: session.transcript().entries().to_vec() }))
}

async fn run(app: Arc<AppState>, id: String, input: Input) -> Result<Json<Reply>, ApiError> {
    let handle = app.session(&id)?;
    tokio::task::spawn_blocking(move || {
        let mut session = handle.lock().unwrap_or_else(|p| p.into_inner());
        let messages = session.handle(&app.engine, input);
        Reply { session_id: id, state: session.state(), messages }
    })
    .await
    .map(Json)
    .map_err(|e| ApiError::Internal(e.to_string()))
}

async fn post_message(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(body): Json<MessageBody>,
) -> Result<Json<Reply>, ApiError> {
    run(app, id, Input::Text(body.text)).await
}

async fn post_image(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    mut multipart: Multipart,
) -> Result<Json<Reply>, ApiError> {
    app.session(&id)?;
    let mut image: Option<(String, Vec<u8>)> = None;
    let mut hypothesis = None;
    let mut material = None;
    while let Some(field) = multipart.next_field().await.map_err(|e| ApiError::BadRequest(e.to_string()))? {
        let name = field.name().unwrap_or_default().to_string();
        match name.as_str() {
            "image" => {
                let filename = field.file_name().unwrap_or("upload").to_string();
                let bytes = field.bytes().await.map_err(|e| ApiError::BadRequest(e.to_string()))?;
                image = Some((filename, bytes.to_vec()));
            }
            "hypothesis" | "material" => {
                let value = field.text().await.map_err(|e| ApiError::BadRequest(e.to_string()))?;
                let value = Some(value.trim().to_string()).filter(|v| !v.is_empty());
                if name == "hypothesis" {
                    hypothesis = value;
                } else {
                    material = value;
                }
            }
            _ => {}
        }
    }
    let (filename, bytes) = image.ok_or_else(|| ApiError::BadRequest("multipart field 'image' is required".into()))?;
    run(app, id, Input::Image(ImageInput { filename, bytes, hypothesis, material })).await
}

async fn get_report(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let handle = app.session(&id)?;
    let html = {
        let session = handle.lock().unwrap_or_else(|p| p.into_inner());
        export_report(session.transcript()).map_err(|e| ApiError::BadRequest(e.to_string()))?
    };
    Ok(([(header::CONTENT_TYPE, "text/html; charset=utf-8")], html).into_response())
}

async fn list_defects(State(app): State<Arc<AppState>>) -> Json<Vec<serde_json::Value>> {
    let kb = &app.engine.kb;
    let defects = kb
        .tree()
        .leaves()
        .into_iter()
        .map(|leaf| json!({ "name": leaf, "path": kb.find_path(leaf).map(|p| p.0).unwrap_or_default() }))
        .collect();
    Json(defects)
}

fn relation_lines(relations: Vec<&CausalRelation>) -> Vec<String> {
    relations.into_iter().map(CausalRelation::display).collect()
}

async fn get_defect(
    State(app): State<Arc<AppState>>,
    Path(name): Path<String>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let kb = &app.engine.kb;
    let defect = kb.canonical_leaf(&name).ok_or_else(|| ApiError::NotFound(format!("unknown defect {name:?}")))?;
    let mitigations: Vec<_> = kb.mitigation_rules().iter().filter(|r| r.defect == defect).collect();
    Ok(Json(json!({
        "name": defect,
        "path": kb.find_path(&defect).map(|p| p.0).unwrap_or_default(),
        "profile": kb.profile(&defect),
        "causes": relation_lines(kb.causes_of(&defect).unwrap_or_default()),
        "consequences": relation_lines(kb.consequences_of(&defect).unwrap_or_default()),
        "mitigations": mitigations,
    })))
}
