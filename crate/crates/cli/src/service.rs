//! Local HTTP+JSON API used by the framework editor.
//!
//! | method | path           | body                      | success                  | errors          |
//! |--------|----------------|---------------------------|--------------------------|-----------------|
//! | POST   | `/analyze`     | song JSON                 | 200 framework JSON       | 400, 422        |
//! | POST   | `/generate`    | generation request JSON   | 200 `GenerateResponse`   | 400, 409, 422   |
//! | POST   | `/export/midi` | `{"song_id": "..."}`      | 200 `audio/midi` bytes   | 400, 404        |
//!
//! Error bodies are `{"error": "...", "violations": [...]}`; `violations` is
//! only present for invalid songs.

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use mf_core::analysis::{analyze_framework, MusicFramework};
use mf_core::midi::export_midi;
use mf_core::score::{validate_song, Song, Violation};
use mf_gen::{assemble_song, GenError, GenerationReport, GenerationRequest, ModelSet};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Models and the documents produced or analyzed so far.
#[derive(Debug, Default)]
pub struct ApiSession {
    models: RwLock<Option<Arc<ModelSet>>>,
    songs: RwLock<BTreeMap<String, Song>>,
}

impl ApiSession {
    pub fn new(models: Option<ModelSet>) -> Self {
        ApiSession { models: RwLock::new(models.map(Arc::new)), songs: RwLock::default() }
    }

    /// Installs a complete model set. Returns false if one is already loaded.
    pub fn load_models(&self, models: ModelSet) -> bool {
        let mut slot = self.models.write().expect("model lock poisoned");
        if slot.is_some() {
            return false;
        }
        *slot = Some(Arc::new(models));
        true
    }

    fn models(&self) -> Option<Arc<ModelSet>> {
        self.models.read().expect("model lock poisoned").clone().filter(|m| m.is_complete())
    }

    pub fn song(&self, id: &str) -> Option<Song> {
        self.songs.read().expect("song lock poisoned").get(id).cloned()
    }

    fn store(&self, song: Song) {
        self.songs.write().expect("song lock poisoned").insert(song.id.clone(), song);
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violations: Option<Vec<Violation>>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, error: impl Into<String>) -> Self {
        ApiError { status, body: ErrorBody { error: error.into(), violations: None } }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<GenError> for ApiError {
    fn from(e: GenError) -> Self {
        let status = match e {
            GenError::ModelMissing(_) => StatusCode::CONFLICT,
            GenError::Neural(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError::new(status, e.to_string())
    }
}

fn parse<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("malformed body: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub song_id: String,
    pub seed: u64,
    pub song: Song,
    pub report: GenerationReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExportRequest {
    pub song_id: String,
}

/// Content-derived id for a generation request.
pub fn request_id(request: &GenerationRequest) -> String {
    let bytes = serde_json::to_vec(request).expect("requests always serialize");
    format!("gen-{}", &hex::encode(Sha256::digest(&bytes))[..16])
}

async fn analyze(State(session): State<Arc<ApiSession>>, body: Bytes) -> Result<Json<MusicFramework>, ApiError> {
    let song: Song = parse(&body)?;
    let violations = validate_song(&song);
    if !violations.is_empty() {
        let error = if violations.contains(&Violation::NonMajorMode) { "NonMajorMode" } else { "InvalidSong" };
        return Err(ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            body: ErrorBody { error: error.into(), violations: Some(violations) },
        });
    }
    let framework = analyze_framework(&song).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    session.store(song);
    Ok(Json(framework))
}

async fn generate(State(session): State<Arc<ApiSession>>, body: Bytes) -> Result<Json<GenerateResponse>, ApiError> {
    let request: GenerationRequest = parse(&body)?;
    let models = session.models().ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "models are not loaded"))?;
    request.validate()?;
    let id = request_id(&request);
    let seed = request.seed;
    let out = tokio::task::spawn_blocking(move || assemble_song(&request, &models))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    let mut song = out.song;
    song.id = id.clone();
    session.store(song.clone());
    Ok(Json(GenerateResponse { song_id: id, seed, song, report: out.report }))
}

async fn export(State(session): State<Arc<ApiSession>>, body: Bytes) -> Result<Response, ApiError> {
    let request: ExportRequest = parse(&body)?;
    let song = session
        .song(&request.song_id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown song {:?}", request.song_id)))?;
    Ok(([(header::CONTENT_TYPE, "audio/midi")], export_midi(&song)).into_response())
}

pub fn router(session: Arc<ApiSession>) -> Router {
    Router::new()
        .route("/analyze", post(analyze))
        .route("/generate", post(generate))
        .route("/export/midi", post(export))
        .with_state(session)
}

/// Serves the API on `addr` until the process is stopped.
pub async fn serve(session: Arc<ApiSession>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(session)).await
}
