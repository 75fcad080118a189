//! Stateless HTTP inference service over a read-only model registry.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::checkpoint::load_checkpoint;
use crate::error::{invalid, Error, Result};
use crate::generator::{EditModel, EditOutput, Readout};
use crate::image::Image;

/// Where a registry entry comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub id: String,
    /// Checkpoint file. Leave out together with `identity = true` for the stub model.
    #[serde(default)]
    pub path: Option<PathBuf>,
    /// A stub that returns its input unchanged, handy for wiring up clients.
    #[serde(default)]
    pub identity: bool,
}

impl ModelSpec {
    /// Parses `id=path` or `id=identity`.
    pub fn parse(s: &str) -> Result<Self> {
        let (id, rest) = s
            .split_once('=')
            .ok_or_else(|| invalid(format!("model spec {s:?} is not of the form id=path")))?;
        if id.is_empty() || rest.is_empty() {
            return Err(invalid(format!("model spec {s:?} has an empty id or path")));
        }
        Ok(if rest == "identity" {
            Self {
                id: id.into(),
                path: None,
                identity: true,
            }
        } else {
            Self {
                id: id.into(),
                path: Some(rest.into()),
                identity: false,
            }
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    pub host: String,
    pub port: u16,
    pub models: Vec<ModelSpec>,
    /// Upper bound on request bodies in bytes.
    pub max_body_bytes: usize,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            models: Vec::new(),
            max_body_bytes: 32 << 20,
        }
    }
}

#[derive(Debug, Clone)]
pub enum RegisteredModel {
    Trained(Box<EditModel>),
    Identity,
}

impl RegisteredModel {
    pub fn kind(&self) -> &'static str {
        match self {
            RegisteredModel::Trained(m) => m.kind().as_str(),
            RegisteredModel::Identity => "identity",
        }
    }

    pub fn branches(&self) -> usize {
        match self {
            RegisteredModel::Trained(m) => m.branches(),
            RegisteredModel::Identity => 1,
        }
    }

    pub fn edit(&self, image: &Image, text: &str, mode: Readout) -> Result<EditOutput> {
        match self {
            RegisteredModel::Trained(m) => m.edit(image, text, mode, None),
            RegisteredModel::Identity => Ok(EditOutput {
                image: image.clone(),
                weights: Some(vec![1.0]),
            }),
        }
    }

    pub fn probe(&self, image: &Image, k: usize) -> Result<Image> {
        match self {
            RegisteredModel::Trained(m) => m.probe(image, k),
            RegisteredModel::Identity => Err(invalid("the identity stub has no filters to probe")),
        }
    }
}

/// Models by id. Read-only once built.
#[derive(Debug, Clone, Default)]
pub struct ModelRegistry {
    models: BTreeMap<String, RegisteredModel>,
}

impl ModelRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, model: RegisteredModel) -> Result<()> {
        let id = id.into();
        if self.models.contains_key(&id) {
            return Err(invalid(format!("model id {id:?} registered twice")));
        }
        self.models.insert(id, model);
        Ok(())
    }

    pub fn load(specs: &[ModelSpec]) -> Result<Self> {
        let mut reg = Self::new();
        for spec in specs {
            let model = match (&spec.path, spec.identity) {
                (None, true) => RegisteredModel::Identity,
                (Some(path), false) => {
                    log::info!("loading model {} from {}", spec.id, path.display());
                    RegisteredModel::Trained(Box::new(load_checkpoint(path)?.0))
                }
                _ => {
                    return Err(invalid(format!(
                        "model {:?} needs exactly one of a checkpoint path or identity = true",
                        spec.id
                    )))
                }
            };
            reg.insert(spec.id.clone(), model)?;
        }
        if reg.models.is_empty() {
            return Err(invalid("the service needs at least one model"));
        }
        Ok(reg)
    }

    pub fn get(&self, id: &str) -> Option<&RegisteredModel> {
        self.models.get(id)
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn summaries(&self) -> Vec<ModelSummary> {
        self.models
            .iter()
            .map(|(id, m)| ModelSummary {
                id: id.clone(),
                kind: m.kind().to_string(),
                k: m.branches(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub id: String,
    pub kind: String,
    #[serde(rename = "K")]
    pub k: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EditOptions {
    pub mode: Readout,
    pub return_weights: bool,
}

/// Body of `POST /edit` in its JSON form; the image is base64-encoded PNG or JPEG.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EditRequest {
    pub image: String,
    pub text: String,
    pub model: String,
    #[serde(default)]
    pub options: EditOptions,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EditResponse {
    /// Base64-encoded PNG.
    pub image: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    pub model: String,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeRequest {
    pub image: String,
    pub model: String,
    pub k: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeResponse {
    pub image: String,
    pub model: String,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
}

/// An HTTP error carrying a machine-readable code.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

static INTERNAL_ERRORS: AtomicU64 = AtomicU64::new(0);

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                code: code.into(),
                message: message.into(),
                id: None,
            },
        }
    }

    fn bad_image(message: impl std::fmt::Display) -> Self {
        Self::new(
            StatusCode::BAD_REQUEST,
            "undecodable_image",
            format!("cannot decode image: {message}"),
        )
    }

    fn unknown_model(id: &str) -> Self {
        Self::new(
            StatusCode::NOT_FOUND,
            "unknown_model",
            format!("no model named {id:?}"),
        )
    }

    /// Details go to the log; the client only sees an id to quote.
    fn internal(detail: impl std::fmt::Display) -> Self {
        let n = INTERNAL_ERRORS.fetch_add(1, Ordering::Relaxed);
        let id = format!("E{:x}-{n:04}", std::process::id());
        log::error!("internal error {id}: {detail}");
        Self {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            body: ErrorBody {
                code: "internal".into(),
                message: "internal error".into(),
                id: Some(id),
            },
        }
    }

    pub fn status(&self) -> StatusCode {
        self.status
    }

    pub fn body(&self) -> &ErrorBody {
        &self.body
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Self::new(StatusCode::BAD_REQUEST, e.code(), e.to_string())
        } else {
            Self::internal(e)
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

#[derive(Clone)]
struct AppState {
    registry: Arc<ModelRegistry>,
}

pub fn router(registry: Arc<ModelRegistry>, max_body_bytes: usize) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/models", get(models))
        .route("/edit", post(edit))
        .route("/probe", post(probe))
        .layer(DefaultBodyLimit::max(max_body_bytes))
        .with_state(AppState { registry })
}

/// Binds and serves until Ctrl-C.
pub async fn serve(registry: ModelRegistry, config: &ServeConfig) -> Result<()> {
    let addr: SocketAddr = format!("{}:{}", config.host, config.port)
        .parse()
        .map_err(|e| {
            invalid(format!(
                "bad listen address {}:{}: {e}",
                config.host, config.port
            ))
        })?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::io(addr.to_string(), e))?;
    log::info!("serving {} model(s) on http://{addr}", registry.len());
    let app = router(Arc::new(registry), config.max_body_bytes);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Error::io(addr.to_string(), e))
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn models(State(state): State<AppState>) -> Json<Vec<ModelSummary>> {
    Json(state.registry.summaries())
}

fn decode_b64_image(data: &str) -> ApiResult<Image> {
    // Tolerate data URLs from browsers.
    let payload = data.split_once(";base64,").map_or(data, |(_, p)| p);
    let bytes = B64.decode(payload.trim()).map_err(ApiError::bad_image)?;
    Image::decode(&bytes).map_err(ApiError::bad_image)
}

fn encode_b64_image(image: &Image) -> ApiResult<String> {
    Ok(B64.encode(image.encode_png().map_err(ApiError::internal)?))
}

async fn read_multipart(mut form: Multipart) -> ApiResult<(Vec<u8>, EditRequest)> {
    let mut bytes = None;
    let mut req = EditRequest {
        image: String::new(),
        text: String::new(),
        model: String::new(),
        options: EditOptions::default(),
    };
    let bad = |e: axum::extract::multipart::MultipartError| {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_multipart", e.body_text())
    };
    while let Some(field) = form.next_field().await.map_err(bad)? {
        let name = field.name().unwrap_or_default().to_string();
        match name.as_str() {
            "image" => bytes = Some(field.bytes().await.map_err(bad)?.to_vec()),
            "text" => req.text = field.text().await.map_err(bad)?,
            "model" => req.model = field.text().await.map_err(bad)?,
            "mode" => {
                req.options.mode = field.text().await.map_err(bad)?.trim().parse()?;
            }
            "return_weights" => {
                let v = field.text().await.map_err(bad)?;
                req.options.return_weights = matches!(v.trim(), "true" | "1" | "yes" | "on");
            }
            other => log::debug!("ignoring multipart field {other:?}"),
        }
    }
    let bytes = bytes.ok_or_else(|| {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "invalid_input",
            "multipart form has no image field",
        )
    })?;
    Ok((bytes, req))
}

async fn edit(State(state): State<AppState>, request: Request) -> ApiResult<Json<EditResponse>> {
    let is_multipart = request
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    let (image, req) = if is_multipart {
        let form = Multipart::from_request(request, &state)
            .await
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_multipart", e.body_text()))?;
        let (bytes, req) = read_multipart(form).await?;
        (Image::decode(&bytes).map_err(ApiError::bad_image)?, req)
    } else {
        let Json(req) = Json::<EditRequest>::from_request(request, &state)
            .await
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_json", e.body_text()))?;
        (decode_b64_image(&req.image)?, req)
    };
    if req.text.trim().is_empty() {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "invalid_input",
            "text must not be empty",
        ));
    }
    let registry = state.registry.clone();
    let model_id = req.model.clone();
    if registry.get(&model_id).is_none() {
        return Err(ApiError::unknown_model(&model_id));
    }
    let started = Instant::now();
    let out = tokio::task::spawn_blocking(move || {
        let model = registry.get(&req.model).expect("checked above");
        model
            .edit(&image, &req.text, req.options.mode)
            .map(|o| (o, req.options))
    })
    .await
    .map_err(ApiError::internal)?;
    let (out, options) = out?;
    Ok(Json(EditResponse {
        image: encode_b64_image(&out.image)?,
        weights: if options.return_weights {
            out.weights
        } else {
            None
        },
        model: model_id,
        elapsed_ms: started.elapsed().as_millis() as u64,
    }))
}

async fn probe(
    State(state): State<AppState>,
    body: std::result::Result<Json<ProbeRequest>, axum::extract::rejection::JsonRejection>,
) -> ApiResult<Json<ProbeResponse>> {
    let Json(req) =
        body.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_json", e.body_text()))?;
    let image = decode_b64_image(&req.image)?;
    let registry = state.registry.clone();
    if registry.get(&req.model).is_none() {
        return Err(ApiError::unknown_model(&req.model));
    }
    let (model_id, k) = (req.model.clone(), req.k);
    let out = tokio::task::spawn_blocking(move || {
        registry
            .get(&model_id)
            .expect("checked above")
            .probe(&image, k)
    })
    .await
    .map_err(ApiError::internal)??;
    Ok(Json(ProbeResponse {
        image: encode_b64_image(&out)?,
        model: req.model,
        k: req.k,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_specs_parse() {
        let s = ModelSpec::parse("fb=runs/best.ckpt").unwrap();
        assert_eq!(
            s.path.as_deref(),
            Some(std::path::Path::new("runs/best.ckpt"))
        );
        assert!(ModelSpec::parse("stub=identity").unwrap().identity);
        assert!(ModelSpec::parse("nothing").is_err());
        assert!(ModelSpec::parse("=x").is_err());
    }

    #[test]
    fn registry_rejects_duplicates_and_emptiness() {
        assert!(ModelRegistry::load(&[]).is_err());
        let stub = ModelSpec::parse("a=identity").unwrap();
        assert!(ModelRegistry::load(&[stub.clone(), stub.clone()]).is_err());
        let reg = ModelRegistry::load(&[stub]).unwrap();
        assert_eq!(
            reg.summaries(),
            vec![ModelSummary {
                id: "a".into(),
                kind: "identity".into(),
                k: 1
            }]
        );
    }

    #[test]
    fn validation_errors_map_to_400_and_others_to_opaque_500() {
        let e: ApiError = invalid("nope").into();
        assert_eq!(e.status(), StatusCode::BAD_REQUEST);
        let e: ApiError = Error::NonFinite("x".into()).into();
        assert_eq!(e.status(), StatusCode::INTERNAL_SERVER_ERROR);
        assert!(e.body().id.is_some());
        assert!(!e.body().message.contains('x'));
    }
}
