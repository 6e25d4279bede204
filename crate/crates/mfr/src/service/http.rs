use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use chrono::{DateTime, Utc};
use mfr_core::lifecycle::ClaimDecision;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::app::{require, App};
use super::auth::{Credentials, Principal, Role};
use super::error::ServiceError;
use crate::registry::*;
use crate::sync::SyncBatch;

/// Largest accepted request body.
pub const MAX_BODY_BYTES: usize = 8 * 1024 * 1024;

pub struct Ctx {
    pub app: App,
    pub credentials: Credentials,
}

type Shared = State<Arc<Ctx>>;
type ApiResult<T> = Result<Json<T>, ServiceError>;

#[derive(Serialize)]
struct ErrorBody<'a> {
    code: &'a str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    detail: Option<Value>,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status =
            StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        let detail = match &self {
            Self::NoFaceDetected(Some(d)) => Some(json!({ "photo": d })),
            Self::Registry(RegistryError::InvalidTransition {
                report_id,
                from,
                to,
            }) => Some(json!({ "report_id": report_id, "from": from, "to": to })),
            Self::Registry(RegistryError::ReportNotClaimable { report_id, status }) => {
                Some(json!({ "report_id": report_id, "status": status }))
            }
            _ => None,
        };
        let body = ErrorBody {
            code: self.code(),
            message: self.to_string(),
            detail,
        };
        (status, Json(body)).into_response()
    }
}

fn principal(ctx: &Ctx, headers: &HeaderMap) -> Result<Principal, ServiceError> {
    let auth = match headers.get(header::AUTHORIZATION) {
        Some(v) => Some(
            v.to_str()
                .map_err(|_| ServiceError::Auth(super::auth::AuthError::Unauthenticated))?,
        ),
        None => None,
    };
    Ok(ctx.credentials.authenticate(auth)?)
}

fn authorize(ctx: &Ctx, headers: &HeaderMap, roles: &[Role]) -> Result<Principal, ServiceError> {
    let p = principal(ctx, headers)?;
    require(&p, roles)?;
    Ok(p)
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ServiceError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(format!("worker failed: {e}")))?
}

/// A request body: JSON, or multipart text fields plus files.
enum Body {
    Json(Value),
    Form {
        fields: Map<String, Value>,
        files: Vec<(String, Vec<u8>)>,
    },
}

fn rejection(status: StatusCode, text: String) -> ServiceError {
    if status == StatusCode::PAYLOAD_TOO_LARGE {
        ServiceError::PayloadTooLarge
    } else {
        ServiceError::Validation(text)
    }
}

async fn read_body(req: Request) -> Result<Body, ServiceError> {
    let ctype = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .unwrap_or("")
        .to_ascii_lowercase();
    if ctype.starts_with("multipart/form-data") {
        let mut mp = Multipart::from_request(req, &())
            .await
            .map_err(|e| rejection(e.status(), e.body_text()))?;
        let mut fields = Map::new();
        let mut files = Vec::new();
        while let Some(field) = mp
            .next_field()
            .await
            .map_err(|e| rejection(e.status(), e.body_text()))?
        {
            let name = field.name().unwrap_or_default().to_string();
            let is_file = field.file_name().is_some();
            let data = field
                .bytes()
                .await
                .map_err(|e| rejection(e.status(), e.body_text()))?;
            if is_file {
                files.push((name, data.to_vec()));
            } else {
                let text = String::from_utf8(data.to_vec())
                    .map_err(|_| ServiceError::Validation(format!("field {name} is not UTF-8")))?;
                if !text.is_empty() {
                    fields.insert(name, Value::String(text));
                }
            }
        }
        Ok(Body::Form { fields, files })
    } else {
        let bytes = Bytes::from_request(req, &())
            .await
            .map_err(|e| rejection(e.status(), e.body_text()))?;
        if bytes.is_empty() {
            return Ok(Body::Json(Value::Object(Map::new())));
        }
        let value = serde_json::from_slice(&bytes)
            .map_err(|e| ServiceError::Validation(format!("invalid JSON: {e}")))?;
        Ok(Body::Json(value))
    }
}

fn from_value<T: DeserializeOwned>(v: Value) -> Result<T, ServiceError> {
    serde_json::from_value(v).map_err(|e| ServiceError::Validation(e.to_string()))
}

fn decode_b64(field: &str, s: &str) -> Result<Vec<u8>, ServiceError> {
    B64.decode(s)
        .map_err(|e| ServiceError::Validation(format!("{field} is not valid base64: {e}")))
}

impl Body {
    /// Draft fields plus photos. JSON bodies carry photos as base64 under
    /// the given keys, either a string or a list of strings.
    fn split<T: DeserializeOwned>(
        self,
        photo_keys: &[&str],
    ) -> Result<(T, Vec<Vec<u8>>), ServiceError> {
        match self {
            Body::Json(Value::Object(mut map)) => {
                let mut photos = Vec::new();
                for key in photo_keys {
                    match map.remove(*key) {
                        None | Some(Value::Null) => {}
                        Some(Value::String(s)) => photos.push(decode_b64(key, &s)?),
                        Some(Value::Array(list)) => {
                            for v in list {
                                let s = v.as_str().ok_or_else(|| {
                                    ServiceError::Validation(format!("{key} must hold strings"))
                                })?;
                                photos.push(decode_b64(key, s)?);
                            }
                        }
                        Some(_) => {
                            return Err(ServiceError::Validation(format!("{key} must be base64")))
                        }
                    }
                }
                Ok((from_value(Value::Object(map))?, photos))
            }
            Body::Json(_) => Err(ServiceError::Validation(
                "body must be a JSON object".into(),
            )),
            Body::Form { fields, files } => {
                let photos = files
                    .into_iter()
                    .filter(|(name, _)| photo_keys.contains(&name.as_str()))
                    .map(|(_, data)| data)
                    .collect();
                Ok((from_value(Value::Object(fields))?, photos))
            }
        }
    }
}

fn single_photo(photos: Vec<Vec<u8>>) -> Result<Option<Vec<u8>>, ServiceError> {
    if photos.len() > 1 {
        return Err(ServiceError::Validation(
            "at most one photo is allowed".into(),
        ));
    }
    Ok(photos.into_iter().next().filter(|p| !p.is_empty()))
}

/// Multipart and query values arrive as strings.
fn parse_num<T: std::str::FromStr>(
    name: &str,
    v: Option<&Value>,
) -> Result<Option<T>, ServiceError> {
    match v {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| ServiceError::Validation(format!("{name} is not a number"))),
        Some(n @ Value::Number(_)) => n
            .to_string()
            .parse()
            .map(Some)
            .map_err(|_| ServiceError::Validation(format!("{name} is out of range"))),
        Some(_) => Err(ServiceError::Validation(format!("{name} is not a number"))),
    }
}

async fn identify(
    State(ctx): Shared,
    headers: HeaderMap,
    req: Request,
) -> Result<Response, ServiceError> {
    authorize(&ctx, &headers, &[Role::Staff, Role::Admin])?;
    let (fields, photos): (Map<String, Value>, _) = read_body(req).await?.split(&["photo"])?;
    let top_n = parse_num::<usize>("top_n", fields.get("top_n"))?;
    let threshold = parse_num::<f64>("threshold", fields.get("threshold"))?;
    let photo = single_photo(photos)?
        .ok_or_else(|| ServiceError::Validation("photo is required".into()))?;
    let out = blocking(move || ctx.app.identify(&photo, top_n, threshold)).await?;
    Ok(Json(out).into_response())
}

async fn enroll(
    State(ctx): Shared,
    headers: HeaderMap,
    req: Request,
) -> Result<Response, ServiceError> {
    authorize(&ctx, &headers, &[Role::Staff, Role::Admin])?;
    let (draft, photos): (EnrollDraft, _) = read_body(req).await?.split(&["photos", "photo"])?;
    let person = blocking(move || ctx.app.enroll(&draft, &photos)).await?;
    Ok((StatusCode::CREATED, Json(person)).into_response())
}

async fn get_person(
    State(ctx): Shared,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<PersonRecord> {
    authorize(&ctx, &headers, &[Role::Staff, Role::Admin])?;
    ctx.app
        .store
        .get_person(&id)
        .map(Json)
        .ok_or(ServiceError::Registry(RegistryError::PersonNotFound(id)))
}

async fn submit_item(
    State(ctx): Shared,
    headers: HeaderMap,
    req: Request,
) -> Result<Response, ServiceError> {
    let who = principal(&ctx, &headers)?;
    let (draft, photos): (ItemDraft, _) = read_body(req).await?.split(&["photo"])?;
    let photo = single_photo(photos)?;
    let out = blocking(move || ctx.app.submit_item(&who, &draft, photo.as_deref(), None)).await?;
    Ok((StatusCode::CREATED, Json(out)).into_response())
}

async fn submit_person(
    State(ctx): Shared,
    headers: HeaderMap,
    req: Request,
) -> Result<Response, ServiceError> {
    authorize(&ctx, &headers, &[Role::Staff, Role::Admin, Role::Kiosk])?;
    let (draft, photos): (PersonDraft, _) = read_body(req).await?.split(&["photo"])?;
    let photo = single_photo(photos)?;
    let out = blocking(move || ctx.app.submit_person(&draft, photo.as_deref(), None)).await?;
    Ok((StatusCode::CREATED, Json(out)).into_response())
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
enum ReportsResponse {
    Search { results: Vec<ScoredReport> },
    Page(ReportPage),
}

fn parse_time(name: &str, v: Option<&String>) -> Result<Option<DateTime<Utc>>, ServiceError> {
    v.filter(|s| !s.is_empty())
        .map(|s| {
            DateTime::parse_from_rfc3339(s)
                .map(|t| t.with_timezone(&Utc))
                .map_err(|_| {
                    ServiceError::Validation(format!("{name} must be an RFC 3339 timestamp"))
                })
        })
        .transpose()
}

const DEFAULT_PAGE: usize = 50;

async fn list_reports(
    State(ctx): Shared,
    headers: HeaderMap,
    Query(params): Query<HashMap<String, String>>,
) -> ApiResult<ReportsResponse> {
    principal(&ctx, &headers)?;
    let limit = match params.get("limit") {
        Some(l) => l
            .parse()
            .map_err(|_| ServiceError::Validation("limit is not a number".into()))?,
        None => DEFAULT_PAGE,
    };
    let since = parse_time("since", params.get("since"))?;
    let until = parse_time("until", params.get("until"))?;
    let kind = params.get("kind").filter(|s| !s.is_empty()).cloned();
    let status = params.get("status").filter(|s| !s.is_empty()).cloned();
    let query = params
        .get("query")
        .or(params.get("q"))
        .filter(|q| !q.trim().is_empty());
    if let Some(q) = query {
        let mut text = q.clone();
        for (field, value) in [("kind", &kind), ("status", &status)] {
            if let Some(v) = value {
                text.push_str(&format!(" {field}:\"{}\"", v.replace('"', "")));
            }
        }
        let results = ctx.app.store.search(&text, since, until, limit)?;
        return Ok(Json(ReportsResponse::Search { results }));
    }
    let filter = ReportFilter {
        kind,
        status,
        since,
        until,
    };
    let page =
        ctx.app
            .store
            .list_reports(&filter, limit, params.get("after").map(String::as_str))?;
    Ok(Json(ReportsResponse::Page(page)))
}

async fn get_report(
    State(ctx): Shared,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<Report> {
    principal(&ctx, &headers)?;
    ctx.app
        .store
        .get_report(&id)
        .map(Json)
        .ok_or(ServiceError::Registry(RegistryError::ReportNotFound(id)))
}

async fn file_claim(
    State(ctx): Shared,
    headers: HeaderMap,
    Path(id): Path<String>,
    req: Request,
) -> Result<Response, ServiceError> {
    principal(&ctx, &headers)?;
    let (draft, photos): (ClaimDraft, _) =
        read_body(req).await?.split(&["evidence_photo", "photo"])?;
    let photo = single_photo(photos)?;
    let claim = blocking(move || {
        let photo_ref = match photo {
            Some(p) => {
                crate::pipeline::decode_photo(&p)
                    .map_err(|e| ServiceError::BadImage(e.to_string()))?;
                Some(
                    ctx.app
                        .blobs
                        .put(&p)
                        .map_err(|e| ServiceError::Internal(e.to_string()))?,
                )
            }
            None => None,
        };
        Ok(ctx.app.store.file_claim(&id, &draft, photo_ref)?)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(claim)).into_response())
}

async fn get_claim(
    State(ctx): Shared,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<Claim> {
    authorize(&ctx, &headers, &[Role::Staff, Role::Admin])?;
    ctx.app
        .store
        .get_claim(&id)
        .map(Json)
        .ok_or(ServiceError::Registry(RegistryError::ClaimNotFound(id)))
}

#[derive(Debug, Deserialize)]
struct DecisionBody {
    decision: ClaimDecision,
}

#[derive(Debug, Serialize)]
struct DecisionResponse {
    claim: Claim,
    report: ItemReport,
}

async fn decide_claim(
    State(ctx): Shared,
    headers: HeaderMap,
    Path(id): Path<String>,
    req: Request,
) -> ApiResult<DecisionResponse> {
    authorize(&ctx, &headers, &[Role::Admin])?;
    let (body, _): (DecisionBody, _) = read_body(req).await?.split(&[])?;
    let (claim, report) =
        blocking(move || Ok(ctx.app.store.resolve_claim(&id, body.decision)?)).await?;
    Ok(Json(DecisionResponse { claim, report }))
}

#[derive(Debug, Deserialize)]
struct PersonDecisionBody {
    action: PersonAction,
    #[serde(default)]
    person_id: Option<String>,
}

async fn decide_person_report(
    State(ctx): Shared,
    headers: HeaderMap,
    Path(id): Path<String>,
    req: Request,
) -> ApiResult<PersonReport> {
    authorize(&ctx, &headers, &[Role::Staff, Role::Admin])?;
    let (body, _): (PersonDecisionBody, _) = read_body(req).await?.split(&[])?;
    let out = blocking(move || {
        Ok(ctx
            .app
            .store
            .decide_person_report(&id, body.action, body.person_id.as_deref())?)
    })
    .await?;
    Ok(Json(out))
}

async fn reject_item(
    State(ctx): Shared,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<ItemReport> {
    authorize(&ctx, &headers, &[Role::Admin])?;
    Ok(Json(
        blocking(move || Ok(ctx.app.store.reject_item_report(&id)?)).await?,
    ))
}

async fn ingest(
    State(ctx): Shared,
    headers: HeaderMap,
    req: Request,
) -> ApiResult<crate::sync::SyncAck> {
    let who = principal(&ctx, &headers)?;
    require(&who, &[Role::Kiosk])?;
    let batch: SyncBatch = match read_body(req).await? {
        Body::Json(v) => from_value(v)?,
        Body::Form { .. } => return Err(ServiceError::Validation("batches are JSON".into())),
    };
    Ok(Json(blocking(move || ctx.app.ingest(&who, &batch)).await?))
}

async fn alerts(
    State(ctx): Shared,
    headers: HeaderMap,
    Query(params): Query<HashMap<String, String>>,
) -> ApiResult<Vec<Alert>> {
    authorize(&ctx, &headers, &[Role::Staff, Role::Admin])?;
    let ack = match params.get("ack").map(String::as_str) {
        None | Some("") => None,
        Some("true") => Some(true),
        Some("false") => Some(false),
        Some(other) => {
            return Err(ServiceError::Validation(format!(
                "ack must be true or false, got {other:?}"
            )))
        }
    };
    Ok(Json(ctx.app.store.alerts(ack)))
}

async fn ack_alert(
    State(ctx): Shared,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<Alert> {
    let who = authorize(&ctx, &headers, &[Role::Admin])?;
    Ok(Json(
        blocking(move || Ok(ctx.app.store.acknowledge_alert(&id, &who.name)?)).await?,
    ))
}

async fn get_blob(
    State(ctx): Shared,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> Result<Response, ServiceError> {
    authorize(&ctx, &headers, &[Role::Staff, Role::Admin])?;
    let bytes = blocking(move || {
        ctx.app
            .blobs
            .get(&id)
            .map_err(|_| ServiceError::NotFound(format!("photo {id}")))
    })
    .await?;
    let ctype = if bytes.starts_with(&[0xFF, 0xD8]) {
        "image/jpeg"
    } else {
        "image/x-portable-anymap"
    };
    Ok(([(header::CONTENT_TYPE, ctype)], bytes).into_response())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model_version: Option<u64>,
    pub persons: usize,
    pub reports: usize,
    pub threshold: Option<f64>,
}

async fn healthz(State(ctx): Shared) -> Json<Health> {
    let (persons, reports) = {
        let s = ctx.app.store.read();
        (s.person_count(), s.report_count())
    };
    Json(Health {
        status: "ok".into(),
        model_version: ctx.app.model_version(),
        persons,
        reports,
        threshold: ctx.app.published().and_then(|p| p.threshold),
    })
}

async fn not_found() -> ServiceError {
    ServiceError::NotFound("no such endpoint".into())
}

pub fn router(ctx: Arc<Ctx>) -> Router {
    let api = Router::new()
        .route("/identify", post(identify))
        .route("/persons", post(enroll))
        .route("/persons/{id}", get(get_person))
        .route("/reports", get(list_reports))
        .route("/reports/items", post(submit_item))
        .route("/reports/persons", post(submit_person))
        .route("/reports/{id}", get(get_report))
        .route("/reports/{id}/claims", post(file_claim))
        .route("/reports/{id}/decision", post(decide_person_report))
        .route("/reports/{id}/reject", post(reject_item))
        .route("/claims/{id}", get(get_claim))
        .route("/claims/{id}/decision", post(decide_claim))
        .route("/sync/batches", post(ingest))
        .route("/alerts", get(alerts))
        .route("/alerts/{id}/ack", post(ack_alert))
        .route("/photos/{id}", get(get_blob))
        .route("/healthz", get(healthz));
    Router::new()
        .nest("/api/v1", api)
        .fallback(not_found)
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(ctx)
}
