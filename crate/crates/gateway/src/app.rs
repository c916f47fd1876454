//! Routes and handlers.

use std::collections::HashMap;
use std::convert::Infallible;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path, Query, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use companion_core::guardrails::{Profile, TurnContext};
use companion_core::pipeline::{Engine, StrategyKind, TurnInput};
use companion_core::protocol::{frame_turn, DeviceEvent};
use companion_core::store::{
    LogPage, LogQuery, MetricsSummary, MetricsWindow, SessionMeta, StoredProfile,
};
use futures::StreamExt;
use serde::{Deserialize, Serialize};
use tokio::sync::mpsc;

use crate::config::TurnConfig;
use crate::error::{ApiError, ErrorCode};
use crate::live::{LiveHub, LiveItem};

/// Media type of a turn response: concatenated turn frames.
pub const TURN_STREAM_CONTENT_TYPE: &str = "application/vnd.companion.turn-stream";

#[derive(Clone)]
pub struct AppState {
    pub engine: Arc<Engine>,
    pub hub: Arc<LiveHub>,
    pub token: Option<String>,
    pub turns: TurnConfig,
    pub max_upload_bytes: usize,
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/v1/sessions", post(create_session).get(list_sessions))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/end", post(end_session))
        .route("/v1/sessions/{id}/turns", post(post_turn))
        .route("/v1/sessions/{id}/log", get(get_log))
        .route("/v1/sessions/{id}/live", get(live))
        .route("/v1/sessions/{id}/events", post(post_events))
        .route("/v1/profiles/{id}", get(get_profile).put(put_profile))
        .route("/v1/metrics", get(metrics))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new()
        .route("/v1/healthz", get(healthz))
        .merge(api)
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .layer(DefaultBodyLimit::max(state.max_upload_bytes))
        .with_state(state)
}

async fn require_token(State(state): State<AppState>, req: Request, next: Next) -> Response {
    let Some(token) = &state.token else {
        return next.run(req).await;
    };
    let presented = req
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    if presented.is_some_and(|p| constant_time_eq(p.as_bytes(), token.as_bytes())) {
        next.run(req).await
    } else {
        ApiError::new(ErrorCode::Unauthorized, "missing or wrong bearer token").into_response()
    }
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

async fn not_found() -> ApiError {
    ApiError::new(ErrorCode::NotFound, "no such endpoint")
}

async fn method_not_allowed() -> ApiError {
    ApiError::new(
        ErrorCode::MethodNotAllowed,
        "method not allowed on this endpoint",
    )
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
}

async fn healthz() -> Json<Health> {
    Json(Health {
        status: "ok".into(),
    })
}

/// JSON body extractor whose failures are [`ApiError`]s.
struct ApiJson<T>(T);

impl<T, S> FromRequest<S> for ApiJson<T>
where
    Json<T>: FromRequest<S, Rejection = JsonRejection>,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(ApiJson(v)),
            Err(JsonRejection::MissingJsonContentType(_)) => Err(ApiError::new(
                ErrorCode::UnsupportedMediaType,
                "expected Content-Type: application/json",
            )),
            Err(e) if e.status() == StatusCode::PAYLOAD_TOO_LARGE => {
                Err(ApiError::new(ErrorCode::PayloadTooLarge, e.body_text()))
            }
            Err(e) => Err(ApiError::new(ErrorCode::InvalidRequest, e.body_text())),
        }
    }
}

type Params = Query<HashMap<String, String>>;

fn param<T: std::str::FromStr>(
    q: &HashMap<String, String>,
    name: &str,
) -> Result<Option<T>, ApiError> {
    q.get(name)
        .map(|v| {
            v.parse().map_err(|_| {
                ApiError::new(
                    ErrorCode::InvalidQuery,
                    format!("`{name}` must be a non-negative integer"),
                )
                .with_fields(vec![name.into()])
            })
        })
        .transpose()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    profile_id: String,
    #[serde(default)]
    device_label: String,
}

async fn create_session(
    State(s): State<AppState>,
    ApiJson(body): ApiJson<CreateSession>,
) -> Result<(StatusCode, Json<SessionMeta>), ApiError> {
    let meta = s
        .engine
        .create_session(&body.profile_id, &body.device_label)?;
    tracing::info!(session = %meta.session_id, profile = %meta.profile_id, "session created");
    Ok((StatusCode::CREATED, Json(meta)))
}

async fn list_sessions(State(s): State<AppState>) -> Json<Vec<SessionMeta>> {
    Json(s.engine.store().sessions())
}

fn session(s: &AppState, id: &str) -> Result<SessionMeta, ApiError> {
    s.engine.store().session(id).ok_or_else(|| {
        ApiError::new(
            ErrorCode::SessionNotFound,
            format!("session `{id}` not found"),
        )
    })
}

async fn get_session(
    State(s): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<SessionMeta>, ApiError> {
    session(&s, &id).map(Json)
}

async fn end_session(
    State(s): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<SessionMeta>, ApiError> {
    Ok(Json(s.engine.store().end_session(&id)?))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AacTurn {
    aac_text: String,
    #[serde(default)]
    completed_behavior: Option<String>,
}

/// Turn input from either a multipart upload (`audio` file part, optional
/// `completed_behavior` text part) or a JSON AAC body.
async fn read_turn_input(
    req: Request,
    state: &AppState,
) -> Result<(TurnInput, TurnContext), ApiError> {
    let content_type = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .unwrap_or("");
    let context =
        |behavior: Option<String>| behavior.map(TurnContext::completed).unwrap_or_default();
    if content_type.starts_with("multipart/form-data") {
        let mut multipart = Multipart::from_request(req, state)
            .await
            .map_err(|e| ApiError::new(ErrorCode::InvalidRequest, e.body_text()))?;
        let mut audio = None;
        let mut behavior = None;
        while let Some(field) = multipart.next_field().await.map_err(multipart_error)? {
            match field.name() {
                Some("audio") => {
                    audio = Some(field.bytes().await.map_err(multipart_error)?.to_vec())
                }
                Some("completed_behavior") => {
                    behavior = Some(field.text().await.map_err(multipart_error)?)
                }
                other => {
                    let name = other.unwrap_or("").to_string();
                    return Err(ApiError::new(
                        ErrorCode::InvalidRequest,
                        format!("unexpected form field `{name}`"),
                    )
                    .with_fields(vec![name]));
                }
            }
        }
        let audio = audio.ok_or_else(|| {
            ApiError::new(ErrorCode::InvalidRequest, "missing `audio` form field")
                .with_fields(vec!["audio".into()])
        })?;
        Ok((TurnInput::Voice(audio), context(behavior)))
    } else if content_type.starts_with("application/json") {
        let ApiJson(body) = ApiJson::<AacTurn>::from_request(req, state).await?;
        Ok((
            TurnInput::AacText(body.aac_text),
            context(body.completed_behavior),
        ))
    } else {
        Err(ApiError::new(
            ErrorCode::UnsupportedMediaType,
            "send audio as multipart/form-data or AAC text as application/json",
        ))
    }
}

fn multipart_error(e: axum::extract::multipart::MultipartError) -> ApiError {
    if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
        ApiError::new(ErrorCode::PayloadTooLarge, e.body_text())
    } else {
        ApiError::new(ErrorCode::InvalidRequest, e.body_text())
    }
}

/// Run one turn and stream its envelopes as they are produced. Admission
/// and input errors are ordinary JSON errors; once streaming has begun the
/// turn always finishes with a final envelope.
async fn post_turn(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Query(q): Params,
    req: Request,
) -> Result<Response, ApiError> {
    let kind = match q.get("strategy") {
        None => s.turns.default_strategy,
        Some(v) => v.parse::<StrategyKind>().map_err(|e| {
            ApiError::new(ErrorCode::InvalidStrategy, e).with_fields(vec!["strategy".into()])
        })?,
    };
    let permit = s.engine.begin_turn(&id)?;
    let (input, context) = read_turn_input(req, &s).await?;
    input.validate()?;

    let (tx, rx) = mpsc::unbounded_channel::<Result<Bytes, std::io::Error>>();
    let strategy = s.turns.strategy(kind);
    let hub = s.hub.clone();
    tokio::spawn(async move {
        let frames = tx.clone();
        let mut emit = move |envelope| {
            let bytes = frame_turn(&envelope)
                .map(Bytes::from)
                .map_err(std::io::Error::other);
            // A client that hung up does not stop the turn from being recorded.
            let _ = frames.send(bytes);
        };
        match permit.run(input, context, strategy, &mut emit).await {
            Ok(record) => hub.publish(&record.session_id.clone(), LiveItem::Turn(Arc::new(record))),
            Err(e) => {
                tracing::error!(session = %id, error = %e, "turn could not be recorded");
                let _ = tx.send(Err(std::io::Error::other(e.to_string())));
            }
        }
    });
    let body = Body::from_stream(tokio_stream::wrappers::UnboundedReceiverStream::new(rx));
    Ok((
        [(
            header::CONTENT_TYPE,
            HeaderValue::from_static(TURN_STREAM_CONTENT_TYPE),
        )],
        body,
    )
        .into_response())
}

async fn get_log(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Query(q): Params,
) -> Result<Json<LogPage>, ApiError> {
    let query = LogQuery {
        from_ms: param(&q, "from")?,
        to_ms: param(&q, "to")?,
        after_turn: param(&q, "after")?,
        limit: param(&q, "limit")?,
    };
    if query.limit == Some(0) {
        return Err(
            ApiError::new(ErrorCode::InvalidQuery, "`limit` must be positive")
                .with_fields(vec!["limit".into()]),
        );
    }
    Ok(Json(s.engine.store().query_log(&id, &query)?))
}

/// `?after=<turn_id>` or a `Last-Event-ID` header resumes after that turn.
async fn live(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Query(q): Params,
    headers: HeaderMap,
) -> Result<Sse<impl futures::Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let mut after = param::<u64>(&q, "after")?;
    if after.is_none() {
        after = headers
            .get("last-event-id")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.parse().ok());
    }
    let items = s.hub.subscribe(s.engine.store().clone(), &id, after)?;
    let events = items.map(|item| {
        let mut event = Event::default()
            .event(item.event_name())
            .data(item.data_json());
        if let LiveItem::Turn(r) = &item {
            event = event.id(r.turn_id.to_string());
        }
        Ok(event)
    });
    Ok(Sse::new(events).keep_alive(KeepAlive::default()))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EventBatch {
    events: Vec<DeviceEvent>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Accepted {
    pub accepted: usize,
}

/// Device events are relayed to live subscribers, not persisted.
async fn post_events(
    State(s): State<AppState>,
    Path(id): Path<String>,
    ApiJson(batch): ApiJson<EventBatch>,
) -> Result<Json<Accepted>, ApiError> {
    session(&s, &id)?;
    if let Some(i) = batch
        .events
        .windows(2)
        .position(|w| w[1].timestamp_ms < w[0].timestamp_ms)
    {
        return Err(ApiError::new(
            ErrorCode::InvalidEvents,
            "event timestamps must be non-decreasing",
        )
        .with_fields(vec![format!("events[{}].timestamp_ms", i + 1)]));
    }
    let accepted = batch.events.len();
    for e in batch.events {
        s.hub.publish(&id, LiveItem::Device(Arc::new(e)));
    }
    Ok(Json(Accepted { accepted }))
}

async fn get_profile(
    State(s): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<StoredProfile>, ApiError> {
    s.engine.store().get_profile(&id).map(Json).ok_or_else(|| {
        ApiError::new(
            ErrorCode::ProfileNotFound,
            format!("profile `{id}` not found"),
        )
    })
}

/// Last-writer-wins upsert; the response carries the new version.
async fn put_profile(
    State(s): State<AppState>,
    Path(id): Path<String>,
    ApiJson(profile): ApiJson<Profile>,
) -> Result<Json<StoredProfile>, ApiError> {
    if profile.profile_id != id {
        return Err(ApiError::new(
            ErrorCode::ProfileIdMismatch,
            format!(
                "body profile_id `{}` does not match path `{id}`",
                profile.profile_id
            ),
        )
        .with_fields(vec!["profile_id".into()]));
    }
    let stored = s.engine.store().put_profile(profile, s.engine.now_ms())?;
    tracing::info!(profile = %id, version = stored.version, "profile saved");
    Ok(Json(stored))
}

/// Parse a window span such as `90s`, `15m`, `24h` or `7d`.
pub fn parse_span_ms(text: &str) -> Option<u64> {
    let split = text.find(|c: char| !c.is_ascii_digit())?;
    let (n, unit) = text.split_at(split);
    let n: u64 = n.parse().ok()?;
    let scale = match unit {
        "ms" => 1,
        "s" => 1_000,
        "m" => 60_000,
        "h" => 3_600_000,
        "d" => 86_400_000,
        _ => return None,
    };
    n.checked_mul(scale)
}

/// `?window=all|<span>` (trailing span up to now) or `?from=&to=` in ms.
async fn metrics(
    State(s): State<AppState>,
    Query(q): Params,
) -> Result<Json<MetricsSummary>, ApiError> {
    let from = param::<u64>(&q, "from")?;
    let to = param::<u64>(&q, "to")?;
    let window = match q.get("window").map(String::as_str) {
        None | Some("all") => MetricsWindow {
            from_ms: from,
            to_ms: to,
        },
        Some(_) if from.is_some() || to.is_some() => {
            return Err(ApiError::new(
                ErrorCode::InvalidQuery,
                "use either `window` or `from`/`to`",
            )
            .with_fields(vec!["window".into()]))
        }
        Some(span) => {
            let span = parse_span_ms(span).ok_or_else(|| {
                ApiError::new(
                    ErrorCode::InvalidQuery,
                    "`window` must be `all` or a span like 15m, 24h, 7d",
                )
                .with_fields(vec!["window".into()])
            })?;
            MetricsWindow::trailing(span, s.engine.now_ms())
        }
    };
    Ok(Json(s.engine.store().metrics(&window)))
}
